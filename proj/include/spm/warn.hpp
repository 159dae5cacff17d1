#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <unordered_set>
#include <vector>

namespace spm {

/// Process-wide warning sink. Deduplicates by key so that e.g. a rate that
/// clamps negative a million times during a simulation warns exactly once.
class WarningSink {
public:
    static WarningSink& instance() {
        static WarningSink sink;
        return sink;
    }

    void emit_once(const std::string& key, const std::string& message) {
        std::lock_guard<std::mutex> lock(mutex_);
        if (!seen_.insert(key).second) return;
        messages_.push_back(message);
        if (handler_) handler_(message);
    }

    void set_handler(std::function<void(const std::string&)> h) {
        std::lock_guard<std::mutex> lock(mutex_);
        handler_ = std::move(h);
    }

    std::vector<std::string> messages() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return messages_;
    }

    void reset() {
        std::lock_guard<std::mutex> lock(mutex_);
        seen_.clear();
        messages_.clear();
    }

private:
    WarningSink() {
        handler_ = [](const std::string& m) { std::cerr << "warning: " << m << "\n"; };
    }
    mutable std::mutex mutex_;
    std::unordered_set<std::string> seen_;
    std::vector<std::string> messages_;
    std::function<void(const std::string&)> handler_;
};

inline void warn_once(const std::string& key, const std::string& message) {
    WarningSink::instance().emit_once(key, message);
}

} // namespace spm
