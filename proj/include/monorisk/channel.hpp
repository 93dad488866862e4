#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <mutex>
#include <optional>

namespace monorisk {

// Bounded blocking queue connecting pipeline stages. push() blocks while the
// queue is full; pop() blocks while it is empty. close() lets consumers drain
// whatever is queued and then observe end-of-stream (pop() -> nullopt); push
// after close is refused. cancel() additionally discards queued items so all
// parties unblock immediately (error shutdown).
template <typename T>
class Channel {
public:
    explicit Channel(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

    bool push(T value) {
        std::unique_lock lock(mutex_);
        not_full_.wait(lock, [&] { return closed_ || queue_.size() < capacity_; });
        if (closed_) return false;
        queue_.push_back(std::move(value));
        high_water_ = std::max(high_water_, queue_.size());
        lock.unlock();
        not_empty_.notify_one();
        return true;
    }

    std::optional<T> pop() {
        std::unique_lock lock(mutex_);
        not_empty_.wait(lock, [&] { return closed_ || !queue_.empty(); });
        if (queue_.empty()) return std::nullopt;  // closed and drained
        T value = std::move(queue_.front());
        queue_.pop_front();
        lock.unlock();
        not_full_.notify_one();
        return value;
    }

    void close() {
        {
            std::lock_guard lock(mutex_);
            closed_ = true;
        }
        not_full_.notify_all();
        not_empty_.notify_all();
    }

    void cancel() {
        {
            std::lock_guard lock(mutex_);
            closed_ = true;
            queue_.clear();
        }
        not_full_.notify_all();
        not_empty_.notify_all();
    }

    // Largest number of items ever queued; bounded by capacity.
    std::size_t high_water_mark() const {
        std::lock_guard lock(mutex_);
        return high_water_;
    }

    std::size_t capacity() const { return capacity_; }

private:
    std::size_t capacity_;
    mutable std::mutex mutex_;
    std::condition_variable not_full_;
    std::condition_variable not_empty_;
    std::deque<T> queue_;
    bool closed_ = false;
    std::size_t high_water_ = 0;
};

}  // namespace monorisk
