#pragma once

#include <condition_variable>
#include <deque>
#include <mutex>
#include <optional>

#include "steer/types.hpp"

namespace steer::fabric {

// Bounded blocking FIFO channel: a full buffer stalls producers until a
// consumer reads. Safe for multiple concurrent producers and consumers.
template <class T>
class BlockingChannel {
public:
    explicit BlockingChannel(int64_t capacity) : capacity_(capacity) {
        if (capacity < 1) throw SteerError(ErrorCode::CONSTRAINT_VIOLATION, "capacity must be >= 1");
    }

    void put_blocking(T item) {
        std::unique_lock lk(mu_);
        not_full_.wait(lk, [&] { return closed_ || static_cast<int64_t>(buf_.size()) < capacity_; });
        if (closed_) throw SteerError(ErrorCode::CLOSED, "put on closed channel");
        buf_.push_back(std::move(item));
        max_occupancy_ = std::max(max_occupancy_, static_cast<int64_t>(buf_.size()));
        not_empty_.notify_one();
    }

    // nullopt = END_OF_STREAM (channel closed and drained)
    std::optional<T> get_blocking() {
        std::unique_lock lk(mu_);
        not_empty_.wait(lk, [&] { return closed_ || !buf_.empty(); });
        if (buf_.empty()) return std::nullopt;
        T item = std::move(buf_.front());
        buf_.pop_front();
        not_full_.notify_one();
        return item;
    }

    std::optional<T> try_get() {
        std::lock_guard lk(mu_);
        if (buf_.empty()) return std::nullopt;
        T item = std::move(buf_.front());
        buf_.pop_front();
        not_full_.notify_one();
        return item;
    }

    void close() {
        std::lock_guard lk(mu_);
        closed_ = true;
        not_empty_.notify_all();
        not_full_.notify_all();
    }

    // producer registration: the channel closes when the last producer leaves
    void add_producer() {
        std::lock_guard lk(mu_);
        ++producers_;
    }
    void remove_producer() {
        std::unique_lock lk(mu_);
        if (--producers_ == 0) {
            closed_ = true;
            not_empty_.notify_all();
            not_full_.notify_all();
        }
    }

    int64_t max_occupancy() const {
        std::lock_guard lk(mu_);
        return max_occupancy_;
    }

    int64_t capacity() const { return capacity_; }

private:
    const int64_t capacity_;
    mutable std::mutex mu_;
    std::condition_variable not_full_, not_empty_;
    std::deque<T> buf_;
    bool closed_ = false;
    int64_t producers_ = 0;
    int64_t max_occupancy_ = 0;
};

}  // namespace steer::fabric
