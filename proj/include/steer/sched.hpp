#pragma once

#include <chrono>
#include <coroutine>
#include <deque>
#include <optional>
#include <queue>
#include <thread>
#include <vector>

#include "steer/types.hpp"

namespace steer::sched {

class Scheduler;

// Fire-and-forget coroutine owned by the scheduler.
class Task {
public:
    struct promise_type {
        Scheduler* sched = nullptr;
        Task get_return_object() {
            return Task{std::coroutine_handle<promise_type>::from_promise(*this)};
        }
        std::suspend_always initial_suspend() noexcept { return {}; }
        std::suspend_always final_suspend() noexcept { return {}; }
        void return_void() {}
        void unhandled_exception();
    };

    explicit Task(std::coroutine_handle<promise_type> h) : handle(h) {}
    std::coroutine_handle<promise_type> handle;
};

// Single-threaded discrete-event scheduler. Loops interleave only at
// blocking points (sleep, channel put/get), in FIFO wake order, so a fixed
// spawn order yields a bit-identical execution. In real-clock mode the same
// event loop waits out timer gaps in wall time.
class Scheduler {
public:
    explicit Scheduler(bool real_clock = false) : real_(real_clock) {}

    Scheduler(const Scheduler&) = delete;
    Scheduler& operator=(const Scheduler&) = delete;

    ~Scheduler() {
        for (auto it = owned_.rbegin(); it != owned_.rend(); ++it)
            if (*it) it->destroy();
    }

    void spawn(Task t) {
        t.handle.promise().sched = this;
        owned_.push_back(t.handle);
        ++live_;
        ready_.push_back(t.handle);
    }

    double now() const { return now_; }

    // Runs to completion of all spawned tasks. Throws DEADLOCK when loops
    // remain but no event can ever fire (the deadlock detector).
    void run() {
        while (true) {
            while (!ready_.empty()) {
                auto h = ready_.front();
                ready_.pop_front();
                h.resume();
                if (h.done()) --live_;
                if (error_) {
                    auto e = error_;
                    error_ = nullptr;
                    std::rethrow_exception(e);
                }
            }
            if (!timers_.empty()) {
                advance_to_next_timer();
                continue;
            }
            if (live_ > 0)
                throw SteerError(ErrorCode::DEADLOCK,
                                 "no pending events while loops are unfinished");
            return;
        }
    }

    struct SleepAwaiter {
        Scheduler* s;
        double dt;
        bool await_ready() const noexcept { return false; }
        void await_suspend(std::coroutine_handle<> h) { s->add_timer(s->now_ + dt, h); }
        void await_resume() const noexcept {}
    };

    SleepAwaiter sleep(double seconds) { return {this, seconds}; }

    void wake(std::coroutine_handle<> h) { ready_.push_back(h); }

    void set_error(std::exception_ptr e) {
        if (!error_) error_ = e;
    }

private:
    struct Timer {
        double t;
        uint64_t seq;
        std::coroutine_handle<> h;
        bool operator>(const Timer& o) const { return std::tie(t, seq) > std::tie(o.t, o.seq); }
    };

    void add_timer(double t, std::coroutine_handle<> h) { timers_.push({t, seq_++, h}); }

    void advance_to_next_timer() {
        double t = timers_.top().t;
        if (real_ && t > now_) {
            std::this_thread::sleep_for(std::chrono::duration<double>(t - now_));
        }
        now_ = std::max(now_, t);
        while (!timers_.empty() && timers_.top().t == t) {
            ready_.push_back(timers_.top().h);
            timers_.pop();
        }
    }

    bool real_;
    double now_ = 0.0;
    uint64_t seq_ = 0;
    int64_t live_ = 0;
    std::deque<std::coroutine_handle<>> ready_;
    std::priority_queue<Timer, std::vector<Timer>, std::greater<Timer>> timers_;
    std::vector<std::coroutine_handle<Task::promise_type>> owned_;
    std::exception_ptr error_;
};

inline void Task::promise_type::unhandled_exception() {
    sched->set_error(std::current_exception());
}

// Cooperative bounded blocking channel for scheduler loops. Same contract
// as fabric::BlockingChannel, but a blocked caller consumes no scheduler
// budget: it parks until a peer or close() wakes it.
template <class T>
class Channel {
public:
    Channel(Scheduler& s, int64_t capacity) : sched_(s), capacity_(capacity) {
        if (capacity < 1) throw SteerError(ErrorCode::CONSTRAINT_VIOLATION, "capacity must be >= 1");
    }

    struct PutAwaiter {
        Channel* ch;
        T value;
        bool closed_while_waiting = false;

        bool await_ready() {
            if (ch->closed_) throw SteerError(ErrorCode::CLOSED, "put on closed channel");
            if (!ch->getters_.empty()) {
                auto g = ch->getters_.front();
                ch->getters_.pop_front();
                g.slot->emplace(std::move(value));
                ch->sched_.wake(g.h);
                return true;
            }
            if (static_cast<int64_t>(ch->buf_.size()) < ch->capacity_) {
                ch->buf_.push_back(std::move(value));
                ch->note_occupancy();
                return true;
            }
            return false;
        }
        void await_suspend(std::coroutine_handle<> h) { ch->putters_.push_back({h, this}); }
        void await_resume() {
            if (closed_while_waiting)
                throw SteerError(ErrorCode::CLOSED, "channel closed while putting");
        }
    };

    struct GetAwaiter {
        Channel* ch;
        std::optional<std::optional<T>> result;  // outer: delivered; inner: EOS marker

        bool await_ready() {
            if (!ch->buf_.empty()) {
                result.emplace(std::move(ch->buf_.front()));
                ch->buf_.pop_front();
                ch->admit_waiting_putter();
                return true;
            }
            if (ch->closed_) {
                result.emplace(std::nullopt);
                return true;
            }
            return false;
        }
        void await_suspend(std::coroutine_handle<> h) { ch->getters_.push_back({h, &result}); }
        std::optional<T> await_resume() { return std::move(*result); }
    };

    PutAwaiter put(T value) { return PutAwaiter{this, std::move(value)}; }
    GetAwaiter get() { return GetAwaiter{this}; }

    std::optional<T> try_get() {
        if (buf_.empty()) return std::nullopt;
        T v = std::move(buf_.front());
        buf_.pop_front();
        admit_waiting_putter();
        return v;
    }

    void close() {
        if (closed_) return;
        closed_ = true;
        for (auto& g : getters_) {
            g.slot->emplace(std::nullopt);
            sched_.wake(g.h);
        }
        getters_.clear();
        for (auto& p : putters_) {
            p.awaiter->closed_while_waiting = true;
            sched_.wake(p.h);
        }
        putters_.clear();
    }

    void add_producer() { ++producers_; }
    void remove_producer() {
        if (--producers_ == 0) close();
    }

    bool closed() const { return closed_; }
    int64_t max_occupancy() const { return max_occupancy_; }
    size_t size() const { return buf_.size(); }

private:
    struct PutWaiter {
        std::coroutine_handle<> h;
        PutAwaiter* awaiter;
    };
    struct GetWaiter {
        std::coroutine_handle<> h;
        std::optional<std::optional<T>>* slot;
    };

    void note_occupancy() {
        max_occupancy_ = std::max(max_occupancy_, static_cast<int64_t>(buf_.size()));
        if (static_cast<int64_t>(buf_.size()) > capacity_)
            throw SteerError(ErrorCode::CONSTRAINT_VIOLATION, "channel occupancy above capacity");
    }

    void admit_waiting_putter() {
        if (putters_.empty()) return;
        auto p = putters_.front();
        putters_.pop_front();
        buf_.push_back(std::move(p.awaiter->value));
        note_occupancy();
        sched_.wake(p.h);
    }

    Scheduler& sched_;
    int64_t capacity_;
    std::deque<T> buf_;
    std::deque<PutWaiter> putters_;
    std::deque<GetWaiter> getters_;
    bool closed_ = false;
    int64_t producers_ = 0;
    int64_t max_occupancy_ = 0;
};

}  // namespace steer::sched
