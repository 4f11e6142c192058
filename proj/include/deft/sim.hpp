#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <vector>

#include "deft/model.hpp"

namespace deft {

// Single-threaded discrete-event scheduler. Ties at the same virtual time are
// broken by insertion order, so a run is fully determined by seed + config.
class Simulator {
public:
    using Action = std::function<void()>;

    VirtualTime now() const { return now_; }

    void at(VirtualTime t, Action fn) {
        queue_.push(Ev{t < now_ ? now_ : t, seq_++, std::move(fn)});
    }
    void after(VirtualTime delay, Action fn) { at(now_ + delay, std::move(fn)); }

    bool empty() const { return queue_.empty(); }
    std::size_t pending() const { return queue_.size(); }

    // Runs until the queue is empty. Returns the number of events executed.
    std::size_t run() {
        std::size_t n = 0;
        while (step()) ++n;
        return n;
    }

    // Runs events with time <= t, then advances the clock to t.
    void run_until(VirtualTime t) {
        while (!queue_.empty() && queue_.top().time <= t) step();
        if (now_ < t) now_ = t;
    }

    bool step() {
        if (queue_.empty()) return false;
        Ev ev = pop_top();
        now_ = ev.time;
        ev.fn();
        return true;
    }

private:
    struct Ev {
        VirtualTime time;
        std::uint64_t seq;
        mutable Action fn;
        bool operator<(const Ev& o) const {
            return time != o.time ? time > o.time : seq > o.seq;  // min-heap
        }
    };

    Ev pop_top() {
        Ev ev{queue_.top().time, queue_.top().seq, std::move(queue_.top().fn)};
        queue_.pop();
        return ev;
    }

    std::priority_queue<Ev> queue_;
    VirtualTime now_ = 0;
    std::uint64_t seq_ = 0;
};

}  // namespace deft
