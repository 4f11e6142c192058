#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <unordered_map>
#include <vector>

#include "deft/config.hpp"
#include "deft/model.hpp"

namespace deft {

struct PacketIdHash {
    std::size_t operator()(const PacketId& id) const {
        return static_cast<std::size_t>(mix64(id.flow_id, id.counter));
    }
};

// Per-packet timing samples for the first tracked_n stamped packets plus
// per-flow release accounting for throughput.
class Metrics {
public:
    explicit Metrics(const Config& cfg) : cfg_(cfg) {}

    void on_stamped(const PacketId& id, VirtualTime t) {
        ++stamped_total_;
        if (samples_.size() < cfg_.tracked_n) samples_[id].stamp = t;
        auto& f = flows_[id.flow_id];
        if (f.first_stamp < 0) f.first_stamp = t;
    }
    void on_nf_in(const PacketId& id, VirtualTime t) {
        if (auto* s = find(id)) s->nf_in = t;
    }
    void on_proc_start(const PacketId& id, VirtualTime t) {
        if (auto* s = find(id)) s->proc_start = t;
    }
    void on_proc_end(const PacketId& id, VirtualTime t) {
        if (auto* s = find(id)) s->proc_end = t;
    }
    void on_released(const PacketId& id, VirtualTime t) {
        ++released_total_;
        auto& f = flows_[id.flow_id];
        ++f.released;
        f.last_release = t;
        release_times_.push_back(t);
        if (auto* s = find(id)) {
            s->released = t;
            tracked_releases_.emplace_back(t, s->latency());
        }
    }
    void on_input_drop() { ++drops_input_; }
    void on_batch_commit() { ++batches_committed_; }
    void on_global_commit() { ++global_commits_; }

    struct Sample {
        VirtualTime stamp = -1, nf_in = -1, proc_start = -1, proc_end = -1, released = -1;
        bool complete() const {
            return stamp >= 0 && nf_in >= 0 && proc_start >= 0 && proc_end >= 0 && released >= 0;
        }
        VirtualTime tau_path() const { return nf_in - stamp; }
        VirtualTime tau_pre() const { return proc_start - nf_in; }
        VirtualTime tau_proc() const { return proc_end - proc_start; }
        VirtualTime tau_post() const { return released - proc_end; }
        VirtualTime latency() const { return released - stamp; }
    };

    struct Row {
        double latency_ns = 0, tau_path_ns = 0, tau_pre_ns = 0, tau_proc_ns = 0, tau_post_ns = 0;
        double throughput_pps = 0;
        std::uint64_t drops = 0;
        double drop_frac = 0;
        std::uint64_t stamped = 0, released = 0, batches = 0, global_commits = 0;
        std::uint64_t tracked_complete = 0;
    };

    Row finalize() const {
        Row r;
        r.drops = drops_input_;
        r.stamped = stamped_total_;
        r.released = released_total_;
        r.batches = batches_committed_;
        r.global_commits = global_commits_;
        r.drop_frac = stamped_total_ ? static_cast<double>(drops_input_) / stamped_total_ : 0.0;
        std::uint64_t n = 0;
        double path = 0, pre = 0, proc = 0, post = 0;
        for (const auto& [id, s] : samples_) {
            if (!s.complete()) continue;
            ++n;
            path += static_cast<double>(s.tau_path());
            pre += static_cast<double>(s.tau_pre());
            proc += static_cast<double>(s.tau_proc());
            post += static_cast<double>(s.tau_post());
        }
        r.tracked_complete = n;
        if (n) {
            r.tau_path_ns = path / n;
            r.tau_pre_ns = pre / n;
            r.tau_proc_ns = proc / n;
            r.tau_post_ns = post / n;
            r.latency_ns = r.tau_path_ns + r.tau_pre_ns + r.tau_proc_ns + r.tau_post_ns;
        }
        r.throughput_pps = throughput_pps();
        return r;
    }

    // total throughput: sum over flows of released / (last_release - first_stamp)
    double throughput_pps() const {
        double total = 0;
        for (const auto& [flow, f] : flows_) {
            if (f.released == 0 || f.last_release <= f.first_stamp) continue;
            total += static_cast<double>(f.released) /
                     (static_cast<double>(f.last_release - f.first_stamp) * 1e-9);
        }
        return total;
    }

    const std::vector<VirtualTime>& release_times() const { return release_times_; }
    const std::vector<std::pair<VirtualTime, VirtualTime>>& tracked_releases() const {
        return tracked_releases_;
    }
    std::uint64_t drops() const { return drops_input_; }
    std::uint64_t stamped_total() const { return stamped_total_; }
    std::uint64_t released_total() const { return released_total_; }

private:
    Sample* find(const PacketId& id) {
        auto it = samples_.find(id);
        return it == samples_.end() ? nullptr : &it->second;
    }

    struct FlowAgg {
        std::uint64_t released = 0;
        VirtualTime first_stamp = -1;
        VirtualTime last_release = -1;
    };

    const Config& cfg_;
    std::unordered_map<PacketId, Sample, PacketIdHash> samples_;
    std::map<FlowId, FlowAgg> flows_;
    std::vector<VirtualTime> release_times_;
    std::vector<std::pair<VirtualTime, VirtualTime>> tracked_releases_;
    std::uint64_t stamped_total_ = 0, released_total_ = 0;
    std::uint64_t drops_input_ = 0, batches_committed_ = 0, global_commits_ = 0;
};

}  // namespace deft
