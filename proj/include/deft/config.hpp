#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "deft/model.hpp"

namespace deft {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// One timed directive of the scenario script.
struct Directive {
    VirtualTime time_ns = 0;
    std::string op;        // fail_nf | fail_node | fail_unit | recover_unit |
                           // fail_manager | recover_manager | migrate | set_rate | mute_nf
    std::int64_t arg0 = 0; // nf / node / unit index, flow index, new rate
    std::int64_t arg1 = 0; // migrate: destination pair; mute_nf: window end
};

// Protocol mutations used to validate that the checker catches real bugs.
enum class Mutation { None, SkipMarker, ReleaseBeforeCommit, BypassPending };

struct Config {
    std::uint64_t seed = 1;

    // traffic
    double rate_pps = 10000.0;
    std::uint64_t flow_count = 4;
    std::uint64_t packet_count = 20000;
    std::uint32_t payload_len = 100;
    std::uint32_t updates_per_batch = 0;   // evenly spaced global-update flags
    std::uint64_t burst_at_packet = 0;     // aggregate index where a burst starts (0 = off)
    std::uint32_t burst_count = 0;         // consecutive global updates in the burst

    // stamper
    std::uint32_t unit_count = 1;
    std::vector<std::pair<VirtualTime, VirtualTime>> manager_failure_windows;
    std::vector<std::tuple<VirtualTime, VirtualTime, std::uint32_t>> unit_failure_windows;

    // network
    VirtualTime base_latency_ns = 100'000;
    VirtualTime jitter_ns = 0;
    double reorder_prob = 0.0;
    VirtualTime reorder_penalty_min_ns = 150'000;
    VirtualTime reorder_penalty_max_ns = 1'000'000;
    VirtualTime ctrl_latency_ns = 600'000;

    // nf
    std::uint32_t batch_size = 50;
    std::uint32_t buffer_batches = 5;
    VirtualTime work_cost_ns = 50'000;
    std::uint64_t global_keys = 1;
    std::uint32_t nf_pairs = 1;

    // consensus
    std::string consensus_impl = "sequencer";  // sequencer | quorum
    VirtualTime commit_latency_ns = 400'000;
    std::uint32_t quorum_size = 0;             // 0 = majority

    // control
    VirtualTime ping_interval_ns = 10'000'000;
    std::uint32_t suspect_threshold = 3;
    std::uint32_t spare_nfs = 0;

    // 2PC retry back-off: 1 ms doubling to 64 ms, unlimited retries
    VirtualTime backoff_initial_ns = 1'000'000;
    VirtualTime backoff_cap_ns = 64'000'000;

    // metrics
    std::uint64_t tracked_n = 50'000;

    std::vector<Directive> scenario;
    Mutation mutation = Mutation::None;

    std::uint32_t input_capacity() const { return batch_size * buffer_batches; }
    // Upper bound on one data-plane hop; used as the drain window during
    // ownership handoffs.
    VirtualTime max_data_latency() const {
        VirtualTime penalty = reorder_prob > 0.0 ? reorder_penalty_max_ns : 0;
        return base_latency_ns + jitter_ns + penalty + 1;
    }

    void validate() const;

    static Config from_json_text(const std::string& text);
    static Config from_file(const std::string& path);
    std::string to_json_text() const;
};

// Expands "sweep" lists in a config file into the cartesian product of runs.
std::vector<Config> expand_sweep(const std::string& json_text);

}  // namespace deft
