#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "deft/config.hpp"
#include "deft/consensus.hpp"
#include "deft/control.hpp"
#include "deft/fabric.hpp"
#include "deft/metrics.hpp"
#include "deft/model.hpp"
#include "deft/nf.hpp"
#include "deft/oracle.hpp"
#include "deft/sim.hpp"
#include "deft/stamper.hpp"

namespace deft {

struct Arrival {
    VirtualTime time = 0;
    std::uint64_t flow = 0;  // generator flow index, not the stamped flow id
    bool flag = false;
};

// Deterministic arrival schedule: per-flow periodic arrivals with seeded
// phase offsets, rate changes from set_rate directives, and global-update
// flags at evenly spaced per-batch positions (plus an optional burst).
std::vector<Arrival> build_arrival_schedule(const Config& cfg);

FlowKey make_flow_key(std::uint64_t flow_index);

// Replays the arrival schedule through an offline stamper to reproduce the
// stamped stream without running the full simulation (stamping depends only
// on arrivals and stamper failure windows).
std::vector<StampedPacket> regenerate_stamped_stream(const Config& cfg);

// Drives stamped arrivals into the system and records the stream.
class TrafficSource {
public:
    TrafficSource(const Config& cfg, Simulator& sim, StamperManager& stamper, Metrics& metrics);

    void start();
    VirtualTime end_time() const { return schedule_.empty() ? 0 : schedule_.back().time; }
    const std::vector<StampedPacket>& stream() const { return stream_; }
    // stamped flow id currently bound to a generator flow index (0 if none)
    FlowId flow_id_of(std::uint64_t index) const {
        auto it = flow_ids_.find(index);
        return it == flow_ids_.end() ? 0 : it->second;
    }

private:
    void fire(std::size_t i);

    const Config& cfg_;
    Simulator& sim_;
    StamperManager& stamper_;
    Metrics& metrics_;
    std::vector<Arrival> schedule_;
    std::vector<StampedPacket> stream_;
    std::map<std::uint64_t, FlowId> flow_ids_;
};

// Fully wired simulated system.
class System {
public:
    explicit System(const Config& cfg);

    Config cfg;
    Simulator sim;
    TraceLog trace;
    Metrics metrics;
    NetModel net;
    StamperManager stamper;
    SwitchNode sw;
    Controller ctrl;
    std::unique_ptr<CommitService> commit;
    std::vector<std::unique_ptr<Nf>> nfs;
    TrafficSource traffic;

    Nf* nf(NfId id) {
        return id >= 0 && id < static_cast<NfId>(nfs.size()) ? nfs[id].get() : nullptr;
    }
    NfId primary_of_pair(std::uint32_t pair) const { return static_cast<NfId>(2 * pair); }

    // runs traffic to quiescence (partial batches flushed, log fully applied)
    void run_to_quiescence();
    RunState snapshot_state() const;

private:
    void install_scenario();
    bool quiescent() const;
};

struct RunOptions {
    bool keep_trace = false;
    bool windows = false;
    VirtualTime window_ns = 100'000'000;
    std::function<void(System&)> customize;  // e.g. install crash hooks
};

struct TimeWindow {
    VirtualTime start = 0;
    double throughput_pps = 0;
    double avg_latency_ns = 0;
    std::uint64_t releases = 0;
};

struct RunOutputs {
    Metrics::Row row;
    Verdict verdict;
    RunState state;
    std::string trace_hash;
    std::string trace_jsonl;  // only with keep_trace
    std::vector<TimeWindow> windows;
    std::uint64_t events_executed = 0;
};

RunOutputs run_experiment(const Config& cfg, const RunOptions& opts = {});

std::vector<TimeWindow> windowed_series(const Metrics& metrics, VirtualTime window_ns,
                                        VirtualTime end_time);

std::string metrics_csv_header();
std::string metrics_csv_row(const Config& cfg, const Metrics::Row& row);
std::string timelapse_csv(const std::vector<TimeWindow>& windows);

// Eq. (2) recomputed directly from trace events, for the metric identity.
double throughput_from_trace(const TraceLog& trace);

TraceLog trace_from_jsonl(const std::string& text);

}  // namespace deft
