#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "deft/consensus.hpp"
#include "deft/model.hpp"
#include "deft/nf.hpp"

namespace deft {

// One stamped packet as the oracle sees it: identity plus the fields that
// drive state updates.
struct StampedPacket {
    PacketId id;
    std::uint32_t payload_len = 0;
    bool global_flag = false;
};

// Ground truth computed by a sequential reference processor, independent of
// batching, replication, failures, and migration.
struct OracleResult {
    LocalStateMap per_flow;
    std::map<std::uint64_t, std::int64_t> global_totals;
    std::map<FlowId, std::vector<Counter>> release_order;
    std::map<FlowId, std::uint64_t> flagged_count;  // surviving global-update packets
};

OracleResult run_oracle(const std::vector<StampedPacket>& stream,
                        const std::set<PacketId>& dropped, std::uint64_t global_keys);

// End-of-run system snapshot for equivalence checking and the state.json file.
struct NfSnapshot {
    NfId id = -1;
    std::string role;
    bool alive = true;
    bool degraded = false;
    LocalStateMap local_state;
    std::map<std::uint64_t, std::int64_t> global_state;
    std::uint64_t applied_index = 0;
    std::map<FlowId, Counter> markers;
    std::size_t input_size = 0, pending_size = 0, output_size = 0, held_size = 0;
    std::uint64_t drop_count = 0, stale_discards = 0, replayed_for_state = 0;
};

struct RunState {
    std::vector<NfSnapshot> nfs;
    std::vector<GlobalUpdate> commit_log;
    std::vector<std::string> controller_violations;
    std::string fatal;
    std::map<FlowId, NfId> owner;  // final rule table: flow -> primary
    bool ever_degraded = false;
    std::uint64_t stamper_dropped = 0;
};

std::string run_state_to_json(const RunState& s);
RunState run_state_from_json(const std::string& text);

struct Finding {
    std::string code;    // e.g. "duplicate-release", "processing-order-violation"
    std::string detail;  // first offending event
};

struct Verdict {
    bool pass = true;
    std::vector<Finding> findings;

    bool has(const std::string& code) const {
        for (const auto& f : findings)
            if (f.code == code) return true;
        return false;
    }
    std::string to_json() const;
};

// Full equivalence + invariant audit of a finished run against the oracle.
Verdict verify_run(const TraceLog& trace, const RunState& state,
                   const std::vector<StampedPacket>& stream, std::uint64_t global_keys);

// Derives the effectively-dropped set: packets dropped at an input buffer and
// never processed by any NF lineage afterwards.
std::set<PacketId> effectively_dropped(const TraceLog& trace);

}  // namespace deft
