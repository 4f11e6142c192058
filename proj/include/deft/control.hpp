#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "deft/config.hpp"
#include "deft/consensus.hpp"
#include "deft/fabric.hpp"
#include "deft/model.hpp"
#include "deft/nf.hpp"
#include "deft/sim.hpp"

namespace deft {

// Simulated SDN controller: failure detection (periodic pings), role
// assignment under the placement constraint, rule installation, and the
// failover / rescue / migration sequences. The controller itself never fails.
class Controller {
public:
    Controller(const Config& cfg, Simulator& sim, NetModel& net, TraceLog& trace)
        : cfg_(cfg), sim_(sim), net_(net), trace_(trace), actor_(trace.actor("controller")) {}

    // wiring
    std::function<Nf*(NfId)> resolve;
    SwitchNode* sw = nullptr;
    CommitService* commit = nullptr;
    std::function<void(NfId)> join_cluster;  // adds the NF as a consensus member

    struct NfRecord {
        NfId id = -1;
        NodeId node = -1;
        NfRole role = NfRole::Spare;
        NfId pair = -1;  // primary <-> secondary partner
        bool declared_failed = false;
        VirtualTime last_seen = 0;
    };

    void register_nf(NfId id, NodeId node, NfRole role, NfId pair);
    void start();        // begin FDU pings
    void stop_pings() { pings_on_ = false; }

    // round-robin primary assignment for flows without a rule
    void on_rule_request(FlowId flow);

    // scenario entry points
    void request_migration(FlowId flow, NfId dst_primary);
    void fail_node(NodeId node);

    // NF callbacks
    void on_migration_state_moved(NfId src, FlowId flow, Counter floor);

    // invariant bookkeeping
    const std::vector<std::string>& violations() const { return violations_; }
    const std::string& fatal() const { return fatal_; }
    const std::map<NfId, NfRecord>& records() const { return records_; }
    std::uint64_t failovers() const { return failovers_; }
    std::uint64_t resyncs() const { return resyncs_; }

    std::vector<NfId> fdu_tick();  // returns NFs declared failed this tick

private:
    struct Migration {
        FlowId flow = 0;
        NfId src = -1, dst = -1;
        Counter floor = 0;
        enum Phase { StateMoving, Flipped, Done, Aborted } phase = StateMoving;
    };

    void schedule_tick();
    void declare_failed(NfId id);
    void handle_primary_failure(NfId failed);
    void handle_secondary_failure(NfId failed);
    NfId pick_spare(NodeId avoid_node);
    void check_placement();
    void flip_rules_owned_by(NfId old_primary, NfId new_primary, NfId new_secondary,
                             const std::set<FlowId>& exclude);

    const Config& cfg_;
    Simulator& sim_;
    NetModel& net_;
    TraceLog& trace_;
    std::uint32_t actor_;

    std::map<NfId, NfRecord> records_;
    std::vector<NfId> spares_;
    std::vector<std::pair<NfId, NfId>> pairs_;  // (primary, secondary) in creation order
    std::uint64_t rr_ = 0;
    bool pings_on_ = false;
    std::vector<Migration> migrations_;
    std::vector<std::string> violations_;
    std::string fatal_;
    std::uint64_t failovers_ = 0;
    std::uint64_t resyncs_ = 0;
};

// Optional scaling trigger: fires a migration request when a primary's input
// buffer stays above the occupancy threshold for N consecutive polls.
// Disabled unless explicitly started; experiments drive scaling via scenario
// directives instead.
class OverloadPolicy {
public:
    OverloadPolicy(Simulator& sim, const Config& cfg, double threshold_frac, int consecutive,
                   VirtualTime poll_interval)
        : sim_(sim),
          cfg_(cfg),
          threshold_(threshold_frac),
          needed_(consecutive),
          interval_(poll_interval) {}

    std::function<void()> on_trigger;

    void watch(Nf* nf) {
        nf_ = nf;
        poll();
    }
    bool fired() const { return fired_; }

private:
    void poll() {
        if (fired_ || !nf_ || !nf_->alive()) return;
        double occ = static_cast<double>(nf_->input_size()) / cfg_.input_capacity();
        streak_ = occ > threshold_ ? streak_ + 1 : 0;
        if (streak_ >= needed_) {
            fired_ = true;
            if (on_trigger) on_trigger();
            return;
        }
        sim_.after(interval_, [this] { poll(); });
    }

    Simulator& sim_;
    const Config& cfg_;
    double threshold_;
    int needed_;
    VirtualTime interval_;
    Nf* nf_ = nullptr;
    int streak_ = 0;
    bool fired_ = false;
};

}  // namespace deft
