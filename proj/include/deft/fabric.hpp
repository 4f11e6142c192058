#pragma once

#include <functional>
#include <map>
#include <unordered_map>
#include <vector>

#include "deft/config.hpp"
#include "deft/model.hpp"
#include "deft/sim.hpp"

namespace deft {

// Latency legs. Part of the entropy key so each hop samples independently.
enum class Leg : std::uint64_t {
    StamperToSwitch = 1,
    SwitchToPrimary = 2,
    SwitchToSecondary = 3,
    NfToSwitch = 4,
};

// Zero-loss network with per-delivery latency. Data-plane delays are hashed
// from (seed, flow, counter, leg) so unrelated traffic never shifts a flow's
// samples; control-plane delays are a fixed latency class.
class NetModel {
public:
    NetModel(const Config& cfg, Simulator& sim) : cfg_(cfg), sim_(sim) {}

    VirtualTime data_delay(FlowId flow, Counter counter, Leg leg) const {
        std::uint64_t h = mix64(cfg_.seed, mix64(flow, counter), static_cast<std::uint64_t>(leg));
        VirtualTime d = cfg_.base_latency_ns;
        if (cfg_.jitter_ns > 0)
            d += static_cast<VirtualTime>(unit_real(mix64(h, 0x11)) * static_cast<double>(cfg_.jitter_ns));
        if (cfg_.reorder_prob > 0.0 && unit_real(mix64(h, 0x22)) < cfg_.reorder_prob) {
            double u = unit_real(mix64(h, 0x33));
            d += cfg_.reorder_penalty_min_ns +
                 static_cast<VirtualTime>(u * static_cast<double>(cfg_.reorder_penalty_max_ns -
                                                                  cfg_.reorder_penalty_min_ns));
        }
        return d;
    }

    VirtualTime ctrl_delay() const { return cfg_.ctrl_latency_ns; }

    void send_data(FlowId flow, Counter counter, Leg leg, Simulator::Action fn) {
        sim_.after(data_delay(flow, counter, leg), std::move(fn));
        ++enqueued_;
    }
    void send_ctrl(Simulator::Action fn) { sim_.after(ctrl_delay(), std::move(fn)); }

    std::uint64_t data_deliveries() const { return enqueued_; }

private:
    const Config& cfg_;
    Simulator& sim_;
    std::uint64_t enqueued_ = 0;
};

struct FlowRule {
    FlowId flow_id = 0;
    NfId primary_nf = -1;
    NfId secondary_nf = -1;
    std::uint32_t version = 0;
};

// OpenFlow-style switch: looks up the flow rule, duplicates the packet to the
// primary and the corresponding secondary. Packets of flows without a rule
// wait at the switch until the controller installs one.
class SwitchNode {
public:
    SwitchNode(const Config& cfg, Simulator& sim, NetModel& net, TraceLog& trace)
        : cfg_(cfg), sim_(sim), net_(net), trace_(trace), actor_(trace.actor("switch")) {}

    // deliver(nf, packet, is_duplicate)
    std::function<void(NfId, const Packet&, bool)> deliver;
    // missing-rule escalation; the controller answers with update_rule().
    std::function<void(FlowId)> request_rule;

    void on_packet(const Packet& p);

    std::uint32_t update_rule(FlowId flow, NfId new_primary, NfId new_secondary);
    const FlowRule* rule(FlowId flow) const;
    const std::unordered_map<FlowId, FlowRule>& rules() const { return rules_; }

private:
    void forward(const Packet& p, const FlowRule& r);

    const Config& cfg_;
    Simulator& sim_;
    NetModel& net_;
    TraceLog& trace_;
    std::uint32_t actor_;
    std::unordered_map<FlowId, FlowRule> rules_;
    std::unordered_map<FlowId, std::vector<Packet>> awaiting_rule_;
};

}  // namespace deft
