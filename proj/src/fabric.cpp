#include "deft/fabric.hpp"

#include <cassert>
#include <stdexcept>

namespace deft {

void SwitchNode::on_packet(const Packet& p) {
    trace_.emit(sim_.now(), actor_, TraceKind::SwitchIn, p.id);
    auto it = rules_.find(p.id.flow_id);
    if (it == rules_.end()) {
        auto& q = awaiting_rule_[p.id.flow_id];
        q.push_back(p);
        if (q.size() == 1 && request_rule) request_rule(p.id.flow_id);
        return;
    }
    forward(p, it->second);
}

void SwitchNode::forward(const Packet& p, const FlowRule& r) {
    // A packet is routed entirely by one rule version: both deliveries are
    // sampled and enqueued here, atomically with the lookup.
    NfId primary = r.primary_nf;
    NfId secondary = r.secondary_nf;
    trace_.emit(sim_.now(), actor_, TraceKind::DupOut, p.id);
    net_.send_data(p.id.flow_id, p.id.counter, Leg::SwitchToPrimary,
                   [this, p, primary] { deliver(primary, p, false); });
    if (secondary >= 0) {  // a degraded pair has no duplicate target
        trace_.emit(sim_.now(), actor_, TraceKind::DupOut, p.id);
        net_.send_data(p.id.flow_id, p.id.counter, Leg::SwitchToSecondary,
                       [this, p, secondary] { deliver(secondary, p, true); });
    }
}

std::uint32_t SwitchNode::update_rule(FlowId flow, NfId new_primary, NfId new_secondary) {
    if (new_primary == new_secondary)
        throw std::invalid_argument("flow rule: primary and secondary must differ");
    FlowRule& r = rules_[flow];
    r.flow_id = flow;
    r.primary_nf = new_primary;
    r.secondary_nf = new_secondary;
    ++r.version;
    if (auto it = awaiting_rule_.find(flow); it != awaiting_rule_.end()) {
        for (const Packet& p : it->second) forward(p, r);
        awaiting_rule_.erase(it);
    }
    return r.version;
}

const FlowRule* SwitchNode::rule(FlowId flow) const {
    auto it = rules_.find(flow);
    return it == rules_.end() ? nullptr : &it->second;
}

}  // namespace deft
