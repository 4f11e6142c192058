#include "deft/control.hpp"

#include <algorithm>

namespace deft {

void Controller::register_nf(NfId id, NodeId node, NfRole role, NfId pair) {
    records_[id] = NfRecord{id, node, role, pair, false, 0};
    if (role == NfRole::Spare) spares_.push_back(id);
    if (role == NfRole::Primary) pairs_.emplace_back(id, pair);
}

void Controller::start() {
    pings_on_ = true;
    schedule_tick();
}

void Controller::schedule_tick() {
    sim_.after(cfg_.ping_interval_ns, [this] {
        if (!pings_on_) return;
        fdu_tick();
        schedule_tick();
    });
}

std::vector<NfId> Controller::fdu_tick() {
    // ping every NF; live ones refresh last_seen after a round trip
    for (auto& [id, rec] : records_) {
        if (rec.declared_failed) continue;
        NfId nf_id = id;
        sim_.after(net_.ctrl_delay(), [this, nf_id] {
            Nf* nf = resolve(nf_id);
            if (!nf || !nf->alive()) return;
            sim_.after(net_.ctrl_delay(), [this, nf_id] {
                auto it = records_.find(nf_id);
                if (it != records_.end()) it->second.last_seen = sim_.now();
            });
        });
    }
    std::vector<NfId> declared;
    VirtualTime limit = static_cast<VirtualTime>(cfg_.suspect_threshold) * cfg_.ping_interval_ns;
    for (auto& [id, rec] : records_) {
        if (rec.declared_failed) continue;
        if (sim_.now() - rec.last_seen > limit) {
            declared.push_back(id);
        }
    }
    for (NfId id : declared) declare_failed(id);
    return declared;
}

void Controller::declare_failed(NfId id) {
    NfRecord& rec = records_[id];
    rec.declared_failed = true;
    switch (rec.role) {
        case NfRole::Primary: handle_primary_failure(id); break;
        case NfRole::Secondary: handle_secondary_failure(id); break;
        case NfRole::Spare:
            spares_.erase(std::remove(spares_.begin(), spares_.end(), id), spares_.end());
            break;
    }
}

NfId Controller::pick_spare(NodeId avoid_node) {
    for (auto it = spares_.begin(); it != spares_.end(); ++it) {
        NfRecord& rec = records_[*it];
        if (rec.declared_failed || rec.node == avoid_node) continue;
        Nf* nf = resolve(*it);
        if (!nf || !nf->alive()) continue;
        NfId id = *it;
        spares_.erase(it);
        return id;
    }
    return -1;
}

void Controller::check_placement() {
    for (const auto& [id, rec] : records_) {
        if (rec.role != NfRole::Primary || rec.declared_failed || rec.pair < 0) continue;
        const NfRecord& sec = records_[rec.pair];
        if (sec.declared_failed) continue;
        if (sec.node == rec.node)
            violations_.push_back("placement: nf" + std::to_string(id) + " and nf" +
                                  std::to_string(rec.pair) + " share node " +
                                  std::to_string(rec.node));
    }
}

void Controller::flip_rules_owned_by(NfId old_primary, NfId new_primary, NfId new_secondary,
                                     const std::set<FlowId>& exclude) {
    std::vector<FlowId> flows;
    for (const auto& [flow, rule] : sw->rules())
        if (rule.primary_nf == old_primary && !exclude.count(flow)) flows.push_back(flow);
    std::sort(flows.begin(), flows.end());
    sim_.after(net_.ctrl_delay(), [this, flows, new_primary, new_secondary] {
        for (FlowId f : flows) sw->update_rule(f, new_primary, new_secondary);
    });
}

void Controller::handle_primary_failure(NfId failed) {
    ++failovers_;
    NfRecord& rec = records_[failed];
    NfId b = rec.pair;
    Nf* bnf = b >= 0 ? resolve(b) : nullptr;
    if (!bnf || !bnf->alive() || records_[b].declared_failed) {
        fatal_ = "pair lost: primary nf" + std::to_string(failed) +
                 " failed with no live secondary";
        return;
    }

    // settle migrations whose source just died
    std::vector<FlowDisposition> dispositions;
    std::set<FlowId> exclude_from_flip;
    for (Migration& m : migrations_) {
        if (m.src == failed) {
            if (m.phase == Migration::StateMoving) {
                m.phase = Migration::Aborted;
                NfId dst = m.dst;
                FlowId flow = m.flow;
                sim_.after(net_.ctrl_delay(), [this, dst, flow] {
                    if (Nf* d = resolve(dst)) d->drop_adopted_flow(flow);
                });
            } else if (m.phase != Migration::Aborted) {
                dispositions.push_back(FlowDisposition{m.flow, true, m.floor});
                exclude_from_flip.insert(m.flow);
                m.src = b;  // a later failover of b inherits the disposition
            }
        }
        if (m.dst == failed && m.phase == Migration::StateMoving) {
            m.phase = Migration::Aborted;
            NfId src = m.src;
            FlowId flow = m.flow;
            sim_.after(net_.ctrl_delay(), [this, src, flow] {
                if (Nf* s = resolve(src)) s->migrate_out_abort(flow);
            });
        }
    }

    NfId c = pick_spare(records_[b].node);
    if (c >= 0) {
        records_[c].role = NfRole::Secondary;
        records_[c].pair = b;
        Nf* cnf = resolve(c);
        cnf->activate_as_secondary(b);
        join_cluster(c);
    }
    records_[b].role = NfRole::Primary;
    records_[b].pair = c;
    for (auto& [p, s] : pairs_)
        if (p == failed) {
            p = b;
            s = c;
        }
    check_placement();

    commit->fence(failed, [this, failed, b, c, dispositions, exclude_from_flip](
                              std::uint64_t log_floor) {
        flip_rules_owned_by(failed, b, c, exclude_from_flip);
        // wait out in-flight duplicates sent before the flip, then promote
        VirtualTime drain = net_.ctrl_delay() + cfg_.max_data_latency();
        sim_.after(drain + net_.ctrl_delay(), [this, b, c, log_floor, dispositions] {
            if (Nf* bnf = resolve(b)) bnf->promote(c, log_floor, dispositions, nullptr);
        });
    });
}

void Controller::handle_secondary_failure(NfId failed) {
    ++resyncs_;
    NfRecord& rec = records_[failed];
    NfId a = rec.pair;
    Nf* anf = a >= 0 ? resolve(a) : nullptr;
    if (!anf || !anf->alive() || records_[a].declared_failed) {
        fatal_ = "pair lost: secondary nf" + std::to_string(failed) +
                 " failed with no live primary";
        return;
    }
    NfId c = pick_spare(records_[a].node);
    if (c >= 0) {
        records_[c].role = NfRole::Secondary;
        records_[c].pair = a;
        resolve(c)->activate_as_secondary(a);
        join_cluster(c);
    }
    records_[a].pair = c;
    for (auto& [p, s] : pairs_)
        if (p == a) s = c;
    check_placement();

    flip_rules_owned_by(a, a, c, {});
    VirtualTime drain = net_.ctrl_delay() + cfg_.max_data_latency();
    sim_.after(drain + net_.ctrl_delay(), [this, a, c] {
        if (Nf* anf = resolve(a)) anf->resync_to_new_secondary(c, nullptr);
    });
}

void Controller::on_rule_request(FlowId flow) {
    sim_.after(net_.ctrl_delay(), [this, flow] {
        if (sw->rule(flow)) return;
        // round-robin over pairs with a live primary
        for (std::size_t i = 0; i < pairs_.size(); ++i) {
            auto [p, s] = pairs_[rr_ % pairs_.size()];
            ++rr_;
            Nf* pnf = resolve(p);
            if (!pnf || !pnf->alive() || records_[p].declared_failed) continue;
            sim_.after(net_.ctrl_delay(), [this, flow, p, s] {
                if (!sw->rule(flow)) sw->update_rule(flow, p, s);
            });
            return;
        }
        violations_.push_back("no live primary available for flow " + std::to_string(flow));
    });
}

void Controller::request_migration(FlowId flow, NfId dst_primary) {
    const FlowRule* rule = sw->rule(flow);
    if (!rule) return;
    NfId src = rule->primary_nf;
    if (src == dst_primary) return;
    if (records_[src].declared_failed || records_[dst_primary].declared_failed) return;
    migrations_.push_back(Migration{flow, src, dst_primary, 0, Migration::StateMoving});
    sim_.after(net_.ctrl_delay(), [this, src, flow, dst_primary] {
        if (Nf* s = resolve(src)) s->migrate_out_begin(flow, dst_primary);
    });
}

void Controller::on_migration_state_moved(NfId src, FlowId flow, Counter floor) {
    for (Migration& m : migrations_) {
        if (m.src != src || m.flow != flow || m.phase != Migration::StateMoving) continue;
        m.floor = floor;
        m.phase = Migration::Flipped;
        NfId dst = m.dst;
        sim_.after(net_.ctrl_delay(), [this, flow, dst, src] {
            NfId dst_secondary = records_[dst].pair;
            sw->update_rule(flow, dst, dst_secondary);
            sim_.after(net_.ctrl_delay(), [this, src, flow] {
                for (Migration& m2 : migrations_)
                    if (m2.src == src && m2.flow == flow && m2.phase == Migration::Flipped)
                        m2.phase = Migration::Done;
                if (Nf* s = resolve(src)) s->migrate_out_flush(flow);
            });
        });
        return;
    }
}

void Controller::fail_node(NodeId node) {
    for (auto& [id, rec] : records_) {
        if (rec.node != node) continue;
        if (Nf* nf = resolve(id)) nf->crash();
    }
}

}  // namespace deft
