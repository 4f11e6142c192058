#include "deft/oracle.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "deft/metrics.hpp"

namespace deft {

using json = nlohmann::json;

OracleResult run_oracle(const std::vector<StampedPacket>& stream,
                        const std::set<PacketId>& dropped, std::uint64_t global_keys) {
    // per-flow, counter order; one pass per surviving packet
    std::map<FlowId, std::map<Counter, const StampedPacket*>> by_flow;
    for (const auto& p : stream) {
        auto [it, inserted] = by_flow[p.id.flow_id].emplace(p.id.counter, &p);
        if (!inserted) throw std::runtime_error("oracle: duplicate PacketId in stamped stream");
    }
    OracleResult r;
    for (const auto& [flow, packets] : by_flow) {
        for (const auto& [counter, p] : packets) {
            if (dropped.count(p->id)) continue;
            auto& ls = r.per_flow[flow];
            ++ls.pkt_count;
            ls.byte_sum += p->payload_len;
            r.release_order[flow].push_back(counter);
            if (p->global_flag) {
                r.global_totals[flow % global_keys] += 1;
                ++r.flagged_count[flow];
            }
        }
    }
    return r;
}

std::set<PacketId> effectively_dropped(const TraceLog& trace) {
    std::set<PacketId> dropped;
    std::set<PacketId> processed;
    for (const auto& ev : trace.events()) {
        if (!ev.packet) continue;
        if (ev.kind == TraceKind::Dropped) dropped.insert(*ev.packet);
        if (ev.kind == TraceKind::Processed) processed.insert(*ev.packet);
    }
    for (auto it = dropped.begin(); it != dropped.end();)
        it = processed.count(*it) ? dropped.erase(it) : ++it;
    return dropped;
}

namespace {

std::string ev_str(const TraceLog& log, const TraceEvent& ev) {
    return jsonl_line(log, ev);
}

}  // namespace

Verdict verify_run(const TraceLog& trace, const RunState& state,
                   const std::vector<StampedPacket>& stream, std::uint64_t global_keys) {
    Verdict v;
    auto fail = [&v](std::string code, std::string detail) {
        v.pass = false;
        v.findings.push_back(Finding{std::move(code), std::move(detail)});
    };

    if (!state.fatal.empty()) fail("fatal", state.fatal);
    for (const auto& viol : state.controller_violations) fail("placement-violation", viol);

    std::set<PacketId> dropped = effectively_dropped(trace);
    OracleResult oracle = run_oracle(stream, dropped, global_keys);

    // ---- single pass over the trace -------------------------------------
    std::unordered_map<PacketId, int, PacketIdHash> switch_in, dup_out, released_count;
    std::unordered_set<PacketId, PacketIdHash> seen_nf_in, seen_processed;
    std::map<FlowId, std::vector<Counter>> released_seq;
    // last processing of each counter (a batch lost with a failed primary is
    // legitimately reprocessed by the promoted secondary)
    std::map<FlowId, std::map<Counter, std::size_t>> processed_last;
    std::map<std::pair<std::uint32_t, FlowId>, Counter> actor_last;
    struct ClockPos {
        BatchId i = 0, j = 0;
        VirtualTime t = -1;
        bool dirty = false;
    };
    std::map<std::uint32_t, ClockPos> clocks;  // per actor
    std::map<std::uint32_t, std::vector<PacketId>> submit_order;  // GlobalCommitStart per actor
    std::uint64_t input_drop_events = 0;

    auto check_clock = [&](std::uint32_t actor, ClockPos& c, const TraceEvent& ev) {
        if (!c.dirty) return;
        if (c.j > c.i || c.i > c.j + 1)
            fail("clock-lag-violation", "actor " + trace.actor_name(actor) + " i=" +
                                            std::to_string(c.i) + " j=" + std::to_string(c.j) +
                                            " at " + ev_str(trace, ev));
        c.dirty = false;
    };

    const auto& events = trace.events();
    for (std::size_t idx = 0; idx < events.size(); ++idx) {
        const TraceEvent& ev = events[idx];
        // clock-lag audit: evaluate once per (actor,time) burst so that a
        // baseline's paired commits count as one transition
        if (ev.kind == TraceKind::PacketClockCommit || ev.kind == TraceKind::StateClockCommit) {
            ClockPos& c = clocks[ev.actor];
            if (c.dirty && c.t != ev.time) check_clock(ev.actor, c, ev);
            if (ev.kind == TraceKind::PacketClockCommit)
                c.i = std::max(c.i, *ev.batch);
            else
                c.j = std::max(c.j, *ev.batch);
            c.t = ev.time;
            c.dirty = true;
            bool last_for_actor_now =
                idx + 1 >= events.size() || events[idx + 1].time != ev.time ||
                events[idx + 1].actor != ev.actor ||
                (events[idx + 1].kind != TraceKind::PacketClockCommit &&
                 events[idx + 1].kind != TraceKind::StateClockCommit);
            if (last_for_actor_now) check_clock(ev.actor, c, ev);
            continue;
        }
        if (!ev.packet) continue;
        const PacketId& id = *ev.packet;
        switch (ev.kind) {
            case TraceKind::SwitchIn: ++switch_in[id]; break;
            case TraceKind::DupOut: ++dup_out[id]; break;
            case TraceKind::NfIn: seen_nf_in.insert(id); break;
            case TraceKind::Dropped: ++input_drop_events; break;
            case TraceKind::GlobalCommitStart: submit_order[ev.actor].push_back(id); break;
            case TraceKind::Processed: {
                if (!seen_nf_in.count(id))
                    fail("causality-violation", "Processed before NfIn: " + ev_str(trace, ev));
                seen_processed.insert(id);
                auto [it, inserted] =
                    actor_last.emplace(std::make_pair(ev.actor, id.flow_id), id.counter);
                if (!inserted) {
                    if (id.counter <= it->second)
                        fail("processing-order-violation",
                             "actor processed out of order: " + ev_str(trace, ev));
                    it->second = id.counter;
                }
                processed_last[id.flow_id][id.counter] = idx;
                break;
            }
            case TraceKind::Released:
                if (!seen_processed.count(id))
                    fail("causality-violation", "Released before Processed: " + ev_str(trace, ev));
                ++released_count[id];
                released_seq[id.flow_id].push_back(id.counter);
                break;
            default: break;
        }
    }

    // ---- duplication at the switch --------------------------------------
    if (!state.ever_degraded) {
        for (const auto& [id, n] : switch_in) {
            if (dup_out[id] != 2 * n) {
                fail("duplication-violation",
                     "flow " + std::to_string(id.flow_id) + " counter " +
                         std::to_string(id.counter) + ": " + std::to_string(dup_out[id]) +
                         " DupOut for " + std::to_string(n) + " SwitchIn");
                break;
            }
        }
    }

    // ---- P4: the surviving processing of each flow is 1,2,3,... in order --
    for (const auto& [flow, expect] : oracle.release_order) {
        auto it = processed_last.find(flow);
        std::vector<std::pair<std::size_t, Counter>> order;  // (trace idx, counter)
        if (it != processed_last.end())
            for (const auto& [c, idx] : it->second) order.emplace_back(idx, c);
        std::sort(order.begin(), order.end());
        std::vector<Counter> got;
        got.reserve(order.size());
        for (const auto& [idx, c] : order) got.push_back(c);
        if (got != expect) {
            std::string detail = "flow " + std::to_string(flow) + " processed " +
                                 std::to_string(got.size()) + " packets, expected " +
                                 std::to_string(expect.size());
            for (std::size_t k = 0; k < std::min(got.size(), expect.size()); ++k)
                if (got[k] != expect[k]) {
                    detail += "; first divergence at position " + std::to_string(k) + ": got " +
                              std::to_string(got[k]) + " expected " + std::to_string(expect[k]);
                    break;
                }
            fail("processing-order-violation", detail);
        }
    }
    for (const auto& [flow, got] : processed_last)
        if (!oracle.release_order.count(flow) && !got.empty())
            fail("processing-order-violation",
                 "flow " + std::to_string(flow) + " processed but unknown to the oracle");

    // ---- P5: exactly-once release, in counter order ----------------------
    for (const auto& [id, n] : released_count)
        if (n > 1) {
            fail("duplicate-release", "flow " + std::to_string(id.flow_id) + " counter " +
                                          std::to_string(id.counter) + " released " +
                                          std::to_string(n) + " times");
            break;
        }
    for (const auto& [flow, expect] : oracle.release_order) {
        auto it = released_seq.find(flow);
        const std::vector<Counter> empty;
        std::vector<Counter> got = it == released_seq.end() ? empty : it->second;
        if (!std::is_sorted(got.begin(), got.end()))
            fail("release-order-violation", "flow " + std::to_string(flow) +
                                                " released out of counter order");
        std::vector<Counter> sorted = got;
        std::sort(sorted.begin(), sorted.end());
        if (sorted != expect) {
            if (sorted.size() < expect.size())
                fail("lost-release", "flow " + std::to_string(flow) + " released " +
                                         std::to_string(sorted.size()) + " of " +
                                         std::to_string(expect.size()) + " packets");
            else
                fail("release-mismatch", "flow " + std::to_string(flow) +
                                             " release set differs from oracle");
        }
    }

    // ---- P3: global order and totals -------------------------------------
    std::map<FlowId, Counter> last_counter_in_log;
    std::map<FlowId, std::uint64_t> log_count;
    std::map<std::uint64_t, std::int64_t> log_sums;
    for (const auto& u : state.commit_log) {
        auto [it, inserted] = last_counter_in_log.emplace(u.origin_pkt.flow_id,
                                                          u.origin_pkt.counter);
        if (!inserted) {
            if (u.origin_pkt.counter <= it->second)
                fail("global-order-violation",
                     "flow " + std::to_string(u.origin_pkt.flow_id) +
                         " global updates out of per-flow order in the log");
            it->second = u.origin_pkt.counter;
        }
        ++log_count[u.origin_pkt.flow_id];
        log_sums[u.key] += u.delta;
    }
    for (const auto& [flow, n] : oracle.flagged_count)
        if (log_count[flow] != n)
            fail("duplicate-global-entry",
                 "flow " + std::to_string(flow) + " has " + std::to_string(log_count[flow]) +
                     " log entries, expected " + std::to_string(n));
    for (const auto& [flow, n] : log_count)
        if (!oracle.flagged_count.count(flow) && n > 0)
            fail("duplicate-global-entry",
                 "flow " + std::to_string(flow) + " has log entries but no surviving flags");
    if (log_sums != oracle.global_totals)
        fail("global-log-mismatch", "per-key log sums differ from oracle totals");

    for (const auto& nf : state.nfs) {
        if (!nf.alive || nf.role == "spare") continue;  // spares join on activation
        if (nf.applied_index != state.commit_log.size())
            fail("global-mismatch", "nf" + std::to_string(nf.id) + " applied " +
                                        std::to_string(nf.applied_index) + " of " +
                                        std::to_string(state.commit_log.size()) + " entries");
        std::map<std::uint64_t, std::int64_t> nonzero;
        for (const auto& [k, val] : nf.global_state)
            if (val != 0) nonzero[k] = val;
        if (nonzero != oracle.global_totals)
            fail("global-mismatch",
                 "nf" + std::to_string(nf.id) + " applied global map differs from oracle");
    }

    // ---- final per-flow state at the owning NF ---------------------------
    std::map<NfId, const NfSnapshot*> by_id;
    for (const auto& nf : state.nfs) by_id[nf.id] = &nf;
    for (const auto& [flow, owner] : state.owner) {
        auto oit = oracle.per_flow.find(flow);
        LocalFlowState expect = oit == oracle.per_flow.end() ? LocalFlowState{} : oit->second;
        auto nit = by_id.find(owner);
        if (nit == by_id.end() || !nit->second->alive) {
            fail("state-mismatch", "flow " + std::to_string(flow) + " owner nf" +
                                       std::to_string(owner) + " is not alive at quiescence");
            continue;
        }
        const auto& ls_map = nit->second->local_state;
        auto lit = ls_map.find(flow);
        LocalFlowState got = lit == ls_map.end() ? LocalFlowState{} : lit->second;
        if (!(got == expect))
            fail("state-mismatch",
                 "flow " + std::to_string(flow) + " owner nf" + std::to_string(owner) +
                     " state (" + std::to_string(got.pkt_count) + "," +
                     std::to_string(got.byte_sum) + ") expected (" +
                     std::to_string(expect.pkt_count) + "," + std::to_string(expect.byte_sum) +
                     ")");
    }

    // ---- quiescence and drop accounting ----------------------------------
    for (const auto& nf : state.nfs) {
        if (!nf.alive || nf.role != "primary") continue;
        if (nf.input_size || nf.pending_size || nf.output_size)
            fail("quiescence-violation",
                 "nf" + std::to_string(nf.id) + " still buffers packets at quiescence");
    }
    std::uint64_t drops = 0;
    for (const auto& nf : state.nfs) drops += nf.drop_count;
    if (drops != input_drop_events)
        fail("drop-accounting-mismatch",
             "trace has " + std::to_string(input_drop_events) + " input-drop events, NFs report " +
                 std::to_string(drops));

    return v;
}

// ------------------------------------------------------------- state JSON

namespace {

json local_state_to_json(const LocalStateMap& m) {
    json j = json::object();
    for (const auto& [f, s] : m)
        j[std::to_string(f)] = {{"pkt_count", s.pkt_count}, {"byte_sum", s.byte_sum}};
    return j;
}

LocalStateMap local_state_from_json(const json& j) {
    LocalStateMap m;
    for (auto it = j.begin(); it != j.end(); ++it)
        m[std::stoull(it.key())] =
            LocalFlowState{it.value().at("pkt_count"), it.value().at("byte_sum")};
    return m;
}

template <typename V>
json num_map_to_json(const std::map<std::uint64_t, V>& m) {
    json j = json::object();
    for (const auto& [k, val] : m) j[std::to_string(k)] = val;
    return j;
}

}  // namespace

std::string run_state_to_json(const RunState& s) {
    json j;
    j["fatal"] = s.fatal;
    j["ever_degraded"] = s.ever_degraded;
    j["controller_violations"] = s.controller_violations;
    j["stamper_dropped"] = s.stamper_dropped;
    j["owner"] = num_map_to_json<NfId>(
        std::map<std::uint64_t, NfId>(s.owner.begin(), s.owner.end()));
    j["commit_log"] = json::array();
    for (const auto& u : s.commit_log)
        j["commit_log"].push_back({{"key", u.key},
                                   {"delta", u.delta},
                                   {"flow_id", u.origin_pkt.flow_id},
                                   {"counter", u.origin_pkt.counter},
                                   {"origin_nf", u.origin_nf}});
    j["nfs"] = json::array();
    for (const auto& nf : s.nfs) {
        json n;
        n["id"] = nf.id;
        n["role"] = nf.role;
        n["alive"] = nf.alive;
        n["degraded"] = nf.degraded;
        n["local_state"] = local_state_to_json(nf.local_state);
        n["global_state"] = num_map_to_json<std::int64_t>(nf.global_state);
        n["applied_index"] = nf.applied_index;
        n["markers"] = num_map_to_json<Counter>(
            std::map<std::uint64_t, Counter>(nf.markers.begin(), nf.markers.end()));
        n["input_size"] = nf.input_size;
        n["pending_size"] = nf.pending_size;
        n["output_size"] = nf.output_size;
        n["held_size"] = nf.held_size;
        n["drop_count"] = nf.drop_count;
        n["stale_discards"] = nf.stale_discards;
        n["replayed_for_state"] = nf.replayed_for_state;
        j["nfs"].push_back(std::move(n));
    }
    return j.dump(2);
}

RunState run_state_from_json(const std::string& text) {
    json j = json::parse(text);
    RunState s;
    s.fatal = j.value("fatal", "");
    s.ever_degraded = j.value("ever_degraded", false);
    s.stamper_dropped = j.value("stamper_dropped", 0ULL);
    for (const auto& viol : j.value("controller_violations", json::array()))
        s.controller_violations.push_back(viol.get<std::string>());
    for (auto it = j.at("owner").begin(); it != j.at("owner").end(); ++it)
        s.owner[std::stoull(it.key())] = it.value().get<NfId>();
    for (const auto& u : j.at("commit_log"))
        s.commit_log.push_back(GlobalUpdate{
            u.at("key"), u.at("delta"),
            PacketId{u.at("flow_id"), u.at("counter")}, u.at("origin_nf")});
    for (const auto& n : j.at("nfs")) {
        NfSnapshot nf;
        nf.id = n.at("id");
        nf.role = n.at("role");
        nf.alive = n.at("alive");
        nf.degraded = n.at("degraded");
        nf.local_state = local_state_from_json(n.at("local_state"));
        for (auto it = n.at("global_state").begin(); it != n.at("global_state").end(); ++it)
            nf.global_state[std::stoull(it.key())] = it.value().get<std::int64_t>();
        nf.applied_index = n.at("applied_index");
        for (auto it = n.at("markers").begin(); it != n.at("markers").end(); ++it)
            nf.markers[std::stoull(it.key())] = it.value().get<Counter>();
        nf.input_size = n.at("input_size");
        nf.pending_size = n.at("pending_size");
        nf.output_size = n.at("output_size");
        nf.held_size = n.at("held_size");
        nf.drop_count = n.at("drop_count");
        nf.stale_discards = n.at("stale_discards");
        nf.replayed_for_state = n.value("replayed_for_state", 0ULL);
        s.nfs.push_back(std::move(nf));
    }
    return s;
}

std::string Verdict::to_json() const {
    json j;
    j["pass"] = pass;
    j["findings"] = json::array();
    for (const auto& f : findings) j["findings"].push_back({{"code", f.code}, {"detail", f.detail}});
    return j.dump(2);
}

}  // namespace deft
