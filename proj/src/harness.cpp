#include "deft/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <queue>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace deft {

// ----------------------------------------------------------------- traffic

FlowKey make_flow_key(std::uint64_t j) {
    FlowKey k;
    k.src_ip = 0x0A000000u | static_cast<std::uint32_t>(j & 0xFFFFFF);
    k.dst_ip = 0xC0A80001u;
    k.src_port = static_cast<std::uint16_t>(1024 + (j % 50000));
    k.dst_port = 5000;
    k.protocol = 17;  // UDP
    return k;
}

namespace {

bool flag_at(const Config& cfg, std::uint64_t idx) {
    if (cfg.burst_count > 0 && idx >= cfg.burst_at_packet &&
        idx < cfg.burst_at_packet + cfg.burst_count)
        return true;
    if (cfg.updates_per_batch == 0) return false;
    std::uint64_t b = cfg.batch_size;
    std::uint64_t u = cfg.updates_per_batch;
    std::uint64_t pos = idx % b;
    return (pos + 1) * u / b > pos * u / b;
}

VirtualTime flow_period(const Config& cfg, double rate) {
    return static_cast<VirtualTime>(
        std::llround(1e9 * static_cast<double>(cfg.flow_count) / rate));
}

}  // namespace

std::vector<Arrival> build_arrival_schedule(const Config& cfg) {
    std::vector<std::pair<VirtualTime, double>> rates{{0, cfg.rate_pps}};
    for (const Directive& d : cfg.scenario)
        if (d.op == "set_rate") rates.emplace_back(d.time_ns, static_cast<double>(d.arg0));
    std::sort(rates.begin(), rates.end());
    auto rate_at = [&rates](VirtualTime t) {
        double r = rates.front().second;
        for (const auto& [tt, rr] : rates)
            if (tt <= t) r = rr;
        return r;
    };

    using Slot = std::pair<VirtualTime, std::uint64_t>;  // (time, flow)
    std::priority_queue<Slot, std::vector<Slot>, std::greater<>> q;
    VirtualTime period0 = flow_period(cfg, cfg.rate_pps);
    for (std::uint64_t j = 0; j < cfg.flow_count; ++j) {
        double u = unit_real(mix64(cfg.seed, 0xF10Aull, j));
        q.emplace(static_cast<VirtualTime>(u * static_cast<double>(period0)), j);
    }
    std::vector<Arrival> out;
    out.reserve(cfg.packet_count);
    while (out.size() < cfg.packet_count && !q.empty()) {
        auto [t, j] = q.top();
        q.pop();
        out.push_back(Arrival{t, j, flag_at(cfg, out.size())});
        q.emplace(t + flow_period(cfg, rate_at(t)), j);
    }
    return out;
}

std::vector<StampedPacket> regenerate_stamped_stream(const Config& cfg) {
    std::vector<Arrival> schedule = build_arrival_schedule(cfg);

    // offline stamper replica: same unit logic, windows applied by time
    TraceLog scratch;
    std::vector<StampingUnit> units;
    units.reserve(cfg.unit_count);
    for (std::uint32_t i = 0; i < cfg.unit_count; ++i) units.emplace_back(i, scratch);

    struct Transition {
        VirtualTime time;
        int kind;  // 0 fail unit, 1 recover unit, 2 fail manager, 3 recover manager
        std::uint32_t unit;
    };
    std::vector<Transition> trans;
    for (const auto& [s, e] : cfg.manager_failure_windows) {
        trans.push_back({s, 2, 0});
        trans.push_back({e, 3, 0});
    }
    for (const auto& [s, e, u] : cfg.unit_failure_windows) {
        trans.push_back({s, 0, u});
        trans.push_back({e, 1, u});
    }
    for (const Directive& d : cfg.scenario) {
        if (d.op == "fail_unit") trans.push_back({d.time_ns, 0, static_cast<std::uint32_t>(d.arg0)});
        if (d.op == "recover_unit")
            trans.push_back({d.time_ns, 1, static_cast<std::uint32_t>(d.arg0)});
        if (d.op == "fail_manager") trans.push_back({d.time_ns, 2, 0});
        if (d.op == "recover_manager") trans.push_back({d.time_ns, 3, 0});
    }
    std::stable_sort(trans.begin(), trans.end(),
                     [](const Transition& a, const Transition& b) { return a.time < b.time; });

    bool manager_alive = true;
    std::size_t ti = 0;
    std::vector<StampedPacket> stream;
    for (const Arrival& a : schedule) {
        while (ti < trans.size() && trans[ti].time <= a.time) {
            switch (trans[ti].kind) {
                case 0: units[trans[ti].unit].fail(); break;
                case 1: units[trans[ti].unit].recover(); break;
                case 2: manager_alive = false; break;
                case 3: manager_alive = true; break;
            }
            ++ti;
        }
        if (!manager_alive) continue;
        FlowKey key = make_flow_key(a.flow);
        StampingUnit& u = units[flow_hash(key, units.size())];
        if (!u.alive()) continue;
        stream.push_back(StampedPacket{u.stamp(key), cfg.payload_len, a.flag});
    }
    return stream;
}

TrafficSource::TrafficSource(const Config& cfg, Simulator& sim, StamperManager& stamper,
                             Metrics& metrics)
    : cfg_(cfg), sim_(sim), stamper_(stamper), metrics_(metrics),
      schedule_(build_arrival_schedule(cfg)) {
    stream_.reserve(schedule_.size());
}

void TrafficSource::start() {
    if (schedule_.empty()) return;
    sim_.at(schedule_[0].time, [this] { fire(0); });
}

void TrafficSource::fire(std::size_t i) {
    const Arrival& a = schedule_[i];
    auto pkt = stamper_.stamp(make_flow_key(a.flow), cfg_.payload_len, a.flag);
    if (pkt) {
        metrics_.on_stamped(pkt->id, sim_.now());
        stream_.push_back(StampedPacket{pkt->id, cfg_.payload_len, a.flag});
        flow_ids_[a.flow] = pkt->id.flow_id;
    }
    if (i + 1 < schedule_.size()) sim_.at(schedule_[i + 1].time, [this, i] { fire(i + 1); });
}

// ------------------------------------------------------------------ system

System::System(const Config& c)
    : cfg(c),
      metrics(cfg),
      net(cfg, sim),
      stamper(cfg, sim, trace),
      sw(cfg, sim, net, trace),
      ctrl(cfg, sim, net, trace),
      commit(make_commit_service(cfg, sim,
                                 [this](NfId id) {
                                     Nf* n = nf(id);
                                     return n && n->alive();
                                 })),
      traffic(cfg, sim, stamper, metrics) {
    std::uint32_t pair_count = cfg.nf_pairs;
    NfId total = static_cast<NfId>(2 * pair_count + cfg.spare_nfs);
    for (NfId id = 0; id < total; ++id) {
        NfRole role = id < static_cast<NfId>(2 * pair_count)
                          ? (id % 2 == 0 ? NfRole::Primary : NfRole::Secondary)
                          : NfRole::Spare;
        nfs.push_back(std::make_unique<Nf>(id, role, id % 2, cfg, sim, net, trace, &metrics));
    }
    for (std::uint32_t k = 0; k < pair_count; ++k) {
        nfs[2 * k]->set_peer(2 * k + 1);
        nfs[2 * k + 1]->set_peer(2 * k);
    }

    auto resolve = [this](NfId id) { return nf(id); };
    stamper.forward = [this](const Packet& p) {
        net.send_data(p.id.flow_id, p.id.counter, Leg::StamperToSwitch,
                      [this, p] { sw.on_packet(p); });
    };
    sw.deliver = [this](NfId id, const Packet& p, bool dup) {
        if (Nf* n = nf(id)) n->on_arrival(p, dup);
    };
    sw.request_rule = [this](FlowId f) { ctrl.on_rule_request(f); };
    ctrl.resolve = resolve;
    ctrl.sw = &sw;
    ctrl.commit = commit.get();
    ctrl.join_cluster = [this](NfId id) {
        if (Nf* n = nf(id)) commit->join(n->member_port());
    };
    for (auto& n : nfs) {
        n->resolve = resolve;
        n->commit_service = commit.get();
        n->to_switch = [this](const Packet& p) {
            net.send_data(p.id.flow_id, p.id.counter, Leg::NfToSwitch,
                          [this, p] { sw.on_packet(p); });
        };
        n->notify_migration_state_moved = [this](NfId src, FlowId f, Counter floor) {
            sim.after(net.ctrl_delay(),
                      [this, src, f, floor] { ctrl.on_migration_state_moved(src, f, floor); });
        };
        NfRole role = n->role();
        ctrl.register_nf(n->id(), n->node(), role, n->peer());
        if (role != NfRole::Spare) commit->add_member(n->member_port());
    }
}

void System::install_scenario() {
    for (const auto& [s, e] : cfg.manager_failure_windows) {
        sim.at(s, [this] { stamper.fail_manager(); });
        sim.at(e, [this] { stamper.recover_manager(); });
    }
    for (const auto& [s, e, u] : cfg.unit_failure_windows) {
        std::uint32_t unit = u;
        sim.at(s, [this, unit] { stamper.fail_unit(unit); });
        sim.at(e, [this, unit] { stamper.recover_unit(unit); });
    }
    for (const Directive& d : cfg.scenario) {
        if (d.op == "set_rate") continue;  // baked into the arrival schedule
        sim.at(d.time_ns, [this, d] {
            if (d.op == "fail_nf") {
                if (Nf* n = nf(static_cast<NfId>(d.arg0))) n->crash();
            } else if (d.op == "fail_node") {
                ctrl.fail_node(static_cast<NodeId>(d.arg0));
            } else if (d.op == "fail_unit") {
                stamper.fail_unit(static_cast<std::uint32_t>(d.arg0));
            } else if (d.op == "recover_unit") {
                stamper.recover_unit(static_cast<std::uint32_t>(d.arg0));
            } else if (d.op == "fail_manager") {
                stamper.fail_manager();
            } else if (d.op == "recover_manager") {
                stamper.recover_manager();
            } else if (d.op == "migrate") {
                FlowId f = traffic.flow_id_of(static_cast<std::uint64_t>(d.arg0));
                if (f) ctrl.request_migration(f, primary_of_pair(static_cast<std::uint32_t>(d.arg1)));
            } else if (d.op == "mute_nf") {
                if (Nf* n = nf(static_cast<NfId>(d.arg0))) n->mute_clocks_until(d.arg1);
            } else {
                throw ConfigError("unknown scenario op '" + d.op + "'");
            }
        });
    }
}

bool System::quiescent() const {
    for (const auto& n : nfs) {
        if (!n->alive()) continue;
        if (n->role() == NfRole::Primary) {
            if (!n->processing_quiet() || n->output_size() != 0) return false;
        }
        if (n->role() != NfRole::Spare && n->applied_index() != commit->committed_length())
            return false;
    }
    return true;
}

void System::run_to_quiescence() {
    install_scenario();
    ctrl.start();
    traffic.start();
    VirtualTime t_end = traffic.end_time();
    sim.run_until(t_end);

    int stable = 0;
    for (int iter = 0; iter < 200000; ++iter) {
        sim.run_until(sim.now() + cfg.ping_interval_ns);
        if (!ctrl.fatal().empty()) break;
        for (auto& n : nfs) n->flush_partial_batch();
        if (quiescent()) {
            if (++stable >= 3) {
                ctrl.stop_pings();
                sim.run();
                if (quiescent()) return;
                stable = 0;
                ctrl.start();
            }
        } else {
            stable = 0;
        }
    }
    if (ctrl.fatal().empty()) throw std::runtime_error("simulation did not quiesce");
    ctrl.stop_pings();
    sim.run();
}

RunState System::snapshot_state() const {
    RunState s;
    for (const auto& n : nfs) {
        NfSnapshot nf;
        nf.id = n->id();
        switch (n->role()) {
            case NfRole::Primary: nf.role = "primary"; break;
            case NfRole::Secondary: nf.role = "secondary"; break;
            case NfRole::Spare: nf.role = "spare"; break;
        }
        nf.alive = n->alive();
        nf.degraded = n->degraded();
        nf.local_state = n->local_state();
        nf.global_state = n->global_state();
        nf.applied_index = n->applied_index();
        nf.markers = n->global_markers();
        nf.input_size = n->input_size();
        nf.pending_size = n->pending_size();
        nf.output_size = n->output_size();
        nf.held_size = n->held_size();
        nf.drop_count = n->drop_count();
        nf.stale_discards = n->stale_discards();
        nf.replayed_for_state = n->replayed_for_state();
        if (nf.degraded) s.ever_degraded = true;
        s.nfs.push_back(std::move(nf));
    }
    s.commit_log = commit->log();
    s.controller_violations = ctrl.violations();
    s.fatal = ctrl.fatal();
    for (const auto& [flow, rule] : sw.rules()) s.owner[flow] = rule.primary_nf;
    s.stamper_dropped = stamper.dropped();
    return s;
}

// ------------------------------------------------------------------ runner

RunOutputs run_experiment(const Config& cfg, const RunOptions& opts) {
    cfg.validate();
    System sys(cfg);
    if (opts.customize) opts.customize(sys);
    sys.run_to_quiescence();

    RunOutputs out;
    out.row = sys.metrics.finalize();
    out.state = sys.snapshot_state();
    out.verdict = verify_run(sys.trace, out.state, sys.traffic.stream(), cfg.global_keys);
    out.trace_hash = sys.trace.content_hash();
    if (opts.keep_trace) out.trace_jsonl = sys.trace.to_jsonl();
    if (opts.windows)
        out.windows = windowed_series(sys.metrics, opts.window_ns, sys.sim.now());
    return out;
}

std::vector<TimeWindow> windowed_series(const Metrics& metrics, VirtualTime window_ns,
                                        VirtualTime end_time) {
    std::vector<TimeWindow> out;
    if (window_ns <= 0) return out;
    std::size_t count = static_cast<std::size_t>(end_time / window_ns) + 1;
    out.resize(count);
    for (std::size_t w = 0; w < count; ++w) out[w].start = static_cast<VirtualTime>(w) * window_ns;
    for (VirtualTime t : metrics.release_times()) {
        std::size_t w = static_cast<std::size_t>(t / window_ns);
        if (w < count) ++out[w].releases;
    }
    std::vector<double> lat_sum(count, 0.0);
    std::vector<std::uint64_t> lat_n(count, 0);
    for (const auto& [t, lat] : metrics.tracked_releases()) {
        std::size_t w = static_cast<std::size_t>(t / window_ns);
        if (w < count) {
            lat_sum[w] += static_cast<double>(lat);
            ++lat_n[w];
        }
    }
    for (std::size_t w = 0; w < count; ++w) {
        out[w].throughput_pps =
            static_cast<double>(out[w].releases) / (static_cast<double>(window_ns) * 1e-9);
        out[w].avg_latency_ns = lat_n[w] ? lat_sum[w] / static_cast<double>(lat_n[w]) : 0.0;
    }
    return out;
}

// --------------------------------------------------------------------- csv

std::string metrics_csv_header() {
    return "seed,rate_pps,flow_count,packet_count,batch_size,buffer_batches,unit_count,"
           "updates_per_batch,consensus_impl,commit_latency_ns,"
           "latency_ns,tau_path_ns,tau_pre_ns,tau_proc_ns,tau_post_ns,throughput_pps,"
           "drops,drop_frac,stamped,released,batches,global_commits";
}

std::string metrics_csv_row(const Config& cfg, const Metrics::Row& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "%llu,%.3f,%llu,%llu,%u,%u,%u,%u,%s,%lld,"
                  "%.3f,%.3f,%.3f,%.3f,%.3f,%.6f,%llu,%.9f,%llu,%llu,%llu,%llu",
                  static_cast<unsigned long long>(cfg.seed), cfg.rate_pps,
                  static_cast<unsigned long long>(cfg.flow_count),
                  static_cast<unsigned long long>(cfg.packet_count), cfg.batch_size,
                  cfg.buffer_batches, cfg.unit_count, cfg.updates_per_batch,
                  cfg.consensus_impl.c_str(), static_cast<long long>(cfg.commit_latency_ns),
                  r.latency_ns, r.tau_path_ns, r.tau_pre_ns, r.tau_proc_ns, r.tau_post_ns,
                  r.throughput_pps, static_cast<unsigned long long>(r.drops), r.drop_frac,
                  static_cast<unsigned long long>(r.stamped),
                  static_cast<unsigned long long>(r.released),
                  static_cast<unsigned long long>(r.batches),
                  static_cast<unsigned long long>(r.global_commits));
    return buf;
}

std::string timelapse_csv(const std::vector<TimeWindow>& windows) {
    std::string out = "window_start_ns,throughput_pps,avg_latency_ns,releases\n";
    char buf[160];
    for (const auto& w : windows) {
        std::snprintf(buf, sizeof buf, "%lld,%.6f,%.3f,%llu\n", static_cast<long long>(w.start),
                      w.throughput_pps, w.avg_latency_ns,
                      static_cast<unsigned long long>(w.releases));
        out += buf;
    }
    return out;
}

double throughput_from_trace(const TraceLog& trace) {
    struct Agg {
        std::uint64_t released = 0;
        VirtualTime first_stamp = -1;
        VirtualTime last_release = -1;
    };
    std::map<FlowId, Agg> flows;
    for (const auto& ev : trace.events()) {
        if (!ev.packet) continue;
        if (ev.kind == TraceKind::Stamped) {
            Agg& a = flows[ev.packet->flow_id];
            if (a.first_stamp < 0) a.first_stamp = ev.time;
        } else if (ev.kind == TraceKind::Released) {
            Agg& a = flows[ev.packet->flow_id];
            ++a.released;
            a.last_release = ev.time;
        }
    }
    double total = 0;
    for (const auto& [f, a] : flows) {
        if (a.released == 0 || a.last_release <= a.first_stamp) continue;
        total += static_cast<double>(a.released) /
                 (static_cast<double>(a.last_release - a.first_stamp) * 1e-9);
    }
    return total;
}

TraceLog trace_from_jsonl(const std::string& text) {
    TraceLog log;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        std::uint32_t actor = log.actor(j.at("actor").get<std::string>());
        std::string kind_s = j.at("kind").get<std::string>();
        std::optional<TraceKind> kind;
        for (int k = 0; k <= static_cast<int>(TraceKind::Promotion); ++k)
            if (to_string(static_cast<TraceKind>(k)) == kind_s) kind = static_cast<TraceKind>(k);
        if (!kind) throw std::runtime_error("trace: unknown event kind '" + kind_s + "'");
        std::optional<PacketId> pid;
        if (j.contains("flow_id"))
            pid = PacketId{j.at("flow_id").get<FlowId>(), j.at("counter").get<Counter>()};
        std::optional<BatchId> batch;
        if (j.contains("batch")) batch = j.at("batch").get<BatchId>();
        log.emit(j.at("time_ns").get<VirtualTime>(), actor, *kind, pid, batch);
    }
    return log;
}

}  // namespace deft
