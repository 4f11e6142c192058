#include <doctest.h>

#include <algorithm>

#include "deft/control.hpp"
#include "deft/harness.hpp"

using namespace deft;

namespace {

Config small_cfg() {
    Config cfg;
    cfg.packet_count = 3000;
    cfg.rate_pps = 8000;
    cfg.flow_count = 6;
    cfg.nf_pairs = 2;
    cfg.spare_nfs = 2;
    cfg.batch_size = 10;
    cfg.tracked_n = 3000;
    return cfg;
}

VirtualTime first_event(const TraceLog& trace, TraceKind kind) {
    for (const auto& ev : trace.events())
        if (ev.kind == kind) return ev.time;
    return -1;
}

int count_events(const TraceLog& trace, TraceKind kind) {
    int n = 0;
    for (const auto& ev : trace.events())
        if (ev.kind == kind) ++n;
    return n;
}

}  // namespace

TEST_CASE("fdu: nothing declared while everyone answers pings") {
    Config cfg = small_cfg();
    System sys(cfg);
    sys.ctrl.start();
    sys.sim.run_until(200'000'000);
    CHECK(sys.ctrl.failovers() == 0);
    CHECK(sys.ctrl.resyncs() == 0);
    CHECK(sys.ctrl.fatal().empty());
}

TEST_CASE("fdu: a crashed primary is declared within the detector bound") {
    Config cfg = small_cfg();
    VirtualTime crash_at = 104'000'000;
    cfg.scenario.push_back(Directive{crash_at, "fail_nf", 0, 0});
    System sys(cfg);
    sys.run_to_quiescence();

    // declared at the first tick with now - last_seen > threshold * interval;
    // last_seen lags a ping round trip, promotion adds fence+flip+drain+sync
    VirtualTime declare_bound = crash_at +
                                static_cast<VirtualTime>(cfg.suspect_threshold) *
                                    cfg.ping_interval_ns +
                                cfg.ping_interval_ns + 2 * cfg.ctrl_latency_ns;
    VirtualTime orchestration = 8 * cfg.ctrl_latency_ns + cfg.max_data_latency() +
                                cfg.commit_latency_ns + 4 * cfg.ctrl_latency_ns;
    VirtualTime promoted = first_event(sys.trace, TraceKind::Promotion);
    REQUIRE(promoted >= 0);
    CHECK(promoted > crash_at);
    CHECK(promoted <= declare_bound + orchestration);
}

TEST_CASE("fdu: a node crash hosting two primaries declares both in the same tick") {
    Config cfg = small_cfg();
    cfg.spare_nfs = 4;
    cfg.scenario.push_back(Directive{100'000'000, "fail_node", 0, 0});
    System sys(cfg);
    sys.run_to_quiescence();
    CHECK(sys.ctrl.failovers() == 2);
    CHECK(count_events(sys.trace, TraceKind::Promotion) == 2);
    RunState st = sys.snapshot_state();
    Verdict v = verify_run(sys.trace, st, sys.traffic.stream(), cfg.global_keys);
    CHECK(v.pass);
}

TEST_CASE("failover: flows resume on the promoted secondary, placement holds") {
    Config cfg = small_cfg();
    cfg.scenario.push_back(Directive{120'000'000, "fail_nf", 0, 0});
    System sys(cfg);
    sys.run_to_quiescence();
    CHECK(sys.ctrl.violations().empty());
    CHECK(sys.ctrl.fatal().empty());
    // nf1 promoted, spare paired as its new secondary on the other node
    const auto& recs = sys.ctrl.records();
    CHECK(recs.at(1).role == NfRole::Primary);
    NfId c = recs.at(1).pair;
    REQUIRE(c >= 0);
    CHECK(recs.at(c).role == NfRole::Secondary);
    CHECK(recs.at(c).node != recs.at(1).node);
    Verdict v = verify_run(sys.trace, sys.snapshot_state(), sys.traffic.stream(),
                           cfg.global_keys);
    CHECK(v.pass);
}

TEST_CASE("failover: primary with zero flows changes roles only") {
    Config cfg = small_cfg();
    cfg.flow_count = 1;  // round-robin puts the only flow on pair 0
    cfg.packet_count = 1000;
    cfg.scenario.push_back(Directive{100'000'000, "fail_nf", 2, 0});
    System sys(cfg);
    sys.run_to_quiescence();
    CHECK(sys.ctrl.failovers() == 1);
    RunState st = sys.snapshot_state();
    for (const auto& [flow, owner] : st.owner) CHECK(owner == 0);  // rule untouched
    Verdict v = verify_run(sys.trace, st, sys.traffic.stream(), cfg.global_keys);
    CHECK(v.pass);
}

TEST_CASE("secondary failure: resync to a spare keeps the run clean") {
    Config cfg = small_cfg();
    cfg.updates_per_batch = 2;
    cfg.scenario.push_back(Directive{120'000'000, "fail_nf", 1, 0});
    System sys(cfg);
    sys.run_to_quiescence();
    CHECK(sys.ctrl.resyncs() == 1);
    Verdict v = verify_run(sys.trace, sys.snapshot_state(), sys.traffic.stream(),
                           cfg.global_keys);
    CHECK(v.pass);
    // primary crash after the resync is covered by the replacement secondary
    Config cfg2 = small_cfg();
    cfg2.updates_per_batch = 2;
    cfg2.scenario.push_back(Directive{120'000'000, "fail_nf", 1, 0});
    cfg2.scenario.push_back(Directive{250'000'000, "fail_nf", 0, 0});
    System sys2(cfg2);
    sys2.run_to_quiescence();
    Verdict v2 = verify_run(sys2.trace, sys2.snapshot_state(), sys2.traffic.stream(),
                            cfg2.global_keys);
    CHECK(v2.pass);
}

TEST_CASE("pair loss without recovery options is a configuration error") {
    Config cfg = small_cfg();
    cfg.spare_nfs = 0;
    cfg.scenario.push_back(Directive{100'000'000, "fail_nf", 1, 0});
    cfg.scenario.push_back(Directive{160'000'000, "fail_nf", 0, 0});
    System sys(cfg);
    sys.run_to_quiescence();
    CHECK(!sys.ctrl.fatal().empty());
    Verdict v = verify_run(sys.trace, sys.snapshot_state(), sys.traffic.stream(),
                           cfg.global_keys);
    CHECK(!v.pass);
    CHECK(v.has("fatal"));
}

TEST_CASE("migration: target failure before the rule flip aborts; source keeps the flow") {
    Config cfg = small_cfg();
    cfg.packet_count = 4000;
    // start the handoff and kill the destination before it can vote
    cfg.scenario.push_back(Directive{120'000'000, "migrate", 0, 1});
    cfg.scenario.push_back(Directive{120'100'000, "fail_nf", 2, 0});
    System sys(cfg);
    sys.run_to_quiescence();
    RunState st = sys.snapshot_state();
    Verdict v = verify_run(sys.trace, st, sys.traffic.stream(), cfg.global_keys);
    CHECK(v.pass);
    FlowId f = sys.traffic.flow_id_of(0);
    CHECK(st.owner.at(f) == 0);  // still owned by the source
}

TEST_CASE("migration: target failure after the rule flip completes via its failover") {
    Config cfg = small_cfg();
    cfg.packet_count = 4000;
    cfg.scenario.push_back(Directive{120'000'000, "migrate", 0, 1});
    cfg.scenario.push_back(Directive{140'000'000, "fail_nf", 2, 0});  // flip done by now
    System sys(cfg);
    sys.run_to_quiescence();
    RunState st = sys.snapshot_state();
    Verdict v = verify_run(sys.trace, st, sys.traffic.stream(), cfg.global_keys);
    CHECK(v.pass);
    FlowId f = sys.traffic.flow_id_of(0);
    CHECK(st.owner.at(f) == 3);  // destination's secondary took over
}

TEST_CASE("overload policy: sustained buffer occupancy fires the scale trigger") {
    Config cfg = small_cfg();
    cfg.rate_pps = 40000;  // one pair, deliberately overloaded
    cfg.nf_pairs = 1;
    cfg.spare_nfs = 0;
    cfg.packet_count = 20000;
    cfg.buffer_batches = 3;
    System sys(cfg);
    OverloadPolicy policy(sys.sim, sys.cfg, 0.8, 3, 5'000'000);
    bool fired = false;
    policy.on_trigger = [&] { fired = true; };
    policy.watch(sys.nf(0));
    sys.run_to_quiescence();
    CHECK(fired);
    CHECK(policy.fired());
}
