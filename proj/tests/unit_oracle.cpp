#include <doctest.h>

#include "deft/harness.hpp"
#include "deft/oracle.hpp"

using namespace deft;

TEST_CASE("oracle: empty stream yields an empty result") {
    OracleResult r = run_oracle({}, {}, 1);
    CHECK(r.per_flow.empty());
    CHECK(r.global_totals.empty());
    CHECK(r.release_order.empty());
}

TEST_CASE("oracle: one flow, 100 packets of 64 bytes") {
    std::vector<StampedPacket> stream;
    for (Counter c = 1; c <= 100; ++c) stream.push_back({PacketId{7, c}, 64, false});
    OracleResult r = run_oracle(stream, {}, 1);
    CHECK(r.per_flow.at(7).pkt_count == 100);
    CHECK(r.per_flow.at(7).byte_sum == 6400);
    CHECK(r.release_order.at(7).size() == 100);
    CHECK(r.global_totals.empty());
}

TEST_CASE("oracle: 5 flows with 10 flagged packets each, G=1 -> total 50") {
    std::vector<StampedPacket> stream;
    std::uint64_t brute = 0;
    for (FlowId f = 1; f <= 5; ++f)
        for (Counter c = 1; c <= 20; ++c) {
            bool flag = c % 2 == 0;  // 10 of 20
            stream.push_back({PacketId{f, c}, 100, flag});
            if (flag) ++brute;
        }
    OracleResult r = run_oracle(stream, {}, 1);
    CHECK(brute == 50);
    CHECK(r.global_totals.at(0) == 50);
}

TEST_CASE("oracle: dropped packets are excluded from every target") {
    std::vector<StampedPacket> stream;
    for (Counter c = 1; c <= 10; ++c) stream.push_back({PacketId{3, c}, 100, true});
    std::set<PacketId> dropped{PacketId{3, 4}, PacketId{3, 9}};
    OracleResult r = run_oracle(stream, dropped, 2);
    CHECK(r.per_flow.at(3).pkt_count == 8);
    CHECK(r.release_order.at(3).size() == 8);
    CHECK(r.global_totals.at(3 % 2) == 8);
}

TEST_CASE("oracle: duplicate PacketId in the stream is input corruption") {
    std::vector<StampedPacket> stream{{PacketId{1, 1}, 10, false}, {PacketId{1, 1}, 10, false}};
    CHECK_THROWS(run_oracle(stream, {}, 1));
}

TEST_CASE("oracle: deterministic across input permutations") {
    std::vector<StampedPacket> a, b;
    for (Counter c = 1; c <= 50; ++c) a.push_back({PacketId{2, c}, 10 + c % 7, c % 3 == 0});
    b = a;
    std::reverse(b.begin(), b.end());
    OracleResult ra = run_oracle(a, {}, 4);
    OracleResult rb = run_oracle(b, {}, 4);
    CHECK(ra.per_flow == rb.per_flow);
    CHECK(ra.global_totals == rb.global_totals);
    CHECK(ra.release_order == rb.release_order);
}

namespace {

// hand-built minimal traces exercising each checker finding
struct TraceBuilder {
    TraceLog log;
    std::uint32_t nf0, nf1, sw;
    TraceBuilder() : nf0(log.actor("nf0")), nf1(log.actor("nf1")), sw(log.actor("switch")) {}

    void full_path(VirtualTime t, PacketId id, BatchId batch) {
        log.emit(t, sw, TraceKind::SwitchIn, id);
        log.emit(t, sw, TraceKind::DupOut, id);
        log.emit(t, sw, TraceKind::DupOut, id);
        log.emit(t + 1, nf0, TraceKind::NfIn, id);
        log.emit(t + 2, nf0, TraceKind::Processed, id);
        log.emit(t + 3, nf0, TraceKind::Released, id, batch);
    }
};

RunState owner_state(FlowId flow, const LocalStateMap& ls) {
    RunState st;
    NfSnapshot nf;
    nf.id = 0;
    nf.role = "primary";
    nf.local_state = ls;
    st.nfs.push_back(nf);
    st.owner[flow] = 0;
    return st;
}

}  // namespace

TEST_CASE("checker: clean synthetic run passes") {
    TraceBuilder tb;
    std::vector<StampedPacket> stream;
    for (Counter c = 1; c <= 3; ++c) {
        tb.full_path(1000 * c, PacketId{1, c}, 1);
        stream.push_back({PacketId{1, c}, 100, false});
    }
    RunState st = owner_state(1, LocalStateMap{{1, LocalFlowState{3, 300}}});
    Verdict v = verify_run(tb.log, st, stream, 1);
    CHECK(v.pass);
}

TEST_CASE("checker: duplicate release is caught") {
    TraceBuilder tb;
    std::vector<StampedPacket> stream{{PacketId{1, 1}, 100, false}};
    tb.full_path(1000, PacketId{1, 1}, 1);
    tb.log.emit(5000, tb.nf1, TraceKind::Released, PacketId{1, 1}, 1);
    RunState st = owner_state(1, LocalStateMap{{1, LocalFlowState{1, 100}}});
    Verdict v = verify_run(tb.log, st, stream, 1);
    CHECK(!v.pass);
    CHECK(v.has("duplicate-release"));
}

TEST_CASE("checker: lost release is caught") {
    TraceBuilder tb;
    std::vector<StampedPacket> stream{{PacketId{1, 1}, 100, false}, {PacketId{1, 2}, 100, false}};
    tb.full_path(1000, PacketId{1, 1}, 1);
    RunState st = owner_state(1, LocalStateMap{{1, LocalFlowState{1, 100}}});
    Verdict v = verify_run(tb.log, st, stream, 1);
    CHECK(!v.pass);
    CHECK(v.has("lost-release"));
}

TEST_CASE("checker: out-of-order processing is caught") {
    TraceBuilder tb;
    std::vector<StampedPacket> stream{{PacketId{1, 1}, 100, false}, {PacketId{1, 2}, 100, false}};
    tb.full_path(1000, PacketId{1, 2}, 1);
    tb.full_path(2000, PacketId{1, 1}, 1);
    RunState st = owner_state(1, LocalStateMap{{1, LocalFlowState{2, 200}}});
    Verdict v = verify_run(tb.log, st, stream, 1);
    CHECK(!v.pass);
    CHECK(v.has("processing-order-violation"));
}

TEST_CASE("checker: release before processing is a causality violation") {
    TraceBuilder tb;
    std::vector<StampedPacket> stream{{PacketId{1, 1}, 100, false}};
    tb.log.emit(1, tb.sw, TraceKind::SwitchIn, PacketId{1, 1});
    tb.log.emit(1, tb.sw, TraceKind::DupOut, PacketId{1, 1});
    tb.log.emit(1, tb.sw, TraceKind::DupOut, PacketId{1, 1});
    tb.log.emit(2, tb.nf0, TraceKind::NfIn, PacketId{1, 1});
    tb.log.emit(3, tb.nf0, TraceKind::Released, PacketId{1, 1}, 1);
    tb.log.emit(4, tb.nf0, TraceKind::Processed, PacketId{1, 1});
    RunState st = owner_state(1, LocalStateMap{{1, LocalFlowState{1, 100}}});
    Verdict v = verify_run(tb.log, st, stream, 1);
    CHECK(!v.pass);
    CHECK(v.has("causality-violation"));
}

TEST_CASE("checker: missing duplicate at the switch is caught") {
    TraceBuilder tb;
    std::vector<StampedPacket> stream{{PacketId{1, 1}, 100, false}};
    tb.log.emit(1, tb.sw, TraceKind::SwitchIn, PacketId{1, 1});
    tb.log.emit(1, tb.sw, TraceKind::DupOut, PacketId{1, 1});
    tb.log.emit(2, tb.nf0, TraceKind::NfIn, PacketId{1, 1});
    tb.log.emit(3, tb.nf0, TraceKind::Processed, PacketId{1, 1});
    tb.log.emit(4, tb.nf0, TraceKind::Released, PacketId{1, 1}, 1);
    RunState st = owner_state(1, LocalStateMap{{1, LocalFlowState{1, 100}}});
    Verdict v = verify_run(tb.log, st, stream, 1);
    CHECK(!v.pass);
    CHECK(v.has("duplication-violation"));
}

TEST_CASE("checker: clock lag beyond one batch is caught") {
    TraceBuilder tb;
    tb.log.emit(1000, tb.nf1, TraceKind::PacketClockCommit, std::nullopt, 1);
    tb.log.emit(2000, tb.nf1, TraceKind::StateClockCommit, std::nullopt, 1);
    tb.log.emit(3000, tb.nf1, TraceKind::PacketClockCommit, std::nullopt, 2);
    tb.log.emit(4000, tb.nf1, TraceKind::PacketClockCommit, std::nullopt, 3);  // j two behind
    Verdict v = verify_run(tb.log, RunState{}, {}, 1);
    CHECK(!v.pass);
    CHECK(v.has("clock-lag-violation"));
}

TEST_CASE("checker: paired baseline commits at one instant are a single transition") {
    TraceBuilder tb;
    tb.log.emit(1000, tb.nf1, TraceKind::PacketClockCommit, std::nullopt, 4);
    tb.log.emit(1000, tb.nf1, TraceKind::StateClockCommit, std::nullopt, 4);
    tb.log.emit(9000, tb.nf1, TraceKind::PacketClockCommit, std::nullopt, 9);
    tb.log.emit(9000, tb.nf1, TraceKind::StateClockCommit, std::nullopt, 9);
    Verdict v = verify_run(tb.log, RunState{}, {}, 1);
    CHECK(v.pass);
}

TEST_CASE("checker: per-flow global log order and entry counts are enforced") {
    TraceBuilder tb;
    std::vector<StampedPacket> stream{{PacketId{1, 1}, 100, true}};
    tb.full_path(1000, PacketId{1, 1}, 1);
    RunState st = owner_state(1, LocalStateMap{{1, LocalFlowState{1, 100}}});
    st.commit_log.push_back(GlobalUpdate{0, 1, PacketId{1, 1}, 0});
    st.commit_log.push_back(GlobalUpdate{0, 1, PacketId{1, 1}, 0});  // replayed twice
    Verdict v = verify_run(tb.log, st, stream, 1);
    CHECK(!v.pass);
    CHECK(v.has("global-order-violation"));
    CHECK(v.has("duplicate-global-entry"));
}

TEST_CASE("checker: final state mismatch is caught") {
    TraceBuilder tb;
    std::vector<StampedPacket> stream{{PacketId{1, 1}, 100, false}};
    tb.full_path(1000, PacketId{1, 1}, 1);
    RunState st = owner_state(1, LocalStateMap{{1, LocalFlowState{1, 999}}});
    Verdict v = verify_run(tb.log, st, stream, 1);
    CHECK(!v.pass);
    CHECK(v.has("state-mismatch"));
}

TEST_CASE("run state: json round trip") {
    RunState st;
    NfSnapshot nf;
    nf.id = 2;
    nf.role = "secondary";
    nf.local_state[5] = LocalFlowState{3, 300};
    nf.global_state[1] = 7;
    nf.markers[5] = 12;
    nf.applied_index = 7;
    nf.held_size = 4;
    st.nfs.push_back(nf);
    st.commit_log.push_back(GlobalUpdate{1, 1, PacketId{5, 12}, 0});
    st.owner[5] = 0;
    st.fatal = "";
    RunState back = run_state_from_json(run_state_to_json(st));
    CHECK(back.nfs.size() == 1);
    CHECK(back.nfs[0].local_state.at(5) == LocalFlowState{3, 300});
    CHECK(back.nfs[0].markers.at(5) == 12);
    CHECK(back.commit_log.size() == 1);
    CHECK(back.commit_log[0].origin_pkt == PacketId{5, 12});
    CHECK(back.owner.at(5) == 0);
}
