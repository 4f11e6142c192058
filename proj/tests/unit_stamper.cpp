#include <doctest.h>

#include <map>
#include <set>
#include <vector>

#include "deft/harness.hpp"
#include "deft/model.hpp"
#include "deft/sim.hpp"
#include "deft/stamper.hpp"

using namespace deft;

namespace {

struct Fixture {
    Config cfg;
    Simulator sim;
    TraceLog trace;

    explicit Fixture(std::uint32_t units = 1) {
        cfg.unit_count = units;
        mgr = std::make_unique<StamperManager>(cfg, sim, trace);
    }
    std::unique_ptr<StamperManager> mgr;
};

}  // namespace

TEST_CASE("stamp: first packet of a new flow gets counter 1, then n+1") {
    Fixture fx;
    FlowKey k = make_flow_key(0);
    auto p1 = fx.mgr->stamp(k, 100, false);
    REQUIRE(p1);
    CHECK(p1->id.counter == 1);
    for (Counter n = 2; n <= 40; ++n) {
        auto p = fx.mgr->stamp(k, 100, false);
        REQUIRE(p);
        CHECK(p->id.counter == n);
        CHECK(p->id.flow_id == p1->id.flow_id);
    }
}

TEST_CASE("stamp: dead unit drops arrivals; dead manager drops everything") {
    Fixture fx;
    FlowKey k = make_flow_key(1);
    fx.mgr->fail_unit(0);
    CHECK(!fx.mgr->stamp(k, 100, false));
    CHECK(fx.mgr->dropped() == 1);
    fx.mgr->recover_unit(0);
    CHECK(fx.mgr->stamp(k, 100, false));

    fx.mgr->fail_manager();
    CHECK(!fx.mgr->stamp(k, 100, false));
    fx.mgr->recover_manager();
    CHECK(fx.mgr->stamp(k, 100, false));
}

TEST_CASE("recover: pre-failure flow is recognized as new, never reusing a flow id") {
    Fixture fx;
    FlowKey k = make_flow_key(2);
    FlowId before = 0;
    for (int i = 0; i < 40; ++i) before = fx.mgr->stamp(k, 100, false)->id.flow_id;
    fx.mgr->fail_unit(0);
    fx.mgr->recover_unit(0);
    auto p = fx.mgr->stamp(k, 100, false);
    REQUIRE(p);
    CHECK(p->id.counter == 1);
    CHECK(p->id.flow_id != before);
    CHECK(fx.mgr->unit(0).incarnation() == 1);
}

TEST_CASE("recover: fail+recover of an empty unit behaves like a fresh unit") {
    Fixture a, b;
    a.mgr->fail_unit(0);
    a.mgr->recover_unit(0);
    FlowKey k = make_flow_key(3);
    auto pa = a.mgr->stamp(k, 100, false);
    auto pb = b.mgr->stamp(k, 100, false);
    REQUIRE(pa);
    REQUIRE(pb);
    CHECK(pa->id.counter == pb->id.counter);
    CHECK(pa->id.flow_id == pb->id.flow_id);
}

TEST_CASE("property: per-flow counters are gap-free {1..n} under random interleaving") {
    Fixture fx(4);
    std::map<FlowId, std::vector<Counter>> seen;
    std::map<std::uint64_t, int> per_key;
    for (int i = 0; i < 5000; ++i) {
        std::uint64_t j = mix64(99, i) % 37;
        auto p = fx.mgr->stamp(make_flow_key(j), 64, false);
        REQUIRE(p);
        seen[p->id.flow_id].push_back(p->id.counter);
        ++per_key[j];
    }
    CHECK(seen.size() == 37);
    for (const auto& [flow, counters] : seen) {
        for (std::size_t i = 0; i < counters.size(); ++i)
            CHECK(counters[i] == i + 1);  // strictly increasing, gap-free multiset
    }
}

TEST_CASE("property: unit id ranges are disjoint and flow ids never repeat across incarnations") {
    Fixture fx(4);
    std::set<FlowId> issued;
    for (int round = 0; round < 3; ++round) {
        for (std::uint64_t j = 0; j < 64; ++j) {
            auto p = fx.mgr->stamp(make_flow_key(j), 64, false);
            REQUIRE(p);
            if (p->id.counter == 1) CHECK(issued.insert(p->id.flow_id).second);
            std::size_t unit = flow_hash(make_flow_key(j), 4);
            CHECK(p->id.flow_id >> 48 == unit);  // id drawn from the unit's range
        }
        for (std::uint32_t u = 0; u < 4; ++u) {
            fx.mgr->fail_unit(u);
            fx.mgr->recover_unit(u);
        }
    }
}

TEST_CASE("property: flow affinity — all packets of a key stamped by the same unit") {
    Fixture fx(6);
    for (std::uint64_t j = 0; j < 50; ++j) {
        FlowId first = fx.mgr->stamp(make_flow_key(j), 64, false)->id.flow_id;
        for (int i = 0; i < 5; ++i)
            CHECK(fx.mgr->stamp(make_flow_key(j), 64, false)->id.flow_id == first);
    }
}
