#pragma once

#include <functional>
#include <optional>
#include <unordered_map>
#include <vector>

#include "deft/config.hpp"
#include "deft/model.hpp"
#include "deft/sim.hpp"

namespace deft {

// One stamping unit. Assigns flow IDs from its own disjoint range and a
// gap-free per-flow counter starting at 1. After a failure the flow table is
// cleared, so returning flows get a fresh flow ID and restart at 1.
class StampingUnit {
public:
    StampingUnit(std::uint32_t index, TraceLog& trace)
        : index_(index),
          next_flow_id_(static_cast<FlowId>(index) << 48),
          actor_(trace.actor("stamper_unit" + std::to_string(index))) {}

    static constexpr FlowId kRangeSize = 1ULL << 48;

    bool alive() const { return alive_; }
    std::uint32_t incarnation() const { return incarnation_; }
    std::uint32_t index() const { return index_; }
    std::uint32_t actor() const { return actor_; }

    PacketId stamp(const FlowKey& key) {
        auto [it, inserted] = flows_.try_emplace(key, Entry{0, 1});
        if (inserted) {
            if (next_flow_id_ >= (static_cast<FlowId>(index_) + 1) * kRangeSize)
                throw std::runtime_error("stamping unit flow-id range exhausted");
            it->second.flow_id = next_flow_id_++;
        }
        return PacketId{it->second.flow_id, it->second.next_counter++};
    }

    void fail() { alive_ = false; }
    void recover() {
        alive_ = true;
        ++incarnation_;
        flows_.clear();  // pre-failure flows are recognized as new flows
    }

    std::size_t flow_table_size() const { return flows_.size(); }

private:
    struct Entry {
        FlowId flow_id;
        Counter next_counter;
    };

    std::uint32_t index_;
    FlowId next_flow_id_;  // high-water mark; never reissued across incarnations
    std::uint32_t actor_;
    std::unordered_map<FlowKey, Entry, FlowKeyHash> flows_;
    bool alive_ = true;
    std::uint32_t incarnation_ = 0;
};

// Entry point of the system: routes each flow to its unit via flow_hash and
// forwards stamped packets toward the switch.
class StamperManager {
public:
    StamperManager(const Config& cfg, Simulator& sim, TraceLog& trace)
        : cfg_(cfg), sim_(sim), trace_(trace), actor_(trace.actor("stamper")) {
        units_.reserve(cfg.unit_count);
        for (std::uint32_t i = 0; i < cfg.unit_count; ++i) units_.emplace_back(i, trace);
    }

    std::function<void(const Packet&)> forward;  // stamper -> switch hop

    // Returns the stamped packet, or nullopt if the manager or the flow's
    // unit is down (the arrival is dropped).
    std::optional<Packet> stamp(const FlowKey& key, std::uint32_t payload_len,
                                bool global_update);

    void fail_manager() { alive_ = false; }
    void recover_manager() { alive_ = true; }
    bool manager_alive() const { return alive_; }

    void fail_unit(std::uint32_t idx) { units_.at(idx).fail(); }
    void recover_unit(std::uint32_t idx) { units_.at(idx).recover(); }

    StampingUnit& unit(std::uint32_t idx) { return units_.at(idx); }
    std::size_t unit_count() const { return units_.size(); }
    std::uint64_t dropped() const { return dropped_; }

private:
    const Config& cfg_;
    Simulator& sim_;
    TraceLog& trace_;
    std::uint32_t actor_;
    std::vector<StampingUnit> units_;
    bool alive_ = true;
    std::uint64_t dropped_ = 0;
};

}  // namespace deft
