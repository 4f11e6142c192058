#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace deft {

using VirtualTime = std::int64_t;  // virtual nanoseconds
using FlowId = std::uint64_t;
using Counter = std::uint64_t;     // per-flow packet counter, starts at 1
using BatchId = std::uint64_t;
using NfId = int;
using NodeId = int;

// splitmix64 finalizer; all randomness in the simulator is derived from
// hashes of (seed, stream, sequence) so that unrelated subsystems never
// perturb each other's samples.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) { return mix64(a ^ mix64(b)); }
inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix64(mix64(a, b), c);
}

// u in [0,1)
inline double unit_real(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

struct FlowKey {
    std::uint32_t src_ip = 0;
    std::uint32_t dst_ip = 0;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    std::uint8_t protocol = 0;

    friend bool operator==(const FlowKey&, const FlowKey&) = default;
};

struct FlowKeyHash {
    std::size_t operator()(const FlowKey& k) const {
        std::uint64_t a = (std::uint64_t(k.src_ip) << 32) | k.dst_ip;
        std::uint64_t b = (std::uint64_t(k.src_port) << 24) | (std::uint64_t(k.dst_port) << 8) | k.protocol;
        return static_cast<std::size_t>(mix64(a, b));
    }
};

// Deterministic flow -> unit routing. Same key always lands on the same unit.
std::size_t flow_hash(const FlowKey& key, std::size_t unit_count);

struct PacketId {
    FlowId flow_id = 0;
    Counter counter = 0;  // >= 1

    friend bool operator==(const PacketId&, const PacketId&) = default;
    friend auto operator<=>(const PacketId&, const PacketId&) = default;
};

struct Packet {
    PacketId id;
    FlowKey key;
    std::uint32_t payload_len = 0;   // > 0
    VirtualTime stamp_time = 0;      // set once by the stamping unit
    std::uint32_t work_units = 1;    // abstract processing cost
    bool global_update_flag = false;
};

enum class TraceKind : std::uint8_t {
    Stamped,
    SwitchIn,
    DupOut,
    NfIn,
    Buffered,
    Processed,
    GlobalCommitStart,
    GlobalCommitDone,
    PacketClockCommit,
    StateClockCommit,
    Released,
    Dropped,
    MigrationStart,
    MigrationDone,
    Failure,
    Promotion,
};

std::string_view to_string(TraceKind k);

struct TraceEvent {
    VirtualTime time = 0;
    std::uint32_t actor = 0;  // index into TraceLog actor table
    TraceKind kind = TraceKind::Stamped;
    std::optional<PacketId> packet;
    std::optional<BatchId> batch;
};

// Append-only event record. Serialization is one JSON object per line with
// fields time_ns, actor, kind, flow_id, counter, batch (optionals omitted).
class TraceLog {
public:
    std::uint32_t actor(std::string name);
    const std::string& actor_name(std::uint32_t idx) const { return actors_[idx]; }

    void emit(VirtualTime t, std::uint32_t actor, TraceKind kind,
              std::optional<PacketId> packet = std::nullopt,
              std::optional<BatchId> batch = std::nullopt);

    const std::vector<TraceEvent>& events() const { return events_; }
    const std::vector<std::string>& actors() const { return actors_; }

    std::string to_jsonl() const;
    // FNV-1a over the JSONL bytes, hex encoded.
    std::string content_hash() const;

private:
    std::vector<TraceEvent> events_;
    std::vector<std::string> actors_;
};

std::string jsonl_line(const TraceLog& log, const TraceEvent& ev);

}  // namespace deft
