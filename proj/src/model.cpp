#include "deft/model.hpp"

#include <cinttypes>
#include <cstdio>

namespace deft {

namespace {
constexpr std::uint64_t kFlowHashSeed = 0x5157464c4f575348ULL;
}

std::size_t flow_hash(const FlowKey& key, std::size_t unit_count) {
    std::uint64_t a = (std::uint64_t(key.src_ip) << 32) | key.dst_ip;
    std::uint64_t b = (std::uint64_t(key.src_port) << 24) | (std::uint64_t(key.dst_port) << 8) |
                      key.protocol;
    return static_cast<std::size_t>(mix64(kFlowHashSeed, a, b) % unit_count);
}

std::string_view to_string(TraceKind k) {
    switch (k) {
        case TraceKind::Stamped: return "Stamped";
        case TraceKind::SwitchIn: return "SwitchIn";
        case TraceKind::DupOut: return "DupOut";
        case TraceKind::NfIn: return "NfIn";
        case TraceKind::Buffered: return "Buffered";
        case TraceKind::Processed: return "Processed";
        case TraceKind::GlobalCommitStart: return "GlobalCommitStart";
        case TraceKind::GlobalCommitDone: return "GlobalCommitDone";
        case TraceKind::PacketClockCommit: return "PacketClockCommit";
        case TraceKind::StateClockCommit: return "StateClockCommit";
        case TraceKind::Released: return "Released";
        case TraceKind::Dropped: return "Dropped";
        case TraceKind::MigrationStart: return "MigrationStart";
        case TraceKind::MigrationDone: return "MigrationDone";
        case TraceKind::Failure: return "Failure";
        case TraceKind::Promotion: return "Promotion";
    }
    return "Unknown";
}

std::uint32_t TraceLog::actor(std::string name) {
    for (std::uint32_t i = 0; i < actors_.size(); ++i)
        if (actors_[i] == name) return i;
    actors_.push_back(std::move(name));
    return static_cast<std::uint32_t>(actors_.size() - 1);
}

void TraceLog::emit(VirtualTime t, std::uint32_t actor, TraceKind kind,
                    std::optional<PacketId> packet, std::optional<BatchId> batch) {
    events_.push_back(TraceEvent{t, actor, kind, packet, batch});
}

std::string jsonl_line(const TraceLog& log, const TraceEvent& ev) {
    char buf[256];
    int n = std::snprintf(buf, sizeof buf,
                          "{\"time_ns\":%" PRId64 ",\"actor\":\"%s\",\"kind\":\"%s\"", ev.time,
                          log.actor_name(ev.actor).c_str(), std::string(to_string(ev.kind)).c_str());
    std::string out(buf, static_cast<std::size_t>(n));
    if (ev.packet) {
        n = std::snprintf(buf, sizeof buf, ",\"flow_id\":%" PRIu64 ",\"counter\":%" PRIu64,
                          ev.packet->flow_id, ev.packet->counter);
        out.append(buf, static_cast<std::size_t>(n));
    }
    if (ev.batch) {
        n = std::snprintf(buf, sizeof buf, ",\"batch\":%" PRIu64, *ev.batch);
        out.append(buf, static_cast<std::size_t>(n));
    }
    out.push_back('}');
    return out;
}

std::string TraceLog::to_jsonl() const {
    std::string out;
    out.reserve(events_.size() * 96);
    for (const auto& ev : events_) {
        out += jsonl_line(*this, ev);
        out.push_back('\n');
    }
    return out;
}

std::string TraceLog::content_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& ev : events_) {
        std::string line = jsonl_line(*this, ev);
        line.push_back('\n');
        for (unsigned char c : line) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
    return buf;
}

}  // namespace deft
