#include "deft/stamper.hpp"

namespace deft {

std::optional<Packet> StamperManager::stamp(const FlowKey& key, std::uint32_t payload_len,
                                            bool global_update) {
    if (!alive_) {
        ++dropped_;
        trace_.emit(sim_.now(), actor_, TraceKind::Dropped);
        return std::nullopt;
    }
    StampingUnit& u = units_[flow_hash(key, units_.size())];
    if (!u.alive()) {
        ++dropped_;
        trace_.emit(sim_.now(), u.actor(), TraceKind::Dropped);
        return std::nullopt;
    }
    Packet p;
    p.id = u.stamp(key);
    p.key = key;
    p.payload_len = payload_len;
    p.stamp_time = sim_.now();
    p.global_update_flag = global_update;
    trace_.emit(sim_.now(), u.actor(), TraceKind::Stamped, p.id);
    if (forward) forward(p);
    return p;
}

}  // namespace deft
