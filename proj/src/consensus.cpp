#include "deft/consensus.hpp"

#include <algorithm>
#include <cassert>

namespace deft {

// ---------------------------------------------------------------- sequencer

void SequencerService::deliver(const MemberPort& m, std::uint64_t first, std::uint64_t last) {
    // One delivery event per entry keeps member application strictly ordered.
    for (std::uint64_t i = first; i < last; ++i) {
        GlobalUpdate u = log_[i];
        auto apply = m.apply;
        sim_.after(cfg_.ctrl_latency_ns, [apply, i, u] { apply(i, u); });
    }
}

void SequencerService::join(MemberPort port) {
    deliver(port, 0, log_.size());  // snapshot-by-replay plus live suffix
    members_.push_back(std::move(port));
}

void SequencerService::submit(const GlobalUpdate& u, std::function<void(std::uint64_t)> done) {
    if (fenced_.count(u.origin_nf)) return;  // stale submission from a dead incarnation
    std::uint64_t index = log_.size();
    log_.push_back(u);
    sim_.after(cfg_.commit_latency_ns, [done, index] { done(index); });
    for (const auto& m : members_) {
        GlobalUpdate copy = u;
        auto apply = m.apply;
        sim_.after(cfg_.commit_latency_ns + cfg_.ctrl_latency_ns,
                   [apply, index, copy] { apply(index, copy); });
    }
}

void SequencerService::fence(NfId nf, std::function<void(std::uint64_t)> ack) {
    fenced_.insert(nf);
    std::uint64_t len = log_.size();
    sim_.after(cfg_.ctrl_latency_ns, [ack, len] { ack(len); });
}

void SequencerService::sync_member(NfId member, std::uint64_t through,
                                   std::function<void()> done) {
    assert(through <= log_.size());
    for (const auto& m : members_)
        if (m.id == member) deliver(m, 0, through);
    sim_.after(2 * cfg_.ctrl_latency_ns, std::move(done));
}

// ------------------------------------------------------------------- quorum

std::uint32_t QuorumService::quorum() const {
    if (cfg_.quorum_size > 0) return cfg_.quorum_size;
    return static_cast<std::uint32_t>(members_.size() / 2 + 1);
}

void QuorumService::add_member(MemberPort port) {
    members_.push_back(std::move(port));
}

void QuorumService::join(MemberPort port) {
    members_.push_back(std::move(port));
    const MemberPort& m = members_.back();
    for (std::uint64_t i = 0; i < log_.size(); ++i) replicate_to(m, i);
    // Committed prefix is re-applied at the newcomer.
    for (std::uint64_t i = 0; i < committed_; ++i) {
        GlobalUpdate u = log_[i];
        auto apply = m.apply;
        sim_.after(cfg_.ctrl_latency_ns, [apply, i, u] { apply(i, u); });
    }
}

void QuorumService::replicate_to(const MemberPort& m, std::uint64_t index) {
    NfId id = m.id;
    sim_.after(cfg_.ctrl_latency_ns, [this, id, index] {
        if (!is_alive_(id)) return;  // crashed members never ack
        sim_.after(cfg_.ctrl_latency_ns, [this, index] { on_ack(index); });
    });
}

void QuorumService::submit(const GlobalUpdate& u, std::function<void(std::uint64_t)> done) {
    if (fenced_.count(u.origin_nf)) return;
    std::uint64_t index = log_.size();
    log_.push_back(u);
    acks_.push_back(0);
    done_.push_back(std::move(done));
    sim_.after(cfg_.commit_latency_ns, [this, index] {
        // leader durability point; member acks may already be queued
        on_ack(index);
    });
    for (const auto& m : members_) replicate_to(m, index);
}

void QuorumService::on_ack(std::uint64_t index) {
    ++acks_[index];
    advance_commit();
}

void QuorumService::advance_commit() {
    bool moved = false;
    while (committed_ < log_.size() && acks_[committed_] >= quorum()) {
        std::uint64_t index = committed_++;
        if (done_[index]) {
            auto done = std::move(done_[index]);
            sim_.after(cfg_.ctrl_latency_ns, [done, index] { done(index); });
        }
        moved = true;
    }
    if (moved) {
        notify_applies(committed_);
        auto pending = std::move(pending_syncs_);
        pending_syncs_.clear();
        for (auto& [through, done] : pending) {
            if (through <= committed_)
                sim_.after(2 * cfg_.ctrl_latency_ns, std::move(done));
            else
                pending_syncs_.emplace_back(through, std::move(done));
        }
    }
}

void QuorumService::notify_applies(std::uint64_t upto) {
    for (std::uint64_t i = applied_notified_; i < upto; ++i) {
        for (const auto& m : members_) {
            GlobalUpdate u = log_[i];
            auto apply = m.apply;
            sim_.after(cfg_.ctrl_latency_ns, [apply, i, u] { apply(i, u); });
        }
    }
    applied_notified_ = std::max(applied_notified_, upto);
}

void QuorumService::fence(NfId nf, std::function<void(std::uint64_t)> ack) {
    fenced_.insert(nf);
    std::uint64_t len = log_.size();
    sim_.after(cfg_.ctrl_latency_ns, [ack, len] { ack(len); });
}

void QuorumService::sync_member(NfId member, std::uint64_t through, std::function<void()> done) {
    assert(through <= log_.size());
    if (through > committed_) {
        pending_syncs_.emplace_back(through, [this, member, through, done] {
            sync_member(member, through, done);
        });
        return;
    }
    for (const auto& m : members_) {
        if (m.id != member) continue;
        for (std::uint64_t i = 0; i < through; ++i) {
            GlobalUpdate u = log_[i];
            auto apply = m.apply;
            sim_.after(cfg_.ctrl_latency_ns, [apply, i, u] { apply(i, u); });
        }
    }
    sim_.after(2 * cfg_.ctrl_latency_ns, std::move(done));
}

std::unique_ptr<CommitService> make_commit_service(const Config& cfg, Simulator& sim,
                                                   std::function<bool(NfId)> is_alive) {
    if (cfg.consensus_impl == "quorum")
        return std::make_unique<QuorumService>(cfg, sim, std::move(is_alive));
    return std::make_unique<SequencerService>(cfg, sim);
}

}  // namespace deft
