#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <vector>

#include "deft/config.hpp"
#include "deft/model.hpp"
#include "deft/sim.hpp"

namespace deft {

struct GlobalUpdate {
    std::uint64_t key = 0;
    std::int64_t delta = 0;
    PacketId origin_pkt;
    NfId origin_nf = -1;
};

// Total-order global-commit service shared by the NF cluster. submit() has a
// blocking contract toward the caller's processing unit: `done(index)` fires
// once the entry occupies its permanent log position. Members receive applied
// entries strictly in index order.
class CommitService {
public:
    struct MemberPort {
        NfId id = -1;
        std::function<void(std::uint64_t, const GlobalUpdate&)> apply;
    };

    virtual ~CommitService() = default;

    virtual void add_member(MemberPort port) = 0;
    // Scaling path: new member catches up the full log, then behaves like a
    // founding member.
    virtual void join(MemberPort port) = 0;

    virtual void submit(const GlobalUpdate& u, std::function<void(std::uint64_t)> done) = 0;

    // Discards any later submission from `nf`; acks with the log length that
    // bounds every entry the fenced NF could have produced.
    virtual void fence(NfId nf, std::function<void(std::uint64_t)> ack) = 0;
    // Redelivers entries below `through` to the member, then fires done once
    // they are all committed and sent.
    virtual void sync_member(NfId member, std::uint64_t through, std::function<void()> done) = 0;

    virtual const std::vector<GlobalUpdate>& log() const = 0;
    virtual std::uint64_t committed_length() const = 0;
};

// Linearizable in-simulation sequencer: the reference implementation and the
// correctness oracle for the quorum log.
class SequencerService final : public CommitService {
public:
    SequencerService(const Config& cfg, Simulator& sim) : cfg_(cfg), sim_(sim) {}

    void add_member(MemberPort port) override { members_.push_back(std::move(port)); }
    void join(MemberPort port) override;
    void submit(const GlobalUpdate& u, std::function<void(std::uint64_t)> done) override;
    void fence(NfId nf, std::function<void(std::uint64_t)> ack) override;
    void sync_member(NfId member, std::uint64_t through, std::function<void()> done) override;
    const std::vector<GlobalUpdate>& log() const override { return log_; }
    std::uint64_t committed_length() const override { return log_.size(); }

private:
    void deliver(const MemberPort& m, std::uint64_t first, std::uint64_t last);

    const Config& cfg_;
    Simulator& sim_;
    std::vector<GlobalUpdate> log_;
    std::vector<MemberPort> members_;
    std::set<NfId> fenced_;
};

// Static-leader majority-quorum replicated log. The leader never fails (no
// leader election); member crash failures are tolerated as long as a majority
// keeps acking.
class QuorumService final : public CommitService {
public:
    QuorumService(const Config& cfg, Simulator& sim, std::function<bool(NfId)> is_alive)
        : cfg_(cfg), sim_(sim), is_alive_(std::move(is_alive)) {}

    void add_member(MemberPort port) override;
    void join(MemberPort port) override;
    void submit(const GlobalUpdate& u, std::function<void(std::uint64_t)> done) override;
    void fence(NfId nf, std::function<void(std::uint64_t)> ack) override;
    void sync_member(NfId member, std::uint64_t through, std::function<void()> done) override;
    const std::vector<GlobalUpdate>& log() const override { return log_; }
    std::uint64_t committed_length() const override { return committed_; }

private:
    std::uint32_t quorum() const;
    void replicate_to(const MemberPort& m, std::uint64_t index);
    void on_ack(std::uint64_t index);
    void advance_commit();
    void notify_applies(std::uint64_t upto);

    const Config& cfg_;
    Simulator& sim_;
    std::function<bool(NfId)> is_alive_;
    std::vector<GlobalUpdate> log_;
    std::vector<MemberPort> members_;
    std::vector<std::uint32_t> acks_;                 // per index
    std::vector<std::function<void(std::uint64_t)>> done_;  // per index
    std::uint64_t committed_ = 0;
    std::uint64_t applied_notified_ = 0;
    std::set<NfId> fenced_;
    std::vector<std::pair<std::uint64_t, std::function<void()>>> pending_syncs_;
};

std::unique_ptr<CommitService> make_commit_service(const Config& cfg, Simulator& sim,
                                                   std::function<bool(NfId)> is_alive);

}  // namespace deft
