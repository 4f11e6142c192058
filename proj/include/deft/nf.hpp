#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <vector>

#include "deft/config.hpp"
#include "deft/consensus.hpp"
#include "deft/fabric.hpp"
#include "deft/metrics.hpp"
#include "deft/model.hpp"
#include "deft/sim.hpp"

namespace deft {

enum class NfRole { Primary, Secondary, Spare };

struct LocalFlowState {
    std::uint64_t pkt_count = 0;
    std::uint64_t byte_sum = 0;
    friend bool operator==(const LocalFlowState&, const LocalFlowState&) = default;
};

using NextExpectedMap = std::map<FlowId, Counter>;
using LocalStateMap = std::map<FlowId, LocalFlowState>;

struct PacketClock {
    NextExpectedMap next_expected;
    BatchId batch_id = 0;
};

struct StateClock {
    NextExpectedMap next_expected;
    LocalStateMap local_updates;  // full values of the flows updated by the batch
    BatchId batch_id = 0;
};

// Full-state transfer used when a promoted primary seeds its new secondary or
// a running primary replaces a failed one. Acts as packet clock and state
// clock at `batch_id` in one transaction.
struct Baseline {
    NextExpectedMap release_floor;   // packet-clock component
    NextExpectedMap next_expected;   // state-clock component
    LocalStateMap local_state;
    std::vector<Packet> held;
    BatchId batch_id = 0;
};

struct MigrationGrant {
    FlowId flow = 0;
    Counter floor = 0;  // next expected counter for the flow at handoff
    LocalFlowState state;
};

// Hook points for fault injection; a crash installed at a hook takes effect
// before the protocol step that follows it.
enum class NfPhase {
    ProcessedOne,
    OutputBatchFull,
    PcPrepareSent,
    PcDecided,
    PcComplete,
    ScPrepareSent,
    ScComplete,
    GlobalCommitStart,
    GlobalCommitDone,
};

struct FlowDisposition {
    FlowId flow = 0;
    bool committed = false;  // migration outcome at the moment the owner died
    Counter floor = 0;
};

// One NF instance: input/output buffers, ordered processing unit, state
// manager, replication coordinator (packet/state clocks over 2PC), consensus
// client, and the secondary-side store, switchable between roles.
class Nf {
public:
    Nf(NfId id, NfRole role, NodeId node, const Config& cfg, Simulator& sim, NetModel& net,
       TraceLog& trace, Metrics* metrics);

    // wiring
    std::function<Nf*(NfId)> resolve;                  // peer lookup
    std::function<void(const Packet&)> to_switch;      // forwarded-packet path
    CommitService* commit_service = nullptr;
    std::function<void(NfPhase)> phase_hook;           // fault injection
    // controller callback: migration state handoff complete (src, flow, floor)
    std::function<void(NfId, FlowId, Counter)> notify_migration_state_moved;

    NfId id() const { return id_; }
    NodeId node() const { return node_; }
    NfRole role() const { return role_; }
    bool alive() const { return alive_; }
    bool degraded() const { return degraded_; }
    NfId peer() const { return peer_; }
    BatchId last_batch() const { return last_batch_; }
    std::uint64_t drop_count() const { return drop_count_; }
    std::uint64_t stale_discards() const { return stale_discards_; }
    std::uint64_t replayed_for_state() const { return replayed_for_state_; }
    const LocalStateMap& local_state() const { return local_state_; }
    const NextExpectedMap& next_expected() const { return next_expected_; }
    const std::map<std::uint64_t, std::int64_t>& global_state() const { return global_state_; }
    std::uint64_t applied_index() const { return applied_index_; }
    const std::map<FlowId, Counter>& global_markers() const { return markers_; }
    std::size_t input_size() const { return input_.size() + replay_.size(); }
    bool processing_quiet() const {
        return !working_ && !blocked_ && !txn_ && !frozen_ && input_.empty() &&
               replay_.empty() && pending_.empty() && side_buffer_.empty() && !deferred_quiesce_;
    }
    std::size_t pending_size() const;
    std::size_t output_size() const { return output_.size(); }
    std::size_t held_size() const;
    std::uint32_t actor() const { return actor_; }

    void set_peer(NfId peer) { peer_ = peer; }
    void activate_as_secondary(NfId primary) {
        role_ = NfRole::Secondary;
        peer_ = primary;
    }

    // ----- data plane -----
    void on_arrival(const Packet& p, bool is_duplicate);

    // ----- consensus member port -----
    CommitService::MemberPort member_port();
    void apply_log_entry(std::uint64_t index, const GlobalUpdate& u);

    // ----- failure / fault injection -----
    void crash();
    void mute_clocks_until(VirtualTime t) { muted_until_ = t; }

    // ----- controller-driven transitions -----
    void promote(NfId new_secondary, std::uint64_t log_floor,
                 std::vector<FlowDisposition> dispositions, std::function<void()> on_ready);
    void resync_to_new_secondary(NfId new_secondary, std::function<void()> on_done);

    // migration, source side
    void migrate_out_begin(FlowId flow, NfId dst);
    void migrate_out_flush(FlowId flow);
    void migrate_out_abort(FlowId flow);

    // migration, destination side (participant of the source's 2PC)
    void drop_adopted_flow(FlowId flow);

    // end-of-run: commit and release any partial batch
    void flush_partial_batch();

    // ----- 2PC message handlers (participant side) -----
    struct TxnPayload;
    void on_prepare(NfId from, std::uint64_t txn, std::shared_ptr<const TxnPayload> payload);
    void on_commit(NfId from, std::uint64_t txn);
    // coordinator side
    void on_vote(NfId from, std::uint64_t txn);
    void on_commit_ack(NfId from, std::uint64_t txn);
    // migration fold-in at the destination's secondary
    void on_migration_fold(FlowId flow, const MigrationGrant& grant, std::function<void()> ack);

    enum class TxnKind { PacketClock, StateClock, Baseline, Migration };

    struct TxnPayload {
        TxnKind kind;
        PacketClock pc;
        StateClock sc;
        Baseline baseline;
        MigrationGrant grant;
    };

private:
    struct Txn {
        std::uint64_t seq = 0;
        TxnKind kind{};
        NfId peer = -1;
        std::shared_ptr<const TxnPayload> payload;
        int phase = 0;  // 0 prepare sent, 1 commit sent
        std::uint32_t attempt = 0;
        std::function<void()> on_complete;
    };

    // processing unit
    void schedule_step();
    void step();
    bool pop_next(Packet& out);
    void begin_processing(const Packet& p);
    void finish_work(Packet p);
    void complete_packet(const Packet& p);
    Counter expected(FlowId f) const;
    Counter release_floor(FlowId f) const;
    void advance_skips(FlowId f);
    void update_ready(FlowId f);
    bool processing_allowed() const {
        return alive_ && role_ == NfRole::Primary && !frozen_ && !halted_ && !blocked_;
    }
    friend class NfTestPeek;

    // replication coordinator
    void maybe_commit_batch();
    void start_packet_clock();
    void start_state_clock();
    void start_txn(TxnKind kind, std::shared_ptr<const TxnPayload> payload, NfId peer,
                   std::function<void()> on_complete);
    void send_prepare();
    void send_commit();
    void arm_retry(int phase);
    VirtualTime backoff(std::uint32_t attempt) const;
    void decide_and_act();  // commit point: atomic with batch release
    void release_output(BatchId batch);
    Baseline snapshot_baseline(bool flush_output);
    void apply_baseline(const Baseline& b);
    void send_msg(NfId to, std::function<void(Nf&)> fn);
    bool clocks_muted() const { return sim_.now() < muted_until_; }
    void hook(NfPhase ph) {
        if (phase_hook) phase_hook(ph);
    }

    // promotion internals
    void promotion_sync_done();
    void begin_replay();

    NfId id_;
    NfRole role_;
    NodeId node_;
    const Config& cfg_;
    Simulator& sim_;
    NetModel& net_;
    TraceLog& trace_;
    Metrics* metrics_;
    std::uint32_t actor_;

    bool alive_ = true;
    bool frozen_ = false;   // promotion / resync in progress
    bool halted_ = false;   // packet-clock 2PC or resync halt
    bool blocked_ = false;  // waiting on a global commit
    bool working_ = false;  // a packet is in the processing unit
    bool step_scheduled_ = false;
    bool degraded_ = false;
    VirtualTime muted_until_ = -1;

    NfId peer_ = -1;

    // buffers
    std::deque<Packet> input_;
    std::deque<Packet> replay_;
    std::map<FlowId, std::map<Counter, Packet>> pending_;
    std::set<FlowId> ready_flows_;
    std::vector<Packet> output_;

    // ordering + state
    NextExpectedMap next_expected_;
    NextExpectedMap release_floor_;
    LocalStateMap local_state_;
    std::set<FlowId> touched_;
    std::map<FlowId, std::set<Counter>> dropped_gaps_;
    std::uint64_t drop_count_ = 0;
    std::uint64_t stale_discards_ = 0;
    std::uint64_t replayed_for_state_ = 0;

    // batches
    BatchId last_batch_ = 0;

    // 2PC coordinator
    std::optional<Txn> txn_;
    std::uint64_t txn_counter_ = 0;
    std::deque<std::function<void()>> txn_queue_;
    std::optional<StateClock> pending_state_clock_;
    std::function<void()> deferred_quiesce_;

    // 2PC participant
    struct Prepared {
        NfId from;
        std::uint64_t txn;
        std::shared_ptr<const TxnPayload> payload;
    };
    std::optional<Prepared> prepared_;
    NfId last_applied_from_ = -1;
    std::uint64_t last_applied_txn_ = 0;

    // secondary store
    std::map<FlowId, std::map<Counter, Packet>> held_;
    PacketClock last_pc_;
    StateClock last_sc_;

    // consensus member
    std::map<std::uint64_t, std::int64_t> global_state_;
    std::map<FlowId, Counter> markers_;
    std::uint64_t applied_index_ = 0;
    std::map<std::uint64_t, GlobalUpdate> apply_stash_;  // out-of-order entries

    // migration
    std::map<FlowId, std::map<Counter, Packet>> side_buffer_;  // migrating out
    std::map<FlowId, NfId> migrating_to_;
    std::map<FlowId, Counter> migrated_away_;

    std::function<void()> promote_ready_;
};

}  // namespace deft
