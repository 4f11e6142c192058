#include "deft/nf.hpp"

#include <algorithm>
#include <cassert>

namespace deft {

Nf::Nf(NfId id, NfRole role, NodeId node, const Config& cfg, Simulator& sim, NetModel& net,
       TraceLog& trace, Metrics* metrics)
    : id_(id),
      role_(role),
      node_(node),
      cfg_(cfg),
      sim_(sim),
      net_(net),
      trace_(trace),
      metrics_(metrics),
      actor_(trace.actor("nf" + std::to_string(id))) {}

std::size_t Nf::pending_size() const {
    std::size_t n = 0;
    for (const auto& [f, q] : pending_) n += q.size();
    return n;
}

std::size_t Nf::held_size() const {
    std::size_t n = 0;
    for (const auto& [f, q] : held_) n += q.size();
    return n;
}

Counter Nf::expected(FlowId f) const {
    auto it = next_expected_.find(f);
    return it == next_expected_.end() ? 1 : it->second;
}

Counter Nf::release_floor(FlowId f) const {
    auto it = release_floor_.find(f);
    return it == release_floor_.end() ? 0 : it->second;
}

void Nf::advance_skips(FlowId f) {
    auto git = dropped_gaps_.find(f);
    if (git == dropped_gaps_.end()) return;
    auto& gaps = git->second;
    Counter exp = expected(f);
    bool advanced = false;
    while (gaps.count(exp)) {
        gaps.erase(exp);
        ++exp;
        advanced = true;
    }
    if (advanced) next_expected_[f] = exp;
    if (gaps.empty()) dropped_gaps_.erase(git);
}

void Nf::update_ready(FlowId f) {
    advance_skips(f);
    auto it = pending_.find(f);
    if (it == pending_.end()) {
        ready_flows_.erase(f);
        return;
    }
    auto& q = it->second;
    Counter exp = expected(f);
    while (!q.empty() && q.begin()->first < exp) {
        q.erase(q.begin());
        ++stale_discards_;
    }
    if (q.empty()) {
        pending_.erase(it);
        ready_flows_.erase(f);
        return;
    }
    if (q.begin()->first == exp)
        ready_flows_.insert(f);
    else
        ready_flows_.erase(f);
}

// ------------------------------------------------------------- arrivals

void Nf::on_arrival(const Packet& p, bool is_duplicate) {
    (void)is_duplicate;
    if (!alive_) return;
    trace_.emit(sim_.now(), actor_, TraceKind::NfIn, p.id);
    if (metrics_) metrics_->on_nf_in(p.id, sim_.now());
    FlowId f = p.id.flow_id;

    if (role_ == NfRole::Secondary) {
        // duplicates are retained until a state clock covers them
        held_[f].emplace(p.id.counter, p);
        return;
    }
    if (role_ == NfRole::Spare) return;

    if (auto it = migrated_away_.find(f);
        it != migrated_away_.end() && p.id.counter >= it->second) {
        if (to_switch) to_switch(p);
        return;
    }
    if (migrating_to_.count(f)) {
        side_buffer_[f].emplace(p.id.counter, p);
        trace_.emit(sim_.now(), actor_, TraceKind::Buffered, p.id);
        return;
    }
    if (input_.size() >= cfg_.input_capacity()) {
        ++drop_count_;
        trace_.emit(sim_.now(), actor_, TraceKind::Dropped, p.id);
        if (metrics_) metrics_->on_input_drop();
        if (p.id.counter >= expected(f)) {
            dropped_gaps_[f].insert(p.id.counter);
            advance_skips(f);
            update_ready(f);
            schedule_step();
        }
        return;
    }
    input_.push_back(p);
    schedule_step();
}

// ------------------------------------------------------------ processing

void Nf::schedule_step() {
    if (step_scheduled_ || !alive_) return;
    step_scheduled_ = true;
    sim_.at(sim_.now(), [this] {
        step_scheduled_ = false;
        step();
    });
}

bool Nf::pop_next(Packet& out) {
    if (!replay_.empty()) {
        out = replay_.front();
        replay_.pop_front();
        return true;
    }
    if (!input_.empty()) {
        out = input_.front();
        input_.pop_front();
        return true;
    }
    return false;
}

void Nf::step() {
    if (!processing_allowed() || working_) return;
    if (output_.size() >= cfg_.batch_size) {
        maybe_commit_batch();
        return;
    }
    if (!ready_flows_.empty()) {
        FlowId f = *ready_flows_.begin();
        auto& q = pending_[f];
        Packet p = q.begin()->second;
        q.erase(q.begin());
        if (q.empty()) pending_.erase(f);
        ready_flows_.erase(f);
        begin_processing(p);
        return;
    }
    while (true) {
        Packet p;
        if (!pop_next(p)) return;  // idle
        FlowId f = p.id.flow_id;
        if (auto it = migrated_away_.find(f);
            it != migrated_away_.end() && p.id.counter >= it->second) {
            if (to_switch) to_switch(p);
            continue;
        }
        if (migrating_to_.count(f)) {
            side_buffer_[f].emplace(p.id.counter, p);
            trace_.emit(sim_.now(), actor_, TraceKind::Buffered, p.id);
            continue;
        }
        advance_skips(f);
        Counter exp = expected(f);
        if (p.id.counter < exp) {
            ++stale_discards_;  // replayed or stale delivery
            continue;
        }
        if (p.id.counter == exp || cfg_.mutation == Mutation::BypassPending) {
            begin_processing(p);
            return;
        }
        auto [it, inserted] = pending_[f].emplace(p.id.counter, p);
        (void)it;
        if (inserted) trace_.emit(sim_.now(), actor_, TraceKind::Buffered, p.id);
    }
}

void Nf::begin_processing(const Packet& p) {
    working_ = true;
    if (metrics_) metrics_->on_proc_start(p.id, sim_.now());
    sim_.after(cfg_.work_cost_ns * p.work_units, [this, p] { finish_work(p); });
}

void Nf::finish_work(Packet p) {
    if (!alive_) return;
    working_ = false;
    if (p.global_update_flag) {
        bool skip = false;
        if (cfg_.mutation != Mutation::SkipMarker) {
            auto it = markers_.find(p.id.flow_id);
            skip = it != markers_.end() && p.id.counter <= it->second;
        }
        if (!skip) {
            trace_.emit(sim_.now(), actor_, TraceKind::GlobalCommitStart, p.id);
            hook(NfPhase::GlobalCommitStart);
            if (!alive_) return;
            blocked_ = true;
            GlobalUpdate u{p.id.flow_id % cfg_.global_keys, 1, p.id, id_};
            commit_service->submit(u, [this, p](std::uint64_t) {
                if (!alive_) return;
                blocked_ = false;
                trace_.emit(sim_.now(), actor_, TraceKind::GlobalCommitDone, p.id);
                if (metrics_) metrics_->on_global_commit();
                hook(NfPhase::GlobalCommitDone);
                if (!alive_) return;
                complete_packet(p);
            });
            return;
        }
    }
    complete_packet(p);
}

void Nf::complete_packet(const Packet& p) {
    FlowId f = p.id.flow_id;
    auto& ls = local_state_[f];
    ++ls.pkt_count;
    ls.byte_sum += p.payload_len;
    touched_.insert(f);
    next_expected_[f] = p.id.counter + 1;
    advance_skips(f);

    if (p.id.counter >= release_floor(f)) {
        output_.push_back(p);
        trace_.emit(sim_.now(), actor_, TraceKind::Processed, p.id);
        if (metrics_) metrics_->on_proc_end(p.id, sim_.now());
        hook(NfPhase::ProcessedOne);
        if (!alive_) return;
    } else {
        ++replayed_for_state_;  // already released by the failed primary
    }
    update_ready(f);

    if (deferred_quiesce_ && !working_ && !blocked_) {
        auto fn = std::move(deferred_quiesce_);
        deferred_quiesce_ = nullptr;
        fn();
        return;
    }
    if (output_.size() >= cfg_.batch_size) {
        hook(NfPhase::OutputBatchFull);
        if (!alive_) return;
        maybe_commit_batch();
    } else {
        schedule_step();
    }
}

// ------------------------------------------------------ batch replication

void Nf::maybe_commit_batch() {
    if (txn_) {
        txn_queue_.push_back([this] {
            if (!txn_ && output_.size() >= cfg_.batch_size) start_packet_clock();
        });
        return;
    }
    start_packet_clock();
}

void Nf::start_packet_clock() {
    halted_ = true;
    BatchId t = last_batch_ + 1;
    StateClock sc;
    sc.next_expected = next_expected_;
    sc.batch_id = t;
    for (FlowId f : touched_) sc.local_updates[f] = local_state_[f];
    touched_.clear();
    pending_state_clock_ = std::move(sc);

    if (cfg_.mutation == Mutation::ReleaseBeforeCommit) release_output(t);

    if (peer_ < 0) {  // degraded: no backup, commit is local
        release_output(t);
        last_batch_ = t;
        trace_.emit(sim_.now(), actor_, TraceKind::PacketClockCommit, std::nullopt, t);
        trace_.emit(sim_.now(), actor_, TraceKind::StateClockCommit, std::nullopt, t);
        if (metrics_) metrics_->on_batch_commit();
        pending_state_clock_.reset();
        halted_ = false;
        schedule_step();
        return;
    }

    auto payload = std::make_shared<TxnPayload>();
    payload->kind = TxnKind::PacketClock;
    payload->pc = PacketClock{pending_state_clock_->next_expected, t};
    start_txn(TxnKind::PacketClock, payload, peer_, [this] {
        hook(NfPhase::PcComplete);
        if (!alive_) return;
        start_state_clock();
    });
    hook(NfPhase::PcPrepareSent);
}

void Nf::start_state_clock() {
    if (!pending_state_clock_) return;
    auto payload = std::make_shared<TxnPayload>();
    payload->kind = TxnKind::StateClock;
    payload->sc = std::move(*pending_state_clock_);
    pending_state_clock_.reset();
    start_txn(TxnKind::StateClock, payload, peer_, nullptr);
    hook(NfPhase::ScPrepareSent);
}

void Nf::release_output(BatchId batch) {
    for (const Packet& p : output_) {
        trace_.emit(sim_.now(), actor_, TraceKind::Released, p.id, batch);
        if (metrics_) metrics_->on_released(p.id, sim_.now());
    }
    output_.clear();
}

// --------------------------------------------------------- 2PC coordinator

VirtualTime Nf::backoff(std::uint32_t attempt) const {
    VirtualTime d = cfg_.backoff_initial_ns;
    for (std::uint32_t i = 0; i < attempt && d < cfg_.backoff_cap_ns; ++i) d *= 2;
    return std::min(d, cfg_.backoff_cap_ns);
}

void Nf::send_msg(NfId to, std::function<void(Nf&)> fn) {
    sim_.after(net_.ctrl_delay(), [this, to, fn = std::move(fn)] {
        if (Nf* peer = resolve(to)) fn(*peer);
    });
}

void Nf::start_txn(TxnKind kind, std::shared_ptr<const TxnPayload> payload, NfId peer,
                   std::function<void()> on_complete) {
    assert(!txn_);
    txn_ = Txn{++txn_counter_, kind, peer, std::move(payload), 0, 0, std::move(on_complete)};
    send_prepare();
}

void Nf::send_prepare() {
    send_msg(txn_->peer, [from = id_, seq = txn_->seq, payload = txn_->payload](Nf& peer) {
        peer.on_prepare(from, seq, payload);
    });
    arm_retry(0);
}

void Nf::send_commit() {
    send_msg(txn_->peer, [from = id_, seq = txn_->seq](Nf& peer) { peer.on_commit(from, seq); });
    arm_retry(1);
}

void Nf::arm_retry(int phase) {
    std::uint64_t seq = txn_->seq;
    std::uint32_t attempt = txn_->attempt;
    sim_.after(backoff(attempt), [this, seq, attempt, phase] {
        if (!alive_ || !txn_ || txn_->seq != seq || txn_->phase != phase ||
            txn_->attempt != attempt)
            return;
        ++txn_->attempt;
        if (phase == 0)
            send_prepare();
        else
            send_commit();
    });
}

void Nf::on_vote(NfId from, std::uint64_t txn) {
    if (!alive_ || !txn_ || txn_->seq != txn || txn_->phase != 0 || txn_->peer != from) return;
    txn_->phase = 1;
    txn_->attempt = 0;
    decide_and_act();
}

void Nf::decide_and_act() {
    // Commit point. Local effects and the COMMIT message are one atomic
    // simulator event; the channel never loses the message, so the
    // participant learns the outcome even if this NF crashes right after.
    switch (txn_->kind) {
        case TxnKind::PacketClock: {
            BatchId t = txn_->payload->pc.batch_id;
            release_output(t);
            last_batch_ = t;
            trace_.emit(sim_.now(), actor_, TraceKind::PacketClockCommit, std::nullopt, t);
            if (metrics_) metrics_->on_batch_commit();
            halted_ = false;
            send_commit();
            hook(NfPhase::PcDecided);
            if (!alive_) return;
            schedule_step();
            break;
        }
        case TxnKind::StateClock: {
            trace_.emit(sim_.now(), actor_, TraceKind::StateClockCommit, std::nullopt,
                        txn_->payload->sc.batch_id);
            send_commit();
            break;
        }
        case TxnKind::Baseline: {
            const Baseline& b = txn_->payload->baseline;
            if (b.batch_id > last_batch_) {
                release_output(b.batch_id);
                last_batch_ = b.batch_id;
                if (metrics_) metrics_->on_batch_commit();
            }
            trace_.emit(sim_.now(), actor_, TraceKind::PacketClockCommit, std::nullopt,
                        b.batch_id);
            trace_.emit(sim_.now(), actor_, TraceKind::StateClockCommit, std::nullopt,
                        b.batch_id);
            send_commit();
            break;
        }
        case TxnKind::Migration: {
            send_commit();
            break;
        }
    }
}

void Nf::on_commit_ack(NfId from, std::uint64_t txn) {
    if (!alive_ || !txn_ || txn_->seq != txn || txn_->phase != 1 || txn_->peer != from) return;
    auto done = std::move(txn_->on_complete);
    txn_.reset();
    if (done) done();
    while (!txn_ && !txn_queue_.empty()) {
        auto next = std::move(txn_queue_.front());
        txn_queue_.pop_front();
        next();
    }
}

// --------------------------------------------------------- 2PC participant

void Nf::on_prepare(NfId from, std::uint64_t txn, std::shared_ptr<const TxnPayload> payload) {
    if (!alive_ || clocks_muted()) return;
    if (payload->kind == TxnKind::Migration) {
        if (role_ != NfRole::Primary) return;
    } else {
        if (role_ != NfRole::Secondary || from != peer_) return;
    }
    if (last_applied_from_ == from && last_applied_txn_ == txn) {
        // commit already applied; coordinator must have missed the ack
        send_msg(from, [me = id_, txn](Nf& c) { c.on_commit_ack(me, txn); });
        return;
    }
    prepared_ = Prepared{from, txn, payload};
    if (payload->kind == TxnKind::Migration && peer_ >= 0) {
        // chained fold: the destination's own secondary adopts the flow's
        // baseline before we vote, so a later destination failure is covered
        FlowId flow = payload->grant.flow;
        MigrationGrant grant = payload->grant;
        send_msg(peer_, [flow, grant, dst = id_, from, txn](Nf& sec) {
            sec.on_migration_fold(flow, grant, [&sec, dst, from, txn] {
                sec.send_msg(dst, [from, txn](Nf& d) {
                    if (d.prepared_ && d.prepared_->txn == txn && d.prepared_->from == from)
                        d.send_msg(from, [me = d.id_, txn](Nf& c) { c.on_vote(me, txn); });
                });
            });
        });
        return;
    }
    send_msg(from, [me = id_, txn](Nf& c) { c.on_vote(me, txn); });
}

void Nf::on_migration_fold(FlowId flow, const MigrationGrant& grant, std::function<void()> ack) {
    if (!alive_) return;
    Counter floor = grant.floor;
    auto bump = [&](NextExpectedMap& m) {
        auto [it, inserted] = m.emplace(flow, floor);
        if (!inserted) it->second = std::max(it->second, floor);
    };
    bump(last_pc_.next_expected);
    bump(last_sc_.next_expected);
    local_state_[flow] = grant.state;
    if (auto it = held_.find(flow); it != held_.end()) {
        auto& q = it->second;
        q.erase(q.begin(), q.lower_bound(floor));
        if (q.empty()) held_.erase(it);
    }
    ack();
}

void Nf::on_commit(NfId from, std::uint64_t txn) {
    if (!alive_ || clocks_muted()) return;
    if (last_applied_from_ == from && last_applied_txn_ == txn) {
        send_msg(from, [me = id_, txn](Nf& c) { c.on_commit_ack(me, txn); });
        return;
    }
    if (!prepared_ || prepared_->txn != txn || prepared_->from != from) return;
    const TxnPayload& payload = *prepared_->payload;
    switch (payload.kind) {
        case TxnKind::PacketClock:
            last_pc_ = payload.pc;
            trace_.emit(sim_.now(), actor_, TraceKind::PacketClockCommit, std::nullopt,
                        payload.pc.batch_id);
            break;
        case TxnKind::StateClock: {
            last_sc_ = payload.sc;
            for (const auto& [f, v] : payload.sc.local_updates) local_state_[f] = v;
            // discard held packets the state clock now covers
            for (auto it = held_.begin(); it != held_.end();) {
                auto ne = payload.sc.next_expected.find(it->first);
                if (ne != payload.sc.next_expected.end()) {
                    auto& q = it->second;
                    q.erase(q.begin(), q.lower_bound(ne->second));
                    if (q.empty()) {
                        it = held_.erase(it);
                        continue;
                    }
                }
                ++it;
            }
            trace_.emit(sim_.now(), actor_, TraceKind::StateClockCommit, std::nullopt,
                        payload.sc.batch_id);
            break;
        }
        case TxnKind::Baseline:
            apply_baseline(payload.baseline);
            break;
        case TxnKind::Migration: {
            const MigrationGrant& g = payload.grant;
            next_expected_[g.flow] = g.floor;
            local_state_[g.flow] = g.state;
            update_ready(g.flow);
            schedule_step();
            break;
        }
    }
    last_applied_from_ = from;
    last_applied_txn_ = txn;
    prepared_.reset();
    send_msg(from, [me = id_, txn](Nf& c) { c.on_commit_ack(me, txn); });
}

// --------------------------------------------------------------- baselines

Baseline Nf::snapshot_baseline(bool flush_output) {
    Baseline b;
    b.next_expected = next_expected_;
    b.release_floor = next_expected_;
    for (const auto& [f, v] : release_floor_) {
        auto [it, inserted] = b.release_floor.emplace(f, v);
        if (!inserted) it->second = std::max(it->second, v);
    }
    b.local_state = local_state_;
    b.batch_id = (flush_output && !output_.empty()) ? last_batch_ + 1 : last_batch_;
    auto add = [&b](const Packet& p) { b.held.push_back(p); };
    for (const auto& p : replay_) add(p);
    for (const auto& p : input_) add(p);
    for (const auto& [f, q] : pending_)
        for (const auto& [c, p] : q) add(p);
    for (const auto& [f, q] : side_buffer_)
        for (const auto& [c, p] : q) add(p);
    for (const auto& [f, q] : held_)
        for (const auto& [c, p] : q) add(p);
    return b;
}

void Nf::apply_baseline(const Baseline& b) {
    last_pc_ = PacketClock{b.release_floor, b.batch_id};
    last_sc_ = StateClock{b.next_expected, {}, b.batch_id};
    local_state_ = b.local_state;
    held_.clear();
    for (const Packet& p : b.held) {
        auto ne = b.next_expected.find(p.id.flow_id);
        Counter floor = ne == b.next_expected.end() ? 1 : ne->second;
        if (p.id.counter >= floor) held_[p.id.flow_id].emplace(p.id.counter, p);
    }
    trace_.emit(sim_.now(), actor_, TraceKind::PacketClockCommit, std::nullopt, b.batch_id);
    trace_.emit(sim_.now(), actor_, TraceKind::StateClockCommit, std::nullopt, b.batch_id);
}

// -------------------------------------------------------------- consensus

CommitService::MemberPort Nf::member_port() {
    return {id_, [this](std::uint64_t i, const GlobalUpdate& u) { apply_log_entry(i, u); }};
}

void Nf::apply_log_entry(std::uint64_t index, const GlobalUpdate& u) {
    if (!alive_) return;
    if (index < applied_index_) return;  // duplicate delivery
    apply_stash_.emplace(index, u);
    while (true) {
        auto it = apply_stash_.find(applied_index_);
        if (it == apply_stash_.end()) break;
        const GlobalUpdate& e = it->second;
        global_state_[e.key] += e.delta;
        auto [mit, inserted] = markers_.emplace(e.origin_pkt.flow_id, e.origin_pkt.counter);
        if (!inserted) mit->second = std::max(mit->second, e.origin_pkt.counter);
        ++applied_index_;
        apply_stash_.erase(it);
    }
}

// ------------------------------------------------------ failure transitions

void Nf::crash() {
    if (!alive_) return;
    alive_ = false;
    trace_.emit(sim_.now(), actor_, TraceKind::Failure);
}

void Nf::promote(NfId new_secondary, std::uint64_t log_floor,
                 std::vector<FlowDisposition> dispositions, std::function<void()> on_ready) {
    if (!alive_) return;
    role_ = NfRole::Primary;
    frozen_ = true;
    prepared_.reset();  // in-doubt clock: the failed primary never decided, abort
    peer_ = new_secondary;
    degraded_ = new_secondary < 0;

    next_expected_ = last_sc_.next_expected;
    release_floor_ = last_pc_.next_expected;
    last_batch_ = last_pc_.batch_id;

    for (const FlowDisposition& d : dispositions) {
        if (!d.committed) continue;
        migrated_away_[d.flow] = d.floor;
        if (auto it = held_.find(d.flow); it != held_.end()) {
            auto& q = it->second;
            // the dead source may not have flushed these; the destination
            // deduplicates via its ordering gate
            for (auto pit = q.lower_bound(d.floor); pit != q.end(); ++pit) {
                if (to_switch) to_switch(pit->second);
            }
            q.erase(q.lower_bound(d.floor), q.end());
            if (q.empty()) held_.erase(it);
        }
    }

    promote_ready_ = std::move(on_ready);
    commit_service->sync_member(id_, log_floor, [this] { promotion_sync_done(); });
}

void Nf::promotion_sync_done() {
    if (!alive_) return;
    if (peer_ >= 0) {
        auto payload = std::make_shared<TxnPayload>();
        payload->kind = TxnKind::Baseline;
        payload->baseline = snapshot_baseline(false);
        start_txn(TxnKind::Baseline, payload, peer_, [this] { begin_replay(); });
    } else {
        begin_replay();
    }
}

void Nf::begin_replay() {
    if (!alive_) return;
    for (auto& [f, q] : held_)
        for (auto& [c, p] : q) replay_.push_back(p);
    held_.clear();
    frozen_ = false;
    trace_.emit(sim_.now(), actor_, TraceKind::Promotion);
    if (promote_ready_) {
        auto fn = std::move(promote_ready_);
        promote_ready_ = nullptr;
        fn();
    }
    schedule_step();
}

void Nf::resync_to_new_secondary(NfId new_secondary, std::function<void()> on_done) {
    if (!alive_) return;
    halted_ = true;  // processing halted during this transaction
    if (working_ || blocked_) {
        deferred_quiesce_ = [this, new_secondary, on_done = std::move(on_done)]() mutable {
            resync_to_new_secondary(new_secondary, std::move(on_done));
        };
        return;
    }
    txn_.reset();  // abandon retries toward the dead secondary
    txn_queue_.clear();
    pending_state_clock_.reset();
    peer_ = new_secondary;
    degraded_ = new_secondary < 0;
    if (new_secondary < 0) {
        if (!output_.empty()) {
            BatchId t = ++last_batch_;
            release_output(t);
            trace_.emit(sim_.now(), actor_, TraceKind::PacketClockCommit, std::nullopt, t);
            trace_.emit(sim_.now(), actor_, TraceKind::StateClockCommit, std::nullopt, t);
            if (metrics_) metrics_->on_batch_commit();
        }
        halted_ = false;
        schedule_step();
        if (on_done) on_done();
        return;
    }
    auto payload = std::make_shared<TxnPayload>();
    payload->kind = TxnKind::Baseline;
    payload->baseline = snapshot_baseline(true);
    start_txn(TxnKind::Baseline, payload, peer_,
              [this, on_done = std::move(on_done)] {
                  halted_ = false;
                  schedule_step();
                  if (on_done) on_done();
              });
}

void Nf::flush_partial_batch() {
    if (!alive_ || role_ != NfRole::Primary || txn_ || working_ || blocked_) return;
    if (output_.empty()) return;
    start_packet_clock();
}

// -------------------------------------------------------------- migration

void Nf::migrate_out_begin(FlowId flow, NfId dst) {
    if (!alive_) return;
    trace_.emit(sim_.now(), actor_, TraceKind::MigrationStart);
    migrating_to_[flow] = dst;
    if (auto it = pending_.find(flow); it != pending_.end()) {
        for (auto& [c, p] : it->second) side_buffer_[flow].emplace(c, p);
        pending_.erase(it);
        ready_flows_.erase(flow);
    }
    auto start = [this, flow, dst] {
        auto it = migrating_to_.find(flow);
        if (it == migrating_to_.end() || it->second != dst) return;  // aborted meanwhile
        auto payload = std::make_shared<TxnPayload>();
        payload->kind = TxnKind::Migration;
        payload->grant.flow = flow;
        payload->grant.floor = expected(flow);
        payload->grant.state = local_state_[flow];
        start_txn(TxnKind::Migration, payload, dst, [this, payload] {
            if (notify_migration_state_moved)
                notify_migration_state_moved(id_, payload->grant.flow, payload->grant.floor);
        });
    };
    if (working_ || blocked_) {
        // snapshot once the in-flight packet (possibly of this flow) retires
        deferred_quiesce_ = [this, start] {
            if (txn_)
                txn_queue_.push_back(start);
            else
                start();
            schedule_step();
        };
        return;
    }
    if (txn_)
        txn_queue_.push_back(start);
    else
        start();
}

void Nf::migrate_out_flush(FlowId flow) {
    if (!alive_) return;
    migrated_away_[flow] = expected(flow);
    if (auto it = side_buffer_.find(flow); it != side_buffer_.end()) {
        for (auto& [c, p] : it->second)
            if (to_switch) to_switch(p);
        side_buffer_.erase(it);
    }
    migrating_to_.erase(flow);
    trace_.emit(sim_.now(), actor_, TraceKind::MigrationDone);
}

void Nf::migrate_out_abort(FlowId flow) {
    if (!alive_) return;
    migrating_to_.erase(flow);
    if (txn_ && txn_->kind == TxnKind::Migration && txn_->payload->grant.flow == flow) {
        txn_.reset();
        while (!txn_ && !txn_queue_.empty()) {
            auto next = std::move(txn_queue_.front());
            txn_queue_.pop_front();
            next();
        }
    }
    if (auto it = side_buffer_.find(flow); it != side_buffer_.end()) {
        for (auto& [c, p] : it->second) replay_.push_back(p);
        side_buffer_.erase(it);
    }
    schedule_step();
}

void Nf::drop_adopted_flow(FlowId flow) {
    if (!alive_) return;
    next_expected_.erase(flow);
    local_state_.erase(flow);
    release_floor_.erase(flow);
    if (peer_ >= 0) {
        send_msg(peer_, [flow](Nf& sec) {
            if (!sec.alive_) return;
            sec.last_pc_.next_expected.erase(flow);
            sec.last_sc_.next_expected.erase(flow);
            sec.local_state_.erase(flow);
        });
    }
}

}  // namespace deft
