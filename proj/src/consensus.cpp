#include "edgekv/consensus.hpp"

#include <algorithm>
#include <memory>

#include "edgekv/log.hpp"
#include "edgekv/wire.hpp"

namespace edgekv {

const char* to_string(Role r) {
  switch (r) {
    case Role::Follower: return "follower";
    case Role::Candidate: return "candidate";
    case Role::Leader: return "leader";
    case Role::Learner: return "learner";
  }
  return "?";
}

namespace {

// Quorum round used by the read-index barrier: leadership is confirmed
// once a majority of voters answers an AppendEntries in the same term.
struct Round {
  uint64_t term = 0;
  size_t acks = 1;  // self
  size_t needed = 1;
  uint64_t barrier = 0;
  bool done = false;
  ReadIndexCallback cb;
  TimerId timer = 0;
};

}  // namespace

RaftNode::RaftNode(Transport& transport, StorageEngine& storage,
                   RaftConfig config, Rng rng)
    : transport_(transport),
      storage_(storage),
      config_(std::move(config)),
      rng_(rng),
      role_(config_.learner ? Role::Learner : Role::Follower) {
  const RaftPersistentState& persisted = storage_.raft_state();
  term_ = persisted.term;
  voted_for_ = persisted.voted_for;
  commit_index_ = storage_.applied_index();
  learners_.insert(config_.learners.begin(), config_.learners.end());
}

RaftNode::~RaftNode() { stop(); }

void RaftNode::start() {
  running_ = true;
  if (!config_.learner) arm_election_timer();
}

void RaftNode::stop() {
  if (!running_) return;
  running_ = false;
  if (election_timer_) transport_.cancel_timer(election_timer_);
  if (heartbeat_timer_) transport_.cancel_timer(heartbeat_timer_);
  election_timer_ = heartbeat_timer_ = 0;
  fail_leader_state(Status::Unavailable);
}

uint64_t RaftNode::last_log_index() const {
  return log().empty() ? 0 : log().back().index;
}

uint64_t RaftNode::term_at(uint64_t index) const {
  if (index == 0 || index > last_log_index()) return 0;
  return log()[index - 1].term;
}

std::optional<std::string> RaftNode::leader_hint() const {
  if (role_ == Role::Leader) return config_.self;
  if (leader_hint_.empty()) return std::nullopt;
  return leader_hint_;
}

void RaftNode::arm_election_timer() {
  if (config_.learner || timers_paused_ || !running_) return;
  if (election_timer_) transport_.cancel_timer(election_timer_);
  Ticks delay = Ticks(rng_.uniform(uint64_t(config_.election_timeout_min),
                                   uint64_t(config_.election_timeout_max)));
  election_timer_ = transport_.schedule(config_.self, delay, [this] {
    election_timer_ = 0;
    start_election();
  });
}

void RaftNode::arm_heartbeat_timer() {
  if (timers_paused_ || !running_) return;
  if (heartbeat_timer_) transport_.cancel_timer(heartbeat_timer_);
  heartbeat_timer_ =
      transport_.schedule(config_.self, config_.heartbeat_interval, [this] {
        heartbeat_timer_ = 0;
        if (role_ != Role::Leader) return;
        broadcast_append_entries();
        arm_heartbeat_timer();
      });
}

void RaftNode::pause_timers() {
  timers_paused_ = true;
  if (election_timer_) transport_.cancel_timer(election_timer_);
  if (heartbeat_timer_) transport_.cancel_timer(heartbeat_timer_);
  election_timer_ = heartbeat_timer_ = 0;
}

void RaftNode::resume_timers() {
  timers_paused_ = false;
  if (role_ == Role::Leader) {
    arm_heartbeat_timer();
  } else {
    arm_election_timer();
  }
}

void RaftNode::start_election() {
  if (!running_ || role_ == Role::Leader || config_.learner) return;
  role_ = Role::Candidate;
  term_++;
  voted_for_ = config_.self;
  storage_.save_raft_meta(term_, voted_for_);
  votes_ = 1;
  leader_hint_.clear();
  arm_election_timer();  // retry if this round stalls

  uint64_t election_term = term_;
  Json payload;
  payload["group"] = config_.group;
  payload["term"] = term_;
  payload["candidate"] = config_.self;
  payload["last_log_index"] = last_log_index();
  payload["last_log_term"] = term_at(last_log_index());

  if (votes_ >= quorum_size()) {  // single-voter group
    become_leader();
    return;
  }
  for (const auto& peer : config_.voters) {
    if (peer == config_.self) continue;
    Envelope env;
    env.kind = MessageKind::RequestVote;
    env.payload = payload;
    transport_.request(
        config_.self, peer, env, config_.election_timeout_min,
        [this, election_term](RpcResult res) {
          if (!running_ || !res.ok) return;
          uint64_t resp_term = res.response.payload["term"].get<uint64_t>();
          if (resp_term > term_) {
            step_down(resp_term, "");
            return;
          }
          if (role_ != Role::Candidate || term_ != election_term) return;
          if (res.response.payload["granted"].get<bool>() &&
              resp_term == term_) {
            votes_++;
            if (votes_ >= quorum_size()) become_leader();
          }
        });
  }
}

void RaftNode::become_leader() {
  role_ = Role::Leader;
  leader_hint_ = config_.self;
  votes_ = 0;
  if (election_timer_) {
    transport_.cancel_timer(election_timer_);
    election_timer_ = 0;
  }
  next_index_.clear();
  match_index_.clear();
  inflight_.clear();
  send_again_.clear();
  for (const auto& peer : config_.voters) {
    if (peer == config_.self) continue;
    next_index_[peer] = last_log_index() + 1;
    match_index_[peer] = 0;
  }
  for (const auto& peer : learners_) {
    next_index_[peer] = last_log_index() + 1;
    match_index_[peer] = 0;
  }

  // Committing an entry of the new term establishes the commit point
  // before any read barrier may complete. Empty-key commands are internal
  // no-ops to the state machine.
  LogEntry noop;
  noop.term = term_;
  noop.index = last_log_index() + 1;
  noop.command = Command{CmdKind::Put, Scope::Local, "", "", ""};
  storage_.append_raft_entry(noop);

  log_info("raft", config_.group + "/" + config_.self + " elected leader, term " +
                       std::to_string(term_));
  if (on_became_leader) on_became_leader(term_, config_.self);

  maybe_advance_commit();
  broadcast_append_entries();
  arm_heartbeat_timer();
}

void RaftNode::step_down(uint64_t term, const std::string& leader) {
  if (term > term_) {
    term_ = term;
    voted_for_.clear();
    storage_.save_raft_meta(term_, voted_for_);
  }
  if (role_ == Role::Leader) {
    if (heartbeat_timer_) {
      transport_.cancel_timer(heartbeat_timer_);
      heartbeat_timer_ = 0;
    }
    fail_leader_state(Status::Unavailable);
  }
  votes_ = 0;
  if (!leader.empty()) leader_hint_ = leader;
  if (!config_.learner) {
    role_ = Role::Follower;
    arm_election_timer();
  }
}

void RaftNode::fail_leader_state(Status status) {
  auto proposals = std::move(proposals_);
  proposals_.clear();
  for (auto& [index, pending] : proposals) {
    if (pending.timer) transport_.cancel_timer(pending.timer);
    ProposeResult res;
    res.status = status;
    res.leader_hint = leader_hint_;
    pending.cb(res);
  }
  auto barriers = std::move(barriers_);
  barriers_.clear();
  for (auto& barrier : barriers) {
    ReadIndexResult res;
    res.status = status;
    barrier.cb(res);
  }
}

void RaftNode::propose(Command command, ProposeCallback cb) {
  if (role_ != Role::Leader) {
    ProposeResult res;
    res.status = leader_hint_.empty() ? Status::Unavailable : Status::Redirect;
    res.leader_hint = leader_hint_;
    cb(res);
    return;
  }
  LogEntry entry;
  entry.term = term_;
  entry.index = last_log_index() + 1;
  entry.command = std::move(command);
  storage_.append_raft_entry(entry);

  PendingProposal pending;
  pending.term = term_;
  pending.cb = std::move(cb);
  uint64_t index = entry.index;
  pending.timer =
      transport_.schedule(config_.self, config_.propose_timeout, [this, index] {
        auto it = proposals_.find(index);
        if (it == proposals_.end()) return;
        ProposeCallback cb = std::move(it->second.cb);
        proposals_.erase(it);
        ProposeResult res;
        res.status = Status::Timeout;  // ambiguous: may commit later
        cb(res);
      });
  proposals_[index] = std::move(pending);

  maybe_advance_commit();  // single-voter groups commit immediately
  broadcast_append_entries();
}

void RaftNode::broadcast_append_entries() {
  for (const auto& peer : config_.voters) {
    if (peer != config_.self) send_append_entries(peer);
  }
  for (const auto& peer : learners_) send_append_entries(peer);
}

void RaftNode::send_append_entries(const std::string& peer) {
  // One outstanding AppendEntries per peer: concurrent proposals batch
  // into the next round instead of re-sending the whole suffix each.
  if (inflight_.count(peer)) {
    send_again_.insert(peer);
    return;
  }
  inflight_.insert(peer);

  uint64_t next = next_index_.count(peer) ? next_index_[peer] : last_log_index() + 1;
  uint64_t prev_index = next - 1;

  Json entries = Json::array();
  uint64_t batch_end = std::min(last_log_index(), next + kMaxEntriesPerAppend - 1);
  for (uint64_t i = next; i <= batch_end; i++) {
    entries.push_back(log_entry_to_json(log()[i - 1]));
  }

  Json payload;
  payload["group"] = config_.group;
  payload["term"] = term_;
  payload["leader"] = config_.self;
  payload["prev_log_index"] = prev_index;
  payload["prev_log_term"] = term_at(prev_index);
  payload["entries"] = std::move(entries);
  payload["leader_commit"] = commit_index_;

  Envelope env;
  env.kind = MessageKind::AppendEntries;
  env.payload = std::move(payload);

  uint64_t sent_term = term_;
  transport_.request(
      config_.self, peer, env, config_.heartbeat_interval * 2,
      [this, peer, sent_term](RpcResult res) {
        inflight_.erase(peer);
        if (!running_) return;
        if (!res.ok) {
          send_again_.erase(peer);  // next heartbeat retries
          return;
        }
        uint64_t resp_term = res.response.payload["term"].get<uint64_t>();
        if (resp_term > term_) {
          step_down(resp_term, "");
          return;
        }
        if (role_ != Role::Leader || sent_term != term_ || resp_term != term_) {
          return;
        }
        bool resend = send_again_.erase(peer) > 0;
        if (res.response.payload["success"].get<bool>()) {
          uint64_t match = res.response.payload["match_index"].get<uint64_t>();
          if (match > match_index_[peer]) match_index_[peer] = match;
          if (match + 1 > next_index_[peer]) next_index_[peer] = match + 1;
          maybe_advance_commit();
          if (next_index_[peer] <= last_log_index() || resend) {
            send_append_entries(peer);  // keep catching the peer up
          }
        } else {
          if (next_index_[peer] > 1) next_index_[peer]--;
          send_append_entries(peer);
        }
      });
}

void RaftNode::maybe_advance_commit() {
  if (role_ != Role::Leader) return;
  for (uint64_t idx = last_log_index(); idx > commit_index_; idx--) {
    if (term_at(idx) != term_) break;  // only current-term entries count
    size_t count = 1;  // self
    for (const auto& peer : config_.voters) {
      if (peer == config_.self) continue;
      auto it = match_index_.find(peer);
      if (it != match_index_.end() && it->second >= idx) count++;
    }
    if (count >= quorum_size()) {
      commit_index_ = idx;
      apply_committed();
      break;
    }
  }
}

void RaftNode::apply_committed() {
  while (storage_.applied_index() < commit_index_) {
    uint64_t idx = storage_.applied_index() + 1;
    const LogEntry& entry = log()[idx - 1];
    storage_.apply(entry);

    auto it = proposals_.find(idx);
    if (it != proposals_.end()) {
      PendingProposal pending = std::move(it->second);
      proposals_.erase(it);
      if (pending.timer) transport_.cancel_timer(pending.timer);
      ProposeResult res;
      if (entry.term == pending.term) {
        res.status = Status::Ok;
        res.index = idx;
        res.term = entry.term;
      } else {
        res.status = Status::Unavailable;  // overwritten by another leader
        res.leader_hint = leader_hint_;
      }
      pending.cb(res);
    }
  }

  if (!barriers_.empty()) {
    std::vector<PendingBarrier> still_waiting;
    for (auto& barrier : barriers_) {
      if (storage_.applied_index() >= barrier.barrier) {
        ReadIndexResult res;
        res.status = Status::Ok;
        res.barrier_index = barrier.barrier;
        barrier.cb(res);
      } else {
        still_waiting.push_back(std::move(barrier));
      }
    }
    barriers_ = std::move(still_waiting);
  }
}

void RaftNode::read_index(ReadIndexCallback cb) {
  if (role_ != Role::Leader) {
    ReadIndexResult res;
    res.status = leader_hint_.empty() ? Status::Unavailable : Status::Redirect;
    res.leader_hint = leader_hint_;
    cb(res);
    return;
  }

  // The barrier must cover everything acknowledged so far, including
  // entries committed by predecessors; those sit below the no-op this
  // leader appended at election.
  uint64_t term_start = 0;
  for (const auto& e : log()) {
    if (e.term == term_) {
      term_start = e.index;
      break;
    }
  }
  uint64_t barrier = std::max(commit_index_, term_start);

  auto round = std::make_shared<Round>();
  round->term = term_;
  round->needed = quorum_size();
  round->barrier = barrier;
  round->cb = std::move(cb);

  auto finish_ok = [this, round] {
    if (storage_.applied_index() >= round->barrier) {
      ReadIndexResult res;
      res.status = Status::Ok;
      res.barrier_index = round->barrier;
      round->cb(res);
    } else {
      barriers_.push_back(PendingBarrier{round->barrier, std::move(round->cb)});
    }
  };

  if (round->acks >= round->needed) {  // single-voter group
    round->done = true;
    finish_ok();
    return;
  }

  round->timer = transport_.schedule(
      config_.self, config_.election_timeout_min, [round] {
        if (round->done) return;
        round->done = true;
        ReadIndexResult res;
        res.status = Status::Unavailable;  // quorum not confirmed in time
        round->cb(res);
      });

  // Confirm leadership with a fresh quorum round: any same-term
  // AppendEntries response counts, successful or not.
  for (const auto& peer : config_.voters) {
    if (peer == config_.self) continue;
    uint64_t next = next_index_.count(peer) ? next_index_[peer] : last_log_index() + 1;
    uint64_t prev_index = next - 1;
    Json payload;
    payload["group"] = config_.group;
    payload["term"] = term_;
    payload["leader"] = config_.self;
    payload["prev_log_index"] = prev_index;
    payload["prev_log_term"] = term_at(prev_index);
    payload["entries"] = Json::array();
    payload["leader_commit"] = commit_index_;
    Envelope env;
    env.kind = MessageKind::AppendEntries;
    env.payload = std::move(payload);
    transport_.request(
        config_.self, peer, env, config_.heartbeat_interval * 2,
        [this, round, finish_ok](RpcResult res) {
          if (!running_ || !res.ok) return;
          uint64_t resp_term = res.response.payload["term"].get<uint64_t>();
          if (resp_term > term_) {
            step_down(resp_term, "");
            return;
          }
          if (round->done || role_ != Role::Leader || resp_term != round->term ||
              term_ != round->term) {
            return;
          }
          round->acks++;
          if (round->acks >= round->needed) {
            round->done = true;
            if (round->timer) transport_.cancel_timer(round->timer);
            finish_ok();
          }
        });
  }
}

void RaftNode::linearizable_read(Scope scope, std::string key, ReadCallback cb) {
  read_index([this, scope, key = std::move(key), cb = std::move(cb)](
                 const ReadIndexResult& res) {
    if (res.status != Status::Ok) {
      cb(res.status, std::nullopt);
      return;
    }
    cb(Status::Ok, storage_.read(scope, key));
  });
}

std::optional<std::string> RaftNode::serializable_read(
    Scope scope, const std::string& key) const {
  return storage_.read(scope, key);
}

void RaftNode::add_learner(const std::string& endpoint) {
  if (learners_.count(endpoint)) return;  // idempotent
  learners_.insert(endpoint);
  if (role_ == Role::Leader) {
    next_index_[endpoint] = last_log_index() + 1;
    match_index_[endpoint] = 0;
    send_append_entries(endpoint);
  }
}

void RaftNode::handle_request_vote(const Envelope& env) {
  if (!running_) return;
  const Json& p = env.payload;
  uint64_t candidate_term = p["term"].get<uint64_t>();
  const std::string candidate = p["candidate"].get<std::string>();

  if (candidate_term > term_) step_down(candidate_term, "");

  bool granted = false;
  if (candidate_term >= term_ && !config_.learner) {
    uint64_t my_last_term = term_at(last_log_index());
    uint64_t cand_last_term = p["last_log_term"].get<uint64_t>();
    uint64_t cand_last_index = p["last_log_index"].get<uint64_t>();
    bool up_to_date =
        cand_last_term > my_last_term ||
        (cand_last_term == my_last_term && cand_last_index >= last_log_index());
    if ((voted_for_.empty() || voted_for_ == candidate) && up_to_date &&
        role_ != Role::Leader) {
      voted_for_ = candidate;
      storage_.save_raft_meta(term_, voted_for_);
      granted = true;
      arm_election_timer();
    }
  }

  Json resp;
  resp["term"] = term_;
  resp["granted"] = granted;
  transport_.respond(config_.self, env, MessageKind::RequestVoteResp, resp);
}

void RaftNode::handle_append_entries(const Envelope& env) {
  if (!running_) return;
  const Json& p = env.payload;
  uint64_t leader_term = p["term"].get<uint64_t>();
  const std::string leader = p["leader"].get<std::string>();

  Json resp;
  if (leader_term < term_) {
    resp["term"] = term_;
    resp["success"] = false;
    resp["match_index"] = 0;
    transport_.respond(config_.self, env, MessageKind::AppendEntriesResp, resp);
    return;
  }

  if (leader_term > term_ || role_ == Role::Candidate) {
    step_down(leader_term, leader);
  }
  leader_hint_ = leader;
  if (!config_.learner) arm_election_timer();

  uint64_t prev_index = p["prev_log_index"].get<uint64_t>();
  uint64_t prev_term = p["prev_log_term"].get<uint64_t>();

  bool ok = prev_index <= last_log_index() &&
            (prev_index == 0 || term_at(prev_index) == prev_term);
  uint64_t match = 0;
  if (ok) {
    uint64_t index = prev_index;
    for (const auto& ej : p["entries"]) {
      auto entry = log_entry_from_json(ej);
      if (!entry) {
        ok = false;
        break;
      }
      index = entry->index;
      if (index <= last_log_index()) {
        if (term_at(index) != entry->term) {
          // Conflicting suffix: the leader's entries win.
          storage_.truncate_raft_from(index);
          storage_.append_raft_entry(*entry);
        }
      } else {
        storage_.append_raft_entry(*entry);
      }
    }
    if (ok) {
      match = index;
      uint64_t leader_commit = p["leader_commit"].get<uint64_t>();
      if (leader_commit > commit_index_) {
        commit_index_ = std::min(leader_commit, match);
        apply_committed();
      }
    }
  }

  resp["term"] = term_;
  resp["success"] = ok;
  resp["match_index"] = match;
  transport_.respond(config_.self, env, MessageKind::AppendEntriesResp, resp);
}

}  // namespace edgekv
