#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "edgekv/rng.hpp"
#include "edgekv/storage.hpp"
#include "edgekv/transport.hpp"
#include "edgekv/types.hpp"

namespace edgekv {

enum class Role { Follower, Candidate, Leader, Learner };

const char* to_string(Role r);

struct RaftConfig {
  std::string group;
  std::string self;                   // own endpoint
  std::vector<std::string> voters;    // includes self unless learner
  std::vector<std::string> learners;  // replication targets without a vote
  bool learner = false;

  Ticks election_timeout_min = 150 * kTicksPerMs;
  Ticks election_timeout_max = 300 * kTicksPerMs;
  Ticks heartbeat_interval = 50 * kTicksPerMs;
  Ticks propose_timeout = 1500 * kTicksPerMs;
};

struct ProposeResult {
  Status status = Status::Unavailable;
  uint64_t index = 0;
  uint64_t term = 0;
  std::string leader_hint;
};
using ProposeCallback = std::function<void(const ProposeResult&)>;

struct ReadIndexResult {
  Status status = Status::Unavailable;
  uint64_t barrier_index = 0;
  std::string leader_hint;
};
using ReadIndexCallback = std::function<void(const ReadIndexResult&)>;

using ReadCallback =
    std::function<void(Status, const std::optional<std::string>&)>;

// One member of a replicated edge group. The node is an event-driven state
// machine: the owning process dispatches RequestVote/AppendEntries
// envelopes to it and it drives everything else through transport timers.
// All persistent state (term, vote, log) goes through the storage engine
// before any message that depends on it is sent.
class RaftNode {
 public:
  RaftNode(Transport& transport, StorageEngine& storage, RaftConfig config,
           Rng rng);
  ~RaftNode();

  void start();
  void stop();

  // Leader-only; non-leaders complete with a redirect carrying the hint.
  void propose(Command command, ProposeCallback cb);

  // Read barrier: confirms leadership with a quorum round, then yields the
  // commit index. Linearizable reads are served only once the applied
  // index passes the barrier.
  void read_index(ReadIndexCallback cb);
  void linearizable_read(Scope scope, std::string key, ReadCallback cb);

  // Local read without a quorum; may be stale, never uncommitted.
  std::optional<std::string> serializable_read(Scope scope,
                                               const std::string& key) const;

  void add_learner(const std::string& endpoint);

  void handle_request_vote(const Envelope& env);
  void handle_append_entries(const Envelope& env);

  Role role() const { return role_; }
  uint64_t term() const { return term_; }
  uint64_t commit_index() const { return commit_index_; }
  uint64_t last_applied() const { return storage_.applied_index(); }
  std::optional<std::string> leader_hint() const;
  const std::string& self() const { return config_.self; }
  const std::string& group() const { return config_.group; }
  size_t quorum_size() const { return config_.voters.size() / 2 + 1; }
  const std::set<std::string>& learners() const { return learners_; }

  // Test instrumentation: freezes election/heartbeat timers so message
  // counts can be attributed to individual operations.
  void pause_timers();
  void resume_timers();

  std::function<void(uint64_t term, const std::string& leader)> on_became_leader;

 private:
  struct PendingProposal {
    uint64_t term;
    ProposeCallback cb;
    TimerId timer;
  };
  struct PendingBarrier {
    uint64_t barrier;
    ReadIndexCallback cb;
  };

  void arm_election_timer();
  void arm_heartbeat_timer();
  void start_election();
  void become_leader();
  void step_down(uint64_t term, const std::string& leader);
  void broadcast_append_entries();
  void send_append_entries(const std::string& peer);
  void maybe_advance_commit();
  void apply_committed();
  void fail_leader_state(Status status);

  uint64_t last_log_index() const;
  uint64_t term_at(uint64_t index) const;
  const std::vector<LogEntry>& log() const { return storage_.raft_state().log; }

  Transport& transport_;
  StorageEngine& storage_;
  RaftConfig config_;
  Rng rng_;

  Role role_;
  uint64_t term_ = 0;
  std::string voted_for_;
  uint64_t commit_index_ = 0;
  std::string leader_hint_;
  std::set<std::string> learners_;

  static constexpr uint64_t kMaxEntriesPerAppend = 128;

  size_t votes_ = 0;
  std::map<std::string, uint64_t> next_index_;
  std::map<std::string, uint64_t> match_index_;
  std::set<std::string> inflight_;    // peers with an AppendEntries pending
  std::set<std::string> send_again_;  // new data arrived while in flight

  std::map<uint64_t, PendingProposal> proposals_;
  std::vector<PendingBarrier> barriers_;

  TimerId election_timer_ = 0;
  TimerId heartbeat_timer_ = 0;
  bool timers_paused_ = false;
  bool running_ = false;
};

}  // namespace edgekv
