#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "edgekv/consensus.hpp"
#include "edgekv/storage.hpp"
#include "edgekv/transport.hpp"

namespace edgekv {

constexpr size_t kMaxKeyBytes = 4096;
constexpr size_t kMaxValueBytes = 1024 * 1024;

struct EdgeNodeConfig {
  std::string node_id;                    // also the listen endpoint
  std::string group_id;
  std::vector<std::string> group_peers;   // voter endpoints, includes self
  std::string gateway_address;
  std::string data_dir;
  std::vector<std::string> learner_endpoints;  // backup group members
  std::vector<std::string> backup_of;          // groups we host a learner for

  Ticks local_timeout = 2000 * kTicksPerMs;
  Ticks global_timeout = 5000 * kTicksPerMs;
  Ticks election_timeout_min = 150 * kTicksPerMs;
  Ticks election_timeout_max = 300 * kTicksPerMs;
  Ticks heartbeat_interval = 50 * kTicksPerMs;
  StorageOptions storage;
};

// The edge server process: terminates client RPCs, routes by data type
// (placement protocol), hosts one consensus voter plus learner replicas
// for backed-up groups, and forwards global operations to the gateway.
class EdgeNodeProcess {
 public:
  EdgeNodeProcess(Transport& transport, EdgeNodeConfig config, Rng rng);
  ~EdgeNodeProcess();

  void start();
  void stop();

  RaftNode& raft() { return *raft_; }
  StorageEngine& storage() { return *storage_; }
  StorageEngine* learner_storage(const std::string& group);
  RaftNode* learner_raft(const std::string& group);
  const EdgeNodeConfig& config() const { return config_; }

  // Freezes all background timers (elections, heartbeats) so tests can
  // attribute message counts to individual operations.
  void pause_background();
  void resume_background();

 private:
  struct LearnerInstance {
    std::unique_ptr<StorageEngine> storage;
    std::unique_ptr<RaftNode> raft;
  };

  void handle(const Envelope& env);
  void handle_client(const Envelope& env);
  void handle_group_propose(const Envelope& env);
  void handle_group_read(const Envelope& env);

  void place_write(const Envelope& env, Command cmd);
  void place_read(const Envelope& env, Scope scope, const std::string& key,
                  ReadMode mode);
  void forward_propose_to_leader(const Envelope& env, const Command& cmd,
                                 int redirects_left);
  void forward_read_to_leader(const Envelope& env, Scope scope,
                              const std::string& key, int redirects_left);
  void forward_global(const Envelope& env);

  void respond_client(const Envelope& env, Status status,
                      const std::optional<std::string>& value,
                      Ticks start_tick);
  void respond_group(const Envelope& env, Status status,
                     const std::optional<std::string>& value = std::nullopt);

  Transport& transport_;
  EdgeNodeConfig config_;
  Rng rng_;
  std::unique_ptr<StorageEngine> storage_;
  std::unique_ptr<RaftNode> raft_;
  std::map<std::string, LearnerInstance> learners_;
  bool running_ = false;
};

}  // namespace edgekv
