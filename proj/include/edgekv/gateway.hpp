#pragma once

#include <list>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "edgekv/overlay.hpp"
#include "edgekv/rng.hpp"
#include "edgekv/transport.hpp"

namespace edgekv {

struct GatewayNodeConfig {
  std::string name;      // physical gateway name; vnodes are "<name>#<k>"
  std::string endpoint;
  std::string group_id;
  std::vector<std::string> group_peers;  // edge members of the assigned group
  std::string group_leader_hint;
  std::optional<NodeRef> bootstrap;  // absent: this gateway starts the ring
  size_t vnode_count = 1;
  size_t cache_capacity = 1024;  // 0 disables the location cache
  OverlayConfig overlay;

  // Forwarding deadline toward remote owners; kept well under the client
  // budget so failure detection can act within one client operation.
  Ticks op_timeout = 2000 * kTicksPerMs;
  Ticks group_timeout = 2000 * kTicksPerMs;

  // Remote-group failure detection: consecutive failures within the
  // window mark a group down; a periodic ping probes for recovery.
  int down_threshold = 3;
  Ticks down_window = 5000 * kTicksPerMs;
  Ticks probe_interval = 1000 * kTicksPerMs;

  // Static cluster facts from the topology file.
  std::map<std::string, std::string> group_of_gateway;   // phys name -> group
  std::map<std::string, std::string> gateway_of_group;   // group -> endpoint
  std::map<std::string, std::string> backup_of_group;    // group -> backup group
  // Bootstrap vnode ring (id, group) sorted by id; pins key ownership so
  // partitions cannot silently migrate a group's arc. Empty disables the
  // pin (ownership then follows live predecessor intervals).
  std::vector<std::pair<uint64_t, std::string>> static_ring;
};

struct GatewayStats {
  uint64_t lookups = 0;
  uint64_t lookup_hops = 0;
  uint64_t cache_hits = 0;
  uint64_t cache_misses = 0;
  uint64_t backup_reads = 0;
  uint64_t rejected_writes = 0;
};

// Gateway process: overlay member (with virtual nodes), resource finder,
// location cache, bridge between its edge group and remote groups, and
// read-only fallback onto backup groups. Stores routing state only.
class GatewayProcess {
 public:
  GatewayProcess(Transport& transport, RingSpace ring, GatewayNodeConfig config,
                 Rng rng);
  ~GatewayProcess();

  void start();
  void stop();

  bool overlay_ready() const { return joined_vnodes_ == vnodes_.size(); }
  bool overlay_failed() const { return overlay_failed_; }
  const std::vector<std::unique_ptr<ChordVnode>>& vnodes() const { return vnodes_; }
  const GatewayNodeConfig& config() const { return config_; }
  const GatewayStats& stats() const { return stats_; }

  // Resolves the owning vnode of a key hash (cache bypassed).
  void locate_key(const std::string& key, LookupCallback cb);

  // Walks the ring from the first vnode to the first group other than our
  // own; deterministic on a converged overlay.
  void assign_backup_group(std::function<void(Status, std::string)> cb);
  // Re-runs the assignment and logs/notifies when it changed.
  void recompute_backup();
  const std::string& current_backup_group() const { return backup_group_; }

  bool group_marked_down(const std::string& group) const;

  void pause_background();
  void resume_background();

  std::function<void(const std::string& old_backup, const std::string& new_backup)>
      on_backup_reassigned;

 private:
  struct CacheEntry {
    uint64_t key_hash;
    NodeRef owner;
  };
  struct DownState {
    int consecutive_failures = 0;
    Ticks last_failure = 0;
    bool down = false;
    TimerId probe_timer = 0;
  };

  void handle(const Envelope& env);
  ChordVnode* vnode_for(const Envelope& env);
  bool owns_locally(Identifier hash) const;
  std::string static_owner_group(Identifier hash) const;
  std::string phys_of_group(const std::string& group) const;

  void handle_global(const Envelope& env);
  void finder_op(const Envelope& env, const std::string& key);
  void resolve_and_forward(const Envelope& env, const std::string& key,
                           Identifier hash, bool already_retried);
  void forward_to_owner(const Envelope& env, const std::string& key,
                        Identifier hash, const NodeRef& owner, bool fresh,
                        uint32_t hops);
  void handle_owner_direct(const Envelope& env, const std::string& key);
  void handle_backup_read(const Envelope& env, const std::string& key,
                          const std::string& origin_group);
  void serve_backup_path(const Envelope& env, const std::string& owner_group);

  void own_group_write(const Envelope& env, uint32_t hops);
  void own_group_read(const Envelope& env, uint32_t hops);
  void group_propose(Command cmd, int redirects_left,
                     std::function<void(Status)> cb);
  void group_read(const std::string& group, Scope scope, const std::string& key,
                  ReadMode mode, int redirects_left,
                  std::function<void(Status, std::optional<std::string>)> cb);

  void respond_global(const Envelope& env, Status status,
                      const std::optional<std::string>& value, uint32_t hops);

  void backup_walk(Identifier from, int steps_left,
                   std::function<void(Status, std::string)> cb);

  void note_failure(const std::string& phys);
  void note_success(const std::string& phys);
  void start_probe(const std::string& phys);

  std::optional<NodeRef> cache_get(uint64_t hash);
  void cache_put(uint64_t hash, const NodeRef& owner);
  void cache_invalidate(uint64_t hash);

  void join_next_vnode(size_t index, int attempts_left);

  Transport& transport_;
  RingSpace ring_;
  GatewayNodeConfig config_;
  Rng rng_;

  std::vector<std::unique_ptr<ChordVnode>> vnodes_;
  size_t joined_vnodes_ = 0;
  bool overlay_failed_ = false;
  bool running_ = false;

  std::string leader_hint_;
  std::string backup_group_;
  size_t read_rr_ = 0;  // round-robin cursor for serializable group reads

  // LRU location cache
  std::list<CacheEntry> cache_lru_;  // front = most recent
  std::unordered_map<uint64_t, std::list<CacheEntry>::iterator> cache_index_;

  std::map<std::string, DownState> down_;  // keyed by physical gateway name
  GatewayStats stats_;
};

}  // namespace edgekv
