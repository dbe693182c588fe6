#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "edgekv/types.hpp"

namespace edgekv {

// Raised when the apply stream violates the dense-index contract or a
// snapshot is unreadable; callers are expected to crash-stop.
struct FatalStorageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RecoveryStats {
  uint64_t wal_records_replayed = 0;
  uint64_t raft_records_replayed = 0;
  bool wal_tail_truncated = false;
};

struct RaftPersistentState {
  uint64_t term = 0;
  std::string voted_for;
  std::vector<LogEntry> log;
};

struct StorageOptions {
  bool fsync_on_commit = false;
  uint64_t snapshot_threshold = 1000;  // applied entries between snapshots
  size_t dedup_window = 4096;          // retained request ids per client
};

// Durable per-node store: two independent key namespaces (local/global)
// plus consensus-state persistence. Files under dataDir:
//   state.snap  atomic full-state snapshot
//   state.wal   applied entries since the snapshot
//   raft.wal    term/vote/log records
// WAL record framing: 4-byte BE payload length, payload, 4-byte BE CRC32.
class StorageEngine {
 public:
  StorageEngine(std::string data_dir, StorageOptions options = {});
  ~StorageEngine();

  StorageEngine(const StorageEngine&) = delete;
  StorageEngine& operator=(const StorageEngine&) = delete;

  // --- applied state ---
  // Requires entry.index == applied_index()+1. Duplicate request ids are
  // recorded but not re-applied.
  void apply(const LogEntry& entry);
  std::optional<std::string> read(Scope scope, const std::string& key) const;
  uint64_t applied_index() const { return applied_index_; }

  void snapshot();

  // Digest of (applied_index, local map, global map); equal states hash
  // equally on every node.
  std::string state_hash() const;

  uint64_t local_count() const { return local_.size(); }
  uint64_t global_count() const { return global_.size(); }
  uint64_t global_bytes() const;

  // --- consensus persistent state ---
  const RaftPersistentState& raft_state() const { return raft_; }
  void save_raft_meta(uint64_t term, const std::string& voted_for);
  void append_raft_entry(const LogEntry& entry);
  void truncate_raft_from(uint64_t index);  // drops entries with index >= index

  const RecoveryStats& recovery_stats() const { return recovery_; }
  const std::string& data_dir() const { return data_dir_; }

 private:
  void recover();
  void load_snapshot(const std::string& path);
  void apply_to_maps(const LogEntry& entry);
  bool is_duplicate(const std::string& request_id) const;
  void remember_request(const std::string& request_id);
  void append_wal(int fd, const std::string& payload);

  std::string data_dir_;
  StorageOptions options_;

  std::map<std::string, std::string> local_;
  std::map<std::string, std::string> global_;
  uint64_t applied_index_ = 0;
  uint64_t applies_since_snapshot_ = 0;

  // request-id dedup, bounded per client
  std::map<std::string, std::pair<std::set<uint64_t>, std::deque<uint64_t>>> dedup_;

  RaftPersistentState raft_;
  RecoveryStats recovery_;

  int state_wal_fd_ = -1;
  int raft_wal_fd_ = -1;
};

}  // namespace edgekv
