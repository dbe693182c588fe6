#include "edgekv/storage.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cstdio>
#include <cstring>
#include <filesystem>

#include "edgekv/crc32.hpp"
#include "edgekv/log.hpp"
#include "edgekv/sha256.hpp"
#include "edgekv/wire.hpp"

namespace fs = std::filesystem;

namespace edgekv {

namespace {

std::string read_file(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) return {};
  std::string out;
  char buf[1 << 16];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) out.append(buf, n);
  std::fclose(f);
  return out;
}

void put_u32_be(std::string& out, uint32_t v) {
  out.push_back(char(v >> 24));
  out.push_back(char(v >> 16));
  out.push_back(char(v >> 8));
  out.push_back(char(v));
}

uint32_t get_u32_be(const char* p) {
  return (uint32_t(uint8_t(p[0])) << 24) | (uint32_t(uint8_t(p[1])) << 16) |
         (uint32_t(uint8_t(p[2])) << 8) | uint32_t(uint8_t(p[3]));
}

// Splits a WAL image into payloads; returns the offset of the first
// invalid byte (file should be truncated there if shorter than size).
size_t scan_wal(const std::string& image, std::vector<std::string>& payloads) {
  size_t off = 0;
  while (off + 8 <= image.size()) {
    uint32_t len = get_u32_be(image.data() + off);
    if (off + 4 + len + 4 > image.size()) break;
    std::string payload = image.substr(off + 4, len);
    uint32_t stored_crc = get_u32_be(image.data() + off + 4 + len);
    if (crc32(payload) != stored_crc) break;
    payloads.push_back(std::move(payload));
    off += 4 + len + 4;
  }
  return off;
}

std::optional<std::pair<std::string, uint64_t>> parse_request_id(const std::string& rid) {
  size_t colon = rid.rfind(':');
  if (colon == std::string::npos || colon + 1 >= rid.size()) return std::nullopt;
  uint64_t seq = 0;
  for (size_t i = colon + 1; i < rid.size(); i++) {
    if (rid[i] < '0' || rid[i] > '9') return std::nullopt;
    seq = seq * 10 + uint64_t(rid[i] - '0');
  }
  return std::make_pair(rid.substr(0, colon), seq);
}

}  // namespace

StorageEngine::StorageEngine(std::string data_dir, StorageOptions options)
    : data_dir_(std::move(data_dir)), options_(options) {
  fs::create_directories(data_dir_);
  recover();

  state_wal_fd_ = ::open((data_dir_ + "/state.wal").c_str(),
                         O_WRONLY | O_CREAT | O_APPEND, 0644);
  raft_wal_fd_ = ::open((data_dir_ + "/raft.wal").c_str(),
                        O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (state_wal_fd_ < 0 || raft_wal_fd_ < 0) {
    throw FatalStorageError("cannot open WAL files in " + data_dir_);
  }
}

StorageEngine::~StorageEngine() {
  if (state_wal_fd_ >= 0) ::close(state_wal_fd_);
  if (raft_wal_fd_ >= 0) ::close(raft_wal_fd_);
}

void StorageEngine::recover() {
  std::string snap_path = data_dir_ + "/state.snap";
  if (fs::exists(snap_path)) {
    load_snapshot(snap_path);
  }

  // Applied-state WAL
  {
    std::string image = read_file(data_dir_ + "/state.wal");
    std::vector<std::string> payloads;
    size_t valid = scan_wal(image, payloads);
    if (valid != image.size()) {
      log_warn("storage", "truncating torn state.wal tail at offset " +
                              std::to_string(valid) + " in " + data_dir_);
      fs::resize_file(data_dir_ + "/state.wal", valid);
      recovery_.wal_tail_truncated = true;
    }
    for (const auto& payload : payloads) {
      Json j = Json::parse(payload, nullptr, false);
      auto entry = j.is_discarded() ? std::nullopt : log_entry_from_json(j);
      if (!entry) throw FatalStorageError("corrupt state.wal record");
      if (entry->index <= applied_index_) continue;  // covered by snapshot
      if (entry->index != applied_index_ + 1) {
        throw FatalStorageError("state.wal gap at index " + std::to_string(entry->index));
      }
      apply_to_maps(*entry);
      applied_index_ = entry->index;
      recovery_.wal_records_replayed++;
    }
  }

  // Raft WAL
  {
    std::string image = read_file(data_dir_ + "/raft.wal");
    std::vector<std::string> payloads;
    size_t valid = scan_wal(image, payloads);
    if (valid != image.size()) {
      log_warn("storage", "truncating torn raft.wal tail in " + data_dir_);
      fs::resize_file(data_dir_ + "/raft.wal", valid);
      recovery_.wal_tail_truncated = true;
    }
    for (const auto& payload : payloads) {
      Json j = Json::parse(payload, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("type")) {
        throw FatalStorageError("corrupt raft.wal record");
      }
      std::string type = j["type"].get<std::string>();
      if (type == "meta") {
        raft_.term = j["term"].get<uint64_t>();
        raft_.voted_for = j["vote"].get<std::string>();
      } else if (type == "append") {
        auto entry = log_entry_from_json(j["entry"]);
        if (!entry) throw FatalStorageError("corrupt raft.wal append record");
        raft_.log.push_back(*entry);
      } else if (type == "truncate") {
        uint64_t from = j["from"].get<uint64_t>();
        while (!raft_.log.empty() && raft_.log.back().index >= from) {
          raft_.log.pop_back();
        }
      } else {
        throw FatalStorageError("unknown raft.wal record type " + type);
      }
      recovery_.raft_records_replayed++;
    }
  }
}

void StorageEngine::load_snapshot(const std::string& path) {
  std::string image = read_file(path);
  Json j = Json::parse(image, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw FatalStorageError("corrupt snapshot " + path);
  }
  try {
    applied_index_ = j.at("applied_index").get<uint64_t>();
    for (auto it = j.at("local").begin(); it != j.at("local").end(); ++it) {
      local_[*b64_decode(it.key())] = *b64_decode(it.value().get<std::string>());
    }
    for (auto it = j.at("global").begin(); it != j.at("global").end(); ++it) {
      global_[*b64_decode(it.key())] = *b64_decode(it.value().get<std::string>());
    }
    for (auto it = j.at("dedup").begin(); it != j.at("dedup").end(); ++it) {
      auto& [set, order] = dedup_[it.key()];
      for (const auto& v : it.value()) {
        uint64_t seq = v.get<uint64_t>();
        set.insert(seq);
        order.push_back(seq);
      }
    }
  } catch (const std::exception& e) {
    throw FatalStorageError(std::string("corrupt snapshot: ") + e.what());
  }
}

void StorageEngine::append_wal(int fd, const std::string& payload) {
  std::string record;
  record.reserve(payload.size() + 8);
  put_u32_be(record, uint32_t(payload.size()));
  record += payload;
  put_u32_be(record, crc32(payload));
  ssize_t n = ::write(fd, record.data(), record.size());
  if (n != ssize_t(record.size())) {
    throw FatalStorageError("WAL write failed in " + data_dir_);
  }
  if (options_.fsync_on_commit) ::fdatasync(fd);
}

bool StorageEngine::is_duplicate(const std::string& request_id) const {
  auto parsed = parse_request_id(request_id);
  if (!parsed) return false;
  auto it = dedup_.find(parsed->first);
  return it != dedup_.end() && it->second.first.count(parsed->second) > 0;
}

void StorageEngine::remember_request(const std::string& request_id) {
  auto parsed = parse_request_id(request_id);
  if (!parsed) return;
  auto& [set, order] = dedup_[parsed->first];
  if (set.insert(parsed->second).second) {
    order.push_back(parsed->second);
    while (order.size() > options_.dedup_window) {
      set.erase(order.front());
      order.pop_front();
    }
  }
}

void StorageEngine::apply_to_maps(const LogEntry& entry) {
  const Command& cmd = entry.command;
  if (cmd.key.empty()) return;  // consensus-internal no-op entry
  if (!cmd.request_id.empty() && is_duplicate(cmd.request_id)) {
    return;  // retried command, already applied
  }
  auto& target = cmd.scope == Scope::Local ? local_ : global_;
  if (cmd.kind == CmdKind::Put) {
    target[cmd.key] = cmd.value;
  } else {
    target.erase(cmd.key);  // delete of absent key is a no-op
  }
  if (!cmd.request_id.empty()) remember_request(cmd.request_id);
}

void StorageEngine::apply(const LogEntry& entry) {
  if (entry.index != applied_index_ + 1) {
    throw FatalStorageError("out-of-order apply: expected " +
                            std::to_string(applied_index_ + 1) + ", got " +
                            std::to_string(entry.index));
  }
  append_wal(state_wal_fd_, log_entry_to_json(entry).dump());
  apply_to_maps(entry);
  applied_index_ = entry.index;
  applies_since_snapshot_++;
  if (applies_since_snapshot_ >= options_.snapshot_threshold) {
    snapshot();
  }
}

std::optional<std::string> StorageEngine::read(Scope scope,
                                               const std::string& key) const {
  const auto& target = scope == Scope::Local ? local_ : global_;
  auto it = target.find(key);
  if (it == target.end()) return std::nullopt;
  return it->second;
}

void StorageEngine::snapshot() {
  Json j;
  j["applied_index"] = applied_index_;
  Json local = Json::object();
  for (const auto& [k, v] : local_) local[b64_encode(k)] = b64_encode(v);
  Json global = Json::object();
  for (const auto& [k, v] : global_) global[b64_encode(k)] = b64_encode(v);
  j["local"] = std::move(local);
  j["global"] = std::move(global);
  Json dedup = Json::object();
  for (const auto& [client, window] : dedup_) {
    Json seqs = Json::array();
    for (uint64_t s : window.second) seqs.push_back(s);
    dedup[client] = std::move(seqs);
  }
  j["dedup"] = std::move(dedup);

  std::string tmp_path = data_dir_ + "/state.snap.tmp";
  std::string body = j.dump();
  int fd = ::open(tmp_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw FatalStorageError("cannot write snapshot tmp file");
  if (::write(fd, body.data(), body.size()) != ssize_t(body.size())) {
    ::close(fd);
    throw FatalStorageError("snapshot write failed");
  }
  ::fsync(fd);
  ::close(fd);
  fs::rename(tmp_path, data_dir_ + "/state.snap");

  // WAL content is now covered by the snapshot.
  if (state_wal_fd_ >= 0) ::close(state_wal_fd_);
  state_wal_fd_ = ::open((data_dir_ + "/state.wal").c_str(),
                         O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (state_wal_fd_ < 0) throw FatalStorageError("cannot reopen state.wal");
  applies_since_snapshot_ = 0;
}

std::string StorageEngine::state_hash() const {
  Sha256 h;
  auto feed = [&h](const std::string& s) {
    uint32_t len = uint32_t(s.size());
    char hdr[4] = {char(len >> 24), char(len >> 16), char(len >> 8), char(len)};
    h.update(hdr, 4);
    h.update(s);
  };
  feed(std::to_string(applied_index_));
  feed("local");
  for (const auto& [k, v] : local_) {
    feed(k);
    feed(v);
  }
  feed("global");
  for (const auto& [k, v] : global_) {
    feed(k);
    feed(v);
  }
  auto digest = h.finish();
  return to_hex(digest.data(), digest.size());
}

uint64_t StorageEngine::global_bytes() const {
  uint64_t total = 0;
  for (const auto& [k, v] : global_) total += k.size() + v.size();
  return total;
}

void StorageEngine::save_raft_meta(uint64_t term, const std::string& voted_for) {
  raft_.term = term;
  raft_.voted_for = voted_for;
  Json j;
  j["type"] = "meta";
  j["term"] = term;
  j["vote"] = voted_for;
  append_wal(raft_wal_fd_, j.dump());
}

void StorageEngine::append_raft_entry(const LogEntry& entry) {
  raft_.log.push_back(entry);
  Json j;
  j["type"] = "append";
  j["entry"] = log_entry_to_json(entry);
  append_wal(raft_wal_fd_, j.dump());
}

void StorageEngine::truncate_raft_from(uint64_t index) {
  if (raft_.log.empty() || raft_.log.back().index < index) return;
  while (!raft_.log.empty() && raft_.log.back().index >= index) {
    raft_.log.pop_back();
  }
  Json j;
  j["type"] = "truncate";
  j["from"] = index;
  append_wal(raft_wal_fd_, j.dump());
}

}  // namespace edgekv
