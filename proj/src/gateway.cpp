#include "edgekv/gateway.hpp"

#include "edgekv/log.hpp"
#include "edgekv/wire.hpp"

namespace edgekv {

GatewayProcess::GatewayProcess(Transport& transport, RingSpace ring,
                               GatewayNodeConfig config, Rng rng)
    : transport_(transport),
      ring_(ring),
      config_(std::move(config)),
      rng_(rng) {
  if (config_.vnode_count == 0) {
    throw std::invalid_argument("vnode count must be positive");
  }
  leader_hint_ = config_.group_leader_hint;
  for (size_t k = 0; k < config_.vnode_count; k++) {
    std::string vname = config_.name + "#" + std::to_string(k);
    NodeRef self;
    self.id = ring_.hash_id(vname);
    self.address = config_.endpoint;
    self.physical = config_.name;
    vnodes_.push_back(
        std::make_unique<ChordVnode>(transport_, ring_, self, config_.overlay));
  }
}

GatewayProcess::~GatewayProcess() { stop(); }

void GatewayProcess::start() {
  running_ = true;
  transport_.register_node(config_.endpoint, NodeRole::Gateway, config_.group_id,
                           [this](const Envelope& env) { handle(env); });
  if (!config_.bootstrap) {
    vnodes_[0]->create();
    joined_vnodes_ = 1;
    if (vnodes_.size() > 1) {
      join_next_vnode(1, 3);
    }
  } else {
    join_next_vnode(0, 3);
  }
}

void GatewayProcess::stop() {
  if (!running_) return;
  running_ = false;
  for (auto& vnode : vnodes_) vnode->stop();
  for (auto& [phys, state] : down_) {
    if (state.probe_timer) transport_.cancel_timer(state.probe_timer);
  }
  transport_.unregister_node(config_.endpoint);
}

void GatewayProcess::join_next_vnode(size_t index, int attempts_left) {
  if (!running_ || index >= vnodes_.size()) return;
  // Vnode 0 joins through the configured bootstrap, the rest through our
  // own first vnode.
  NodeRef bootstrap;
  if (index == 0) {
    bootstrap = *config_.bootstrap;
  } else {
    bootstrap = vnodes_[0]->self();
  }
  vnodes_[index]->join(bootstrap, [this, index, attempts_left](Status status) {
    if (!running_) return;
    if (status == Status::Ok) {
      joined_vnodes_++;
      if (index + 1 < vnodes_.size()) join_next_vnode(index + 1, 3);
      return;
    }
    if (status == Status::Invalid) {
      overlay_failed_ = true;  // id collision is a fatal config error
      log_error("gateway", config_.name + ": vnode id collision on join");
      return;
    }
    if (attempts_left > 1) {
      transport_.schedule(config_.endpoint, config_.overlay.stabilize_interval,
                          [this, index, attempts_left] {
                            join_next_vnode(index, attempts_left - 1);
                          });
    } else {
      overlay_failed_ = true;
      log_error("gateway", config_.name + ": join failed for vnode " +
                               std::to_string(index));
    }
  });
}

void GatewayProcess::pause_background() {
  for (auto& vnode : vnodes_) vnode->pause_maintenance();
}

void GatewayProcess::resume_background() {
  for (auto& vnode : vnodes_) vnode->resume_maintenance();
}

ChordVnode* GatewayProcess::vnode_for(const Envelope& env) {
  if (env.payload.contains("vnode")) {
    auto id = ring_.parse_hex(env.payload["vnode"].get<std::string>());
    if (id) {
      for (auto& vnode : vnodes_) {
        if (vnode->self().id == *id) return vnode.get();
      }
    }
  }
  return vnodes_.empty() ? nullptr : vnodes_[0].get();
}

std::string GatewayProcess::static_owner_group(Identifier hash) const {
  if (config_.static_ring.empty()) return "";
  for (const auto& [id, group] : config_.static_ring) {
    if (id >= hash.value) return group;
  }
  return config_.static_ring.front().second;  // wraparound
}

bool GatewayProcess::owns_locally(Identifier hash) const {
  if (!config_.static_ring.empty()) {
    return static_owner_group(hash) == config_.group_id;
  }
  // Without a pinned ring, ownership follows the live predecessor arcs.
  for (const auto& vnode : vnodes_) {
    if (!vnode->joined()) continue;
    if (!vnode->predecessor()) continue;
    if (vnode->predecessor()->id == vnode->self().id) return true;  // sole ring
    if (ring_.in_interval(hash, RingInterval::open_closed(
                                    vnode->predecessor()->id, vnode->self().id))) {
      return true;
    }
  }
  return false;
}

std::string GatewayProcess::phys_of_group(const std::string& group) const {
  for (const auto& [phys, g] : config_.group_of_gateway) {
    if (g == group) return phys;
  }
  return "";
}

void GatewayProcess::handle(const Envelope& env) {
  if (!running_) return;
  switch (env.kind) {
    case MessageKind::Ping:
      transport_.respond(config_.endpoint, env, MessageKind::Pong, Json::object());
      return;
    case MessageKind::FindSuccessor:
      if (auto* vnode = vnode_for(env)) vnode->handle_find_successor(env);
      return;
    case MessageKind::GetPredecessor:
      if (auto* vnode = vnode_for(env)) vnode->handle_get_predecessor(env);
      return;
    case MessageKind::Notify:
      if (auto* vnode = vnode_for(env)) vnode->handle_notify(env);
      return;
    case MessageKind::GlobalPut:
    case MessageKind::GlobalGet:
    case MessageKind::GlobalDelete:
      handle_global(env);
      return;
    default:
      return;
  }
}

void GatewayProcess::respond_global(const Envelope& env, Status status,
                                    const std::optional<std::string>& value,
                                    uint32_t hops) {
  Json p;
  p["status"] = to_string(status);
  if (value) p["value"] = b64_encode(*value);
  p["hops"] = hops;
  transport_.respond(config_.endpoint, env, MessageKind::GlobalResponse, p);
}

void GatewayProcess::handle_global(const Envelope& env) {
  auto key = b64_decode(env.payload["key"].get<std::string>());
  if (!key || key->empty()) {
    respond_global(env, Status::Invalid, std::nullopt, 0);
    return;
  }
  if (env.kind == MessageKind::GlobalGet && env.payload.contains("backup_of")) {
    handle_backup_read(env, *key, env.payload["backup_of"].get<std::string>());
    return;
  }
  bool owner_direct = env.payload.contains("owner_direct") &&
                      env.payload["owner_direct"].get<bool>();
  if (owner_direct) {
    handle_owner_direct(env, *key);
    return;
  }
  finder_op(env, *key);
}

// Resource finder: hash the key, resolve the owning gateway (own-group
// check, then cache, then overlay lookup) and run or forward the
// operation.
void GatewayProcess::finder_op(const Envelope& env, const std::string& key) {
  Identifier hash = ring_.hash_id(key);

  if (owns_locally(hash)) {
    // Key belongs to this edge group; no overlay traversal needed.
    if (env.kind == MessageKind::GlobalGet) {
      own_group_read(env, 0);
    } else {
      own_group_write(env, 0);
    }
    return;
  }
  resolve_and_forward(env, key, hash, false);
}

void GatewayProcess::resolve_and_forward(const Envelope& env,
                                         const std::string& key, Identifier hash,
                                         bool already_retried) {
  // Pinned ownership short-circuit: a group marked down keeps its arc, so
  // reads fall back to its backup and writes are rejected outright.
  std::string owner_group = static_owner_group(hash);
  if (!owner_group.empty() && group_marked_down(owner_group)) {
    if (env.kind == MessageKind::GlobalGet) {
      serve_backup_path(env, owner_group);
    } else {
      stats_.rejected_writes++;
      respond_global(env, Status::GroupUnavailable, std::nullopt, 0);
    }
    return;
  }

  if (auto cached = cache_get(hash.value)) {
    stats_.cache_hits++;
    forward_to_owner(env, key, hash, *cached, already_retried, 0);
    return;
  }
  stats_.cache_misses++;
  vnodes_[0]->locate(hash, [this, env, key, hash, owner_group,
                            already_retried](const LookupResult& res) {
    if (!running_) return;
    if (res.status != Status::Ok) {
      respond_global(env, Status::LookupFailed, std::nullopt, res.hops);
      return;
    }
    stats_.lookups++;
    stats_.lookup_hops += res.hops;

    NodeRef owner = res.node;
    if (!owner_group.empty()) {
      auto it = config_.group_of_gateway.find(owner.physical);
      std::string located_group =
          it == config_.group_of_gateway.end() ? "" : it->second;
      if (located_group != owner_group) {
        // The live ring has routed around the pinned owner (churn or
        // partition); deliver to the pinned owner's gateway regardless.
        owner.physical = phys_of_group(owner_group);
        owner.address = config_.gateway_of_group.at(owner_group);
      }
    }
    if (owner.physical == config_.name) {
      if (env.kind == MessageKind::GlobalGet) {
        own_group_read(env, res.hops);
      } else {
        own_group_write(env, res.hops);
      }
      return;
    }
    cache_put(hash.value, owner);
    forward_to_owner(env, key, hash, owner, already_retried, res.hops);
  });
}

void GatewayProcess::forward_to_owner(const Envelope& env, const std::string& key,
                                      Identifier hash, const NodeRef& owner,
                                      bool already_retried, uint32_t hops) {
  bool is_read = env.kind == MessageKind::GlobalGet;
  if (down_.count(owner.physical) && down_.at(owner.physical).down) {
    if (is_read) {
      auto group_it = config_.group_of_gateway.find(owner.physical);
      if (group_it != config_.group_of_gateway.end()) {
        serve_backup_path(env, group_it->second);
        return;
      }
    }
    stats_.rejected_writes += is_read ? 0 : 1;
    respond_global(env, Status::GroupUnavailable, std::nullopt, hops);
    return;
  }

  Envelope fwd;
  fwd.kind = env.kind;
  fwd.payload = env.payload;
  fwd.payload["owner_direct"] = true;
  transport_.request(
      config_.endpoint, owner.address, fwd, config_.op_timeout,
      [this, env, key, hash, owner, already_retried, hops](RpcResult res) {
        if (!running_) return;
        if (!res.ok) {
          note_failure(owner.physical);
          cache_invalidate(hash.value);
          if (!already_retried) {
            resolve_and_forward(env, key, hash, true);
          } else if (env.kind == MessageKind::GlobalGet &&
                     down_.count(owner.physical) && down_.at(owner.physical).down) {
            auto group_it = config_.group_of_gateway.find(owner.physical);
            if (group_it != config_.group_of_gateway.end()) {
              serve_backup_path(env, group_it->second);
              return;
            }
          } else {
            respond_global(env, Status::GroupUnavailable, std::nullopt, hops);
          }
          return;
        }
        note_success(owner.physical);
        const Json& p = res.response.payload;
        auto status = status_from_string(p["status"].get<std::string>());
        if (status == Status::WrongOwner) {
          // Stale cache entry after a topology change: drop it, locate
          // afresh and retry once.
          cache_invalidate(hash.value);
          if (!already_retried) {
            resolve_and_forward(env, key, hash, true);
          } else {
            respond_global(env, Status::Unavailable, std::nullopt, hops);
          }
          return;
        }
        std::optional<std::string> value;
        if (p.contains("value")) value = b64_decode(p["value"].get<std::string>());
        respond_global(env, status.value_or(Status::Unavailable), value, hops);
      });
}

void GatewayProcess::handle_owner_direct(const Envelope& env,
                                         const std::string& key) {
  Identifier hash = ring_.hash_id(key);
  if (!owns_locally(hash)) {
    respond_global(env, Status::WrongOwner, std::nullopt, 0);
    return;
  }
  if (env.kind == MessageKind::GlobalGet) {
    own_group_read(env, 0);
  } else {
    own_group_write(env, 0);
  }
}

void GatewayProcess::handle_backup_read(const Envelope& env,
                                        const std::string& key,
                                        const std::string& origin_group) {
  // Reads for a group we back up come with serializable semantics from
  // the learner replica hosted in our edge group.
  stats_.backup_reads++;
  Envelope fwd;
  fwd.kind = MessageKind::GroupRead;
  fwd.payload["group"] = origin_group;
  fwd.payload["scope"] = "global";
  fwd.payload["key"] = b64_encode(key);
  fwd.payload["mode"] = "ser";
  const std::string member =
      config_.group_peers[read_rr_++ % config_.group_peers.size()];
  transport_.request(config_.endpoint, member, fwd, config_.group_timeout,
                     [this, env](RpcResult res) {
                       if (!running_) return;
                       if (!res.ok) {
                         respond_global(env, Status::GroupUnavailable,
                                        std::nullopt, 0);
                         return;
                       }
                       const Json& p = res.response.payload;
                       auto status = status_from_string(
                           p["status"].get<std::string>());
                       std::optional<std::string> value;
                       if (p.contains("value")) {
                         value = b64_decode(p["value"].get<std::string>());
                       }
                       respond_global(env, status.value_or(Status::Unavailable),
                                      value, 0);
                     });
}

void GatewayProcess::serve_backup_path(const Envelope& env,
                                       const std::string& owner_group) {
  auto backup_it = config_.backup_of_group.find(owner_group);
  if (backup_it == config_.backup_of_group.end()) {
    respond_global(env, Status::GroupUnavailable, std::nullopt, 0);
    return;
  }
  const std::string& backup_group = backup_it->second;
  auto gw_it = config_.gateway_of_group.find(backup_group);
  if (gw_it == config_.gateway_of_group.end()) {
    respond_global(env, Status::GroupUnavailable, std::nullopt, 0);
    return;
  }

  if (backup_group == config_.group_id) {
    handle_backup_read(env, *b64_decode(env.payload["key"].get<std::string>()),
                       owner_group);
    return;
  }

  Envelope fwd;
  fwd.kind = MessageKind::GlobalGet;
  fwd.payload["key"] = env.payload["key"];
  fwd.payload["mode"] = env.payload["mode"];
  fwd.payload["backup_of"] = owner_group;
  transport_.request(config_.endpoint, gw_it->second, fwd, config_.op_timeout,
                     [this, env](RpcResult res) {
                       if (!running_) return;
                       if (!res.ok) {
                         respond_global(env, Status::GroupUnavailable,
                                        std::nullopt, 0);
                         return;
                       }
                       transport_.respond(config_.endpoint, env,
                                          MessageKind::GlobalResponse,
                                          res.response.payload);
                     });
}

void GatewayProcess::own_group_write(const Envelope& env, uint32_t hops) {
  Command cmd;
  cmd.scope = Scope::Global;
  cmd.key = *b64_decode(env.payload["key"].get<std::string>());
  if (env.kind == MessageKind::GlobalPut) {
    cmd.kind = CmdKind::Put;
    cmd.value = *b64_decode(env.payload["value"].get<std::string>());
  } else {
    cmd.kind = CmdKind::Delete;
  }
  cmd.request_id = env.payload["req"].get<std::string>();
  group_propose(std::move(cmd), 2, [this, env, hops](Status status) {
    respond_global(env, status, std::nullopt, hops);
  });
}

void GatewayProcess::own_group_read(const Envelope& env, uint32_t hops) {
  std::string key = *b64_decode(env.payload["key"].get<std::string>());
  ReadMode mode = env.payload["mode"].get<std::string>() == "lin"
                      ? ReadMode::Linearizable
                      : ReadMode::Serializable;
  group_read(config_.group_id, Scope::Global, key, mode, 2,
             [this, env, hops](Status status, std::optional<std::string> value) {
               respond_global(env, status, value, hops);
             });
}

void GatewayProcess::group_propose(Command cmd, int redirects_left,
                                   std::function<void(Status)> cb) {
  std::string target = leader_hint_.empty() ? config_.group_peers[0] : leader_hint_;
  Envelope env;
  env.kind = MessageKind::GroupPropose;
  env.payload["group"] = config_.group_id;
  env.payload["cmd"] = command_to_json(cmd);
  transport_.request(
      config_.endpoint, target, env, config_.group_timeout,
      [this, cmd = std::move(cmd), redirects_left,
       cb = std::move(cb)](RpcResult res) mutable {
        if (!running_) return;
        if (!res.ok) {
          cb(Status::Timeout);
          return;
        }
        const Json& p = res.response.payload;
        if (p.contains("leader")) leader_hint_ = p["leader"].get<std::string>();
        auto status = status_from_string(p["status"].get<std::string>());
        if (status == Status::Redirect && redirects_left > 0) {
          group_propose(std::move(cmd), redirects_left - 1, std::move(cb));
          return;
        }
        cb(status.value_or(Status::Unavailable));
      });
}

void GatewayProcess::group_read(
    const std::string& group, Scope scope, const std::string& key, ReadMode mode,
    int redirects_left,
    std::function<void(Status, std::optional<std::string>)> cb) {
  std::string target;
  if (mode == ReadMode::Linearizable) {
    target = leader_hint_.empty() ? config_.group_peers[0] : leader_hint_;
  } else {
    target = config_.group_peers[read_rr_++ % config_.group_peers.size()];
  }
  Envelope env;
  env.kind = MessageKind::GroupRead;
  env.payload["group"] = group;
  env.payload["scope"] = to_string(scope);
  env.payload["key"] = b64_encode(key);
  env.payload["mode"] = to_string(mode);
  transport_.request(
      config_.endpoint, target, env, config_.group_timeout,
      [this, group, scope, key, mode, redirects_left,
       cb = std::move(cb)](RpcResult res) mutable {
        if (!running_) return;
        if (!res.ok) {
          cb(Status::Timeout, std::nullopt);
          return;
        }
        const Json& p = res.response.payload;
        if (p.contains("leader")) leader_hint_ = p["leader"].get<std::string>();
        auto status = status_from_string(p["status"].get<std::string>());
        if (status == Status::Redirect && redirects_left > 0) {
          group_read(group, scope, key, mode, redirects_left - 1, std::move(cb));
          return;
        }
        std::optional<std::string> value;
        if (p.contains("value")) value = b64_decode(p["value"].get<std::string>());
        cb(status.value_or(Status::Unavailable), value);
      });
}

void GatewayProcess::locate_key(const std::string& key, LookupCallback cb) {
  vnodes_[0]->locate(ring_.hash_id(key), std::move(cb));
}

void GatewayProcess::assign_backup_group(
    std::function<void(Status, std::string)> cb) {
  // Successor rule: first group after our first vnode on the ring.
  backup_walk(vnodes_[0]->self().id, 256, std::move(cb));
}

void GatewayProcess::backup_walk(Identifier from, int steps_left,
                                 std::function<void(Status, std::string)> cb) {
  if (steps_left == 0) {
    cb(Status::LookupFailed, "");
    return;
  }
  vnodes_[0]->find_successor(
      ring_.add(from, 1),
      [this, steps_left, cb = std::move(cb)](const LookupResult& res) {
        if (!running_) return;
        if (res.status != Status::Ok) {
          cb(res.status, "");
          return;
        }
        if (res.node.physical != config_.name) {
          auto it = config_.group_of_gateway.find(res.node.physical);
          cb(Status::Ok,
             it == config_.group_of_gateway.end() ? "" : it->second);
          return;
        }
        if (res.node.id == vnodes_[0]->self().id) {
          cb(Status::NotFound, "");  // single-gateway overlay: no backup
          return;
        }
        backup_walk(res.node.id, steps_left - 1, std::move(cb));
      });
}

void GatewayProcess::recompute_backup() {
  assign_backup_group([this](Status status, std::string group) {
    if (status != Status::Ok) return;
    if (group != backup_group_) {
      std::string old = backup_group_;
      backup_group_ = group;
      log_info("gateway", config_.name + ": backup group reassigned " +
                              (old.empty() ? "(none)" : old) + " -> " + group);
      if (on_backup_reassigned) on_backup_reassigned(old, group);
    }
  });
}

bool GatewayProcess::group_marked_down(const std::string& group) const {
  for (const auto& [phys, state] : down_) {
    auto it = config_.group_of_gateway.find(phys);
    if (it != config_.group_of_gateway.end() && it->second == group) {
      return state.down;
    }
  }
  return false;
}

void GatewayProcess::note_failure(const std::string& phys) {
  DownState& state = down_[phys];
  Ticks now = transport_.now();
  // Consecutive failures: a quiet gap longer than the window restarts the
  // count (successes reset it outright).
  if (state.consecutive_failures > 0 &&
      now - state.last_failure > config_.down_window) {
    state.consecutive_failures = 0;
  }
  state.last_failure = now;
  state.consecutive_failures++;
  if (state.consecutive_failures >= config_.down_threshold && !state.down) {
    state.down = true;
    log_info("gateway", config_.name + ": marking " + phys + " down");
    start_probe(phys);
  }
}

void GatewayProcess::note_success(const std::string& phys) {
  auto it = down_.find(phys);
  if (it == down_.end()) return;
  it->second.consecutive_failures = 0;
  if (it->second.down) {
    it->second.down = false;
    if (it->second.probe_timer) {
      transport_.cancel_timer(it->second.probe_timer);
      it->second.probe_timer = 0;
    }
    log_info("gateway", config_.name + ": " + phys + " is reachable again");
  }
}

void GatewayProcess::start_probe(const std::string& phys) {
  DownState& state = down_[phys];
  state.probe_timer = transport_.schedule(
      config_.endpoint, config_.probe_interval, [this, phys] {
        auto it = down_.find(phys);
        if (it == down_.end() || !it->second.down) return;
        it->second.probe_timer = 0;
        auto gw_group = config_.group_of_gateway.find(phys);
        std::string address;
        if (gw_group != config_.group_of_gateway.end()) {
          auto ep = config_.gateway_of_group.find(gw_group->second);
          if (ep != config_.gateway_of_group.end()) address = ep->second;
        }
        if (address.empty()) return;
        Envelope ping;
        ping.kind = MessageKind::Ping;
        transport_.request(config_.endpoint, address, ping,
                           config_.probe_interval,
                           [this, phys](RpcResult res) {
                             if (!running_) return;
                             if (res.ok) {
                               note_success(phys);
                             } else if (down_.count(phys) && down_[phys].down) {
                               start_probe(phys);
                             }
                           });
      });
}

std::optional<NodeRef> GatewayProcess::cache_get(uint64_t hash) {
  if (config_.cache_capacity == 0) return std::nullopt;
  auto it = cache_index_.find(hash);
  if (it == cache_index_.end()) return std::nullopt;
  cache_lru_.splice(cache_lru_.begin(), cache_lru_, it->second);  // touch
  return it->second->owner;
}

void GatewayProcess::cache_put(uint64_t hash, const NodeRef& owner) {
  if (config_.cache_capacity == 0) return;
  auto it = cache_index_.find(hash);
  if (it != cache_index_.end()) {
    it->second->owner = owner;
    cache_lru_.splice(cache_lru_.begin(), cache_lru_, it->second);
    return;
  }
  cache_lru_.push_front(CacheEntry{hash, owner});
  cache_index_[hash] = cache_lru_.begin();
  while (cache_lru_.size() > config_.cache_capacity) {
    cache_index_.erase(cache_lru_.back().key_hash);
    cache_lru_.pop_back();
  }
}

void GatewayProcess::cache_invalidate(uint64_t hash) {
  auto it = cache_index_.find(hash);
  if (it == cache_index_.end()) return;
  cache_lru_.erase(it->second);
  cache_index_.erase(it);
}

}  // namespace edgekv
