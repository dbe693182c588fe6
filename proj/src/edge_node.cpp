#include "edgekv/edge_node.hpp"

#include "edgekv/log.hpp"
#include "edgekv/wire.hpp"

namespace edgekv {

namespace {

std::optional<Scope> scope_from(const Json& p) {
  std::string s = p["scope"].get<std::string>();
  if (s == "local") return Scope::Local;
  if (s == "global") return Scope::Global;
  return std::nullopt;
}

std::optional<ReadMode> mode_from(const Json& p) {
  std::string s = p["mode"].get<std::string>();
  if (s == "lin") return ReadMode::Linearizable;
  if (s == "ser") return ReadMode::Serializable;
  return std::nullopt;
}

}  // namespace

EdgeNodeProcess::EdgeNodeProcess(Transport& transport, EdgeNodeConfig config,
                                 Rng rng)
    : transport_(transport), config_(std::move(config)), rng_(rng) {
  storage_ = std::make_unique<StorageEngine>(config_.data_dir, config_.storage);

  RaftConfig raft_config;
  raft_config.group = config_.group_id;
  raft_config.self = config_.node_id;
  raft_config.voters = config_.group_peers;
  raft_config.learners = config_.learner_endpoints;
  raft_config.election_timeout_min = config_.election_timeout_min;
  raft_config.election_timeout_max = config_.election_timeout_max;
  raft_config.heartbeat_interval = config_.heartbeat_interval;
  raft_ = std::make_unique<RaftNode>(transport_, *storage_, raft_config,
                                     rng_.fork("raft:" + config_.node_id));

  for (const auto& group : config_.backup_of) {
    LearnerInstance inst;
    inst.storage = std::make_unique<StorageEngine>(
        config_.data_dir + "/learner-" + group, config_.storage);
    RaftConfig lc;
    lc.group = group;
    lc.self = config_.node_id;
    lc.learner = true;
    inst.raft = std::make_unique<RaftNode>(
        transport_, *inst.storage, lc,
        rng_.fork("learner:" + group + ":" + config_.node_id));
    learners_.emplace(group, std::move(inst));
  }
}

EdgeNodeProcess::~EdgeNodeProcess() { stop(); }

void EdgeNodeProcess::start() {
  running_ = true;
  transport_.register_node(config_.node_id, NodeRole::Storage, config_.group_id,
                           [this](const Envelope& env) { handle(env); });
  raft_->start();
  for (auto& [group, inst] : learners_) inst.raft->start();
}

void EdgeNodeProcess::stop() {
  if (!running_) return;
  running_ = false;
  raft_->stop();
  for (auto& [group, inst] : learners_) inst.raft->stop();
  transport_.unregister_node(config_.node_id);
}

StorageEngine* EdgeNodeProcess::learner_storage(const std::string& group) {
  auto it = learners_.find(group);
  return it == learners_.end() ? nullptr : it->second.storage.get();
}

RaftNode* EdgeNodeProcess::learner_raft(const std::string& group) {
  auto it = learners_.find(group);
  return it == learners_.end() ? nullptr : it->second.raft.get();
}

void EdgeNodeProcess::pause_background() {
  raft_->pause_timers();
  for (auto& [group, inst] : learners_) inst.raft->pause_timers();
}

void EdgeNodeProcess::resume_background() {
  raft_->resume_timers();
  for (auto& [group, inst] : learners_) inst.raft->resume_timers();
}

void EdgeNodeProcess::handle(const Envelope& env) {
  if (!running_) return;
  switch (env.kind) {
    case MessageKind::Ping:
      transport_.respond(config_.node_id, env, MessageKind::Pong, Json::object());
      return;
    case MessageKind::RequestVote:
    case MessageKind::AppendEntries: {
      const std::string group = env.payload["group"].get<std::string>();
      RaftNode* target = nullptr;
      if (group == config_.group_id) {
        target = raft_.get();
      } else if (auto* learner = learner_raft(group)) {
        target = learner;
      }
      if (!target) return;  // not a member of that group
      if (env.kind == MessageKind::RequestVote) {
        target->handle_request_vote(env);
      } else {
        target->handle_append_entries(env);
      }
      return;
    }
    case MessageKind::ClientGet:
    case MessageKind::ClientPut:
    case MessageKind::ClientDelete:
      handle_client(env);
      return;
    case MessageKind::GroupPropose:
      handle_group_propose(env);
      return;
    case MessageKind::GroupRead:
      handle_group_read(env);
      return;
    default:
      return;  // kind not served by edge nodes
  }
}

void EdgeNodeProcess::respond_client(const Envelope& env, Status status,
                                     const std::optional<std::string>& value,
                                     Ticks start_tick) {
  Json p;
  p["status"] = to_string(status);
  if (value) p["value"] = b64_encode(*value);
  p["elapsed_us"] = uint64_t((transport_.now() - start_tick) * 10);
  transport_.respond(config_.node_id, env, MessageKind::ClientResponse, p);
}

void EdgeNodeProcess::respond_group(const Envelope& env, Status status,
                                    const std::optional<std::string>& value) {
  Json p;
  p["status"] = to_string(status);
  if (value) p["value"] = b64_encode(*value);
  if (auto hint = raft_->leader_hint()) p["leader"] = *hint;
  transport_.respond(config_.node_id, env, MessageKind::GroupResponse, p);
}

void EdgeNodeProcess::handle_client(const Envelope& env) {
  const Json& p = env.payload;
  Ticks start = transport_.now();

  auto scope = scope_from(p);
  auto key = b64_decode(p["key"].get<std::string>());
  if (!scope || !key || key->empty() || key->size() > kMaxKeyBytes) {
    respond_client(env, Status::Invalid, std::nullopt, start);
    return;
  }

  if (env.kind == MessageKind::ClientGet) {
    auto mode = mode_from(p);
    if (!mode) {
      respond_client(env, Status::Invalid, std::nullopt, start);
      return;
    }
    place_read(env, *scope, *key, *mode);
    return;
  }

  Command cmd;
  cmd.scope = *scope;
  cmd.key = *key;
  cmd.request_id = p["req"].get<std::string>();
  if (env.kind == MessageKind::ClientPut) {
    auto value = b64_decode(p["value"].get<std::string>());
    if (!value || value->size() > kMaxValueBytes) {
      respond_client(env, Status::Invalid, std::nullopt, start);
      return;
    }
    cmd.kind = CmdKind::Put;
    cmd.value = *value;
  } else {
    cmd.kind = CmdKind::Delete;
  }
  place_write(env, std::move(cmd));
}

// Placement protocol, write side: local data replicates within the group
// (leader-side propose, follower-side forward), global data goes to the
// assigned gateway.
void EdgeNodeProcess::place_write(const Envelope& env, Command cmd) {
  Ticks start = transport_.now();
  if (cmd.scope == Scope::Global) {
    forward_global(env);
    return;
  }
  if (raft_->role() == Role::Leader) {
    raft_->propose(std::move(cmd), [this, env, start](const ProposeResult& res) {
      respond_client(env, res.status == Status::Redirect ? Status::Unavailable
                                                         : res.status,
                     std::nullopt, start);
    });
    return;
  }
  forward_propose_to_leader(env, cmd, 2);
}

void EdgeNodeProcess::forward_propose_to_leader(const Envelope& env,
                                                const Command& cmd,
                                                int redirects_left) {
  Ticks start = transport_.now();
  auto hint = raft_->leader_hint();
  if (!hint) {
    // No leader known yet: wait out one election timeout, then retry once.
    if (redirects_left > 0) {
      transport_.schedule(config_.node_id, config_.election_timeout_max,
                          [this, env, cmd, redirects_left] {
                            if (!running_) return;
                            if (raft_->role() == Role::Leader) {
                              place_write(env, cmd);
                            } else {
                              forward_propose_to_leader(env, cmd,
                                                        redirects_left - 1);
                            }
                          });
    } else {
      respond_client(env, Status::Unavailable, std::nullopt, start);
    }
    return;
  }

  Envelope fwd;
  fwd.kind = MessageKind::GroupPropose;
  fwd.payload["group"] = config_.group_id;
  fwd.payload["cmd"] = command_to_json(cmd);
  transport_.request(
      config_.node_id, *hint, fwd, config_.local_timeout,
      [this, env, cmd, redirects_left, start](RpcResult res) {
        if (!running_) return;
        if (!res.ok) {
          respond_client(env, Status::Timeout, std::nullopt, start);
          return;
        }
        auto status = status_from_string(
            res.response.payload["status"].get<std::string>());
        if (status == Status::Redirect && redirects_left > 0) {
          forward_propose_to_leader(env, cmd, redirects_left - 1);
          return;
        }
        respond_client(env,
                       status.value_or(Status::Unavailable) == Status::Redirect
                           ? Status::Unavailable
                           : status.value_or(Status::Unavailable),
                       std::nullopt, start);
      });
}

void EdgeNodeProcess::place_read(const Envelope& env, Scope scope,
                                 const std::string& key, ReadMode mode) {
  Ticks start = transport_.now();
  if (scope == Scope::Global) {
    forward_global(env);
    return;
  }
  if (mode == ReadMode::Serializable) {
    // Any member answers from local applied state, no quorum.
    auto value = raft_->serializable_read(scope, key);
    respond_client(env, value ? Status::Ok : Status::NotFound, value, start);
    return;
  }
  if (raft_->role() == Role::Leader) {
    raft_->linearizable_read(
        scope, key,
        [this, env, start](Status status, const std::optional<std::string>& value) {
          if (status == Status::Ok) {
            respond_client(env, value ? Status::Ok : Status::NotFound, value,
                           start);
          } else {
            respond_client(env,
                           status == Status::Redirect ? Status::Unavailable
                                                      : status,
                           std::nullopt, start);
          }
        });
    return;
  }
  forward_read_to_leader(env, scope, key, 2);
}

void EdgeNodeProcess::forward_read_to_leader(const Envelope& env, Scope scope,
                                             const std::string& key,
                                             int redirects_left) {
  Ticks start = transport_.now();
  auto hint = raft_->leader_hint();
  if (!hint) {
    if (redirects_left > 0) {
      transport_.schedule(config_.node_id, config_.election_timeout_max,
                          [this, env, scope, key, redirects_left] {
                            if (!running_) return;
                            if (raft_->role() == Role::Leader) {
                              place_read(env, scope, key, ReadMode::Linearizable);
                            } else {
                              forward_read_to_leader(env, scope, key,
                                                     redirects_left - 1);
                            }
                          });
    } else {
      respond_client(env, Status::Unavailable, std::nullopt, start);
    }
    return;
  }

  Envelope fwd;
  fwd.kind = MessageKind::GroupRead;
  fwd.payload["group"] = config_.group_id;
  fwd.payload["scope"] = to_string(scope);
  fwd.payload["key"] = b64_encode(key);
  fwd.payload["mode"] = "lin";
  transport_.request(
      config_.node_id, *hint, fwd, config_.local_timeout,
      [this, env, scope, key, redirects_left, start](RpcResult res) {
        if (!running_) return;
        if (!res.ok) {
          respond_client(env, Status::Timeout, std::nullopt, start);
          return;
        }
        const Json& p = res.response.payload;
        auto status = status_from_string(p["status"].get<std::string>());
        if (status == Status::Redirect && redirects_left > 0) {
          forward_read_to_leader(env, scope, key, redirects_left - 1);
          return;
        }
        std::optional<std::string> value;
        if (p.contains("value")) value = b64_decode(p["value"].get<std::string>());
        respond_client(env,
                       status.value_or(Status::Unavailable) == Status::Redirect
                           ? Status::Unavailable
                           : status.value_or(Status::Unavailable),
                       value, start);
      });
}

void EdgeNodeProcess::forward_global(const Envelope& env) {
  Ticks start = transport_.now();
  const Json& p = env.payload;

  Envelope fwd;
  if (env.kind == MessageKind::ClientPut) {
    fwd.kind = MessageKind::GlobalPut;
    fwd.payload["key"] = p["key"];
    fwd.payload["value"] = p["value"];
    fwd.payload["req"] = p["req"];
  } else if (env.kind == MessageKind::ClientDelete) {
    fwd.kind = MessageKind::GlobalDelete;
    fwd.payload["key"] = p["key"];
    fwd.payload["req"] = p["req"];
  } else {
    fwd.kind = MessageKind::GlobalGet;
    fwd.payload["key"] = p["key"];
    fwd.payload["mode"] = p["mode"];
  }

  transport_.request(
      config_.node_id, config_.gateway_address, fwd, config_.global_timeout,
      [this, env, start](RpcResult res) {
        if (!running_) return;
        if (!res.ok) {
          respond_client(env, Status::GatewayUnavailable, std::nullopt, start);
          return;
        }
        const Json& p = res.response.payload;
        auto status = status_from_string(p["status"].get<std::string>());
        std::optional<std::string> value;
        if (p.contains("value")) value = b64_decode(p["value"].get<std::string>());
        respond_client(env, status.value_or(Status::Unavailable), value, start);
      });
}

void EdgeNodeProcess::handle_group_propose(const Envelope& env) {
  const std::string group = env.payload["group"].get<std::string>();
  if (group != config_.group_id) {
    respond_group(env, Status::Unavailable);
    return;
  }
  auto cmd = command_from_json(env.payload["cmd"]);
  if (!cmd) {
    respond_group(env, Status::Invalid);
    return;
  }
  if (raft_->role() != Role::Leader) {
    // Relay leader-ward rather than re-executing; one forwarding level is
    // enough because the hint converges via AppendEntries.
    auto hint = raft_->leader_hint();
    if (!hint) {
      respond_group(env, Status::Redirect);
      return;
    }
    Envelope fwd;
    fwd.kind = MessageKind::GroupPropose;
    fwd.payload = env.payload;
    transport_.request(config_.node_id, *hint, fwd, config_.local_timeout,
                       [this, env](RpcResult res) {
                         if (!running_) return;
                         if (!res.ok) {
                           respond_group(env, Status::Timeout);
                           return;
                         }
                         transport_.respond(config_.node_id, env,
                                            MessageKind::GroupResponse,
                                            res.response.payload);
                       });
    return;
  }
  raft_->propose(*cmd, [this, env](const ProposeResult& res) {
    respond_group(env, res.status);
  });
}

void EdgeNodeProcess::handle_group_read(const Envelope& env) {
  const Json& p = env.payload;
  const std::string group = p["group"].get<std::string>();
  auto scope = scope_from(p);
  auto mode = mode_from(p);
  auto key = b64_decode(p["key"].get<std::string>());
  if (!scope || !mode || !key) {
    respond_group(env, Status::Invalid);
    return;
  }

  if (group != config_.group_id) {
    // Reads for a group we back up are served from the learner replica,
    // always with serializable semantics.
    auto* learner = learner_storage(group);
    if (!learner) {
      respond_group(env, Status::Unavailable);
      return;
    }
    auto value = learner->read(*scope, *key);
    Json resp;
    resp["status"] = to_string(value ? Status::Ok : Status::NotFound);
    if (value) resp["value"] = b64_encode(*value);
    transport_.respond(config_.node_id, env, MessageKind::GroupResponse, resp);
    return;
  }

  if (*mode == ReadMode::Serializable) {
    auto value = raft_->serializable_read(*scope, *key);
    respond_group(env, value ? Status::Ok : Status::NotFound, value);
    return;
  }
  if (raft_->role() != Role::Leader) {
    respond_group(env, Status::Redirect);
    return;
  }
  raft_->linearizable_read(
      *scope, *key,
      [this, env](Status status, const std::optional<std::string>& value) {
        if (status == Status::Ok) {
          respond_group(env, value ? Status::Ok : Status::NotFound, value);
        } else {
          respond_group(env, status);
        }
      });
}

}  // namespace edgekv
