#include "edgekv/cluster.hpp"

#include <unistd.h>

#include <algorithm>
#include <filesystem>

#include "edgekv/log.hpp"

namespace fs = std::filesystem;

namespace edgekv {

namespace {
uint64_t g_cluster_counter = 0;
}

SimCluster::SimCluster(ClusterTopology topo, SimClusterOptions options)
    : topo_(std::move(topo)),
      options_(options),
      ring_(64),
      rng_(topo_.seed) {
  net_ = std::make_unique<SimTransport>(topo_.profile);
  if (options_.data_root.empty()) {
    data_root_ = (fs::temp_directory_path() /
                  ("edgekv-sim-" + std::to_string(::getpid()) + "-" +
                   std::to_string(g_cluster_counter++)))
                     .string();
  } else {
    data_root_ = options_.data_root;
  }
  fs::create_directories(data_root_);
  backup_map_ = compute_backup_map(topo_, ring_);
}

SimCluster::~SimCluster() {
  sessions_.clear();
  for (auto& [name, gw] : gateways_) gw->stop();
  for (auto& [name, edge] : edges_) edge->stop();
  gateways_.clear();
  edges_.clear();
  if (!options_.keep_data) {
    std::error_code ec;
    fs::remove_all(data_root_, ec);
  }
}

EdgeNodeConfig SimCluster::make_edge_config(const TopologyNode& node) {
  EdgeNodeConfig cfg;
  cfg.node_id = node.endpoint;
  cfg.group_id = node.group;
  for (const auto* member : topo_.group_members(node.group)) {
    cfg.group_peers.push_back(member->endpoint);
  }
  if (const auto* gw = topo_.gateway_of(node.group)) {
    cfg.gateway_address = gw->endpoint;
  }
  cfg.data_dir = data_root_ + "/" + node.name;
  cfg.storage = options_.storage;
  cfg.election_timeout_min = options_.election_timeout_min;
  cfg.election_timeout_max = options_.election_timeout_max;
  cfg.heartbeat_interval = options_.heartbeat_interval;

  if (options_.enable_backups) {
    // Learner endpoints: the members of whichever group backs us up.
    auto it = backup_map_.find(node.group);
    if (it != backup_map_.end()) {
      for (const auto* member : topo_.group_members(it->second)) {
        cfg.learner_endpoints.push_back(member->endpoint);
      }
    }
    // And we host learner replicas for every group we back up.
    for (const auto& [orig, backup] : backup_map_) {
      if (backup == node.group) cfg.backup_of.push_back(orig);
    }
  }
  return cfg;
}

GatewayNodeConfig SimCluster::make_gateway_config(const TopologyNode& node) {
  GatewayNodeConfig cfg;
  cfg.name = node.name;
  cfg.endpoint = node.endpoint;
  cfg.group_id = node.group;
  for (const auto* member : topo_.group_members(node.group)) {
    cfg.group_peers.push_back(member->endpoint);
  }
  cfg.vnode_count = node.vnodes;
  cfg.cache_capacity = options_.cache_capacity;
  cfg.overlay.stabilize_interval = options_.stabilize_interval;
  for (const auto& n : topo_.nodes) {
    if (n.role != NodeRole::Gateway) continue;
    cfg.group_of_gateway[n.name] = n.group;
    cfg.gateway_of_group[n.group] = n.endpoint;
  }
  cfg.backup_of_group = backup_map_;
  cfg.static_ring = compute_static_ring(topo_, ring_);
  return cfg;
}

bool SimCluster::boot(Ticks max_ticks) {
  Ticks deadline_budget = max_ticks;

  // Storage nodes first; each group elects a leader.
  for (const auto& node : topo_.nodes) {
    if (node.role != NodeRole::Storage) continue;
    auto process = std::make_unique<EdgeNodeProcess>(
        *net_, make_edge_config(node), rng_.fork("edge:" + node.name));
    process->raft().on_became_leader = [this, group = node.group](
                                           uint64_t term,
                                           const std::string& leader) {
      leader_log_.emplace_back(term, group + "/" + leader);
    };
    process->start();
    edges_[node.name] = std::move(process);
  }
  // Clients only need registration for link shaping and correlation.
  for (const auto& node : topo_.nodes) {
    if (node.role != NodeRole::Client) continue;
    net_->register_node(node.endpoint, NodeRole::Client, node.group,
                        [](const Envelope&) {});
  }
  if (!net_->run_until([this] { return all_groups_have_leader(); },
                       deadline_budget)) {
    return false;
  }

  // Gateways join the overlay sequentially per bootstrap order.
  const TopologyNode* first_gateway = nullptr;
  for (const auto& name : topo_.overlay_bootstrap_order) {
    const TopologyNode* node = topo_.find(name);
    auto cfg = make_gateway_config(*node);
    if (first_gateway) {
      NodeRef bootstrap;
      bootstrap.id = ring_.hash_id(first_gateway->name + "#0");
      bootstrap.address = first_gateway->endpoint;
      bootstrap.physical = first_gateway->name;
      cfg.bootstrap = bootstrap;
    } else {
      first_gateway = node;
    }
    auto gw = std::make_unique<GatewayProcess>(*net_, ring_, std::move(cfg),
                                               rng_.fork("gw:" + name));
    gw->start();
    GatewayProcess* raw = gw.get();
    gateways_[name] = std::move(gw);
    if (!net_->run_until([raw] { return raw->overlay_ready(); },
                         deadline_budget)) {
      return false;
    }
    if (raw->overlay_failed()) return false;
  }

  if (!net_->run_until([this] { return overlay_ring_converged(); },
                       deadline_budget)) {
    return false;
  }
  for (auto& [name, gw] : gateways_) gw->recompute_backup();
  net_->advance_clock(options_.stabilize_interval);
  return true;
}

bool SimCluster::all_groups_have_leader() const {
  for (const auto& group : topo_.group_ids()) {
    bool found = false;
    for (const auto& [name, edge] : edges_) {
      if (edge->config().group_id == group &&
          edge->raft().role() == Role::Leader) {
        found = true;
        break;
      }
    }
    if (!found) return false;
  }
  return true;
}

std::vector<ChordVnode*> SimCluster::all_vnodes() const {
  std::vector<ChordVnode*> out;
  for (const auto& [name, gw] : gateways_) {
    for (const auto& vnode : gw->vnodes()) out.push_back(vnode.get());
  }
  return out;
}

bool SimCluster::overlay_ring_converged() const {
  auto vnodes = all_vnodes();
  if (vnodes.empty()) return true;
  if (vnodes.size() == 1) {
    ChordVnode* solo = vnodes.front();
    return solo->joined() && !solo->successors().empty() &&
           solo->successors().front().id == solo->self().id;
  }
  std::sort(vnodes.begin(), vnodes.end(), [](ChordVnode* a, ChordVnode* b) {
    return a->self().id.value < b->self().id.value;
  });
  for (size_t i = 0; i < vnodes.size(); i++) {
    ChordVnode* cur = vnodes[i];
    ChordVnode* next = vnodes[(i + 1) % vnodes.size()];
    ChordVnode* prev = vnodes[(i + vnodes.size() - 1) % vnodes.size()];
    if (!cur->joined()) return false;
    if (cur->successors().empty()) return false;
    if (!(cur->successors().front().id == next->self().id)) return false;
    if (!cur->predecessor() || !(cur->predecessor()->id == prev->self().id)) {
      return false;
    }
  }
  return true;
}

bool SimCluster::overlay_fingers_converged() const {
  auto vnodes = all_vnodes();
  if (vnodes.size() <= 1) return true;
  std::vector<std::pair<uint64_t, ChordVnode*>> sorted;
  for (auto* v : vnodes) sorted.emplace_back(v->self().id.value, v);
  std::sort(sorted.begin(), sorted.end());
  auto successor_of = [&](uint64_t target) {
    for (const auto& [id, v] : sorted) {
      if (id >= target) return v;
    }
    return sorted.front().second;
  };
  for (auto* v : vnodes) {
    for (unsigned i = 1; i <= ring_.bits(); i++) {
      Identifier start = ring_.finger_start(v->self().id, i);
      ChordVnode* expect = successor_of(start.value);
      const auto& finger = v->fingers()[i - 1];
      if (!finger || !(finger->id == expect->self().id)) return false;
    }
  }
  return true;
}

bool SimCluster::wait(const std::function<bool()>& pred, Ticks max_ticks) {
  return net_->run_until(pred, max_ticks);
}

EdgeNodeProcess* SimCluster::edge(const std::string& name) {
  auto it = edges_.find(name);
  return it == edges_.end() ? nullptr : it->second.get();
}

GatewayProcess* SimCluster::gateway(const std::string& name) {
  auto it = gateways_.find(name);
  return it == gateways_.end() ? nullptr : it->second.get();
}

std::vector<EdgeNodeProcess*> SimCluster::members_of(const std::string& group) {
  std::vector<EdgeNodeProcess*> out;
  for (const auto* node : topo_.group_members(group)) {
    if (auto* e = edge(node->name)) out.push_back(e);
  }
  return out;
}

EdgeNodeProcess* SimCluster::leader_of(const std::string& group) {
  for (auto* member : members_of(group)) {
    if (member->raft().role() == Role::Leader) return member;
  }
  return nullptr;
}

ClientSession* SimCluster::make_session(const std::string& client_name,
                                        size_t index, ClientOptions options) {
  const TopologyNode* client = topo_.find(client_name);
  if (!client || client->role != NodeRole::Client) return nullptr;
  std::string edge_endpoint = client->attach;
  if (edge_endpoint.empty()) {
    auto members = topo_.group_members(client->group);
    if (members.empty()) return nullptr;
    edge_endpoint = members.front()->endpoint;
  }
  // The running counter keeps request-id prefixes unique even when the
  // same (client, index) pair is requested twice.
  auto session = std::make_unique<ClientSession>(
      *net_, client->endpoint,
      client->name + "#" + std::to_string(index) + "." +
          std::to_string(sessions_.size()),
      edge_endpoint, options);
  ClientSession* raw = session.get();
  sessions_.push_back(std::move(session));
  return raw;
}

void SimCluster::crash_edge(const std::string& name) {
  auto it = edges_.find(name);
  if (it == edges_.end()) return;
  it->second->stop();  // volatile state is gone; files stay
  edges_.erase(it);
}

void SimCluster::restart_edge(const std::string& name) {
  const TopologyNode* node = topo_.find(name);
  if (!node || edges_.count(name)) return;
  auto process = std::make_unique<EdgeNodeProcess>(
      *net_, make_edge_config(*node),
      rng_.fork("edge:" + name + ":restart"));
  process->raft().on_became_leader = [this, group = node->group](
                                         uint64_t term,
                                         const std::string& leader) {
    leader_log_.emplace_back(term, group + "/" + leader);
  };
  process->start();
  edges_[name] = std::move(process);
}

void SimCluster::partition_group(const std::string& group) {
  std::set<std::string> inside;
  std::set<std::string> outside;
  for (const auto& node : topo_.nodes) {
    if (node.group == group) {
      inside.insert(node.endpoint);
    } else {
      outside.insert(node.endpoint);
    }
  }
  net_->partition(inside, outside);
}

void SimCluster::heal() { net_->heal(); }

void SimCluster::pause_background() {
  for (auto& [name, edge] : edges_) edge->pause_background();
  for (auto& [name, gw] : gateways_) gw->pause_background();
}

void SimCluster::resume_background() {
  for (auto& [name, edge] : edges_) edge->resume_background();
  for (auto& [name, gw] : gateways_) gw->resume_background();
}

std::map<std::string, std::string> SimCluster::group_state_hashes(
    const std::string& group) {
  std::map<std::string, std::string> out;
  for (const auto* node : topo_.group_members(group)) {
    if (auto* e = edge(node->name)) {
      out[node->name] = e->storage().state_hash();
    }
  }
  return out;
}

}  // namespace edgekv
