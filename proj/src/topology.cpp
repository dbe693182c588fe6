#include "edgekv/topology.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace edgekv {

namespace {

LinkProfile parse_link(const Json& j, const LinkProfile& fallback) {
  LinkProfile p = fallback;
  if (j.contains("latency_ms")) p.latency_ms = j["latency_ms"].get<double>();
  if (j.contains("bandwidth_mbps")) {
    p.bandwidth_mbps = j["bandwidth_mbps"].get<double>();
  }
  if (p.latency_ms < 0 || p.bandwidth_mbps <= 0) {
    throw std::runtime_error("invalid link profile values");
  }
  return p;
}

}  // namespace

std::vector<const TopologyNode*> ClusterTopology::by_role(NodeRole role) const {
  std::vector<const TopologyNode*> out;
  for (const auto& n : nodes) {
    if (n.role == role) out.push_back(&n);
  }
  return out;
}

const TopologyNode* ClusterTopology::find(const std::string& name) const {
  for (const auto& n : nodes) {
    if (n.name == name) return &n;
  }
  return nullptr;
}

std::vector<std::string> ClusterTopology::group_ids() const {
  std::vector<std::string> out;
  for (const auto& n : nodes) {
    if (n.group.empty()) continue;
    if (std::find(out.begin(), out.end(), n.group) == out.end()) {
      out.push_back(n.group);
    }
  }
  return out;
}

std::vector<const TopologyNode*> ClusterTopology::group_members(
    const std::string& group) const {
  std::vector<const TopologyNode*> out;
  for (const auto& n : nodes) {
    if (n.role == NodeRole::Storage && n.group == group) out.push_back(&n);
  }
  return out;
}

const TopologyNode* ClusterTopology::gateway_of(const std::string& group) const {
  for (const auto& n : nodes) {
    if (n.role == NodeRole::Gateway && n.group == group) return &n;
  }
  return nullptr;
}

std::vector<const TopologyNode*> ClusterTopology::clients_of(
    const std::string& group) const {
  std::vector<const TopologyNode*> out;
  for (const auto& n : nodes) {
    if (n.role == NodeRole::Client && n.group == group) out.push_back(&n);
  }
  return out;
}

ClusterTopology parse_topology(const Json& j) {
  if (!j.is_object() || !j.contains("nodes") || !j["nodes"].is_array()) {
    throw std::runtime_error("topology: missing 'nodes' array");
  }
  ClusterTopology topo;
  if (j.contains("transport")) {
    topo.transport_kind = j["transport"].get<std::string>();
    if (topo.transport_kind != "sim" && topo.transport_kind != "real") {
      throw std::runtime_error("topology: transport must be 'sim' or 'real'");
    }
  }
  if (j.contains("seed")) topo.seed = j["seed"].get<uint64_t>();

  if (j.contains("profile")) {
    const Json& p = j["profile"];
    if (p.is_string()) {
      topo.profile_name = p.get<std::string>();
      if (topo.profile_name == "edge") {
        topo.profile = TopologyProfile::edge();
      } else if (topo.profile_name == "cloud") {
        topo.profile = TopologyProfile::cloud();
      } else {
        throw std::runtime_error("topology: unknown profile '" +
                                 topo.profile_name + "'");
      }
    } else if (p.is_object()) {
      topo.profile_name = "custom";
      TopologyProfile base = TopologyProfile::edge();
      if (p.contains("base") && p["base"].get<std::string>() == "cloud") {
        base = TopologyProfile::cloud();
      }
      topo.profile = base;
      if (p.contains("cli_st")) topo.profile.cli_st = parse_link(p["cli_st"], base.cli_st);
      if (p.contains("st_st")) topo.profile.st_st = parse_link(p["st_st"], base.st_st);
      if (p.contains("st_gw")) topo.profile.st_gw = parse_link(p["st_gw"], base.st_gw);
      if (p.contains("gw_gw")) topo.profile.gw_gw = parse_link(p["gw_gw"], base.gw_gw);
    } else {
      throw std::runtime_error("topology: profile must be a string or object");
    }
  }

  std::set<std::string> names;
  std::set<std::string> endpoints;
  for (const auto& nj : j["nodes"]) {
    TopologyNode node;
    if (!nj.contains("name") || !nj.contains("role")) {
      throw std::runtime_error("topology: node needs 'name' and 'role'");
    }
    node.name = nj["name"].get<std::string>();
    std::string role = nj["role"].get<std::string>();
    if (role == "client") node.role = NodeRole::Client;
    else if (role == "storage") node.role = NodeRole::Storage;
    else if (role == "gateway") node.role = NodeRole::Gateway;
    else throw std::runtime_error("topology: unknown role '" + role + "'");
    node.endpoint = nj.contains("endpoint") ? nj["endpoint"].get<std::string>()
                                            : node.name;
    if (nj.contains("group")) node.group = nj["group"].get<std::string>();
    if (node.group.empty()) {
      throw std::runtime_error("topology: node '" + node.name + "' needs a group");
    }
    if (nj.contains("vnodes")) node.vnodes = nj["vnodes"].get<size_t>();
    if (node.role == NodeRole::Gateway && node.vnodes == 0) {
      throw std::runtime_error("topology: gateway vnodes must be positive");
    }
    if (nj.contains("sessions")) node.sessions = nj["sessions"].get<size_t>();
    if (nj.contains("attach")) node.attach = nj["attach"].get<std::string>();
    if (!names.insert(node.name).second) {
      throw std::runtime_error("topology: duplicate node name '" + node.name + "'");
    }
    if (!endpoints.insert(node.endpoint).second) {
      throw std::runtime_error("topology: duplicate endpoint '" + node.endpoint +
                               "'");
    }
    topo.nodes.push_back(std::move(node));
  }

  for (const auto& group : topo.group_ids()) {
    if (topo.group_members(group).empty()) {
      // Groups with clients/gateway but no storage nodes are invalid.
      throw std::runtime_error("topology: group '" + group +
                               "' has no storage nodes");
    }
  }

  if (j.contains("overlay_bootstrap_order")) {
    for (const auto& g : j["overlay_bootstrap_order"]) {
      topo.overlay_bootstrap_order.push_back(g.get<std::string>());
    }
  } else {
    for (const auto& n : topo.nodes) {
      if (n.role == NodeRole::Gateway) {
        topo.overlay_bootstrap_order.push_back(n.name);
      }
    }
  }
  for (const auto& name : topo.overlay_bootstrap_order) {
    const TopologyNode* n = topo.find(name);
    if (!n || n->role != NodeRole::Gateway) {
      throw std::runtime_error("topology: bootstrap order entry '" + name +
                               "' is not a gateway");
    }
  }
  return topo;
}

ClusterTopology load_topology_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open topology file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  Json j = Json::parse(buf.str(), nullptr, false);
  if (j.is_discarded()) {
    throw std::runtime_error("topology file " + path + " is not valid JSON");
  }
  return parse_topology(j);
}

std::vector<std::pair<uint64_t, std::string>> compute_static_ring(
    const ClusterTopology& topo, const RingSpace& ring) {
  std::vector<std::pair<uint64_t, std::string>> out;
  for (const auto& n : topo.nodes) {
    if (n.role != NodeRole::Gateway) continue;
    for (size_t k = 0; k < n.vnodes; k++) {
      Identifier id = ring.hash_id(n.name + "#" + std::to_string(k));
      out.emplace_back(id.value, n.group);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::map<std::string, std::string> compute_backup_map(
    const ClusterTopology& topo, const RingSpace& ring) {
  struct Vnode {
    uint64_t id;
    std::string gateway;
    std::string group;
  };
  std::vector<Vnode> vnodes;
  for (const auto& n : topo.nodes) {
    if (n.role != NodeRole::Gateway) continue;
    for (size_t k = 0; k < n.vnodes; k++) {
      Identifier id = ring.hash_id(n.name + "#" + std::to_string(k));
      vnodes.push_back({id.value, n.name, n.group});
    }
  }
  std::sort(vnodes.begin(), vnodes.end(),
            [](const Vnode& a, const Vnode& b) { return a.id < b.id; });

  std::map<std::string, std::string> backup;
  for (const auto& n : topo.nodes) {
    if (n.role != NodeRole::Gateway) continue;
    uint64_t first = ring.hash_id(n.name + "#0").value;
    // Find our first vnode, then walk clockwise to the next foreign group.
    size_t start = 0;
    while (start < vnodes.size() && vnodes[start].id != first) start++;
    for (size_t step = 1; step <= vnodes.size(); step++) {
      const Vnode& cand = vnodes[(start + step) % vnodes.size()];
      if (cand.group != n.group) {
        backup[n.group] = cand.group;
        break;
      }
    }
  }
  return backup;
}

}  // namespace edgekv
