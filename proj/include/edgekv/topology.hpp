#pragma once

#include <map>
#include <string>
#include <vector>

#include "edgekv/ring.hpp"
#include "edgekv/transport.hpp"

namespace edgekv {

struct TopologyNode {
  std::string name;
  std::string endpoint;  // defaults to the name in sim mode
  std::string group;
  NodeRole role = NodeRole::Storage;
  size_t vnodes = 1;    // gateways only
  size_t sessions = 1;  // clients only: concurrent logical sessions
  std::string attach;   // clients only: edge node to talk to (default: first)
};

// Parsed topology file: node list with roles, group assignments and a
// link profile. Grouped views are derived on demand.
struct ClusterTopology {
  std::string transport_kind = "sim";  // "sim" | "real"
  std::string profile_name = "edge";
  TopologyProfile profile;
  uint64_t seed = 1;
  std::vector<TopologyNode> nodes;
  std::vector<std::string> overlay_bootstrap_order;  // gateway names

  std::vector<const TopologyNode*> by_role(NodeRole role) const;
  const TopologyNode* find(const std::string& name) const;
  std::vector<std::string> group_ids() const;  // first-seen order
  std::vector<const TopologyNode*> group_members(const std::string& group) const;
  const TopologyNode* gateway_of(const std::string& group) const;
  std::vector<const TopologyNode*> clients_of(const std::string& group) const;
};

// Throws std::runtime_error with a diagnostic on schema violations.
ClusterTopology parse_topology(const Json& j);
ClusterTopology load_topology_file(const std::string& path);

// Backup assignment under the successor rule, computed by pure hashing of
// vnode names; any node with the topology derives the same map. Groups map
// to their backup group; absent in single-group systems.
std::map<std::string, std::string> compute_backup_map(const ClusterTopology& topo,
                                                      const RingSpace& ring);

// The bootstrap vnode ring as (id, owning group), sorted by id. Ownership
// is pinned to this ring so a partitioned group keeps its arc; the live
// overlay resolves routes to the same owners once converged.
std::vector<std::pair<uint64_t, std::string>> compute_static_ring(
    const ClusterTopology& topo, const RingSpace& ring);

}  // namespace edgekv
