#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "edgekv/client.hpp"
#include "edgekv/edge_node.hpp"
#include "edgekv/gateway.hpp"
#include "edgekv/sim_transport.hpp"
#include "edgekv/topology.hpp"

namespace edgekv {

struct SimClusterOptions {
  std::string data_root;        // defaults to a fresh directory under /tmp
  bool keep_data = false;       // skip cleanup on destruction
  bool enable_backups = true;   // wire learner replicas per the backup map
  size_t cache_capacity = 1024;
  StorageOptions storage;       // fsync off by default in simulation
  Ticks election_timeout_min = 150 * kTicksPerMs;
  Ticks election_timeout_max = 300 * kTicksPerMs;
  Ticks heartbeat_interval = 50 * kTicksPerMs;
  Ticks stabilize_interval = 50 * kTicksPerMs;
};

// Hosts a whole cluster (edge groups, gateways, clients) inside one
// process on the deterministic simulator. Used by tests, the benchmark
// driver and the python bindings.
class SimCluster {
 public:
  explicit SimCluster(ClusterTopology topo, SimClusterOptions options = {});
  ~SimCluster();

  SimTransport& net() { return *net_; }
  const ClusterTopology& topology() const { return topo_; }
  const RingSpace& ring() const { return ring_; }
  const std::map<std::string, std::string>& backup_map() const {
    return backup_map_;
  }

  // Starts everything: elects group leaders, joins gateways sequentially,
  // waits for ring convergence. False if the deadline ran out.
  bool boot(Ticks max_ticks = 60'000 * kTicksPerMs);

  bool all_groups_have_leader() const;
  bool overlay_ring_converged() const;   // successor/predecessor chain correct
  bool overlay_fingers_converged() const;
  bool wait(const std::function<bool()>& pred, Ticks max_ticks);

  EdgeNodeProcess* edge(const std::string& name);
  GatewayProcess* gateway(const std::string& name);
  std::vector<EdgeNodeProcess*> members_of(const std::string& group);
  EdgeNodeProcess* leader_of(const std::string& group);
  std::vector<ChordVnode*> all_vnodes() const;

  // Client sessions are owned by the cluster; sessions of one client share
  // its endpoint and link shaping.
  ClientSession* make_session(const std::string& client_name, size_t index,
                              ClientOptions options = {});

  void crash_edge(const std::string& name);    // process dies, data survives
  void restart_edge(const std::string& name);  // recovers from disk
  // Cuts the group's storage nodes, gateway and clients away from the rest.
  void partition_group(const std::string& group);
  void heal();

  void pause_background();
  void resume_background();

  // Equal on all voters once a group is quiescent.
  std::map<std::string, std::string> group_state_hashes(const std::string& group);

  std::vector<std::pair<uint64_t, std::string>> leader_log() const {
    return leader_log_;
  }

 private:
  EdgeNodeConfig make_edge_config(const TopologyNode& node);
  GatewayNodeConfig make_gateway_config(const TopologyNode& node);

  ClusterTopology topo_;
  SimClusterOptions options_;
  RingSpace ring_;
  std::unique_ptr<SimTransport> net_;
  Rng rng_;
  std::string data_root_;
  std::map<std::string, std::string> backup_map_;

  std::map<std::string, std::unique_ptr<EdgeNodeProcess>> edges_;
  std::map<std::string, std::unique_ptr<GatewayProcess>> gateways_;
  std::vector<std::unique_ptr<ClientSession>> sessions_;

  // (term, "group/leader") events for election-safety checks
  std::vector<std::pair<uint64_t, std::string>> leader_log_;
};

}  // namespace edgekv
