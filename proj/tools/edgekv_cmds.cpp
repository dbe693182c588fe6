#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include "edgekv/cluster.hpp"
#include "edgekv/edge_node.hpp"
#include "edgekv/gateway.hpp"
#include "edgekv/log.hpp"
#include "edgekv/tcp_transport.hpp"
#include "edgekv/topology.hpp"
#include "edgekv/workload.hpp"

namespace fs = std::filesystem;
using namespace edgekv;

namespace {

volatile std::sig_atomic_t g_stop = 0;
void handle_signal(int) { g_stop = 1; }

Json read_json_file(const std::string& path, int& exit_code) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error: cannot open " << path << "\n";
    exit_code = 2;
    return {};
  }
  std::stringstream buf;
  buf << in.rdbuf();
  Json j = Json::parse(buf.str(), nullptr, false);
  if (j.is_discarded()) {
    std::cerr << "error: " << path << " is not valid JSON\n";
    exit_code = 2;
    return {};
  }
  exit_code = 0;
  return j;
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v ? v : fallback;
}

void wait_for_signal() {
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  while (!g_stop) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
}

int run_bench_cells(const ClusterTopology& topo, const Json& spec_json,
                    const std::string& out_dir) {
  // Pre-flight the output directory before any run starts.
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  {
    std::ofstream probe(out_dir + "/.write-probe");
    if (!probe) {
      std::cerr << "error: output directory " << out_dir << " is not writable\n";
      return 2;
    }
    probe.close();
    fs::remove(out_dir + "/.write-probe", ec);
  }

  WorkloadSpec spec = parse_workload(spec_json.contains("workload")
                                         ? spec_json["workload"]
                                         : spec_json);
  SimClusterOptions options;

  bool all_ok = true;
  if (spec_json.contains("sweep")) {
    const Json& sw = spec_json["sweep"];
    std::string parameter = sw["parameter"].get<std::string>();
    std::vector<std::string> values;
    for (const auto& v : sw["values"]) {
      values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    }
    std::vector<std::string> profiles;
    if (sw.contains("profiles")) {
      for (const auto& p : sw["profiles"]) profiles.push_back(p.get<std::string>());
    } else {
      profiles.push_back(topo.profile_name);
    }

    SweepResult result = run_sweep(topo, spec, parameter, values, profiles,
                                   options);
    std::ofstream(out_dir + "/sweep.csv") << result.to_csv();
    std::ofstream(out_dir + "/plot_mean_write_ms.csv")
        << result.plot_csv("mean_write_ms");
    std::ofstream(out_dir + "/plot_throughput_ops_s.csv")
        << result.plot_csv("throughput_ops_s");
    Json summary = Json::array();
    for (const auto& cell : result.cells) {
      Json c;
      c["profile"] = cell.profile;
      c["value"] = cell.value;
      c["report"] = cell.report.to_json();
      summary.push_back(std::move(c));
      if (cell.report.failed) all_ok = false;
    }
    std::ofstream(out_dir + "/summary.json") << summary.dump(2) << "\n";
  } else {
    SimCluster cluster(topo, options);
    if (!cluster.boot()) {
      std::cerr << "error: cluster failed to boot\n";
      return 4;
    }
    BenchRunner runner(cluster, spec);
    if (!runner.load_phase()) {
      Json fail;
      fail["failed"] = true;
      fail["load_errors"] = runner.load_errors();
      std::ofstream(out_dir + "/summary.json") << fail.dump(2) << "\n";
      std::cerr << "error: load phase failed\n";
      return 4;
    }
    BenchReport report = runner.run_phase();
    std::ofstream(out_dir + "/summary.json") << report.to_json().dump(2) << "\n";
    if (report.failed) all_ok = false;
  }
  std::cout << "reports written to " << out_dir << "\n";
  return all_ok ? 0 : 4;
}

}  // namespace

int edgekv_node_main(const std::string& config_path) {
  int rc = 0;
  Json j = read_json_file(config_path, rc);
  if (rc) return rc;

  EdgeNodeConfig cfg;
  try {
    cfg.node_id = env_or("EDGEKV_ENDPOINT", j.at("endpoint").get<std::string>());
    cfg.group_id = j.at("group").get<std::string>();
    for (const auto& p : j.at("peers")) {
      cfg.group_peers.push_back(p.get<std::string>());
    }
    cfg.gateway_address =
        env_or("EDGEKV_GATEWAY",
               j.contains("gateway") ? j["gateway"].get<std::string>() : "");
    cfg.data_dir = env_or("EDGEKV_DATA_DIR", j.at("data_dir").get<std::string>());
    cfg.storage.fsync_on_commit =
        j.contains("fsync") ? j["fsync"].get<bool>() : true;
    if (j.contains("learners")) {
      for (const auto& l : j["learners"]) {
        cfg.learner_endpoints.push_back(l.get<std::string>());
      }
    }
    if (j.contains("backup_of")) {
      for (const auto& g : j["backup_of"]) {
        cfg.backup_of.push_back(g.get<std::string>());
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: invalid config " << config_path << ": " << e.what()
              << "\n";
    return 2;
  }

  try {
    TcpTransport transport;
    EdgeNodeProcess process(transport, cfg, Rng(uint64_t(::getpid())));
    process.start();
    log_info("node", cfg.node_id + " serving group " + cfg.group_id);
    wait_for_signal();
    process.stop();  // WAL contents are flushed per write
    transport.stop();
  } catch (const std::exception& e) {
    std::string what = e.what();
    std::cerr << "error: " << what << "\n";
    return what.find("bind") != std::string::npos ? 3 : 2;
  }
  return 0;
}

int edgekv_gateway_main(const std::string& config_path) {
  int rc = 0;
  Json j = read_json_file(config_path, rc);
  if (rc) return rc;

  RingSpace ring(64);
  GatewayNodeConfig cfg;
  try {
    cfg.name = j.at("name").get<std::string>();
    cfg.endpoint = env_or("EDGEKV_ENDPOINT", j.at("endpoint").get<std::string>());
    cfg.group_id = j.at("group").get<std::string>();
    for (const auto& p : j.at("peers")) {
      cfg.group_peers.push_back(p.get<std::string>());
    }
    if (j.contains("leader_hint")) {
      cfg.group_leader_hint = j["leader_hint"].get<std::string>();
    }
    if (j.contains("vnodes")) cfg.vnode_count = j["vnodes"].get<size_t>();
    if (j.contains("cache_capacity")) {
      cfg.cache_capacity = j["cache_capacity"].get<size_t>();
    }
    cfg.overlay.stabilize_interval = 500 * kTicksPerMs;  // real time
    if (j.contains("bootstrap")) {
      NodeRef ref;
      ref.physical = j["bootstrap"].at("name").get<std::string>();
      ref.address = j["bootstrap"].at("endpoint").get<std::string>();
      ref.id = ring.hash_id(ref.physical + "#0");
      cfg.bootstrap = ref;
    }
    if (j.contains("gateways")) {
      // Full gateway list: enables owner->group mapping and the static
      // backup map (successor rule over hashed vnode names).
      ClusterTopology mini;
      for (const auto& gj : j["gateways"]) {
        TopologyNode n;
        n.name = gj.at("name").get<std::string>();
        n.endpoint = gj.at("endpoint").get<std::string>();
        n.group = gj.at("group").get<std::string>();
        n.role = NodeRole::Gateway;
        n.vnodes = gj.contains("vnodes") ? gj["vnodes"].get<size_t>() : 1;
        cfg.group_of_gateway[n.name] = n.group;
        cfg.gateway_of_group[n.group] = n.endpoint;
        mini.nodes.push_back(std::move(n));
      }
      cfg.backup_of_group = compute_backup_map(mini, ring);
      cfg.static_ring = compute_static_ring(mini, ring);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: invalid config " << config_path << ": " << e.what()
              << "\n";
    return 2;
  }

  try {
    TcpTransport transport;
    GatewayProcess process(transport, ring, cfg, Rng(uint64_t(::getpid())));
    process.start();
    log_info("gateway", cfg.name + " serving group " + cfg.group_id);
    wait_for_signal();
    process.stop();
    transport.stop();
  } catch (const std::exception& e) {
    std::string what = e.what();
    std::cerr << "error: " << what << "\n";
    return what.find("bind") != std::string::npos ? 3 : 2;
  }
  return 0;
}

int edgekv_client_main(const std::string& op, const std::string& endpoint,
                       const std::string& scope_str, const std::string& mode_str,
                       const std::string& key, const std::string& value) {
  if (op != "get" && op != "put" && op != "del") {
    std::cerr << "error: op must be get, put or del\n";
    return 2;
  }
  if (op == "put" && value.empty()) {
    std::cerr << "error: put requires a value\n";
    return 2;
  }
  Scope scope = scope_str == "global" ? Scope::Global : Scope::Local;
  ReadMode mode =
      mode_str == "ser" ? ReadMode::Serializable : ReadMode::Linearizable;

  TcpTransport transport;
  transport.register_node("127.0.0.1:0", NodeRole::Client, "cli",
                          [](const Envelope&) {});
  std::string local = transport.local_endpoint("127.0.0.1:0");
  // Request ids must be unique per client identity; one-shot invocations
  // therefore derive a fresh session name from the pid and clock.
  std::string session_name =
      "cli-" + std::to_string(::getpid()) + "-" +
      std::to_string(
          std::chrono::steady_clock::now().time_since_epoch().count() &
          0xffffff) +
      "#0";
  ClientSession session(transport, local, session_name, endpoint);

  std::promise<ClientOpResult> promise;
  auto future = promise.get_future();
  auto cb = [&](const ClientOpResult& res) { promise.set_value(res); };

  if (op == "get") {
    session.get(scope, key, mode, cb);
  } else if (op == "put") {
    session.put(scope, key, value, cb);
  } else {
    session.del(scope, key, cb);
  }

  if (future.wait_for(std::chrono::seconds(30)) != std::future_status::ready) {
    std::cerr << "timeout\n";
    transport.stop();
    return 4;
  }
  ClientOpResult res = future.get();
  transport.stop();

  switch (res.status) {
    case Status::Ok:
      if (op == "get") {
        std::cout << (res.value ? *res.value : "") << "\n";
      } else {
        std::cout << "ok\n";
      }
      return 0;
    case Status::NotFound:
      std::cerr << "not found\n";
      return 1;
    case Status::Invalid:
      std::cerr << "invalid argument\n";
      return 2;
    default:
      std::cerr << to_string(res.status) << "\n";
      return 4;
  }
}

int edgekv_bench_main(const std::string& spec_path, const std::string& topo_path,
                      const std::string& out_dir) {
  int rc = 0;
  Json spec_json = read_json_file(spec_path, rc);
  if (rc) return rc;

  ClusterTopology topo;
  try {
    topo = load_topology_file(topo_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  if (topo.transport_kind != "sim") {
    std::cerr << "error: bench requires a sim-transport topology\n";
    return 2;
  }
  try {
    return run_bench_cells(topo, spec_json, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

int edgekv_sim_main(const std::string& scenario_path) {
  int rc = 0;
  Json scenario = read_json_file(scenario_path, rc);
  if (rc) return rc;

  try {
    ClusterTopology topo;
    if (scenario.contains("topology") && scenario["topology"].is_string()) {
      fs::path base = fs::path(scenario_path).parent_path();
      topo = load_topology_file(
          (base / scenario["topology"].get<std::string>()).string());
    } else if (scenario.contains("topology")) {
      topo = parse_topology(scenario["topology"]);
    } else {
      std::cerr << "error: scenario needs a topology\n";
      return 2;
    }
    if (scenario.contains("seed")) {
      topo.seed = scenario["seed"].get<uint64_t>();
    }
    std::string out_dir = scenario.contains("out")
                              ? scenario["out"].get<std::string>()
                              : "sim-out";
    return run_bench_cells(topo, scenario, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
