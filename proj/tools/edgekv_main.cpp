#include <CLI11.hpp>

#include "edgekv/log.hpp"

int edgekv_node_main(const std::string& config_path);
int edgekv_gateway_main(const std::string& config_path);
int edgekv_client_main(const std::string& op, const std::string& endpoint,
                       const std::string& scope, const std::string& mode,
                       const std::string& key, const std::string& value);
int edgekv_bench_main(const std::string& spec_path, const std::string& topo_path,
                      const std::string& out_dir);
int edgekv_sim_main(const std::string& scenario_path);

int main(int argc, char** argv) {
  if (edgekv::log_level() > edgekv::LogLevel::Info) {
    edgekv::set_log_level(edgekv::LogLevel::Info);
  }

  CLI::App app{"EdgeKV: two-tier edge key-value store"};
  app.require_subcommand(1);

  std::string config_path;
  auto* node = app.add_subcommand("node", "run an edge storage node");
  node->add_option("--config", config_path, "node config file (JSON)")
      ->required();

  std::string gw_config_path;
  auto* gateway = app.add_subcommand("gateway", "run a gateway node");
  gateway->add_option("--config", gw_config_path, "gateway config file (JSON)")
      ->required();

  auto* client = app.add_subcommand("client", "issue a single operation");
  std::string op, endpoint, scope = "local", mode = "lin", key, value;
  client->add_option("op", op, "get | put | del")->required();
  client->add_option("key", key, "key")->required();
  client->add_option("value", value, "value (put only)");
  client->add_option("--endpoint", endpoint, "edge node host:port")->required();
  client->add_option("--scope", scope, "local | global");
  client->add_option("--mode", mode, "lin | ser (reads)");

  auto* bench = app.add_subcommand("bench", "run the workload benchmark");
  std::string spec_path, topo_path, out_dir = "bench-out";
  bench->add_option("--spec", spec_path, "workload spec (JSON)")->required();
  bench->add_option("--topology", topo_path, "topology file (JSON)")->required();
  bench->add_option("--out", out_dir, "output directory");

  auto* sim = app.add_subcommand("sim", "run a simulation scenario");
  std::string scenario_path;
  sim->add_option("--scenario", scenario_path, "scenario file (JSON)")
      ->required();

  CLI11_PARSE(app, argc, argv);

  if (*node) return edgekv_node_main(config_path);
  if (*gateway) return edgekv_gateway_main(gw_config_path);
  if (*client) return edgekv_client_main(op, endpoint, scope, mode, key, value);
  if (*bench) return edgekv_bench_main(spec_path, topo_path, out_dir);
  if (*sim) return edgekv_sim_main(scenario_path);
  return 2;
}
