#pragma once

#include <map>
#include <string>
#include <vector>

#include "edgekv/cluster.hpp"
#include "edgekv/rng.hpp"

namespace edgekv {

struct WorkloadSpec {
  uint64_t record_count = 10000;
  uint64_t operation_count = 10000;  // per client, spread over its sessions
  double read_proportion = 0.5;
  double update_proportion = 0.5;
  std::string distribution = "uniform";  // uniform | hotspot | latest
  double hotspot_data_fraction = 0.2;
  double hotspot_op_fraction = 0.8;
  double latest_skew = 0.99;
  double global_proportion = 0.0;
  size_t value_size = 1024;
  uint64_t seed = 1;
  ReadMode read_mode = ReadMode::Linearizable;
};

WorkloadSpec parse_workload(const Json& j);
WorkloadSpec load_workload_file(const std::string& path);

// Key index sampler. Pure and independently testable: marginals can be
// checked without a storage system behind them.
class KeyChooser {
 public:
  KeyChooser(const WorkloadSpec& spec);

  uint64_t next_index(Rng& rng) const;
  bool in_hotset(uint64_t index) const;
  static std::string key_name(uint64_t index);

 private:
  uint64_t zipf(Rng& rng) const;

  uint64_t record_count_;
  std::string distribution_;
  double hotspot_op_fraction_;
  uint64_t hotset_size_;
  // Gray et al. zipfian constants (for "latest")
  double theta_;
  double zetan_;
  double alpha_;
  double eta_;
};

struct LatencyStats {
  uint64_t count = 0;
  double mean_ms = 0;
  double p50_ms = 0;
  double p95_ms = 0;
  double p99_ms = 0;
  double max_ms = 0;
};

struct BenchReport {
  bool failed = false;  // error rate above threshold or load aborted
  uint64_t ops_attempted = 0;
  uint64_t ops_succeeded = 0;
  uint64_t errors = 0;
  double error_rate = 0;
  double duration_s = 0;  // simulated run-phase time
  double throughput_ops_s = 0;  // per-client average
  std::map<std::string, double> per_client_throughput;
  LatencyStats read_local, read_global, update_local, update_global;
  LatencyStats reads, updates, all;
  uint64_t messages_delivered = 0;
  double mean_lookup_hops = 0;

  Json to_json() const;
};

// Drives load/run phases against a SimCluster using its client sessions.
class BenchRunner {
 public:
  BenchRunner(SimCluster& cluster, WorkloadSpec spec);

  // Writes every record twice, once Local and once Global, from every
  // client. Returns false (with a partial-load report) on any failure.
  bool load_phase();

  BenchReport run_phase();

  // Open-loop issue schedule at a fixed rate, spread over the sessions.
  BenchReport rate_limited_run(double target_rate_ops_s, double duration_s);

  const std::vector<std::string>& load_errors() const { return load_errors_; }

 private:
  struct SessionDriver;
  BenchReport collect(const std::vector<std::unique_ptr<SessionDriver>>& drivers,
                      Ticks started, Ticks ended, uint64_t msgs_before,
                      uint64_t lookups_before, uint64_t hops_before);

  SimCluster& cluster_;
  WorkloadSpec spec_;
  KeyChooser chooser_;
  std::vector<std::string> load_errors_;
};

// Parameter sweep over run_phase cells; `parameter` is one of
// globalProportion | clients | requestRate | distribution.
struct SweepCell {
  std::string profile;
  std::string value;
  BenchReport report;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::string to_csv() const;  // one row per cell
  // Plot-ready series: value column plus one column per profile.
  std::string plot_csv(const std::string& metric) const;
};

SweepResult run_sweep(const ClusterTopology& base_topology,
                      const WorkloadSpec& base_spec,
                      const std::string& parameter,
                      const std::vector<std::string>& values,
                      const std::vector<std::string>& profiles,
                      const SimClusterOptions& cluster_options = {});

}  // namespace edgekv
