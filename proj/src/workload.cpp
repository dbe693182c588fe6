#include "edgekv/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "edgekv/log.hpp"
#include "edgekv/wire.hpp"

namespace edgekv {

WorkloadSpec parse_workload(const Json& j) {
  WorkloadSpec spec;
  if (!j.is_object()) throw std::runtime_error("workload spec must be an object");
  auto get_num = [&](const char* name, double fallback) {
    return j.contains(name) ? j[name].get<double>() : fallback;
  };
  spec.record_count = uint64_t(get_num("record_count", double(spec.record_count)));
  spec.operation_count =
      uint64_t(get_num("operation_count", double(spec.operation_count)));
  spec.read_proportion = get_num("read_proportion", spec.read_proportion);
  spec.update_proportion = get_num("update_proportion", spec.update_proportion);
  if (std::abs(spec.read_proportion + spec.update_proportion - 1.0) > 1e-9) {
    throw std::runtime_error("read_proportion + update_proportion must be 1");
  }
  if (j.contains("distribution")) {
    spec.distribution = j["distribution"].get<std::string>();
    if (spec.distribution != "uniform" && spec.distribution != "hotspot" &&
        spec.distribution != "latest") {
      throw std::runtime_error("unknown distribution " + spec.distribution);
    }
  }
  spec.hotspot_data_fraction =
      get_num("hotspot_data_fraction", spec.hotspot_data_fraction);
  spec.hotspot_op_fraction =
      get_num("hotspot_op_fraction", spec.hotspot_op_fraction);
  spec.latest_skew = get_num("latest_skew", spec.latest_skew);
  spec.global_proportion = get_num("global_proportion", spec.global_proportion);
  if (spec.global_proportion < 0 || spec.global_proportion > 1) {
    throw std::runtime_error("global_proportion must be in [0, 1]");
  }
  spec.value_size = size_t(get_num("value_size", double(spec.value_size)));
  spec.seed = uint64_t(get_num("seed", double(spec.seed)));
  if (j.contains("read_mode")) {
    spec.read_mode = j["read_mode"].get<std::string>() == "ser"
                         ? ReadMode::Serializable
                         : ReadMode::Linearizable;
  }
  return spec;
}

WorkloadSpec load_workload_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open workload file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  Json j = Json::parse(buf.str(), nullptr, false);
  if (j.is_discarded()) {
    throw std::runtime_error("workload file " + path + " is not valid JSON");
  }
  return parse_workload(j);
}

KeyChooser::KeyChooser(const WorkloadSpec& spec)
    : record_count_(std::max<uint64_t>(spec.record_count, 1)),
      distribution_(spec.distribution),
      hotspot_op_fraction_(spec.hotspot_op_fraction),
      hotset_size_(std::max<uint64_t>(
          uint64_t(double(record_count_) * spec.hotspot_data_fraction), 1)),
      theta_(spec.latest_skew) {
  // Gray et al. constants for the zipfian used by the latest distribution.
  zetan_ = 0;
  for (uint64_t i = 1; i <= record_count_; i++) {
    zetan_ += 1.0 / std::pow(double(i), theta_);
  }
  double zeta2 = 1.0 + 1.0 / std::pow(2.0, theta_);
  alpha_ = 1.0 / (1.0 - theta_);
  eta_ = (1.0 - std::pow(2.0 / double(record_count_), 1.0 - theta_)) /
         (1.0 - zeta2 / zetan_);
}

uint64_t KeyChooser::zipf(Rng& rng) const {
  double u = rng.uniform01();
  double uz = u * zetan_;
  if (uz < 1.0) return 0;
  if (uz < 1.0 + std::pow(0.5, theta_)) return 1;
  uint64_t v = uint64_t(double(record_count_) *
                        std::pow(eta_ * u - eta_ + 1.0, alpha_));
  return std::min(v, record_count_ - 1);
}

uint64_t KeyChooser::next_index(Rng& rng) const {
  if (distribution_ == "hotspot") {
    if (rng.uniform01() < hotspot_op_fraction_) {
      return rng.uniform(0, hotset_size_ - 1);
    }
    if (hotset_size_ >= record_count_) return rng.uniform(0, record_count_ - 1);
    return rng.uniform(hotset_size_, record_count_ - 1);
  }
  if (distribution_ == "latest") {
    // Most recently inserted keys (highest index) are the most popular.
    return record_count_ - 1 - zipf(rng);
  }
  return rng.uniform(0, record_count_ - 1);
}

bool KeyChooser::in_hotset(uint64_t index) const {
  return index < hotset_size_;
}

std::string KeyChooser::key_name(uint64_t index) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "user%010llu",
                static_cast<unsigned long long>(index));
  return buf;
}

namespace {

std::string make_value(uint64_t seed, uint64_t index, uint64_t version,
                       size_t size) {
  Rng rng(seed ^ (index * 0x9e3779b97f4a7c15ull) ^ version);
  std::string out;
  out.resize(size);
  size_t i = 0;
  while (i < size) {
    uint64_t word = rng.next();
    for (int b = 0; b < 8 && i < size; b++, i++) {
      out[i] = char(word >> (8 * b));
    }
  }
  return out;
}

LatencyStats stats_from(std::vector<double>& ms) {
  LatencyStats out;
  out.count = ms.size();
  if (ms.empty()) return out;
  std::sort(ms.begin(), ms.end());
  double sum = 0;
  for (double v : ms) sum += v;
  out.mean_ms = sum / double(ms.size());
  auto pct = [&](double p) {
    size_t idx = size_t(p * double(ms.size() - 1) + 0.5);
    return ms[std::min(idx, ms.size() - 1)];
  };
  out.p50_ms = pct(0.50);
  out.p95_ms = pct(0.95);
  out.p99_ms = pct(0.99);
  out.max_ms = ms.back();
  return out;
}

Json stats_to_json(const LatencyStats& s) {
  Json j;
  j["count"] = s.count;
  j["mean_ms"] = s.mean_ms;
  j["p50_ms"] = s.p50_ms;
  j["p95_ms"] = s.p95_ms;
  j["p99_ms"] = s.p99_ms;
  j["max_ms"] = s.max_ms;
  return j;
}

}  // namespace

Json BenchReport::to_json() const {
  Json j;
  j["failed"] = failed;
  j["ops_attempted"] = ops_attempted;
  j["ops_succeeded"] = ops_succeeded;
  j["errors"] = errors;
  j["error_rate"] = error_rate;
  j["duration_s"] = duration_s;
  j["throughput_ops_s"] = throughput_ops_s;
  Json per_client = Json::object();
  for (const auto& [client, tput] : per_client_throughput) {
    per_client[client] = tput;
  }
  j["per_client_throughput"] = per_client;
  j["read_local"] = stats_to_json(read_local);
  j["read_global"] = stats_to_json(read_global);
  j["update_local"] = stats_to_json(update_local);
  j["update_global"] = stats_to_json(update_global);
  j["reads"] = stats_to_json(reads);
  j["updates"] = stats_to_json(updates);
  j["all"] = stats_to_json(all);
  j["messages_delivered"] = messages_delivered;
  j["mean_lookup_hops"] = mean_lookup_hops;
  return j;
}

struct BenchRunner::SessionDriver {
  std::string client;
  ClientSession* session = nullptr;
  Rng rng{0};
  uint64_t remaining = 0;
  bool done = false;

  struct Sample {
    bool is_read;
    Scope scope;
    Status status;
    double latency_ms;
  };
  std::vector<Sample> samples;
  uint64_t failures = 0;
};

BenchRunner::BenchRunner(SimCluster& cluster, WorkloadSpec spec)
    : cluster_(cluster), spec_(std::move(spec)), chooser_(spec_) {}

bool BenchRunner::load_phase() {
  load_errors_.clear();
  if (spec_.record_count == 0) return true;

  struct Loader {
    ClientSession* session;
    uint64_t next;    // next record index (strided)
    uint64_t stride;
    bool local_done_for_current = false;
    bool finished = false;
  };
  std::vector<std::unique_ptr<Loader>> loaders;

  auto clients = cluster_.topology().by_role(NodeRole::Client);
  if (clients.empty()) {
    load_errors_.push_back("no clients in topology");
    return false;
  }

  size_t done_count = 0;
  std::function<void(Loader*)> issue = [&](Loader* loader) {
    if (loader->next >= spec_.record_count) {
      if (!loader->finished) {
        loader->finished = true;
        done_count++;
      }
      return;
    }
    uint64_t idx = loader->next;
    std::string key = KeyChooser::key_name(idx);
    std::string value = make_value(spec_.seed, idx, 0, spec_.value_size);
    Scope scope = loader->local_done_for_current ? Scope::Global : Scope::Local;
    loader->session->put(scope, key, value,
                         [&, loader, idx](const ClientOpResult& res) {
                           if (res.status != Status::Ok) {
                             load_errors_.push_back(
                                 "load failed at record " + std::to_string(idx) +
                                 " (" + to_string(res.status) + ")");
                             if (!loader->finished) {
                               loader->finished = true;
                               done_count++;
                             }
                             return;
                           }
                           if (loader->local_done_for_current) {
                             loader->local_done_for_current = false;
                             loader->next += loader->stride;
                           } else {
                             loader->local_done_for_current = true;
                           }
                           issue(loader);
                         });
  };

  for (const auto* client : clients) {
    size_t sessions = std::max<size_t>(client->sessions, 1);
    for (size_t s = 0; s < sessions; s++) {
      auto loader = std::make_unique<Loader>();
      loader->session = cluster_.make_session(client->name, s);
      loader->next = s;
      loader->stride = sessions;
      if (loader->next >= spec_.record_count) {
        loader->finished = true;
        done_count++;
      }
      loaders.push_back(std::move(loader));
    }
  }

  size_t total = loaders.size();
  for (auto& loader : loaders) {
    if (!loader->finished) issue(loader.get());
  }
  // Generous deadline: dual-copy load is sequential per session.
  Ticks deadline = Ticks(spec_.record_count + 10) * 2 * 200 * kTicksPerMs /
                       std::max<size_t>(loaders.size() / clients.size(), 1) +
                   60'000 * kTicksPerMs;
  bool finished = cluster_.net().run_until(
      [&] { return done_count == total; }, deadline);
  if (!finished) load_errors_.push_back("load phase deadline exceeded");
  return finished && load_errors_.empty();
}

BenchReport BenchRunner::run_phase() {
  std::vector<std::unique_ptr<SessionDriver>> drivers;
  auto clients = cluster_.topology().by_role(NodeRole::Client);

  size_t done_count = 0;
  std::function<void(SessionDriver*)> issue = [&](SessionDriver* driver) {
    if (driver->remaining == 0) {
      if (!driver->done) {
        driver->done = true;
        done_count++;
      }
      return;
    }
    driver->remaining--;
    bool is_read = driver->rng.uniform01() < spec_.read_proportion;
    Scope scope = driver->rng.uniform01() < spec_.global_proportion
                      ? Scope::Global
                      : Scope::Local;
    uint64_t idx = chooser_.next_index(driver->rng);
    std::string key = KeyChooser::key_name(idx);

    auto record = [&, driver, is_read, scope](const ClientOpResult& res) {
      bool success = res.status == Status::Ok || res.status == Status::NotFound;
      driver->samples.push_back({is_read, scope, res.status,
                                 ticks_to_ms(res.latency)});
      if (!success) driver->failures++;
      issue(driver);
    };

    if (is_read) {
      driver->session->get(scope, key, spec_.read_mode, record);
    } else {
      std::string value =
          make_value(spec_.seed, idx, driver->rng.next(), spec_.value_size);
      driver->session->put(scope, key, value, record);
    }
  };

  size_t session_counter = 0;
  for (const auto* client : clients) {
    size_t sessions = std::max<size_t>(client->sessions, 1);
    uint64_t per_session = std::max<uint64_t>(spec_.operation_count / sessions, 1);
    for (size_t s = 0; s < sessions; s++) {
      auto driver = std::make_unique<SessionDriver>();
      driver->client = client->name;
      driver->session = cluster_.make_session(client->name, 1000 + s);
      driver->rng = Rng(spec_.seed).fork("run:" + client->name + ":" +
                                         std::to_string(s));
      driver->remaining = per_session;
      drivers.push_back(std::move(driver));
      session_counter++;
    }
  }

  uint64_t msgs_before = cluster_.net().delivered_total();
  uint64_t lookups_before = 0, hops_before = 0;
  for (const auto& group : cluster_.topology().group_ids()) {
    if (const auto* gw = cluster_.topology().gateway_of(group)) {
      if (auto* process = cluster_.gateway(gw->name)) {
        lookups_before += process->stats().lookups;
        hops_before += process->stats().lookup_hops;
      }
    }
  }

  Ticks started = cluster_.net().now();
  for (auto& driver : drivers) issue(driver.get());
  cluster_.net().run_until([&] { return done_count == drivers.size(); },
                           3'600'000 * kTicksPerMs);
  Ticks ended = cluster_.net().now();

  return collect(drivers, started, ended, msgs_before, lookups_before,
                 hops_before);
}

BenchReport BenchRunner::rate_limited_run(double target_rate_ops_s,
                                          double duration_s) {
  std::vector<std::unique_ptr<SessionDriver>> drivers;
  auto clients = cluster_.topology().by_role(NodeRole::Client);

  uint64_t completions = 0;
  uint64_t issued = 0;

  for (const auto* client : clients) {
    size_t sessions = std::max<size_t>(client->sessions, 1);
    for (size_t s = 0; s < sessions; s++) {
      auto driver = std::make_unique<SessionDriver>();
      driver->client = client->name;
      driver->session = cluster_.make_session(client->name, 2000 + s);
      driver->rng = Rng(spec_.seed).fork("rate:" + client->name + ":" +
                                         std::to_string(s));
      drivers.push_back(std::move(driver));
    }
  }
  if (drivers.empty()) return BenchReport{};

  uint64_t total_ops = uint64_t(target_rate_ops_s * duration_s + 0.5);
  double interval_ticks = double(100'000) / target_rate_ops_s;

  uint64_t msgs_before = cluster_.net().delivered_total();
  Ticks started = cluster_.net().now();

  auto issue_one = [&](SessionDriver* driver) {
    bool is_read = driver->rng.uniform01() < spec_.read_proportion;
    Scope scope = driver->rng.uniform01() < spec_.global_proportion
                      ? Scope::Global
                      : Scope::Local;
    uint64_t idx = chooser_.next_index(driver->rng);
    std::string key = KeyChooser::key_name(idx);
    auto record = [&, driver, is_read, scope](const ClientOpResult& res) {
      bool success = res.status == Status::Ok || res.status == Status::NotFound;
      driver->samples.push_back({is_read, scope, res.status,
                                 ticks_to_ms(res.latency)});
      if (!success) driver->failures++;
      completions++;
    };
    if (is_read) {
      driver->session->get(scope, key, spec_.read_mode, record);
    } else {
      std::string value =
          make_value(spec_.seed, idx, driver->rng.next(), spec_.value_size);
      driver->session->put(scope, key, value, record);
    }
  };

  // Jitter-free open-loop schedule: op i fires at round(i * interval).
  const std::string& timer_host = clients.front()->endpoint;
  for (uint64_t i = 0; i < total_ops; i++) {
    Ticks at = Ticks(std::llround(double(i) * interval_ticks));
    SessionDriver* driver = drivers[i % drivers.size()].get();
    cluster_.net().schedule(timer_host, at, [&, driver] {
      issued++;
      issue_one(driver);
    });
  }

  cluster_.net().run_until(
      [&] { return issued == total_ops && completions == issued; },
      Ticks((duration_s + 120) * 100'000));
  Ticks ended = cluster_.net().now();

  return collect(drivers, started, ended, msgs_before, 0, 0);
}

BenchReport BenchRunner::collect(
    const std::vector<std::unique_ptr<SessionDriver>>& drivers, Ticks started,
    Ticks ended, uint64_t msgs_before, uint64_t lookups_before,
    uint64_t hops_before) {
  BenchReport report;
  report.duration_s = double(ended - started) / 100'000.0;

  std::vector<double> read_local, read_global, update_local, update_global;
  std::vector<double> reads, updates, all;
  std::map<std::string, std::pair<uint64_t, uint64_t>> per_client;  // ok, total

  for (const auto& driver : drivers) {
    auto& [ok_count, total_count] = per_client[driver->client];
    for (const auto& s : driver->samples) {
      report.ops_attempted++;
      total_count++;
      bool success = s.status == Status::Ok || s.status == Status::NotFound;
      if (!success) {
        report.errors++;
        continue;
      }
      ok_count++;
      report.ops_succeeded++;
      all.push_back(s.latency_ms);
      if (s.is_read) {
        reads.push_back(s.latency_ms);
        (s.scope == Scope::Local ? read_local : read_global)
            .push_back(s.latency_ms);
      } else {
        updates.push_back(s.latency_ms);
        (s.scope == Scope::Local ? update_local : update_global)
            .push_back(s.latency_ms);
      }
    }
  }

  report.error_rate = report.ops_attempted == 0
                          ? 0
                          : double(report.errors) / double(report.ops_attempted);
  report.failed = report.error_rate > 0.01;

  double tput_sum = 0;
  for (const auto& [client, counts] : per_client) {
    double tput = report.duration_s > 0
                      ? double(counts.first) / report.duration_s
                      : 0;
    report.per_client_throughput[client] = tput;
    tput_sum += tput;
  }
  report.throughput_ops_s =
      per_client.empty() ? 0 : tput_sum / double(per_client.size());

  report.read_local = stats_from(read_local);
  report.read_global = stats_from(read_global);
  report.update_local = stats_from(update_local);
  report.update_global = stats_from(update_global);
  report.reads = stats_from(reads);
  report.updates = stats_from(updates);
  report.all = stats_from(all);

  report.messages_delivered = cluster_.net().delivered_total() - msgs_before;
  uint64_t lookups = 0, hops = 0;
  for (const auto& group : cluster_.topology().group_ids()) {
    if (const auto* gw = cluster_.topology().gateway_of(group)) {
      if (auto* process = cluster_.gateway(gw->name)) {
        lookups += process->stats().lookups;
        hops += process->stats().lookup_hops;
      }
    }
  }
  lookups -= lookups_before;
  hops -= hops_before;
  report.mean_lookup_hops = lookups == 0 ? 0 : double(hops) / double(lookups);
  return report;
}

SweepResult run_sweep(const ClusterTopology& base_topology,
                      const WorkloadSpec& base_spec,
                      const std::string& parameter,
                      const std::vector<std::string>& values,
                      const std::vector<std::string>& profiles,
                      const SimClusterOptions& cluster_options) {
  SweepResult result;
  for (const auto& profile : profiles) {
    for (const auto& value : values) {
      ClusterTopology topo = base_topology;
      topo.profile_name = profile;
      topo.profile = profile == "cloud" ? TopologyProfile::cloud()
                                        : TopologyProfile::edge();
      WorkloadSpec spec = base_spec;
      bool rate_mode = false;
      double rate = 0;
      if (parameter == "globalProportion") {
        spec.global_proportion = std::stod(value);
      } else if (parameter == "distribution") {
        spec.distribution = value;
      } else if (parameter == "clients") {
        size_t sessions = std::stoul(value);
        for (auto& node : topo.nodes) {
          if (node.role == NodeRole::Client) node.sessions = sessions;
        }
      } else if (parameter == "requestRate") {
        rate_mode = true;
        rate = std::stod(value);
      } else {
        throw std::runtime_error("unknown sweep parameter " + parameter);
      }

      SweepCell cell;
      cell.profile = profile;
      cell.value = value;

      SimCluster cluster(topo, cluster_options);
      if (!cluster.boot()) {
        cell.report.failed = true;
        result.cells.push_back(std::move(cell));
        continue;
      }
      BenchRunner runner(cluster, spec);
      if (!runner.load_phase()) {
        cell.report.failed = true;
        result.cells.push_back(std::move(cell));
        continue;
      }
      cell.report =
          rate_mode ? runner.rate_limited_run(rate, 10.0) : runner.run_phase();
      result.cells.push_back(std::move(cell));
      log_info("bench", "cell " + profile + "/" + value + ": write mean " +
                            std::to_string(cell.report.updates.mean_ms) +
                            " ms, tput " +
                            std::to_string(cell.report.throughput_ops_s));
    }
  }
  return result;
}

std::string SweepResult::to_csv() const {
  std::ostringstream out;
  out << "profile,value,mean_write_ms,mean_read_ms,p95_write_ms,throughput_ops_"
         "s,error_rate,mean_lookup_hops,failed\n";
  for (const auto& cell : cells) {
    out << cell.profile << ',' << cell.value << ','
        << cell.report.updates.mean_ms << ',' << cell.report.reads.mean_ms << ','
        << cell.report.updates.p95_ms << ',' << cell.report.throughput_ops_s
        << ',' << cell.report.error_rate << ',' << cell.report.mean_lookup_hops
        << ',' << (cell.report.failed ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string SweepResult::plot_csv(const std::string& metric) const {
  std::vector<std::string> profiles;
  std::vector<std::string> values;
  for (const auto& cell : cells) {
    if (std::find(profiles.begin(), profiles.end(), cell.profile) ==
        profiles.end()) {
      profiles.push_back(cell.profile);
    }
    if (std::find(values.begin(), values.end(), cell.value) == values.end()) {
      values.push_back(cell.value);
    }
  }
  auto metric_of = [&](const BenchReport& r) {
    if (metric == "mean_write_ms") return r.updates.mean_ms;
    if (metric == "mean_read_ms") return r.reads.mean_ms;
    if (metric == "throughput_ops_s") return r.throughput_ops_s;
    if (metric == "mean_latency_ms") return r.all.mean_ms;
    return 0.0;
  };
  std::ostringstream out;
  out << "value";
  for (const auto& p : profiles) out << ',' << p;
  out << '\n';
  for (const auto& v : values) {
    out << v;
    for (const auto& p : profiles) {
      double x = 0;
      for (const auto& cell : cells) {
        if (cell.profile == p && cell.value == v) x = metric_of(cell.report);
      }
      out << ',' << x;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace edgekv
