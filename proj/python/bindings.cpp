#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "edgekv/cluster.hpp"
#include "edgekv/ring.hpp"
#include "edgekv/topology.hpp"
#include "edgekv/wire.hpp"
#include "edgekv/workload.hpp"

namespace py = pybind11;
using namespace edgekv;

namespace {

Json parse_json_arg(const std::string& text, const char* what) {
  Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded()) {
    throw std::invalid_argument(std::string(what) + " is not valid JSON");
  }
  return j;
}

Scope scope_arg(const std::string& s) {
  if (s == "local") return Scope::Local;
  if (s == "global") return Scope::Global;
  throw std::invalid_argument("scope must be 'local' or 'global'");
}

ReadMode mode_arg(const std::string& s) {
  if (s == "lin") return ReadMode::Linearizable;
  if (s == "ser") return ReadMode::Serializable;
  throw std::invalid_argument("mode must be 'lin' or 'ser'");
}

// Python-facing wrapper hosting a whole simulated cluster. Operations are
// synchronous: each call drives the virtual clock until its completion.
class PySimCluster {
 public:
  explicit PySimCluster(const std::string& topology_json) {
    ClusterTopology topo = parse_topology(parse_json_arg(topology_json, "topology"));
    cluster_ = std::make_unique<SimCluster>(std::move(topo));
  }

  bool boot() { return cluster_->boot(); }

  py::dict op_result(const ClientOpResult& res) {
    py::dict out;
    out["status"] = std::string(to_string(res.status));
    if (res.value) {
      out["value"] = py::bytes(*res.value);
    } else {
      out["value"] = py::none();
    }
    out["latency_ms"] = ticks_to_ms(res.latency);
    out["attempts"] = res.attempts;
    return out;
  }

  py::dict put(const std::string& client, const std::string& scope,
               const py::bytes& key, const py::bytes& value,
               double timeout_s) {
    ClientOpResult out;
    bool done = false;
    session(client)->put(scope_arg(scope), std::string(key), std::string(value),
                         [&](const ClientOpResult& r) {
                           out = r;
                           done = true;
                         });
    cluster_->net().run_until([&] { return done; },
                              Ticks(timeout_s * 100'000));
    if (!done) throw std::runtime_error("operation did not complete in sim time");
    return op_result(out);
  }

  py::dict get(const std::string& client, const std::string& scope,
               const py::bytes& key, const std::string& mode, double timeout_s) {
    ClientOpResult out;
    bool done = false;
    session(client)->get(scope_arg(scope), std::string(key), mode_arg(mode),
                         [&](const ClientOpResult& r) {
                           out = r;
                           done = true;
                         });
    cluster_->net().run_until([&] { return done; },
                              Ticks(timeout_s * 100'000));
    if (!done) throw std::runtime_error("operation did not complete in sim time");
    return op_result(out);
  }

  py::dict del_(const std::string& client, const std::string& scope,
                const py::bytes& key, double timeout_s) {
    ClientOpResult out;
    bool done = false;
    session(client)->del(scope_arg(scope), std::string(key),
                         [&](const ClientOpResult& r) {
                           out = r;
                           done = true;
                         });
    cluster_->net().run_until([&] { return done; },
                              Ticks(timeout_s * 100'000));
    if (!done) throw std::runtime_error("operation did not complete in sim time");
    return op_result(out);
  }

  std::string run_bench(const std::string& workload_json) {
    WorkloadSpec spec = parse_workload(parse_json_arg(workload_json, "workload"));
    BenchRunner runner(*cluster_, spec);
    if (!runner.load_phase()) {
      Json fail;
      fail["failed"] = true;
      fail["load_errors"] = runner.load_errors();
      return fail.dump();
    }
    return runner.run_phase().to_json().dump();
  }

  void advance_ms(double ms) { cluster_->net().advance_clock(ms_to_ticks(ms)); }
  double now_ms() const { return ticks_to_ms(cluster_->net().now()); }
  std::string trace_csv() const { return cluster_->net().trace_csv(); }
  uint64_t messages_delivered() const { return cluster_->net().delivered_total(); }

  std::map<std::string, std::string> group_state_hashes(const std::string& group) {
    return cluster_->group_state_hashes(group);
  }
  std::map<std::string, std::string> backup_map() const {
    return cluster_->backup_map();
  }
  void partition_group(const std::string& group) {
    cluster_->partition_group(group);
  }
  void heal() { cluster_->heal(); }
  void crash_edge(const std::string& name) { cluster_->crash_edge(name); }
  void restart_edge(const std::string& name) { cluster_->restart_edge(name); }
  bool overlay_converged() const { return cluster_->overlay_ring_converged(); }

 private:
  ClientSession* session(const std::string& client) {
    auto it = sessions_.find(client);
    if (it != sessions_.end()) return it->second;
    ClientSession* s = cluster_->make_session(client, 9000 + sessions_.size());
    if (!s) throw std::invalid_argument("unknown client node " + client);
    sessions_[client] = s;
    return s;
  }

  std::unique_ptr<SimCluster> cluster_;
  std::map<std::string, ClientSession*> sessions_;
};

std::string run_scenario_json(const std::string& scenario_json) {
  Json scenario = parse_json_arg(scenario_json, "scenario");
  if (!scenario.contains("topology") || !scenario["topology"].is_object()) {
    throw std::invalid_argument("scenario needs an inline topology object");
  }
  ClusterTopology topo = parse_topology(scenario["topology"]);
  if (scenario.contains("seed")) topo.seed = scenario["seed"].get<uint64_t>();
  WorkloadSpec spec = parse_workload(
      scenario.contains("workload") ? scenario["workload"] : Json::object());

  Json out;
  if (scenario.contains("sweep")) {
    const Json& sw = scenario["sweep"];
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
    SweepResult result = run_sweep(topo, spec, parameter, values, profiles);
    Json cells = Json::array();
    for (const auto& cell : result.cells) {
      Json c;
      c["profile"] = cell.profile;
      c["value"] = cell.value;
      c["report"] = cell.report.to_json();
      cells.push_back(std::move(c));
    }
    out["cells"] = std::move(cells);
    out["csv"] = result.to_csv();
  } else {
    SimCluster cluster(topo);
    if (!cluster.boot()) throw std::runtime_error("cluster failed to boot");
    BenchRunner runner(cluster, spec);
    if (!runner.load_phase()) throw std::runtime_error("load phase failed");
    out["report"] = runner.run_phase().to_json();
  }
  return out.dump();
}

}  // namespace

PYBIND11_MODULE(_edgekv, m) {
  m.doc() = "EdgeKV core bindings: ring arithmetic, wire codec, and the "
            "deterministic cluster simulator";

  m.def(
      "hash_id",
      [](const py::bytes& name, unsigned bits) {
        return RingSpace(bits).hash_id(std::string(name)).value;
      },
      py::arg("name"), py::arg("bits") = 64,
      "First `bits` bits (big-endian) of SHA-256(name)");

  m.def(
      "finger_start",
      [](uint64_t n, unsigned i, unsigned bits) {
        return RingSpace(bits).finger_start(Identifier{n}, i).value;
      },
      py::arg("n"), py::arg("i"), py::arg("bits") = 64,
      "(n + 2^(i-1)) mod 2^bits");

  m.def(
      "in_interval",
      [](uint64_t x, uint64_t from, uint64_t to, bool closed_left,
         bool closed_right, unsigned bits) {
        return RingSpace(bits).in_interval(
            Identifier{x}, RingInterval{{from}, {to}, closed_left, closed_right});
      },
      py::arg("x"), py::arg("from_id"), py::arg("to_id"),
      py::arg("closed_left") = false, py::arg("closed_right") = false,
      py::arg("bits") = 64, "Ring interval membership with wraparound");

  m.def(
      "id_to_hex",
      [](uint64_t id, unsigned bits) {
        return RingSpace(bits).to_hex(Identifier{id});
      },
      py::arg("id"), py::arg("bits") = 64);

  m.def(
      "encode_frame",
      [](uint64_t id, const std::string& kind, const std::string& payload_json,
         const std::string& reply_to) {
        auto k = kind_from_string(kind);
        if (!k) throw std::invalid_argument("unknown message kind " + kind);
        Envelope env;
        env.id = id;
        env.kind = *k;
        env.payload = parse_json_arg(payload_json, "payload");
        env.reply_to = reply_to;
        return py::bytes(encode_frame(env));
      },
      py::arg("id"), py::arg("kind"), py::arg("payload_json"),
      py::arg("reply_to") = "",
      "Length-prefixed JSON frame for one envelope");

  m.def(
      "decode_frame",
      [](const py::bytes& data) {
        DecodeResult res = decode_frame(std::string(data));
        py::dict out;
        switch (res.status) {
          case DecodeStatus::Ok: out["status"] = "ok"; break;
          case DecodeStatus::NeedMore: out["status"] = "need_more"; break;
          case DecodeStatus::Error: out["status"] = "error"; break;
        }
        out["consumed"] = res.consumed;
        if (res.status == DecodeStatus::Ok) {
          out["id"] = res.envelope.id;
          out["kind"] = std::string(to_string(res.envelope.kind));
          out["payload_json"] = res.envelope.payload.dump();
          out["reply_to"] = res.envelope.reply_to;
        } else {
          out["error"] = res.error;
        }
        return out;
      },
      py::arg("data"), "Decode one frame; never throws on malformed input");

  m.def(
      "compute_backup_map",
      [](const std::string& topology_json) {
        ClusterTopology topo =
            parse_topology(parse_json_arg(topology_json, "topology"));
        return compute_backup_map(topo, RingSpace(64));
      },
      py::arg("topology_json"),
      "Successor-rule backup assignment from hashed vnode names");

  m.def("run_scenario", &run_scenario_json, py::arg("scenario_json"),
        "Run a bench scenario (optionally a sweep); returns a JSON string");

  py::class_<PySimCluster>(m, "SimCluster",
                           "A whole simulated cluster in-process")
      .def(py::init<const std::string&>(), py::arg("topology_json"))
      .def("boot", &PySimCluster::boot)
      .def("put", &PySimCluster::put, py::arg("client"), py::arg("scope"),
           py::arg("key"), py::arg("value"), py::arg("timeout_s") = 120.0)
      .def("get", &PySimCluster::get, py::arg("client"), py::arg("scope"),
           py::arg("key"), py::arg("mode") = "lin", py::arg("timeout_s") = 120.0)
      .def("delete", &PySimCluster::del_, py::arg("client"), py::arg("scope"),
           py::arg("key"), py::arg("timeout_s") = 120.0)
      .def("run_bench", &PySimCluster::run_bench, py::arg("workload_json"))
      .def("advance_ms", &PySimCluster::advance_ms, py::arg("ms"))
      .def("now_ms", &PySimCluster::now_ms)
      .def("trace_csv", &PySimCluster::trace_csv)
      .def("messages_delivered", &PySimCluster::messages_delivered)
      .def("group_state_hashes", &PySimCluster::group_state_hashes,
           py::arg("group"))
      .def("backup_map", &PySimCluster::backup_map)
      .def("partition_group", &PySimCluster::partition_group, py::arg("group"))
      .def("heal", &PySimCluster::heal)
      .def("crash_edge", &PySimCluster::crash_edge, py::arg("name"))
      .def("restart_edge", &PySimCluster::restart_edge, py::arg("name"))
      .def("overlay_converged", &PySimCluster::overlay_converged);
}
