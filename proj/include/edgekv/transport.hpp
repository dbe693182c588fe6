#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "edgekv/wire.hpp"

namespace edgekv {

// Virtual time. One tick is 0.01 ms so the cloud profile's 0.05 ms
// inter-node latency is representable exactly.
using Ticks = int64_t;
constexpr Ticks kTicksPerMs = 100;

inline double ticks_to_ms(Ticks t) { return double(t) / kTicksPerMs; }
inline Ticks ms_to_ticks(double ms) { return Ticks(ms * kTicksPerMs + 0.5); }

// Per-link-class delay/capacity pair.
struct LinkProfile {
  double latency_ms = 0;
  double bandwidth_mbps = 1000;
};

enum class LinkClass { CliSt, StSt, StGw, GwGw, Loopback };

// Link settings per class for one emulation setting. The edge and cloud
// presets carry the reference deployment values.
struct TopologyProfile {
  LinkProfile cli_st{5, 100};
  LinkProfile st_st{2, 1000};
  LinkProfile st_gw{2, 750};
  LinkProfile gw_gw{10, 500};

  static TopologyProfile edge() { return TopologyProfile{}; }
  static TopologyProfile cloud() {
    return TopologyProfile{{50, 100}, {0.05, 1000}, {0.05, 1000}, {0.05, 1000}};
  }

  const LinkProfile& link(LinkClass c) const {
    switch (c) {
      case LinkClass::CliSt: return cli_st;
      case LinkClass::StSt: return st_st;
      case LinkClass::StGw: return st_gw;
      case LinkClass::GwGw: return gw_gw;
      case LinkClass::Loopback: return st_st;
    }
    return st_st;
  }
};

enum class NodeRole { Client, Storage, Gateway };

LinkClass link_class(NodeRole a, NodeRole b);

struct RpcResult {
  bool ok = false;
  Status error = Status::Timeout;  // meaningful when !ok
  Envelope response;
};

using ResponseHandler = std::function<void(RpcResult)>;
using MessageHandler = std::function<void(const Envelope&)>;
using TimerId = uint64_t;

// Message delivery abstraction. Handler and timer execution is serialized
// per registered node on every implementation; nodes therefore never need
// internal locking.
class Transport {
 public:
  virtual ~Transport() = default;

  virtual Ticks now() const = 0;

  virtual void register_node(const std::string& endpoint, NodeRole role,
                             const std::string& group, MessageHandler handler) = 0;
  virtual void unregister_node(const std::string& endpoint) = 0;

  virtual TimerId schedule(const std::string& endpoint, Ticks delay,
                           std::function<void()> fn) = 0;
  virtual void cancel_timer(TimerId id) = 0;

  // Fire-and-forget message; `env.id` is assigned by the transport.
  virtual void send(const std::string& from, const std::string& to, Envelope env) = 0;

  // Correlated request; the callback fires exactly once with a response
  // or an error, on the requester's execution context.
  virtual void request(const std::string& from, const std::string& to, Envelope env,
                       Ticks timeout, ResponseHandler cb) = 0;

  // Answers `req` toward its reply_to endpoint, echoing the request id.
  virtual void respond(const std::string& from, const Envelope& req,
                       MessageKind kind, Json payload) = 0;
};

}  // namespace edgekv
