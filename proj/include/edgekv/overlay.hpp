#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "edgekv/ring.hpp"
#include "edgekv/rng.hpp"
#include "edgekv/transport.hpp"
#include "edgekv/types.hpp"

namespace edgekv {

struct OverlayConfig {
  Ticks stabilize_interval = 50 * kTicksPerMs;
  size_t successor_list_size = 3;
  Ticks hop_timeout = 3000 * kTicksPerMs;  // per-hop forwarding deadline
  // Failure-detection deadline for the periodic GetPredecessor probe;
  // short so a dead successor is skipped within a few periods.
  Ticks maintenance_timeout = 100 * kTicksPerMs;
};

struct LookupResult {
  Status status = Status::LookupFailed;
  NodeRef node;
  uint32_t hops = 0;
  std::vector<std::string> route;  // ids visited, on failure
};
using LookupCallback = std::function<void(const LookupResult&)>;

// One overlay identity (virtual node). A physical gateway hosts several of
// these behind a single endpoint; incoming chord RPCs carry a `vnode`
// field so the host can dispatch. Lookups are recursive: every hop
// forwards toward the target and relays the answer back.
class ChordVnode {
 public:
  ChordVnode(Transport& transport, RingSpace ring, NodeRef self,
             OverlayConfig config = {});
  ~ChordVnode();

  // Starts a fresh ring containing only this node.
  void create();
  // Joins via any live member; fails with JoinFailed/IdCollision.
  void join(const NodeRef& bootstrap, std::function<void(Status)> cb);
  void stop();

  // Resolves the node owning `id` (its successor on the ring).
  void find_successor(Identifier id, LookupCallback cb);
  // Resource-finder entry point; identical routing.
  void locate(Identifier key_hash, LookupCallback cb) {
    find_successor(key_hash, std::move(cb));
  }

  NodeRef closest_preceding_node(Identifier id) const;

  // Periodic maintenance, normally timer-driven.
  void stabilize();
  void fix_fingers();
  void notify_local(const NodeRef& candidate);

  // Wire handlers (dispatched by the hosting process).
  void handle_find_successor(const Envelope& env);
  void handle_get_predecessor(const Envelope& env);
  void handle_notify(const Envelope& env);

  const NodeRef& self() const { return self_; }
  const std::optional<NodeRef>& predecessor() const { return predecessor_; }
  const std::vector<NodeRef>& successors() const { return successors_; }
  const std::vector<std::optional<NodeRef>>& fingers() const { return fingers_; }
  bool joined() const { return joined_; }
  bool isolated() const { return isolated_; }
  size_t routing_state_size() const;

  void pause_maintenance();
  void resume_maintenance();

 private:
  void arm_stabilize_timer();
  void adopt_successor_list(const NodeRef& head, const std::vector<NodeRef>& rest);
  void drop_successor_head();
  std::vector<NodeRef> candidates_between(Identifier from, Identifier to) const;
  void forward_lookup(Identifier target, uint32_t hops,
                      std::vector<std::string> route,
                      std::vector<NodeRef> candidates, LookupCallback cb);
  bool owns(Identifier id) const;

  Transport& transport_;
  RingSpace ring_;
  NodeRef self_;
  OverlayConfig config_;

  bool joined_ = false;
  bool isolated_ = false;
  bool running_ = false;
  bool maintenance_paused_ = false;
  bool stabilize_inflight_ = false;
  std::optional<NodeRef> predecessor_;
  std::vector<NodeRef> successors_;
  std::vector<std::optional<NodeRef>> fingers_;  // slot i-1 targets finger_start(i)
  unsigned next_finger_ = 1;
  TimerId stabilize_timer_ = 0;
};

}  // namespace edgekv
