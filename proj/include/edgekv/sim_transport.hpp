#pragma once

#include <map>
#include <memory>
#include <queue>
#include <set>
#include <unordered_map>
#include <vector>

#include "edgekv/transport.hpp"

namespace edgekv {

struct TraceEntry {
  Ticks send_tick = 0;
  Ticks deliver_tick = -1;  // -1: dropped
  std::string src;
  std::string dst;
  MessageKind kind = MessageKind::Ping;
  uint64_t id = 0;
  size_t bytes = 0;
  bool dropped = false;
};

// Deterministic in-process message-passing simulator. All nodes run as
// event handlers on a single virtual clock; execution order is a pure
// function of (topology, workload, seed).
class SimTransport : public Transport {
 public:
  explicit SimTransport(TopologyProfile profile = TopologyProfile::edge());

  // Transport interface
  Ticks now() const override { return now_; }
  void register_node(const std::string& endpoint, NodeRole role,
                     const std::string& group, MessageHandler handler) override;
  void unregister_node(const std::string& endpoint) override;
  TimerId schedule(const std::string& endpoint, Ticks delay,
                   std::function<void()> fn) override;
  void cancel_timer(TimerId id) override;
  void send(const std::string& from, const std::string& to, Envelope env) override;
  void request(const std::string& from, const std::string& to, Envelope env,
               Ticks timeout, ResponseHandler cb) override;
  void respond(const std::string& from, const Envelope& req, MessageKind kind,
               Json payload) override;

  // Clock control
  // Executes all events due within `ticks` and advances the clock.
  void advance_clock(Ticks ticks);
  // Runs events until the queue drains; returns elapsed ticks. Sets
  // horizon_exceeded() if maxTicks ran out first.
  Ticks run_until_quiescent(Ticks max_ticks);
  // Runs until pred() holds (checked after each event); false on deadline.
  bool run_until(const std::function<bool()>& pred, Ticks max_ticks);
  bool horizon_exceeded() const { return horizon_exceeded_; }

  // Fault injection
  void partition(const std::set<std::string>& a, const std::set<std::string>& b);
  void heal();
  void set_down(const std::string& endpoint, bool down);
  bool is_down(const std::string& endpoint) const;

  // Introspection
  const std::vector<TraceEntry>& trace() const { return trace_; }
  uint64_t delivered_count(MessageKind k) const;
  uint64_t delivered_total() const { return delivered_total_; }
  std::string trace_csv(size_t from_index = 0) const;

 private:
  struct NodeState {
    NodeRole role;
    std::string group;
    MessageHandler handler;
    bool down = false;
    uint64_t next_request_id = 1;
  };

  struct PendingRequest {
    ResponseHandler handler;
    TimerId timeout_timer = 0;
  };

  struct Event {
    Ticks due;
    uint64_t seq;
    std::function<void()> fn;
  };
  struct EventOrder {
    bool operator()(const Event& a, const Event& b) const {
      return a.due != b.due ? a.due > b.due : a.seq > b.seq;
    }
  };

  void push_event(Ticks due, std::function<void()> fn);
  bool blocked(const std::string& src, const std::string& dst) const;
  void deliver(const std::string& src, const std::string& dst, std::string frame,
               size_t trace_index);
  void transmit(const std::string& from, const std::string& to, const Envelope& env);

  TopologyProfile profile_;
  Ticks now_ = 0;
  uint64_t next_seq_ = 0;
  uint64_t next_timer_id_ = 1;
  bool horizon_exceeded_ = false;

  std::priority_queue<Event, std::vector<Event>, EventOrder> events_;
  std::map<std::string, NodeState> nodes_;
  std::map<std::pair<std::string, std::string>, Ticks> link_free_at_;
  std::map<std::pair<std::string, uint64_t>, PendingRequest> pending_;
  struct TimerState {
    std::string endpoint;
    bool cancelled = false;
  };
  std::unordered_map<TimerId, TimerState> timers_;
  std::vector<std::pair<std::set<std::string>, std::set<std::string>>> cuts_;

  std::vector<TraceEntry> trace_;
  std::map<MessageKind, uint64_t> delivered_by_kind_;
  uint64_t delivered_total_ = 0;
};

}  // namespace edgekv
