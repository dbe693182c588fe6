#include "edgekv/sim_transport.hpp"

#include <cmath>
#include <sstream>

namespace edgekv {

LinkClass link_class(NodeRole a, NodeRole b) {
  auto has = [&](NodeRole r) { return a == r || b == r; };
  if (has(NodeRole::Client)) {
    return LinkClass::CliSt;  // clients only talk to storage nodes
  }
  if (a == NodeRole::Gateway && b == NodeRole::Gateway) return LinkClass::GwGw;
  if (has(NodeRole::Gateway)) return LinkClass::StGw;
  return LinkClass::StSt;
}

SimTransport::SimTransport(TopologyProfile profile) : profile_(profile) {}

void SimTransport::register_node(const std::string& endpoint, NodeRole role,
                                 const std::string& group, MessageHandler handler) {
  NodeState st;
  st.role = role;
  st.group = group;
  st.handler = std::move(handler);
  auto it = nodes_.find(endpoint);
  if (it != nodes_.end()) {
    st.next_request_id = it->second.next_request_id;  // keep ids fresh across restarts
  }
  nodes_[endpoint] = std::move(st);
}

void SimTransport::unregister_node(const std::string& endpoint) {
  for (auto& [id, t] : timers_) {
    if (t.endpoint == endpoint) t.cancelled = true;
  }
  for (auto it = pending_.begin(); it != pending_.end();) {
    if (it->first.first == endpoint) {
      it = pending_.erase(it);
    } else {
      ++it;
    }
  }
  nodes_.erase(endpoint);
}

void SimTransport::push_event(Ticks due, std::function<void()> fn) {
  events_.push(Event{due, next_seq_++, std::move(fn)});
}

TimerId SimTransport::schedule(const std::string& endpoint, Ticks delay,
                               std::function<void()> fn) {
  TimerId id = next_timer_id_++;
  timers_[id] = TimerState{endpoint, false};
  push_event(now_ + std::max<Ticks>(delay, 0),
             [this, id, fn = std::move(fn)]() {
               auto it = timers_.find(id);
               if (it == timers_.end() || it->second.cancelled) {
                 timers_.erase(id);
                 return;
               }
               std::string ep = it->second.endpoint;
               timers_.erase(it);
               auto node = nodes_.find(ep);
               if (node == nodes_.end() || node->second.down) return;
               fn();
             });
  return id;
}

void SimTransport::cancel_timer(TimerId id) {
  auto it = timers_.find(id);
  if (it != timers_.end()) it->second.cancelled = true;
}

bool SimTransport::blocked(const std::string& src, const std::string& dst) const {
  for (const auto& [a, b] : cuts_) {
    if ((a.count(src) && b.count(dst)) || (b.count(src) && a.count(dst))) {
      return true;
    }
  }
  return false;
}

void SimTransport::transmit(const std::string& from, const std::string& to,
                            const Envelope& env) {
  std::string frame = encode_frame(env);
  size_t bytes = frame.size();

  TraceEntry entry;
  entry.send_tick = now_;
  entry.src = from;
  entry.dst = to;
  entry.kind = env.kind;
  entry.id = env.id;
  entry.bytes = bytes;

  auto src_it = nodes_.find(from);
  auto dst_it = nodes_.find(to);
  if (src_it == nodes_.end() || src_it->second.down || dst_it == nodes_.end()) {
    entry.dropped = true;
    trace_.push_back(std::move(entry));
    return;
  }

  Ticks arrive;
  if (from == to) {
    arrive = now_ + 1;  // loopback between co-hosted virtual nodes
  } else {
    const LinkProfile& link =
        profile_.link(link_class(src_it->second.role, dst_it->second.role));
    // Serialization delay: bytes * 8 bits / (mbps * 1e6) seconds.
    Ticks ser = Ticks(std::ceil(double(bytes) * 0.8 / link.bandwidth_mbps));
    Ticks lat = Ticks(std::llround(link.latency_ms * kTicksPerMs));
    Ticks& free_at = link_free_at_[{from, to}];
    Ticks start = std::max(now_, free_at);
    free_at = start + ser;
    arrive = start + ser + lat;
  }

  entry.deliver_tick = arrive;
  trace_.push_back(std::move(entry));
  size_t trace_index = trace_.size() - 1;

  push_event(arrive, [this, from, to, frame = std::move(frame), trace_index]() {
    deliver(from, to, frame, trace_index);
  });
}

void SimTransport::deliver(const std::string& src, const std::string& dst,
                           std::string frame, size_t trace_index) {
  auto drop = [&] {
    trace_[trace_index].dropped = true;
    trace_[trace_index].deliver_tick = -1;
  };
  auto it = nodes_.find(dst);
  if (it == nodes_.end() || it->second.down) {
    drop();
    return;
  }
  auto src_it = nodes_.find(src);
  if (src_it != nodes_.end() && src_it->second.down) {
    drop();
    return;
  }
  if (blocked(src, dst)) {
    drop();
    return;
  }

  DecodeResult dec = decode_frame(frame);
  if (dec.status != DecodeStatus::Ok) {
    drop();  // protocol error is connection-scoped, never crashes the node
    return;
  }
  const Envelope& env = dec.envelope;
  delivered_by_kind_[env.kind]++;
  delivered_total_++;

  if (is_response_kind(env.kind)) {
    auto pend = pending_.find({dst, env.id});
    if (pend != pending_.end()) {
      ResponseHandler cb = std::move(pend->second.handler);
      cancel_timer(pend->second.timeout_timer);
      pending_.erase(pend);
      RpcResult res;
      res.ok = true;
      res.response = env;
      cb(std::move(res));
      return;
    }
    // Late or unsolicited response: fall through to the node handler only
    // for kinds that double as server-side messages; otherwise discard.
    return;
  }
  it->second.handler(env);
}

void SimTransport::send(const std::string& from, const std::string& to, Envelope env) {
  auto it = nodes_.find(from);
  if (it == nodes_.end()) return;
  if (env.id == 0) env.id = it->second.next_request_id++;
  transmit(from, to, env);
}

void SimTransport::request(const std::string& from, const std::string& to,
                           Envelope env, Ticks timeout, ResponseHandler cb) {
  auto it = nodes_.find(from);
  if (it == nodes_.end()) return;
  env.id = it->second.next_request_id++;
  env.reply_to = from;

  uint64_t id = env.id;
  TimerId timer = schedule(from, timeout, [this, from, id]() {
    auto pend = pending_.find({from, id});
    if (pend == pending_.end()) return;
    ResponseHandler handler = std::move(pend->second.handler);
    pending_.erase(pend);
    RpcResult res;
    res.ok = false;
    res.error = Status::Timeout;
    handler(std::move(res));
  });
  pending_[{from, id}] = PendingRequest{std::move(cb), timer};
  transmit(from, to, env);
}

void SimTransport::respond(const std::string& from, const Envelope& req,
                           MessageKind kind, Json payload) {
  if (req.reply_to.empty()) return;
  Envelope resp;
  resp.id = req.id;
  resp.kind = kind;
  resp.payload = std::move(payload);
  transmit(from, req.reply_to, resp);
}

void SimTransport::advance_clock(Ticks ticks) {
  Ticks deadline = now_ + ticks;
  while (!events_.empty() && events_.top().due <= deadline) {
    Event ev = events_.top();
    events_.pop();
    now_ = std::max(now_, ev.due);
    ev.fn();
  }
  now_ = deadline;
}

Ticks SimTransport::run_until_quiescent(Ticks max_ticks) {
  horizon_exceeded_ = false;
  Ticks start = now_;
  Ticks deadline = start + max_ticks;
  while (!events_.empty()) {
    if (events_.top().due > deadline) {
      horizon_exceeded_ = true;
      now_ = deadline;
      return now_ - start;
    }
    Event ev = events_.top();
    events_.pop();
    now_ = std::max(now_, ev.due);
    ev.fn();
  }
  return now_ - start;
}

bool SimTransport::run_until(const std::function<bool()>& pred, Ticks max_ticks) {
  Ticks deadline = now_ + max_ticks;
  if (pred()) return true;
  while (!events_.empty() && events_.top().due <= deadline) {
    Event ev = events_.top();
    events_.pop();
    now_ = std::max(now_, ev.due);
    ev.fn();
    if (pred()) return true;
  }
  now_ = deadline;
  return pred();
}

void SimTransport::partition(const std::set<std::string>& a,
                             const std::set<std::string>& b) {
  cuts_.emplace_back(a, b);
}

void SimTransport::heal() { cuts_.clear(); }

void SimTransport::set_down(const std::string& endpoint, bool down) {
  auto it = nodes_.find(endpoint);
  if (it != nodes_.end()) it->second.down = down;
}

bool SimTransport::is_down(const std::string& endpoint) const {
  auto it = nodes_.find(endpoint);
  return it == nodes_.end() || it->second.down;
}

uint64_t SimTransport::delivered_count(MessageKind k) const {
  auto it = delivered_by_kind_.find(k);
  return it == delivered_by_kind_.end() ? 0 : it->second;
}

std::string SimTransport::trace_csv(size_t from_index) const {
  std::ostringstream out;
  out << "send_tick,deliver_tick,src,dst,kind,id,bytes\n";
  for (size_t i = from_index; i < trace_.size(); i++) {
    const TraceEntry& e = trace_[i];
    out << e.send_tick << ',' << e.deliver_tick << ',' << e.src << ',' << e.dst
        << ',' << to_string(e.kind) << ',' << e.id << ',' << e.bytes << '\n';
  }
  return out.str();
}

}  // namespace edgekv
