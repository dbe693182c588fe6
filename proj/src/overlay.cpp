#include "edgekv/overlay.hpp"

#include <algorithm>

#include "edgekv/log.hpp"
#include "edgekv/wire.hpp"

namespace edgekv {

ChordVnode::ChordVnode(Transport& transport, RingSpace ring, NodeRef self,
                       OverlayConfig config)
    : transport_(transport),
      ring_(ring),
      self_(std::move(self)),
      config_(config),
      fingers_(ring.bits()) {}

ChordVnode::~ChordVnode() { stop(); }

void ChordVnode::stop() {
  running_ = false;
  joined_ = false;
  if (stabilize_timer_) {
    transport_.cancel_timer(stabilize_timer_);
    stabilize_timer_ = 0;
  }
}

void ChordVnode::create() {
  successors_ = {self_};
  predecessor_.reset();
  joined_ = true;
  running_ = true;
  arm_stabilize_timer();
}

void ChordVnode::join(const NodeRef& bootstrap, std::function<void(Status)> cb) {
  Json payload;
  payload["target"] = ring_.to_hex(self_.id);
  payload["hops"] = 1;
  payload["vnode"] = ring_.to_hex(bootstrap.id);
  Envelope env;
  env.kind = MessageKind::FindSuccessor;
  env.payload = std::move(payload);
  transport_.request(
      self_.address, bootstrap.address, env, config_.hop_timeout,
      [this, cb = std::move(cb)](RpcResult res) {
        if (!res.ok) {
          cb(Status::Unavailable);  // join-failed: bootstrap unreachable
          return;
        }
        const Json& p = res.response.payload;
        if (p["status"].get<std::string>() != "ok") {
          cb(Status::LookupFailed);
          return;
        }
        auto found = node_ref_from_json(p["found"], ring_);
        if (!found) {
          cb(Status::LookupFailed);
          return;
        }
        if (found->id == self_.id) {
          cb(Status::Invalid);  // id collision: names must be unique
          return;
        }
        successors_ = {*found};
        predecessor_.reset();
        joined_ = true;
        running_ = true;
        arm_stabilize_timer();
        cb(Status::Ok);
      });
}

void ChordVnode::arm_stabilize_timer() {
  if (!running_ || maintenance_paused_) return;
  stabilize_timer_ = transport_.schedule(
      self_.address, config_.stabilize_interval, [this] {
        stabilize_timer_ = 0;
        if (!running_) return;
        stabilize();
        fix_fingers();
        arm_stabilize_timer();
      });
}

void ChordVnode::pause_maintenance() {
  maintenance_paused_ = true;
  if (stabilize_timer_) {
    transport_.cancel_timer(stabilize_timer_);
    stabilize_timer_ = 0;
  }
}

void ChordVnode::resume_maintenance() {
  maintenance_paused_ = false;
  if (running_ && !stabilize_timer_) arm_stabilize_timer();
}

size_t ChordVnode::routing_state_size() const {
  size_t n = successors_.size() + (predecessor_ ? 1 : 0);
  for (const auto& f : fingers_) {
    if (f) n++;
  }
  return n;
}

bool ChordVnode::owns(Identifier id) const {
  if (!predecessor_) return false;
  if (predecessor_->id == self_.id) return true;  // sole node
  return ring_.in_interval(id,
                           RingInterval::open_closed(predecessor_->id, self_.id));
}

std::vector<NodeRef> ChordVnode::candidates_between(Identifier from,
                                                    Identifier to) const {
  std::vector<NodeRef> refs;
  auto consider = [&](const NodeRef& ref) {
    if (ref.id == self_.id) return;
    if (!ring_.in_interval(ref.id, RingInterval::open(from, to))) return;
    for (const auto& existing : refs) {
      if (existing.id == ref.id) return;
    }
    refs.push_back(ref);
  };
  for (const auto& f : fingers_) {
    if (f) consider(*f);
  }
  for (const auto& s : successors_) consider(s);
  // Closest preceding first: sort by ring distance from `from`, descending.
  std::sort(refs.begin(), refs.end(), [&](const NodeRef& a, const NodeRef& b) {
    return ring_.distance(from, a.id) > ring_.distance(from, b.id);
  });
  return refs;
}

NodeRef ChordVnode::closest_preceding_node(Identifier id) const {
  auto refs = candidates_between(self_.id, id);
  return refs.empty() ? self_ : refs.front();
}

void ChordVnode::find_successor(Identifier id, LookupCallback cb) {
  LookupResult res;
  if (!joined_ || successors_.empty()) {
    res.status = Status::LookupFailed;
    cb(res);
    return;
  }
  if (owns(id) || successors_.front().id == self_.id) {
    res.status = Status::Ok;
    res.node = self_;
    res.hops = 0;
    cb(res);
    return;
  }
  const NodeRef& succ = successors_.front();
  if (ring_.in_interval(id, RingInterval::open_closed(self_.id, succ.id))) {
    res.status = Status::Ok;
    res.node = succ;
    res.hops = 0;
    cb(res);
    return;
  }
  auto candidates = candidates_between(self_.id, id);
  if (candidates.empty()) candidates.push_back(succ);
  forward_lookup(id, 0, {ring_.to_hex(self_.id)}, std::move(candidates),
                 std::move(cb));
}

void ChordVnode::forward_lookup(Identifier target, uint32_t hops,
                                std::vector<std::string> route,
                                std::vector<NodeRef> candidates,
                                LookupCallback cb) {
  if (hops >= uint32_t(ring_.bits())) {
    LookupResult res;
    res.status = Status::LookupFailed;
    res.hops = hops;
    res.route = std::move(route);
    cb(res);
    return;
  }
  if (candidates.empty()) {
    LookupResult res;
    res.status = Status::LookupFailed;
    res.hops = hops;
    res.route = std::move(route);
    cb(res);
    return;
  }
  NodeRef next = candidates.front();
  candidates.erase(candidates.begin());

  Json payload;
  payload["target"] = ring_.to_hex(target);
  payload["hops"] = hops + 1;
  payload["vnode"] = ring_.to_hex(next.id);
  Envelope env;
  env.kind = MessageKind::FindSuccessor;
  env.payload = std::move(payload);

  transport_.request(
      self_.address, next.address, env, config_.hop_timeout,
      [this, target, hops, route = std::move(route),
       candidates = std::move(candidates),
       cb = std::move(cb)](RpcResult rpc) mutable {
        if (!rpc.ok) {
          // Next hop unreachable: try the remaining candidates.
          forward_lookup(target, hops, std::move(route), std::move(candidates),
                         std::move(cb));
          return;
        }
        const Json& p = rpc.response.payload;
        LookupResult res;
        if (p["status"].get<std::string>() == "ok") {
          auto found = node_ref_from_json(p["found"], ring_);
          if (found) {
            res.status = Status::Ok;
            res.node = *found;
            res.hops = p["hops"].get<uint32_t>();
            cb(res);
            return;
          }
        }
        res.status = Status::LookupFailed;
        res.hops = p["hops"].get<uint32_t>();
        if (p.contains("route")) {
          for (const auto& r : p["route"]) res.route.push_back(r.get<std::string>());
        }
        cb(res);
      });
}

void ChordVnode::handle_find_successor(const Envelope& env) {
  auto target = ring_.parse_hex(env.payload["target"].get<std::string>());
  uint32_t hops = env.payload["hops"].get<uint32_t>();
  if (!target || !joined_ || successors_.empty()) {
    Json resp;
    resp["status"] = "lookup_failed";
    resp["hops"] = hops;
    transport_.respond(self_.address, env, MessageKind::FindSuccessorResp, resp);
    return;
  }

  auto answer = [&](const NodeRef& found) {
    Json resp;
    resp["status"] = "ok";
    resp["found"] = node_ref_to_json(found, ring_);
    resp["hops"] = hops;
    transport_.respond(self_.address, env, MessageKind::FindSuccessorResp, resp);
  };

  if (owns(*target) || successors_.front().id == self_.id) {
    answer(self_);
    return;
  }
  const NodeRef& succ = successors_.front();
  if (ring_.in_interval(*target, RingInterval::open_closed(self_.id, succ.id))) {
    answer(succ);
    return;
  }

  auto candidates = candidates_between(self_.id, *target);
  if (candidates.empty()) candidates.push_back(succ);
  // Relay the eventual answer back toward our requester.
  Envelope request = env;  // keep id/reply_to for the response path
  forward_lookup(*target, hops, {ring_.to_hex(self_.id)}, std::move(candidates),
                 [this, request](const LookupResult& res) {
                   Json resp;
                   resp["hops"] = res.hops;
                   if (res.status == Status::Ok) {
                     resp["status"] = "ok";
                     resp["found"] = node_ref_to_json(res.node, ring_);
                   } else {
                     resp["status"] = "lookup_failed";
                     Json route = Json::array();
                     for (const auto& r : res.route) route.push_back(r);
                     resp["route"] = std::move(route);
                   }
                   transport_.respond(self_.address, request,
                                      MessageKind::FindSuccessorResp, resp);
                 });
}

void ChordVnode::handle_get_predecessor(const Envelope& env) {
  Json resp;
  if (predecessor_) {
    resp["predecessor"] = node_ref_to_json(*predecessor_, ring_);
  }
  Json succs = Json::array();
  for (const auto& s : successors_) succs.push_back(node_ref_to_json(s, ring_));
  resp["successors"] = std::move(succs);
  transport_.respond(self_.address, env, MessageKind::GetPredecessorResp, resp);
}

void ChordVnode::notify_local(const NodeRef& candidate) {
  if (candidate.id == self_.id) return;  // self-notify guard
  if (!predecessor_ || predecessor_->id == self_.id ||
      ring_.in_interval(candidate.id,
                        RingInterval::open(predecessor_->id, self_.id))) {
    predecessor_ = candidate;
  }
}

void ChordVnode::handle_notify(const Envelope& env) {
  auto candidate = node_ref_from_json(env.payload["candidate"], ring_);
  if (candidate) notify_local(*candidate);
}

void ChordVnode::adopt_successor_list(const NodeRef& head,
                                      const std::vector<NodeRef>& rest) {
  std::vector<NodeRef> list = {head};
  for (const auto& s : rest) {
    if (list.size() >= config_.successor_list_size) break;
    if (s.id == self_.id) continue;
    bool dup = false;
    for (const auto& existing : list) {
      if (existing.id == s.id) dup = true;
    }
    if (!dup) list.push_back(s);
  }
  successors_ = std::move(list);
  isolated_ = false;
}

void ChordVnode::drop_successor_head() {
  if (!successors_.empty()) successors_.erase(successors_.begin());
  if (successors_.empty()) {
    isolated_ = true;
    log_warn("overlay", self_.physical + "/" + ring_.to_hex(self_.id) +
                            " lost all successors, overlay-isolated");
  }
}

void ChordVnode::stabilize() {
  if (!joined_ || successors_.empty() || stabilize_inflight_) return;
  NodeRef succ = successors_.front();

  if (succ.id == self_.id) {
    // Sole node (or still forming): adopt our own predecessor as successor
    // once someone notifies us, and tell it right away.
    if (predecessor_ && predecessor_->id != self_.id) {
      NodeRef adopted = *predecessor_;
      successors_.insert(successors_.begin(), adopted);
      while (successors_.size() > config_.successor_list_size) {
        successors_.pop_back();
      }
      Json notify_payload;
      notify_payload["vnode"] = ring_.to_hex(adopted.id);
      notify_payload["candidate"] = node_ref_to_json(self_, ring_);
      Envelope notify_env;
      notify_env.kind = MessageKind::Notify;
      notify_env.payload = std::move(notify_payload);
      transport_.send(self_.address, adopted.address, notify_env);
    }
    return;
  }

  stabilize_inflight_ = true;
  Json payload;
  payload["vnode"] = ring_.to_hex(succ.id);
  Envelope env;
  env.kind = MessageKind::GetPredecessor;
  env.payload = std::move(payload);
  transport_.request(
      self_.address, succ.address, env, config_.maintenance_timeout,
      [this, succ](RpcResult res) {
        stabilize_inflight_ = false;
        if (!running_) return;
        if (!res.ok) {
          // Successor unreachable: advance to the next list entry.
          if (!successors_.empty() && successors_.front().id == succ.id) {
            drop_successor_head();
          }
          return;
        }
        const Json& p = res.response.payload;
        NodeRef new_succ = succ;
        if (p.contains("predecessor")) {
          auto x = node_ref_from_json(p["predecessor"], ring_);
          if (x && x->id != self_.id &&
              ring_.in_interval(x->id, RingInterval::open(self_.id, succ.id))) {
            new_succ = *x;
          }
        }
        std::vector<NodeRef> rest;
        for (const auto& sj : p["successors"]) {
          auto ref = node_ref_from_json(sj, ring_);
          if (ref) rest.push_back(*ref);
        }
        adopt_successor_list(new_succ, rest);

        Json notify_payload;
        notify_payload["vnode"] = ring_.to_hex(new_succ.id);
        notify_payload["candidate"] = node_ref_to_json(self_, ring_);
        Envelope notify_env;
        notify_env.kind = MessageKind::Notify;
        notify_env.payload = std::move(notify_payload);
        transport_.send(self_.address, new_succ.address, notify_env);
      });
}

void ChordVnode::fix_fingers() {
  if (!joined_ || successors_.empty()) return;
  unsigned i = next_finger_;
  next_finger_ = next_finger_ % ring_.bits() + 1;
  Identifier start = ring_.finger_start(self_.id, i);
  find_successor(start, [this, i](const LookupResult& res) {
    if (!running_) return;
    if (res.status == Status::Ok) {
      fingers_[i - 1] = res.node;
    } else {
      fingers_[i - 1].reset();  // stale entry, drop until the ring repairs
    }
  });
}

}  // namespace edgekv
