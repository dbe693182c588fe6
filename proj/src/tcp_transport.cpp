#include "edgekv/tcp_transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>

#include "edgekv/log.hpp"

namespace edgekv {

namespace {

bool split_endpoint(const std::string& ep, std::string& host, uint16_t& port) {
  size_t colon = ep.rfind(':');
  if (colon == std::string::npos) return false;
  host = ep.substr(0, colon);
  try {
    int p = std::stoi(ep.substr(colon + 1));
    if (p < 0 || p > 65535) return false;
    port = uint16_t(p);
  } catch (...) {
    return false;
  }
  return true;
}

int dial(const std::string& endpoint) {
  std::string host;
  uint16_t port;
  if (!split_endpoint(endpoint, host, port)) return -1;
  struct addrinfo hints {};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  struct addrinfo* result = nullptr;
  if (getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &result) !=
      0) {
    return -1;
  }
  int fd = -1;
  for (struct addrinfo* rp = result; rp; rp = rp->ai_next) {
    fd = ::socket(rp->ai_family, rp->ai_socktype, rp->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, rp->ai_addr, rp->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  freeaddrinfo(result);
  if (fd >= 0) {
    int one = 1;
    setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }
  return fd;
}

}  // namespace

TcpTransport::TcpTransport() : start_(std::chrono::steady_clock::now()) {
  timer_thread_ = std::thread([this] { timer_loop(); });
}

TcpTransport::~TcpTransport() { stop(); }

Ticks TcpTransport::now() const {
  auto us = std::chrono::duration_cast<std::chrono::microseconds>(
                std::chrono::steady_clock::now() - start_)
                .count();
  return Ticks(us / 10);  // 0.01 ms ticks
}

void TcpTransport::enqueue(const std::string& endpoint, std::function<void()> fn) {
  NodeState* node = nullptr;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto alias = aliases_.find(endpoint);
    std::string key = alias == aliases_.end() ? endpoint : alias->second;
    auto it = nodes_.find(key);
    if (it == nodes_.end()) return;
    node = it->second.get();
  }
  {
    std::lock_guard<std::mutex> lock(node->queue_mutex);
    node->queue.push_back(std::move(fn));
  }
  node->queue_cv.notify_one();
}

void TcpTransport::register_node(const std::string& endpoint, NodeRole,
                                 const std::string&, MessageHandler handler) {
  std::string host;
  uint16_t port;
  if (!split_endpoint(endpoint, host, port)) {
    throw std::runtime_error("invalid endpoint " + endpoint);
  }

  auto node = std::make_unique<NodeState>();
  node->endpoint = endpoint;
  node->handler = std::move(handler);

  node->listen_fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (node->listen_fd < 0) throw std::runtime_error("socket() failed");
  int one = 1;
  setsockopt(node->listen_fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

  struct sockaddr_in addr {};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (host == "0.0.0.0" || host.empty()) {
    addr.sin_addr.s_addr = INADDR_ANY;
  } else if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    struct hostent* he = gethostbyname(host.c_str());
    if (!he) {
      ::close(node->listen_fd);
      throw std::runtime_error("cannot resolve host " + host);
    }
    std::memcpy(&addr.sin_addr, he->h_addr, sizeof(addr.sin_addr));
  }
  if (::bind(node->listen_fd, reinterpret_cast<struct sockaddr*>(&addr),
             sizeof(addr)) != 0) {
    ::close(node->listen_fd);
    throw std::runtime_error("cannot bind " + endpoint + ": " +
                             std::strerror(errno));
  }
  if (::listen(node->listen_fd, 128) != 0) {
    ::close(node->listen_fd);
    throw std::runtime_error("listen() failed on " + endpoint);
  }

  socklen_t len = sizeof(addr);
  getsockname(node->listen_fd, reinterpret_cast<struct sockaddr*>(&addr), &len);
  char ip[64];
  inet_ntop(AF_INET, &addr.sin_addr, ip, sizeof(ip));
  node->resolved = std::string(ip) + ":" + std::to_string(ntohs(addr.sin_port));

  NodeState* raw = node.get();
  raw->worker = std::thread([raw] {
    while (true) {
      std::function<void()> fn;
      {
        std::unique_lock<std::mutex> lock(raw->queue_mutex);
        raw->queue_cv.wait(lock,
                           [raw] { return raw->stopping || !raw->queue.empty(); });
        if (raw->stopping && raw->queue.empty()) return;
        fn = std::move(raw->queue.front());
        raw->queue.pop_front();
      }
      fn();
    }
  });
  raw->accept_thread = std::thread([this, raw] { accept_loop(raw); });

  std::lock_guard<std::mutex> lock(mutex_);
  aliases_[endpoint] = node->resolved;
  aliases_[node->resolved] = node->resolved;
  nodes_[node->resolved] = std::move(node);
}

std::string TcpTransport::local_endpoint(const std::string& registered) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = aliases_.find(registered);
  return it == aliases_.end() ? registered : it->second;
}

void TcpTransport::unregister_node(const std::string& endpoint) {
  std::unique_ptr<NodeState> node;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto alias = aliases_.find(endpoint);
    if (alias == aliases_.end()) return;
    auto it = nodes_.find(alias->second);
    if (it == nodes_.end()) return;
    node = std::move(it->second);
    nodes_.erase(it);
  }
  ::shutdown(node->listen_fd, SHUT_RDWR);
  ::close(node->listen_fd);
  if (node->accept_thread.joinable()) node->accept_thread.join();
  {
    std::lock_guard<std::mutex> lock(node->queue_mutex);
    node->stopping = true;
  }
  node->queue_cv.notify_all();
  if (node->worker.joinable()) node->worker.join();
}

void TcpTransport::accept_loop(NodeState* node) {
  while (!stopping_) {
    int fd = ::accept(node->listen_fd, nullptr, nullptr);
    if (fd < 0) return;  // listener closed
    std::lock_guard<std::mutex> lock(mutex_);
    reader_fds_.insert(fd);
    reader_threads_.emplace_back([this, fd] { reader_loop(fd); });
  }
}

void TcpTransport::reader_loop(int fd) {
  // Frames arriving on this connection are addressed to whichever local
  // node accepted it; we recover the destination from the socket address.
  struct sockaddr_in addr {};
  socklen_t len = sizeof(addr);
  getsockname(fd, reinterpret_cast<struct sockaddr*>(&addr), &len);
  char ip[64];
  inet_ntop(AF_INET, &addr.sin_addr, ip, sizeof(ip));
  std::string dst = std::string(ip) + ":" + std::to_string(ntohs(addr.sin_port));

  std::string buffer;
  char chunk[1 << 16];
  bool broken = false;
  while (!stopping_ && !broken) {
    ssize_t n = ::read(fd, chunk, sizeof(chunk));
    if (n <= 0) break;
    buffer.append(chunk, size_t(n));
    while (true) {
      DecodeResult dec = decode_frame(buffer);
      if (dec.status == DecodeStatus::NeedMore) break;
      if (dec.status == DecodeStatus::Error) {
        // Protocol errors are connection-scoped; the node stays up.
        log_warn("tcp", "protocol error from peer: " + dec.error);
        broken = true;
        break;
      }
      buffer.erase(0, dec.consumed);
      dispatch(std::move(dec.envelope), dst);
    }
  }
  ::close(fd);
  std::lock_guard<std::mutex> lock(mutex_);
  reader_fds_.erase(fd);
}

void TcpTransport::dispatch(Envelope env, const std::string& dst) {
  if (is_response_kind(env.kind)) {
    ResponseHandler handler;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      auto it = pending_.find({dst, env.id});
      if (it == pending_.end()) return;  // late response
      handler = std::move(it->second.handler);
      TimerId timer = it->second.timer;
      pending_.erase(it);
      auto t = timers_.find(timer);
      if (t != timers_.end()) t->second->cancelled = true;
    }
    enqueue(dst, [handler = std::move(handler), env = std::move(env)]() mutable {
      RpcResult res;
      res.ok = true;
      res.response = std::move(env);
      handler(std::move(res));
    });
    return;
  }
  MessageHandler handler;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = nodes_.find(dst);
    if (it == nodes_.end()) return;
    handler = it->second->handler;
  }
  enqueue(dst, [handler, env = std::move(env)] { handler(env); });
}

bool TcpTransport::write_frame(const std::string& to, const std::string& frame) {
  int fd = -1;
  std::mutex* write_mutex = nullptr;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = out_fds_.find(to);
    if (it != out_fds_.end()) fd = it->second;
    auto& m = out_mutexes_[to];
    if (!m) m = std::make_unique<std::mutex>();
    write_mutex = m.get();
  }

  for (int attempt = 0; attempt < 2; attempt++) {
    if (fd < 0) {
      fd = dial(to);
      if (fd < 0) return false;
      std::lock_guard<std::mutex> lock(mutex_);
      out_fds_[to] = fd;
    }
    std::lock_guard<std::mutex> wlock(*write_mutex);
    size_t off = 0;
    bool failed = false;
    while (off < frame.size()) {
      ssize_t n = ::send(fd, frame.data() + off, frame.size() - off, MSG_NOSIGNAL);
      if (n <= 0) {
        failed = true;
        break;
      }
      off += size_t(n);
    }
    if (!failed) return true;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      out_fds_.erase(to);
    }
    ::close(fd);
    fd = -1;
  }
  return false;
}

void TcpTransport::send(const std::string& from, const std::string& to,
                        Envelope env) {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    if (env.id == 0) env.id = next_request_id_++;
  }
  std::string frame = encode_frame(env);
  if (!write_frame(to, frame)) {
    log_debug("tcp", from + ": send to " + to + " failed");
  }
}

void TcpTransport::request(const std::string& from, const std::string& to,
                           Envelope env, Ticks timeout, ResponseHandler cb) {
  std::string resolved_from = local_endpoint(from);
  uint64_t id;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    id = next_request_id_++;
  }
  env.id = id;
  env.reply_to = resolved_from;

  TimerId timer = schedule(resolved_from, timeout, [this, resolved_from, id] {
    ResponseHandler handler;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      auto it = pending_.find({resolved_from, id});
      if (it == pending_.end()) return;
      handler = std::move(it->second.handler);
      pending_.erase(it);
    }
    RpcResult res;
    res.ok = false;
    res.error = Status::Timeout;
    handler(std::move(res));
  });
  {
    std::lock_guard<std::mutex> lock(mutex_);
    pending_[{resolved_from, id}] = PendingRequest{std::move(cb), timer};
  }

  std::string frame = encode_frame(env);
  if (!write_frame(to, frame)) {
    ResponseHandler handler;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      auto it = pending_.find({resolved_from, id});
      if (it == pending_.end()) return;
      handler = std::move(it->second.handler);
      pending_.erase(it);
      auto t = timers_.find(timer);
      if (t != timers_.end()) t->second->cancelled = true;
    }
    enqueue(resolved_from, [handler = std::move(handler)]() mutable {
      RpcResult res;
      res.ok = false;
      res.error = Status::Unavailable;  // connection error
      handler(std::move(res));
    });
  }
}

void TcpTransport::respond(const std::string& from, const Envelope& req,
                           MessageKind kind, Json payload) {
  if (req.reply_to.empty()) return;
  Envelope resp;
  resp.id = req.id;
  resp.kind = kind;
  resp.payload = std::move(payload);
  std::string frame = encode_frame(resp);
  if (!write_frame(req.reply_to, frame)) {
    log_debug("tcp", from + ": respond to " + req.reply_to + " failed");
  }
}

TimerId TcpTransport::schedule(const std::string& endpoint, Ticks delay,
                               std::function<void()> fn) {
  auto entry = std::make_shared<TimerEntry>();
  entry->due = now() + std::max<Ticks>(delay, 0);
  entry->endpoint = local_endpoint(endpoint);
  entry->fn = std::move(fn);
  TimerId id;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    id = next_timer_id_++;
    timers_[id] = entry;
    timer_heap_.emplace(entry->due, entry);
  }
  timer_cv_.notify_one();
  return id;
}

void TcpTransport::cancel_timer(TimerId id) {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = timers_.find(id);
  if (it != timers_.end()) it->second->cancelled = true;
}

void TcpTransport::timer_loop() {
  std::unique_lock<std::mutex> lock(mutex_);
  while (!stopping_) {
    if (timer_heap_.empty()) {
      timer_cv_.wait_for(lock, std::chrono::milliseconds(50));
      continue;
    }
    Ticks next_due = timer_heap_.begin()->first;
    Ticks current = now();
    if (next_due > current) {
      timer_cv_.wait_for(lock,
                         std::chrono::microseconds((next_due - current) * 10));
      continue;
    }
    auto entry = timer_heap_.begin()->second;
    timer_heap_.erase(timer_heap_.begin());
    for (auto it = timers_.begin(); it != timers_.end(); ++it) {
      if (it->second == entry) {
        timers_.erase(it);
        break;
      }
    }
    if (entry->cancelled) continue;
    lock.unlock();
    enqueue(entry->endpoint, entry->fn);
    lock.lock();
  }
}

void TcpTransport::stop() {
  if (stopping_.exchange(true)) return;
  timer_cv_.notify_all();
  if (timer_thread_.joinable()) timer_thread_.join();

  std::vector<std::string> endpoints;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    for (auto& [ep, node] : nodes_) endpoints.push_back(ep);
  }
  for (const auto& ep : endpoints) unregister_node(ep);

  std::vector<std::thread> readers;
  std::map<std::string, int> fds;
  std::set<int> reader_fds;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    readers.swap(reader_threads_);
    fds.swap(out_fds_);
    reader_fds = reader_fds_;
  }
  for (auto& [to, fd] : fds) ::close(fd);
  for (int fd : reader_fds) ::shutdown(fd, SHUT_RDWR);
  for (auto& t : readers) {
    if (t.joinable()) t.join();
  }
}

}  // namespace edgekv
