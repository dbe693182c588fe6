#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <thread>

#include "edgekv/transport.hpp"

namespace edgekv {

// Real-network transport. Every participant (including clients) listens on
// a TCP endpoint; responses are delivered as independent frames to the
// requester's listen endpoint and correlated by envelope id, exactly like
// the simulated transport. Handler/timer execution is serialized per node
// by a dedicated worker thread.
class TcpTransport : public Transport {
 public:
  TcpTransport();
  ~TcpTransport() override;

  Ticks now() const override;

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

  // Endpoint actually bound (resolves port 0 registrations).
  std::string local_endpoint(const std::string& registered) const;

  void stop();

 private:
  struct NodeState;

  void enqueue(const std::string& endpoint, std::function<void()> fn);
  bool write_frame(const std::string& to, const std::string& frame);
  void reader_loop(int fd);
  void accept_loop(NodeState* node);
  void timer_loop();
  void dispatch(Envelope env, const std::string& dst);

  struct NodeState {
    std::string endpoint;   // as registered
    std::string resolved;   // actual host:port
    MessageHandler handler;
    int listen_fd = -1;
    std::thread accept_thread;

    std::mutex queue_mutex;
    std::condition_variable queue_cv;
    std::deque<std::function<void()>> queue;
    std::thread worker;
    bool stopping = false;
  };

  struct PendingRequest {
    ResponseHandler handler;
    TimerId timer;
  };

  struct TimerEntry {
    Ticks due;
    std::string endpoint;
    std::function<void()> fn;
    bool cancelled = false;
  };

  mutable std::mutex mutex_;
  std::map<std::string, std::unique_ptr<NodeState>> nodes_;  // by resolved ep
  std::map<std::string, std::string> aliases_;  // registered -> resolved
  std::map<std::pair<std::string, uint64_t>, PendingRequest> pending_;
  std::map<std::string, int> out_fds_;
  std::map<std::string, std::unique_ptr<std::mutex>> out_mutexes_;
  std::map<uint64_t, std::shared_ptr<TimerEntry>> timers_;
  std::multimap<Ticks, std::shared_ptr<TimerEntry>> timer_heap_;
  uint64_t next_timer_id_ = 1;
  uint64_t next_request_id_ = 1;

  std::vector<std::thread> reader_threads_;
  std::set<int> reader_fds_;
  std::thread timer_thread_;
  std::condition_variable timer_cv_;
  std::atomic<bool> stopping_{false};
  std::chrono::steady_clock::time_point start_;
};

}  // namespace edgekv
