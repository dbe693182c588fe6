#pragma once

#include <functional>
#include <optional>
#include <string>

#include "edgekv/transport.hpp"
#include "edgekv/types.hpp"

namespace edgekv {

struct ClientOpResult {
  Status status = Status::Timeout;
  std::optional<std::string> value;
  Ticks latency = 0;  // first issue to final completion, retries included
  int attempts = 1;
};
using ClientOpCallback = std::function<void(const ClientOpResult&)>;

struct ClientOptions {
  Ticks local_timeout = 2000 * kTicksPerMs;
  Ticks global_timeout = 5000 * kTicksPerMs;
  int max_attempts = 4;
  Ticks retry_backoff = 300 * kTicksPerMs;  // after unavailable/redirect
};

// One logical client session bound to its group's edge node. Writes retry
// with a stable request id so duplicates collapse server-side.
class ClientSession {
 public:
  ClientSession(Transport& transport, std::string client_endpoint,
                std::string session_name, std::string edge_endpoint,
                ClientOptions options = {});

  void get(Scope scope, const std::string& key, ReadMode mode,
           ClientOpCallback cb);
  void put(Scope scope, const std::string& key, const std::string& value,
           ClientOpCallback cb);
  void del(Scope scope, const std::string& key, ClientOpCallback cb);

  const std::string& session_name() const { return session_name_; }

 private:
  void run_op(Envelope env, Scope scope, Ticks start, int attempt,
              ClientOpCallback cb);
  std::string next_request_id();

  Transport& transport_;
  std::string client_endpoint_;
  std::string session_name_;
  std::string edge_endpoint_;
  ClientOptions options_;
  uint64_t seq_ = 0;
};

}  // namespace edgekv
