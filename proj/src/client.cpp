#include "edgekv/client.hpp"

#include "edgekv/wire.hpp"

namespace edgekv {

ClientSession::ClientSession(Transport& transport, std::string client_endpoint,
                             std::string session_name, std::string edge_endpoint,
                             ClientOptions options)
    : transport_(transport),
      client_endpoint_(std::move(client_endpoint)),
      session_name_(std::move(session_name)),
      edge_endpoint_(std::move(edge_endpoint)),
      options_(options) {}

std::string ClientSession::next_request_id() {
  return session_name_ + ":" + std::to_string(++seq_);
}

void ClientSession::get(Scope scope, const std::string& key, ReadMode mode,
                        ClientOpCallback cb) {
  Envelope env;
  env.kind = MessageKind::ClientGet;
  env.payload["scope"] = to_string(scope);
  env.payload["key"] = b64_encode(key);
  env.payload["mode"] = to_string(mode);
  run_op(std::move(env), scope, transport_.now(), 1, std::move(cb));
}

void ClientSession::put(Scope scope, const std::string& key,
                        const std::string& value, ClientOpCallback cb) {
  Envelope env;
  env.kind = MessageKind::ClientPut;
  env.payload["scope"] = to_string(scope);
  env.payload["key"] = b64_encode(key);
  env.payload["value"] = b64_encode(value);
  env.payload["req"] = next_request_id();
  run_op(std::move(env), scope, transport_.now(), 1, std::move(cb));
}

void ClientSession::del(Scope scope, const std::string& key, ClientOpCallback cb) {
  Envelope env;
  env.kind = MessageKind::ClientDelete;
  env.payload["scope"] = to_string(scope);
  env.payload["key"] = b64_encode(key);
  env.payload["req"] = next_request_id();
  run_op(std::move(env), scope, transport_.now(), 1, std::move(cb));
}

void ClientSession::run_op(Envelope env, Scope scope, Ticks start, int attempt,
                           ClientOpCallback cb) {
  Ticks timeout =
      scope == Scope::Local ? options_.local_timeout : options_.global_timeout;
  transport_.request(
      client_endpoint_, edge_endpoint_, env, timeout,
      [this, env, scope, start, attempt, cb = std::move(cb)](RpcResult res) mutable {
        auto finish = [&](Status status, std::optional<std::string> value) {
          ClientOpResult out;
          out.status = status;
          out.value = std::move(value);
          out.latency = transport_.now() - start;
          out.attempts = attempt;
          cb(out);
        };

        Status status = Status::Timeout;
        std::optional<std::string> value;
        if (res.ok) {
          const Json& p = res.response.payload;
          status = status_from_string(p["status"].get<std::string>())
                       .value_or(Status::Unavailable);
          if (p.contains("value")) {
            value = b64_decode(p["value"].get<std::string>());
          }
        }

        bool retryable = status == Status::Timeout ||
                         status == Status::Unavailable ||
                         status == Status::GatewayUnavailable ||
                         status == Status::GroupUnavailable;
        if (!retryable || attempt >= options_.max_attempts) {
          finish(status, std::move(value));
          return;
        }
        // Retries reuse the envelope (and its request id for writes) so an
        // ambiguous first attempt cannot double-apply.
        Ticks backoff = status == Status::Timeout ? 0 : options_.retry_backoff;
        transport_.schedule(client_endpoint_, backoff,
                            [this, env = std::move(env), scope, start, attempt,
                             cb = std::move(cb)]() mutable {
                              run_op(std::move(env), scope, start, attempt + 1,
                                     std::move(cb));
                            });
      });
}

}  // namespace edgekv
