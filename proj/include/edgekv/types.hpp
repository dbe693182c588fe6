#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "edgekv/ring.hpp"

namespace edgekv {

enum class Scope { Local, Global };

enum class CmdKind { Put, Delete };

// Replicated state-machine command. `request_id` ("<client>:<seq>") makes
// retried commands idempotent at apply time.
struct Command {
  CmdKind kind = CmdKind::Put;
  Scope scope = Scope::Local;
  std::string key;
  std::string value;  // empty for Delete
  std::string request_id;
};

struct LogEntry {
  uint64_t term = 0;
  uint64_t index = 0;
  Command command;
};

// Routable reference to a gateway virtual node.
struct NodeRef {
  Identifier id;
  std::string address;   // host:port
  std::string physical;  // hosting physical gateway name

  friend bool operator==(const NodeRef& a, const NodeRef& b) {
    return a.id == b.id && a.address == b.address && a.physical == b.physical;
  }
};

enum class ReadMode { Linearizable, Serializable };

enum class Status {
  Ok,
  NotFound,
  Unavailable,
  Timeout,
  Invalid,
  Redirect,
  GatewayUnavailable,
  GroupUnavailable,
  LookupFailed,
  WrongOwner,
};

const char* to_string(Status s);
const char* to_string(Scope s);
const char* to_string(ReadMode m);
const char* to_string(CmdKind k);

std::optional<Status> status_from_string(const std::string& s);

}  // namespace edgekv
