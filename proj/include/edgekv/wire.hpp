#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "edgekv/types.hpp"

namespace edgekv {

using Json = nlohmann::json;

// Every RPC in the system is one of these kinds. Unknown kinds are
// rejected by the decoder. Field schemas are documented in docs/wire.md.
enum class MessageKind {
  ClientGet,
  ClientPut,
  ClientDelete,
  ClientResponse,
  RequestVote,
  RequestVoteResp,
  AppendEntries,
  AppendEntriesResp,
  FindSuccessor,
  FindSuccessorResp,
  GetPredecessor,
  GetPredecessorResp,
  Notify,
  Ping,
  Pong,
  GlobalPut,
  GlobalGet,
  GlobalDelete,
  GlobalResponse,
  GroupPropose,
  GroupRead,
  GroupResponse,
};

constexpr size_t kMessageKindCount = 22;
constexpr size_t kMaxFrameBytes = 16 * 1024 * 1024;

const char* to_string(MessageKind k);
std::optional<MessageKind> kind_from_string(std::string_view s);

// True for kinds that answer a request (correlated by envelope id).
bool is_response_kind(MessageKind k);

struct Envelope {
  uint64_t id = 0;
  MessageKind kind = MessageKind::Ping;
  Json payload = Json::object();
  std::string reply_to;  // endpoint expecting the response; empty for one-ways

  friend bool operator==(const Envelope& a, const Envelope& b) {
    return a.id == b.id && a.kind == b.kind && a.payload == b.payload &&
           a.reply_to == b.reply_to;
  }
};

// Frame layout: 4-byte big-endian payload length, then that many bytes of
// UTF-8 JSON: {"id":..,"kind":..,"payload":{..}[,"reply_to":..]}.
std::string encode_frame(const Envelope& env);

enum class DecodeStatus { Ok, NeedMore, Error };

struct DecodeResult {
  DecodeStatus status = DecodeStatus::Error;
  size_t consumed = 0;  // bytes consumed from the input (0 unless Ok)
  Envelope envelope;
  std::string error;
};

// Decodes one frame from the front of `buf`. Never throws; malformed input
// yields Error, a partial frame yields NeedMore and consumes nothing.
DecodeResult decode_frame(std::string_view buf);

// Schema check for a payload of the given kind; nullopt means valid.
std::optional<std::string> validate_payload(MessageKind k, const Json& payload);

std::string b64_encode(std::string_view data);
std::optional<std::string> b64_decode(std::string_view text);

// JSON conversions for shared structures (identifiers as fixed-width hex).
Json node_ref_to_json(const NodeRef& ref, const RingSpace& ring);
std::optional<NodeRef> node_ref_from_json(const Json& j, const RingSpace& ring);
Json command_to_json(const Command& cmd);
std::optional<Command> command_from_json(const Json& j);
Json log_entry_to_json(const LogEntry& e);
std::optional<LogEntry> log_entry_from_json(const Json& j);

}  // namespace edgekv
