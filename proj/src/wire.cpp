#include "edgekv/wire.hpp"

#include <array>
#include <cstring>

namespace edgekv {

const char* to_string(Status s) {
  switch (s) {
    case Status::Ok: return "ok";
    case Status::NotFound: return "not_found";
    case Status::Unavailable: return "unavailable";
    case Status::Timeout: return "timeout";
    case Status::Invalid: return "invalid";
    case Status::Redirect: return "redirect";
    case Status::GatewayUnavailable: return "gateway_unavailable";
    case Status::GroupUnavailable: return "group_unavailable";
    case Status::LookupFailed: return "lookup_failed";
    case Status::WrongOwner: return "wrong_owner";
  }
  return "unknown";
}

std::optional<Status> status_from_string(const std::string& s) {
  static const std::array<Status, 10> all = {
      Status::Ok, Status::NotFound, Status::Unavailable, Status::Timeout,
      Status::Invalid, Status::Redirect, Status::GatewayUnavailable,
      Status::GroupUnavailable, Status::LookupFailed, Status::WrongOwner};
  for (Status st : all) {
    if (s == to_string(st)) return st;
  }
  return std::nullopt;
}

const char* to_string(Scope s) { return s == Scope::Local ? "local" : "global"; }
const char* to_string(ReadMode m) { return m == ReadMode::Linearizable ? "lin" : "ser"; }
const char* to_string(CmdKind k) { return k == CmdKind::Put ? "put" : "del"; }

namespace {

struct KindInfo {
  MessageKind kind;
  const char* name;
  bool response;
};

constexpr KindInfo kKinds[kMessageKindCount] = {
    {MessageKind::ClientGet, "ClientGet", false},
    {MessageKind::ClientPut, "ClientPut", false},
    {MessageKind::ClientDelete, "ClientDelete", false},
    {MessageKind::ClientResponse, "ClientResponse", true},
    {MessageKind::RequestVote, "RequestVote", false},
    {MessageKind::RequestVoteResp, "RequestVoteResp", true},
    {MessageKind::AppendEntries, "AppendEntries", false},
    {MessageKind::AppendEntriesResp, "AppendEntriesResp", true},
    {MessageKind::FindSuccessor, "FindSuccessor", false},
    {MessageKind::FindSuccessorResp, "FindSuccessorResp", true},
    {MessageKind::GetPredecessor, "GetPredecessor", false},
    {MessageKind::GetPredecessorResp, "GetPredecessorResp", true},
    {MessageKind::Notify, "Notify", false},
    {MessageKind::Ping, "Ping", false},
    {MessageKind::Pong, "Pong", true},
    {MessageKind::GlobalPut, "GlobalPut", false},
    {MessageKind::GlobalGet, "GlobalGet", false},
    {MessageKind::GlobalDelete, "GlobalDelete", false},
    {MessageKind::GlobalResponse, "GlobalResponse", true},
    {MessageKind::GroupPropose, "GroupPropose", false},
    {MessageKind::GroupRead, "GroupRead", false},
    {MessageKind::GroupResponse, "GroupResponse", true},
};

enum class FieldType { U64, Str, Bool, Obj, Arr };

struct FieldSpec {
  const char* name;
  FieldType type;
  bool required;
};

// Fixed field schema per kind; payloads with unknown fields are rejected.
const std::vector<FieldSpec>& fields_for(MessageKind k) {
  static const std::vector<FieldSpec> client_get = {
      {"scope", FieldType::Str, true},
      {"key", FieldType::Str, true},
      {"mode", FieldType::Str, true}};
  static const std::vector<FieldSpec> client_put = {
      {"scope", FieldType::Str, true},
      {"key", FieldType::Str, true},
      {"value", FieldType::Str, true},
      {"req", FieldType::Str, true}};
  static const std::vector<FieldSpec> client_delete = {
      {"scope", FieldType::Str, true},
      {"key", FieldType::Str, true},
      {"req", FieldType::Str, true}};
  static const std::vector<FieldSpec> client_response = {
      {"status", FieldType::Str, true},
      {"value", FieldType::Str, false},
      {"elapsed_us", FieldType::U64, false},
      {"leader", FieldType::Str, false},
      {"error", FieldType::Str, false}};
  static const std::vector<FieldSpec> request_vote = {
      {"group", FieldType::Str, true},
      {"term", FieldType::U64, true},
      {"candidate", FieldType::Str, true},
      {"last_log_index", FieldType::U64, true},
      {"last_log_term", FieldType::U64, true}};
  static const std::vector<FieldSpec> request_vote_resp = {
      {"term", FieldType::U64, true},
      {"granted", FieldType::Bool, true}};
  static const std::vector<FieldSpec> append_entries = {
      {"group", FieldType::Str, true},
      {"term", FieldType::U64, true},
      {"leader", FieldType::Str, true},
      {"prev_log_index", FieldType::U64, true},
      {"prev_log_term", FieldType::U64, true},
      {"entries", FieldType::Arr, true},
      {"leader_commit", FieldType::U64, true}};
  static const std::vector<FieldSpec> append_entries_resp = {
      {"term", FieldType::U64, true},
      {"success", FieldType::Bool, true},
      {"match_index", FieldType::U64, true}};
  static const std::vector<FieldSpec> find_successor = {
      {"target", FieldType::Str, true},
      {"hops", FieldType::U64, true},
      {"vnode", FieldType::Str, false}};
  static const std::vector<FieldSpec> find_successor_resp = {
      {"status", FieldType::Str, true},
      {"found", FieldType::Obj, false},
      {"hops", FieldType::U64, true},
      {"route", FieldType::Arr, false}};
  static const std::vector<FieldSpec> get_predecessor = {
      {"vnode", FieldType::Str, false}};
  static const std::vector<FieldSpec> get_predecessor_resp = {
      {"predecessor", FieldType::Obj, false},
      {"successors", FieldType::Arr, true}};
  static const std::vector<FieldSpec> notify = {
      {"vnode", FieldType::Str, true},
      {"candidate", FieldType::Obj, true}};
  static const std::vector<FieldSpec> empty = {};
  static const std::vector<FieldSpec> global_put = {
      {"key", FieldType::Str, true},
      {"value", FieldType::Str, true},
      {"req", FieldType::Str, true},
      {"owner_direct", FieldType::Bool, false}};
  static const std::vector<FieldSpec> global_get = {
      {"key", FieldType::Str, true},
      {"mode", FieldType::Str, true},
      {"owner_direct", FieldType::Bool, false},
      {"backup_of", FieldType::Str, false}};
  static const std::vector<FieldSpec> global_delete = {
      {"key", FieldType::Str, true},
      {"req", FieldType::Str, true},
      {"owner_direct", FieldType::Bool, false}};
  static const std::vector<FieldSpec> global_response = {
      {"status", FieldType::Str, true},
      {"value", FieldType::Str, false},
      {"hops", FieldType::U64, false}};
  static const std::vector<FieldSpec> group_propose = {
      {"group", FieldType::Str, true},
      {"cmd", FieldType::Obj, true}};
  static const std::vector<FieldSpec> group_read = {
      {"group", FieldType::Str, true},
      {"scope", FieldType::Str, true},
      {"key", FieldType::Str, true},
      {"mode", FieldType::Str, true}};
  static const std::vector<FieldSpec> group_response = {
      {"status", FieldType::Str, true},
      {"value", FieldType::Str, false},
      {"leader", FieldType::Str, false}};

  switch (k) {
    case MessageKind::ClientGet: return client_get;
    case MessageKind::ClientPut: return client_put;
    case MessageKind::ClientDelete: return client_delete;
    case MessageKind::ClientResponse: return client_response;
    case MessageKind::RequestVote: return request_vote;
    case MessageKind::RequestVoteResp: return request_vote_resp;
    case MessageKind::AppendEntries: return append_entries;
    case MessageKind::AppendEntriesResp: return append_entries_resp;
    case MessageKind::FindSuccessor: return find_successor;
    case MessageKind::FindSuccessorResp: return find_successor_resp;
    case MessageKind::GetPredecessor: return get_predecessor;
    case MessageKind::GetPredecessorResp: return get_predecessor_resp;
    case MessageKind::Notify: return notify;
    case MessageKind::Ping: return empty;
    case MessageKind::Pong: return empty;
    case MessageKind::GlobalPut: return global_put;
    case MessageKind::GlobalGet: return global_get;
    case MessageKind::GlobalDelete: return global_delete;
    case MessageKind::GlobalResponse: return global_response;
    case MessageKind::GroupPropose: return group_propose;
    case MessageKind::GroupRead: return group_read;
    case MessageKind::GroupResponse: return group_response;
  }
  return empty;
}

bool type_matches(FieldType t, const Json& v) {
  switch (t) {
    case FieldType::U64: return v.is_number_unsigned();
    case FieldType::Str: return v.is_string();
    case FieldType::Bool: return v.is_boolean();
    case FieldType::Obj: return v.is_object();
    case FieldType::Arr: return v.is_array();
  }
  return false;
}

}  // namespace

const char* to_string(MessageKind k) {
  for (const auto& info : kKinds) {
    if (info.kind == k) return info.name;
  }
  return "unknown";
}

std::optional<MessageKind> kind_from_string(std::string_view s) {
  for (const auto& info : kKinds) {
    if (s == info.name) return info.kind;
  }
  return std::nullopt;
}

bool is_response_kind(MessageKind k) {
  for (const auto& info : kKinds) {
    if (info.kind == k) return info.response;
  }
  return false;
}

std::optional<std::string> validate_payload(MessageKind k, const Json& payload) {
  if (!payload.is_object()) return "payload is not an object";
  const auto& specs = fields_for(k);
  for (const auto& spec : specs) {
    auto it = payload.find(spec.name);
    if (it == payload.end()) {
      if (spec.required) {
        return std::string("missing field '") + spec.name + "'";
      }
      continue;
    }
    if (!type_matches(spec.type, *it)) {
      return std::string("field '") + spec.name + "' has wrong type";
    }
  }
  for (auto it = payload.begin(); it != payload.end(); ++it) {
    bool known = false;
    for (const auto& spec : specs) {
      if (it.key() == spec.name) { known = true; break; }
    }
    if (!known) return "unknown field '" + it.key() + "'";
  }
  return std::nullopt;
}

std::string encode_frame(const Envelope& env) {
  Json j;
  j["id"] = env.id;
  j["kind"] = to_string(env.kind);
  j["payload"] = env.payload;
  if (!env.reply_to.empty()) j["reply_to"] = env.reply_to;
  std::string body = j.dump();
  if (body.size() > kMaxFrameBytes) {
    throw std::length_error("frame exceeds 16 MiB cap");
  }
  std::string out;
  out.reserve(4 + body.size());
  uint32_t len = uint32_t(body.size());
  out.push_back(char(len >> 24));
  out.push_back(char(len >> 16));
  out.push_back(char(len >> 8));
  out.push_back(char(len));
  out += body;
  return out;
}

DecodeResult decode_frame(std::string_view buf) {
  DecodeResult res;
  if (buf.size() < 4) {
    res.status = DecodeStatus::NeedMore;
    return res;
  }
  uint32_t len = (uint32_t(uint8_t(buf[0])) << 24) |
                 (uint32_t(uint8_t(buf[1])) << 16) |
                 (uint32_t(uint8_t(buf[2])) << 8) | uint32_t(uint8_t(buf[3]));
  if (len > kMaxFrameBytes) {
    res.status = DecodeStatus::Error;
    res.error = "frame-too-large";
    return res;
  }
  if (buf.size() < 4 + size_t(len)) {
    res.status = DecodeStatus::NeedMore;
    return res;
  }
  Json j = Json::parse(buf.substr(4, len), nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) {
    res.status = DecodeStatus::Error;
    res.error = "malformed JSON";
    return res;
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() != "id" && it.key() != "kind" && it.key() != "payload" &&
        it.key() != "reply_to") {
      res.status = DecodeStatus::Error;
      res.error = "unknown envelope field '" + it.key() + "'";
      return res;
    }
  }
  if (!j.contains("id") || !j["id"].is_number_unsigned() ||
      !j.contains("kind") || !j["kind"].is_string() ||
      !j.contains("payload") || !j["payload"].is_object()) {
    res.status = DecodeStatus::Error;
    res.error = "invalid envelope";
    return res;
  }
  auto kind = kind_from_string(j["kind"].get<std::string>());
  if (!kind) {
    res.status = DecodeStatus::Error;
    res.error = "unknown kind '" + j["kind"].get<std::string>() + "'";
    return res;
  }
  if (auto err = validate_payload(*kind, j["payload"])) {
    res.status = DecodeStatus::Error;
    res.error = *err;
    return res;
  }
  if (j.contains("reply_to") && !j["reply_to"].is_string()) {
    res.status = DecodeStatus::Error;
    res.error = "invalid reply_to";
    return res;
  }
  res.status = DecodeStatus::Ok;
  res.consumed = 4 + size_t(len);
  res.envelope.id = j["id"].get<uint64_t>();
  res.envelope.kind = *kind;
  res.envelope.payload = j["payload"];
  if (j.contains("reply_to")) res.envelope.reply_to = j["reply_to"].get<std::string>();
  return res;
}

namespace {
constexpr char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string b64_encode(std::string_view data) {
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  size_t i = 0;
  while (i + 3 <= data.size()) {
    uint32_t n = (uint32_t(uint8_t(data[i])) << 16) |
                 (uint32_t(uint8_t(data[i + 1])) << 8) | uint8_t(data[i + 2]);
    out.push_back(kB64Alphabet[(n >> 18) & 63]);
    out.push_back(kB64Alphabet[(n >> 12) & 63]);
    out.push_back(kB64Alphabet[(n >> 6) & 63]);
    out.push_back(kB64Alphabet[n & 63]);
    i += 3;
  }
  size_t rem = data.size() - i;
  if (rem == 1) {
    uint32_t n = uint32_t(uint8_t(data[i])) << 16;
    out.push_back(kB64Alphabet[(n >> 18) & 63]);
    out.push_back(kB64Alphabet[(n >> 12) & 63]);
    out.push_back('=');
    out.push_back('=');
  } else if (rem == 2) {
    uint32_t n = (uint32_t(uint8_t(data[i])) << 16) |
                 (uint32_t(uint8_t(data[i + 1])) << 8);
    out.push_back(kB64Alphabet[(n >> 18) & 63]);
    out.push_back(kB64Alphabet[(n >> 12) & 63]);
    out.push_back(kB64Alphabet[(n >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::optional<std::string> b64_decode(std::string_view text) {
  if (text.size() % 4 != 0) return std::nullopt;
  static const auto value_of = [] {
    std::array<int8_t, 256> v;
    v.fill(-1);
    for (int i = 0; i < 64; i++) v[uint8_t(kB64Alphabet[i])] = int8_t(i);
    return v;
  }();
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (size_t i = 0; i < text.size(); i += 4) {
    int pad = 0;
    uint32_t n = 0;
    for (int k = 0; k < 4; k++) {
      char c = text[i + k];
      if (c == '=') {
        if (i + 4 != text.size() || k < 2) return std::nullopt;
        pad++;
        n <<= 6;
        continue;
      }
      if (pad > 0) return std::nullopt;  // '=' only at the end
      int8_t v = value_of[uint8_t(c)];
      if (v < 0) return std::nullopt;
      n = (n << 6) | uint32_t(v);
    }
    out.push_back(char((n >> 16) & 0xff));
    if (pad < 2) out.push_back(char((n >> 8) & 0xff));
    if (pad < 1) out.push_back(char(n & 0xff));
  }
  return out;
}

Json node_ref_to_json(const NodeRef& ref, const RingSpace& ring) {
  Json j;
  j["id"] = ring.to_hex(ref.id);
  j["addr"] = ref.address;
  j["phys"] = ref.physical;
  return j;
}

std::optional<NodeRef> node_ref_from_json(const Json& j, const RingSpace& ring) {
  if (!j.is_object() || !j.contains("id") || !j["id"].is_string() ||
      !j.contains("addr") || !j["addr"].is_string() ||
      !j.contains("phys") || !j["phys"].is_string()) {
    return std::nullopt;
  }
  auto id = ring.parse_hex(j["id"].get<std::string>());
  if (!id) return std::nullopt;
  NodeRef ref;
  ref.id = *id;
  ref.address = j["addr"].get<std::string>();
  ref.physical = j["phys"].get<std::string>();
  return ref;
}

Json command_to_json(const Command& cmd) {
  Json j;
  j["op"] = to_string(cmd.kind);
  j["scope"] = to_string(cmd.scope);
  j["key"] = b64_encode(cmd.key);
  if (cmd.kind == CmdKind::Put) j["value"] = b64_encode(cmd.value);
  j["req"] = cmd.request_id;
  return j;
}

std::optional<Command> command_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("op") || !j["op"].is_string() ||
      !j.contains("scope") || !j["scope"].is_string() ||
      !j.contains("key") || !j["key"].is_string() ||
      !j.contains("req") || !j["req"].is_string()) {
    return std::nullopt;
  }
  Command cmd;
  std::string op = j["op"].get<std::string>();
  if (op == "put") cmd.kind = CmdKind::Put;
  else if (op == "del") cmd.kind = CmdKind::Delete;
  else return std::nullopt;
  std::string scope = j["scope"].get<std::string>();
  if (scope == "local") cmd.scope = Scope::Local;
  else if (scope == "global") cmd.scope = Scope::Global;
  else return std::nullopt;
  auto key = b64_decode(j["key"].get<std::string>());
  if (!key) return std::nullopt;
  cmd.key = *key;
  if (cmd.kind == CmdKind::Put) {
    if (!j.contains("value") || !j["value"].is_string()) return std::nullopt;
    auto value = b64_decode(j["value"].get<std::string>());
    if (!value) return std::nullopt;
    cmd.value = *value;
  } else if (j.contains("value")) {
    return std::nullopt;  // Delete carries no value
  }
  cmd.request_id = j["req"].get<std::string>();
  return cmd;
}

Json log_entry_to_json(const LogEntry& e) {
  Json j;
  j["term"] = e.term;
  j["index"] = e.index;
  j["cmd"] = command_to_json(e.command);
  return j;
}

std::optional<LogEntry> log_entry_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("term") || !j["term"].is_number_unsigned() ||
      !j.contains("index") || !j["index"].is_number_unsigned() ||
      !j.contains("cmd")) {
    return std::nullopt;
  }
  auto cmd = command_from_json(j["cmd"]);
  if (!cmd) return std::nullopt;
  LogEntry e;
  e.term = j["term"].get<uint64_t>();
  e.index = j["index"].get<uint64_t>();
  e.command = *cmd;
  return e;
}

}  // namespace edgekv
