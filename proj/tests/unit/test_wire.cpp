#include <doctest.h>

#include "edgekv/rng.hpp"
#include "edgekv/wire.hpp"

using namespace edgekv;

namespace {

const MessageKind kAllKinds[] = {
    MessageKind::ClientGet,         MessageKind::ClientPut,
    MessageKind::ClientDelete,      MessageKind::ClientResponse,
    MessageKind::RequestVote,       MessageKind::RequestVoteResp,
    MessageKind::AppendEntries,     MessageKind::AppendEntriesResp,
    MessageKind::FindSuccessor,     MessageKind::FindSuccessorResp,
    MessageKind::GetPredecessor,    MessageKind::GetPredecessorResp,
    MessageKind::Notify,            MessageKind::Ping,
    MessageKind::Pong,              MessageKind::GlobalPut,
    MessageKind::GlobalGet,         MessageKind::GlobalDelete,
    MessageKind::GlobalResponse,    MessageKind::GroupPropose,
    MessageKind::GroupRead,         MessageKind::GroupResponse,
};

std::string random_bytes(Rng& rng, size_t max_len) {
  size_t len = rng.uniform(1, max_len);
  std::string out(len, '\0');
  for (auto& c : out) c = char(rng.next() & 0xff);
  return out;
}

Json random_node_ref(Rng& rng, const RingSpace& ring) {
  NodeRef ref;
  ref.id = Identifier{rng.next()};
  ref.address = "gw" + std::to_string(rng.uniform(0, 9)) + ":7500";
  ref.physical = "gw" + std::to_string(rng.uniform(0, 9));
  return node_ref_to_json(ref, ring);
}

Json random_command(Rng& rng) {
  Command cmd;
  cmd.kind = rng.uniform(0, 1) ? CmdKind::Put : CmdKind::Delete;
  cmd.scope = rng.uniform(0, 1) ? Scope::Local : Scope::Global;
  cmd.key = random_bytes(rng, 32);
  if (cmd.kind == CmdKind::Put) cmd.value = random_bytes(rng, 64);
  cmd.request_id = "c1#0:" + std::to_string(rng.uniform(1, 1 << 20));
  return command_to_json(cmd);
}

// Schema-valid randomized payload per kind.
Json random_payload(MessageKind kind, Rng& rng, const RingSpace& ring) {
  Json p = Json::object();
  auto scope = [&] { return rng.uniform(0, 1) ? "local" : "global"; };
  auto mode = [&] { return rng.uniform(0, 1) ? "lin" : "ser"; };
  switch (kind) {
    case MessageKind::ClientGet:
      p["scope"] = scope();
      p["key"] = b64_encode(random_bytes(rng, 32));
      p["mode"] = mode();
      break;
    case MessageKind::ClientPut:
      p["scope"] = scope();
      p["key"] = b64_encode(random_bytes(rng, 32));
      p["value"] = b64_encode(random_bytes(rng, 256));
      p["req"] = "c:" + std::to_string(rng.next() & 0xffff);
      break;
    case MessageKind::ClientDelete:
      p["scope"] = scope();
      p["key"] = b64_encode(random_bytes(rng, 32));
      p["req"] = "c:" + std::to_string(rng.next() & 0xffff);
      break;
    case MessageKind::ClientResponse:
      p["status"] = "ok";
      if (rng.uniform(0, 1)) p["value"] = b64_encode(random_bytes(rng, 64));
      p["elapsed_us"] = rng.next() >> 20;
      break;
    case MessageKind::RequestVote:
      p["group"] = "g1";
      p["term"] = rng.uniform(1, 100);
      p["candidate"] = "e1:7001";
      p["last_log_index"] = rng.uniform(0, 1000);
      p["last_log_term"] = rng.uniform(0, 100);
      break;
    case MessageKind::RequestVoteResp:
      p["term"] = rng.uniform(1, 100);
      p["granted"] = rng.uniform(0, 1) == 1;
      break;
    case MessageKind::AppendEntries: {
      p["group"] = "g1";
      p["term"] = rng.uniform(1, 100);
      p["leader"] = "e1:7001";
      p["prev_log_index"] = rng.uniform(0, 1000);
      p["prev_log_term"] = rng.uniform(0, 100);
      Json entries = Json::array();
      for (uint64_t i = 0, n = rng.uniform(0, 3); i < n; i++) {
        LogEntry e;
        e.term = rng.uniform(1, 100);
        e.index = rng.uniform(1, 1000);
        auto cmd = command_from_json(random_command(rng));
        e.command = *cmd;
        entries.push_back(log_entry_to_json(e));
      }
      p["entries"] = std::move(entries);
      p["leader_commit"] = rng.uniform(0, 1000);
      break;
    }
    case MessageKind::AppendEntriesResp:
      p["term"] = rng.uniform(1, 100);
      p["success"] = rng.uniform(0, 1) == 1;
      p["match_index"] = rng.uniform(0, 1000);
      break;
    case MessageKind::FindSuccessor:
      p["target"] = ring.to_hex(Identifier{rng.next()});
      p["hops"] = rng.uniform(0, 64);
      if (rng.uniform(0, 1)) p["vnode"] = ring.to_hex(Identifier{rng.next()});
      break;
    case MessageKind::FindSuccessorResp:
      p["status"] = "ok";
      p["found"] = random_node_ref(rng, ring);
      p["hops"] = rng.uniform(0, 64);
      break;
    case MessageKind::GetPredecessor:
      if (rng.uniform(0, 1)) p["vnode"] = ring.to_hex(Identifier{rng.next()});
      break;
    case MessageKind::GetPredecessorResp: {
      if (rng.uniform(0, 1)) p["predecessor"] = random_node_ref(rng, ring);
      Json succ = Json::array();
      for (uint64_t i = 0, n = rng.uniform(0, 3); i < n; i++) {
        succ.push_back(random_node_ref(rng, ring));
      }
      p["successors"] = std::move(succ);
      break;
    }
    case MessageKind::Notify:
      p["vnode"] = ring.to_hex(Identifier{rng.next()});
      p["candidate"] = random_node_ref(rng, ring);
      break;
    case MessageKind::Ping:
    case MessageKind::Pong:
      break;
    case MessageKind::GlobalPut:
      p["key"] = b64_encode(random_bytes(rng, 32));
      p["value"] = b64_encode(random_bytes(rng, 256));
      p["req"] = "c:" + std::to_string(rng.next() & 0xffff);
      if (rng.uniform(0, 1)) p["owner_direct"] = true;
      break;
    case MessageKind::GlobalGet:
      p["key"] = b64_encode(random_bytes(rng, 32));
      p["mode"] = mode();
      if (rng.uniform(0, 1)) p["backup_of"] = "g2";
      break;
    case MessageKind::GlobalDelete:
      p["key"] = b64_encode(random_bytes(rng, 32));
      p["req"] = "c:" + std::to_string(rng.next() & 0xffff);
      break;
    case MessageKind::GlobalResponse:
      p["status"] = "ok";
      if (rng.uniform(0, 1)) p["value"] = b64_encode(random_bytes(rng, 64));
      p["hops"] = rng.uniform(0, 16);
      break;
    case MessageKind::GroupPropose:
      p["group"] = "g1";
      p["cmd"] = random_command(rng);
      break;
    case MessageKind::GroupRead:
      p["group"] = "g1";
      p["scope"] = scope();
      p["key"] = b64_encode(random_bytes(rng, 32));
      p["mode"] = mode();
      break;
    case MessageKind::GroupResponse:
      p["status"] = rng.uniform(0, 1) ? "ok" : "redirect";
      if (rng.uniform(0, 1)) p["leader"] = "e2:7002";
      break;
  }
  return p;
}

}  // namespace

TEST_CASE("every message kind round-trips with randomized payloads") {
  RingSpace ring(64);
  Rng rng(42);
  for (int iter = 0; iter < 50; iter++) {
    for (MessageKind kind : kAllKinds) {
      Envelope env;
      env.id = rng.next() >> 1;
      env.kind = kind;
      env.payload = random_payload(kind, rng, ring);
      if (rng.uniform(0, 1)) env.reply_to = "c1:7900";

      std::string frame = encode_frame(env);
      DecodeResult dec = decode_frame(frame);
      REQUIRE(dec.status == DecodeStatus::Ok);
      CHECK(dec.consumed == frame.size());
      CHECK(dec.envelope == env);
    }
  }
}

TEST_CASE("empty-payload Ping encodes to the frozen golden frame") {
  Envelope env;
  env.id = 1;
  env.kind = MessageKind::Ping;
  std::string frame = encode_frame(env);
  // Recorded from an independent JSON encoder: 4-byte length 0x23 then
  // {"id":1,"kind":"Ping","payload":{}}
  const std::string expected_hex =
      "000000237b226964223a312c226b696e64223a2250696e67222c227061796c6f6164"
      "223a7b7d7d";
  std::string got;
  static const char* digits = "0123456789abcdef";
  for (unsigned char c : frame) {
    got.push_back(digits[c >> 4]);
    got.push_back(digits[c & 0xf]);
  }
  CHECK(got == expected_hex);
}

TEST_CASE("truncated frame reports incomplete and consumes nothing") {
  Envelope env;
  env.id = 9;
  env.kind = MessageKind::Ping;
  std::string frame = encode_frame(env);
  for (size_t cut = 0; cut < frame.size(); cut++) {
    DecodeResult dec = decode_frame(std::string_view(frame).substr(0, cut));
    CHECK(dec.status == DecodeStatus::NeedMore);
    CHECK(dec.consumed == 0);
  }
}

TEST_CASE("oversized frame is rejected before buffering") {
  std::string header = {char(0x7f), char(0xff), char(0xff), char(0xff)};
  DecodeResult dec = decode_frame(header);
  CHECK(dec.status == DecodeStatus::Error);
  CHECK(dec.error == "frame-too-large");
}

TEST_CASE("unknown kinds and schema violations are protocol errors") {
  auto frame_for = [](const std::string& body) {
    std::string out;
    uint32_t len = uint32_t(body.size());
    out.push_back(char(len >> 24));
    out.push_back(char(len >> 16));
    out.push_back(char(len >> 8));
    out.push_back(char(len));
    return out + body;
  };
  CHECK(decode_frame(frame_for(R"({"id":1,"kind":"Bogus","payload":{}})"))
            .status == DecodeStatus::Error);
  CHECK(decode_frame(frame_for(R"({"id":1,"kind":"ClientGet","payload":{}})"))
            .status == DecodeStatus::Error);
  CHECK(decode_frame(frame_for(
            R"({"id":1,"kind":"Ping","payload":{"extra":1}})"))
            .status == DecodeStatus::Error);
  CHECK(decode_frame(frame_for(R"({"id":1,"kind":"Ping","payload":{}, )"))
            .status == DecodeStatus::Error);
  CHECK(decode_frame(frame_for(R"(not json at all)")).status ==
        DecodeStatus::Error);
}

TEST_CASE("decoder is total on arbitrary bytes") {
  Rng rng(1234);
  for (int i = 0; i < 100000; i++) {
    size_t len = rng.uniform(0, 64);
    std::string junk(len, '\0');
    for (auto& c : junk) c = char(rng.next() & 0xff);
    DecodeResult dec = decode_frame(junk);  // must not throw or crash
    CHECK((dec.status == DecodeStatus::Ok || dec.status == DecodeStatus::Error ||
           dec.status == DecodeStatus::NeedMore));
  }
}

TEST_CASE("base64 round-trips arbitrary binary values") {
  Rng rng(5);
  for (int i = 0; i < 500; i++) {
    std::string data = random_bytes(rng, 200);
    auto back = b64_decode(b64_encode(data));
    REQUIRE(back.has_value());
    CHECK(*back == data);
  }
  CHECK(b64_encode("") == "");
  CHECK(b64_decode("====") == std::nullopt);
  CHECK(b64_decode("a") == std::nullopt);
  CHECK(b64_decode("!@#$") == std::nullopt);
}

TEST_CASE("command encoding enforces the put/delete value rule") {
  Command del;
  del.kind = CmdKind::Delete;
  del.key = "k";
  del.request_id = "c:1";
  Json j = command_to_json(del);
  CHECK_FALSE(j.contains("value"));
  j["value"] = b64_encode("x");  // a delete with a value is malformed
  CHECK_FALSE(command_from_json(j).has_value());
}

TEST_CASE("encoding is byte-deterministic") {
  RingSpace ring(64);
  Rng rng(77);
  Envelope env;
  env.id = 1000;
  env.kind = MessageKind::AppendEntries;
  env.payload = random_payload(MessageKind::AppendEntries, rng, ring);
  CHECK(encode_frame(env) == encode_frame(env));
}
