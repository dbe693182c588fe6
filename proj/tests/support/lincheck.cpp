#include "lincheck.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <unordered_set>

namespace edgekv::test {

namespace {

struct KeyChecker {
  std::vector<HistoryOp> ops;  // sorted by invocation
  std::vector<std::string> values;  // interned put values; state 0 = absent

  struct MemoKey {
    uint64_t applied;
    uint64_t dropped;
    uint32_t state;
    bool operator==(const MemoKey& o) const {
      return applied == o.applied && dropped == o.dropped && state == o.state;
    }
  };
  struct MemoHash {
    size_t operator()(const MemoKey& k) const {
      uint64_t h = k.applied * 0x9e3779b97f4a7c15ull;
      h ^= k.dropped + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
      h ^= uint64_t(k.state) * 0xff51afd7ed558ccdull;
      return size_t(h ^ (h >> 33));
    }
  };
  std::unordered_set<MemoKey, MemoHash> memo;

  uint32_t intern(const std::string& v) {
    for (uint32_t i = 0; i < values.size(); i++) {
      if (values[i] == v) return i + 1;
    }
    values.push_back(v);
    return uint32_t(values.size());
  }

  // state: 0 = absent, otherwise values[state-1]
  bool state_matches_get(uint32_t state, const HistoryOp& get) const {
    if (!get.found) return state == 0;
    return state != 0 && values[state - 1] == get.value;
  }

  bool dfs(uint64_t applied, uint64_t dropped, uint32_t state) {
    uint64_t processed = applied | dropped;
    if (processed == (ops.size() == 64 ? ~uint64_t(0)
                                       : (uint64_t(1) << ops.size()) - 1)) {
      return true;
    }
    if (!memo.insert({applied, dropped, state}).second) return false;

    // Earliest completion among unprocessed ops bounds what may linearize
    // next: nothing invoked after a completed-but-unlinearized op may go
    // first. Ambiguous ops never bound others.
    int64_t min_complete = INT64_MAX;
    for (size_t i = 0; i < ops.size(); i++) {
      if (processed & (uint64_t(1) << i)) continue;
      if (!ops[i].ambiguous) min_complete = std::min(min_complete, ops[i].complete);
    }

    for (size_t i = 0; i < ops.size(); i++) {
      uint64_t bit = uint64_t(1) << i;
      if (processed & bit) continue;
      const HistoryOp& op = ops[i];
      if (op.invoke > min_complete) continue;  // not minimal

      uint32_t next_state = state;
      bool legal = true;
      switch (op.type) {
        case HistoryOp::Type::Put:
          next_state = intern(op.value);
          break;
        case HistoryOp::Type::Delete:
          next_state = 0;
          break;
        case HistoryOp::Type::Get:
          legal = state_matches_get(state, op);
          break;
      }
      if (legal && dfs(applied | bit, dropped, next_state)) return true;
      if (op.ambiguous && dfs(applied, dropped | bit, state)) return true;
    }
    return false;
  }
};

}  // namespace

LinCheckResult check_linearizable(const std::vector<HistoryOp>& history) {
  std::map<std::string, std::vector<HistoryOp>> by_key;
  for (const auto& op : history) by_key[op.key].push_back(op);

  for (auto& [key, ops] : by_key) {
    if (ops.size() > 64) {
      throw std::invalid_argument("lincheck: more than 64 ops on key " + key);
    }
    std::sort(ops.begin(), ops.end(), [](const HistoryOp& a, const HistoryOp& b) {
      return a.invoke < b.invoke;
    });
    KeyChecker checker;
    checker.ops = ops;
    for (const auto& op : checker.ops) {
      if (op.type == HistoryOp::Type::Put) checker.intern(op.value);
    }
    checker.memo.clear();
    if (!checker.dfs(0, 0, 0)) {
      LinCheckResult res;
      res.ok = false;
      res.violation = "no linearization exists for key '" + key + "' (" +
                      std::to_string(ops.size()) + " ops)";
      return res;
    }
  }
  return LinCheckResult{};
}

}  // namespace edgekv::test
