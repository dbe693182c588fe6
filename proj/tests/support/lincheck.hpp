#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace edgekv::test {

// One client-observed operation against the register/map model. Ambiguous
// ops (timeouts) may have taken effect at any point after invocation, or
// never.
struct HistoryOp {
  enum class Type { Put, Delete, Get };
  Type type = Type::Get;
  std::string key;
  std::string value;      // Put: written value; Get: observed value
  bool found = false;     // Get: false means not-found was observed
  int64_t invoke = 0;
  int64_t complete = 0;   // ignored when ambiguous
  bool ambiguous = false;
};

struct LinCheckResult {
  bool ok = true;
  std::string violation;  // first offending key + explanation
};

// Wing&Gong-style search with memoization, checked per key (keys are
// independent registers). Ops per key must not exceed 64.
LinCheckResult check_linearizable(const std::vector<HistoryOp>& history);

}  // namespace edgekv::test
