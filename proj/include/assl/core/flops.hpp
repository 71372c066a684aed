#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace assl::flops {

/// Accumulates op costs while a forward pass runs. Ops report one analytic
/// count per call (multiply-accumulates for conv/linear/matmul, one op per
/// output element for everything else), attributed to the innermost scope
/// label on the current thread.
struct Counter {
  std::map<std::string, int64_t> by_scope;
  int64_t total = 0;
  int64_t conv_macs = 0;  // spatial-convolution multiply-accumulates only
};

inline Counter*& current() {
  thread_local Counter* c = nullptr;
  return c;
}

inline std::string& scope_label() {
  thread_local std::string label = "(unscoped)";
  return label;
}

inline void add(int64_t n) {
  Counter* c = current();
  if (!c) return;
  c->total += n;
  c->by_scope[scope_label()] += n;
}

inline void add_macs(int64_t n) {
  Counter* c = current();
  if (!c) return;
  c->conv_macs += n;
}

inline bool enabled() { return current() != nullptr; }

struct ScopeGuard {
  std::string prev;
  ScopeGuard(const std::string& label) : prev(scope_label()) {
    scope_label() = label;
  }
  ~ScopeGuard() { scope_label() = prev; }
};

struct CounterGuard {
  Counter* prev;
  explicit CounterGuard(Counter& c) : prev(current()) { current() = &c; }
  ~CounterGuard() { current() = prev; }
};

}  // namespace assl::flops
