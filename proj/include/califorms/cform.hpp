// CFORM instruction semantics, Califorms exceptions and the whitelist
// exception-mask register.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>

#include "califorms/cacheline.hpp"

namespace califorms {

/// Misuse of the simulator API (alignment, widths, unbalanced calls).
/// Distinct from CaliException, which models an architectural event.
class UsageError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

enum class ViolationKind {
  IllegalSet,
  IllegalUnset,
  LoadViolation,
  StoreViolation,
  LsqViolation,
  TemporalViolation,
};

std::string_view to_string(ViolationKind kind);

/// Metadata tampering (IllegalSet/IllegalUnset) can never be whitelisted.
constexpr bool is_suppressible(ViolationKind kind) {
  return kind != ViolationKind::IllegalSet && kind != ViolationKind::IllegalUnset;
}

struct CaliException {
  ViolationKind kind;
  std::uint64_t addr = 0;
  std::string detail;
};

/// CFORM R1, R2, R3.
struct CformRequest {
  std::uint64_t addr = 0;        // R1, 64B aligned
  std::uint64_t set_bits = 0;    // R2, 1 = make security byte
  std::uint64_t change_mask = 0; // R3, 1 = allow change
  bool non_temporal = false;     // accepted; same functional behaviour
};

/// One cell of the CFORM K-map.
enum class ByteOutcome { Regular, Security, Exception };

constexpr ByteOutcome cform_byte_transition(bool is_security, bool set, bool allow) {
  if (!allow) return is_security ? ByteOutcome::Security : ByteOutcome::Regular;
  if (set) return is_security ? ByteOutcome::Exception : ByteOutcome::Security;
  return is_security ? ByteOutcome::Regular : ByteOutcome::Exception;
}

using CformResult = std::variant<CaliLine, CaliException>;

/// Applies a CFORM to one line. Atomic: on exception the input line is the
/// architectural state and no byte is changed. Every byte whose state flips
/// has its data forced to 0x00. Throws UsageError for an unaligned address.
CformResult apply_cform(const CaliLine &line, const CformRequest &req);

/// Whitelist window, modelled as a nesting depth over the privileged
/// exception-mask register.
class ExceptionMask {
public:
  void enter() { ++depth_; }
  void exit() {
    if (depth_ == 0) throw UsageError("whitelist_exit without matching whitelist_enter");
    --depth_;
  }
  bool suppressed() const { return depth_ > 0; }
  unsigned depth() const { return depth_; }

private:
  unsigned depth_ = 0;
};

} // namespace califorms
