#include "califorms/cform.hpp"

namespace califorms {

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
  case ViolationKind::IllegalSet: return "IllegalSet";
  case ViolationKind::IllegalUnset: return "IllegalUnset";
  case ViolationKind::LoadViolation: return "LoadViolation";
  case ViolationKind::StoreViolation: return "StoreViolation";
  case ViolationKind::LsqViolation: return "LsqViolation";
  case ViolationKind::TemporalViolation: return "TemporalViolation";
  }
  return "Unknown";
}

CformResult apply_cform(const CaliLine &line, const CformRequest &req) {
  if (req.addr % kLineSize != 0) {
    throw UsageError("cform address is not 64-byte aligned");
  }
  CaliLine out = line;
  for (std::size_t i = 0; i < kLineSize; ++i) {
    const bool allow = req.change_mask >> i & 1u;
    const bool set = req.set_bits >> i & 1u;
    const bool was_security = line.mask.test(i);
    switch (cform_byte_transition(was_security, set, allow)) {
    case ByteOutcome::Exception:
      return CaliException{set ? ViolationKind::IllegalSet : ViolationKind::IllegalUnset,
                           req.addr + i,
                           set ? "set of an existing security byte"
                               : "unset of a regular byte"};
    case ByteOutcome::Security:
      out.mask.set(i);
      break;
    case ByteOutcome::Regular:
      out.mask.reset(i);
      break;
    }
    if (out.mask.test(i) != was_security) out.data[i] = 0;
  }
  return out;
}

} // namespace califorms
