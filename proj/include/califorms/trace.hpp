// JSON-lines trace driver for the simulator (the `simulate` subcommand).
// The trace format is documented in docs/trace-format.md.
#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <string>

#include <json.hpp>

#include "califorms/allocator.hpp"
#include "califorms/layout.hpp"
#include "califorms/memsys.hpp"
#include "califorms/struct_parser.hpp"

namespace califorms {

inline constexpr int kTraceFormatVersion = 1;

struct TraceOptions {
  bool strict = false;        // stop at the first violation
  bool record_loads = false;  // include every load value in the output
  MachineConfig machine;
  HeapConfig heap;
  StackConfig stack;
  StructCatalog catalog;      // named types for malloc
  Policy policy = Policy::Opportunistic;
  std::uint64_t seed = 0;
  std::size_t min_pad = 1;
  std::size_t max_pad = 7;
};

struct TraceReport {
  nlohmann::json stats;
  int exit_code = 0; // 0 clean, 2 violations logged
};

/// Runs a trace. Malformed input throws ParseError carrying the line number.
TraceReport run_trace(std::istream &in, const std::string &source, const TraceOptions &options);

/// Parses "0x1f", "1f" (hex) or a JSON integer.
std::uint64_t parse_hex_u64(const nlohmann::json &value);

} // namespace califorms
