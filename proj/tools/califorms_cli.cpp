// califorms: struct analysis, trace simulation, line-format conversion and
// attack-probability tooling.
//
//   califorms analyze  <structs> [--policy P] [--min N] [--max N] [--seed S] [--bins B] [--format json|table]
//   califorms simulate <trace.jsonl> [--structs FILE] [--strict] [--record-loads] ...
//   califorms convert  --line <128 hex digits> --mask <16 hex digits> [--format text|json]
//   califorms attack   [--pn F] [--objects O] [--spans n] [--min N] [--max N] [--trials T] [--seed S]
//
// Exit codes: 0 success, 1 usage or input error, 2 violations logged (simulate)
// or failed verification (convert, attack).

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "califorms/analysis.hpp"
#include "califorms/cacheline.hpp"
#include "califorms/hex.hpp"
#include "califorms/layout.hpp"
#include "califorms/struct_parser.hpp"
#include "califorms/trace.hpp"

using nlohmann::json;
using namespace califorms;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitViolations = 2;

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(path + ": cannot open file");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json spans_json(const std::vector<ByteSpan> &spans) {
  json out = json::array();
  for (const auto &s : spans) out.push_back({s.offset, s.length});
  return out;
}

std::string_view kind_name(FieldKind k) {
  switch (k) {
  case FieldKind::Scalar: return "scalar";
  case FieldKind::Array: return "array";
  case FieldKind::Pointer: return "pointer";
  case FieldKind::FunctionPointer: return "function_pointer";
  case FieldKind::Aggregate: return "aggregate";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeArgs {
  std::string input;
  std::string policy = "opportunistic";
  std::size_t min_pad = 1;
  std::size_t max_pad = 7;
  std::uint64_t seed = 0;
  std::size_t bins = 10;
  std::string format = "json";
};

int run_analyze(const AnalyzeArgs &args) {
  const auto policy = parse_policy(args.policy);
  if (!policy) throw InputError("unknown policy '" + args.policy + "'");
  if (args.min_pad > args.max_pad) throw InputError("--min must not exceed --max");
  if (args.bins == 0) throw InputError("--bins must be at least 1");

  const StructCatalog catalog = parse_struct_definitions(read_file(args.input), args.input);
  const auto &structs = catalog.structs();

  json out;
  out["version"] = kTraceFormatVersion;
  out["policy"] = args.policy;
  out["min"] = args.min_pad;
  out["max"] = args.max_pad;
  out["seed"] = args.seed;
  out["structs"] = json::array();

  std::vector<CaliformedLayout> califormed;
  for (const auto &s : structs) {
    const CaliformedLayout cl = caliform_layout(s, *policy, args.seed, args.min_pad, args.max_pad);
    json fields = json::array();
    for (std::size_t i = 0; i < s.fields.size(); ++i) {
      const FieldDef &f = s.fields[i];
      fields.push_back({{"name", f.name},
                        {"type", f.type_name},
                        {"kind", kind_name(f.kind)},
                        {"size", f.size},
                        {"alignment", f.alignment},
                        {"count", f.count},
                        {"offset", s.offsets[i]},
                        {"califormed_offset", cl.layout.offsets[i]}});
    }
    json plan = json::array();
    for (const auto &req : emit_cform_plan(cl, 0)) {
      plan.push_back({{"addr", hex_u64(req.addr)},
                      {"set", hex_fixed(req.set_bits, 16)},
                      {"mask", hex_fixed(req.change_mask, 16)}});
    }
    out["structs"].push_back({{"name", s.name},
                              {"total_size", s.total_size},
                              {"alignment", s.alignment},
                              {"field_bytes", s.field_bytes()},
                              {"density", s.density()},
                              {"padding_spans", spans_json(s.padding_spans)},
                              {"fields", fields},
                              {"califormed",
                               {{"total_size", cl.layout.total_size},
                                {"overhead", cl.overhead()},
                                {"security_bytes", cl.security_bytes()},
                                {"security_spans", spans_json(cl.security_spans)},
                                {"cform_plan", plan}}}});
    califormed.push_back(cl);
  }

  const DensityHistogram h = density_histogram(structs, args.bins);
  json edges = json::array();
  for (std::size_t b = 0; b <= h.bins; ++b) edges.push_back(static_cast<double>(b) / static_cast<double>(h.bins));
  out["histogram"] = {{"bins", h.bins},
                      {"edges", edges},
                      {"counts", h.counts},
                      {"structs", h.structs},
                      {"with_padding", h.with_padding},
                      {"fraction_with_padding", h.fraction_with_padding()}};

  if (args.format == "json") {
    std::cout << out.dump(2) << "\n";
    return kExitOk;
  }

  std::ostringstream t;
  t << std::left << std::setw(20) << "struct" << std::right << std::setw(7) << "size" << std::setw(8)
    << "fields" << std::setw(9) << "padding" << "  " << std::left << std::setw(18) << "density"
    << std::setw(15) << "policy" << std::right << std::setw(9) << "cal.size" << std::setw(10)
    << "sec.bytes" << "  spans\n";
  for (std::size_t i = 0; i < structs.size(); ++i) {
    const StructLayout &s = structs[i];
    const CaliformedLayout &cl = califormed[i];
    char density[64];
    std::snprintf(density, sizeof density, "%zu/%zu (%.4f)", s.field_bytes(), s.total_size, s.density());
    std::string spans;
    for (const auto &sp : cl.security_spans) {
      spans += (spans.empty() ? "" : " ") + ("[" + std::to_string(sp.offset) + "," + std::to_string(sp.length) + "]");
    }
    t << std::left << std::setw(20) << s.name << std::right << std::setw(7) << s.total_size
      << std::setw(8) << s.field_bytes() << std::setw(9) << (s.total_size - s.field_bytes()) << "  "
      << std::left << std::setw(18) << density << std::setw(15) << to_string(cl.policy) << std::right
      << std::setw(9) << cl.layout.total_size << std::setw(10) << cl.security_bytes() << "  "
      << (spans.empty() ? "-" : spans) << "\n";
  }
  t << "\ndensity histogram (" << h.bins << " bins)\n";
  for (std::size_t b = 0; b < h.bins; ++b) {
    char range[48];
    std::snprintf(range, sizeof range, "[%.2f, %.2f%c", static_cast<double>(b) / h.bins,
                  static_cast<double>(b + 1) / h.bins, b + 1 == h.bins ? ']' : ')');
    t << "  " << std::left << std::setw(14) << range << std::right << std::setw(6) << h.counts[b] << "\n";
  }
  char frac[64];
  std::snprintf(frac, sizeof frac, "%.4f", h.fraction_with_padding());
  t << "structs with padding: " << h.with_padding << "/" << h.structs << " (" << frac << ")\n";
  std::cout << t.str();
  return kExitOk;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string trace;
  std::string structs;
  bool strict = false;
  bool record_loads = false;
  std::string policy = "opportunistic";
  std::uint64_t seed = 0;
  std::size_t min_pad = 1;
  std::size_t max_pad = 7;
  std::size_t l1_lines = 512;
  std::size_t l2_lines = 4096;
  std::size_t quarantine = std::size_t{256} << 10;
  std::size_t heap_size = std::size_t{16} << 20;
};

int run_simulate(const SimulateArgs &args) {
  TraceOptions opts;
  opts.strict = args.strict;
  opts.record_loads = args.record_loads;
  const auto policy = parse_policy(args.policy);
  if (!policy) throw InputError("unknown policy '" + args.policy + "'");
  opts.policy = *policy;
  opts.seed = args.seed;
  opts.min_pad = args.min_pad;
  opts.max_pad = args.max_pad;
  opts.machine.l1_lines = args.l1_lines;
  opts.machine.l2_lines = args.l2_lines;
  opts.heap.quarantine_threshold = args.quarantine;
  opts.heap.capacity = args.heap_size;
  if (!args.structs.empty()) {
    opts.catalog = parse_struct_definitions(read_file(args.structs), args.structs);
  }

  TraceReport report;
  if (args.trace == "-") {
    report = run_trace(std::cin, "<stdin>", opts);
  } else {
    std::ifstream in(args.trace);
    if (!in) throw InputError(args.trace + ": cannot open file");
    report = run_trace(in, args.trace, opts);
  }
  std::cout << report.stats.dump(2) << "\n";
  return report.exit_code;
}

// ---------------------------------------------------------------------------
// convert

struct ConvertArgs {
  std::string line;
  std::string mask;
  std::string format = "text";
};

std::string meta4_text(const ChunkedLine4B &cl) {
  std::string out;
  for (std::size_t c = 0; c < kChunks; ++c) {
    if (c) out += ",";
    out += cl.chunks[c].califormed ? "1:" + std::to_string(cl.chunks[c].holder) : "-";
  }
  return out;
}

std::string meta1_text(const ChunkedLine1B &cl) {
  std::string out;
  for (std::size_t c = 0; c < kChunks; ++c) out += cl.califormed.test(c) ? '1' : '0';
  return out;
}

int run_convert(const ConvertArgs &args) {
  const auto bytes = parse_hex_bytes(args.line);
  if (!bytes || bytes->size() != kLineSize) {
    throw InputError("--line must be exactly 128 hex digits (64 bytes)");
  }
  std::string_view mask_text = args.mask;
  if (mask_text.starts_with("0x") || mask_text.starts_with("0X")) mask_text.remove_prefix(2);
  const auto mask = mask_text.size() == 16 ? parse_hex(mask_text) : std::nullopt;
  if (!mask) throw InputError("--mask must be exactly 16 hex digits (bit i = byte i)");

  CaliLine line;
  std::copy(bytes->begin(), bytes->end(), line.data.begin());
  line.mask = mask_from_bits(*mask);
  // Security positions carry no data.
  for (std::size_t i = 0; i < kLineSize; ++i) {
    if (line.mask.test(i)) line.data[i] = 0;
  }

  const EncodedLine sentinel = encode_sentinel(line);
  const ChunkedLine4B b4 = encode_4b(line);
  const ChunkedLine1B b1 = encode_1b(line);
  const bool ok_sentinel = decode_sentinel(sentinel) == line;
  const bool ok_4b = decode_4b(b4) == line;
  const bool ok_1b = decode_1b(b1) == line;
  const bool ok = ok_sentinel && ok_4b && ok_1b;

  std::optional<SentinelHeader> header;
  if (sentinel.califormed) {
    header = read_sentinel_header(std::span<const std::uint8_t, 4>(sentinel.payload.data(), 4));
  }

  if (args.format == "json") {
    json out;
    out["version"] = kTraceFormatVersion;
    out["input"] = {{"data", hex_bytes(line.data)}, {"mask", hex_fixed(*mask, 16)}};
    out["bitvector8"] = {{"data", hex_bytes(line.data)}, {"meta", hex_fixed(mask_bits(line.mask), 16)}};
    json s = {{"califormed", sentinel.califormed}, {"payload", hex_bytes(sentinel.payload)}};
    if (header) {
      s["header"] = {{"count_code", header->count_code},
                     {"locations", header->locations},
                     {"sentinel", header->sentinel ? json(*header->sentinel) : json(nullptr)}};
    }
    out["sentinel"] = s;
    json chunks = json::array();
    for (const auto &c : b4.chunks) {
      chunks.push_back(c.califormed ? json{{"califormed", true}, {"holder", c.holder}}
                                    : json{{"califormed", false}});
    }
    out["bitvector4"] = {{"payload", hex_bytes(b4.payload)}, {"chunks", chunks}};
    out["bitvector1"] = {{"payload", hex_bytes(b1.payload)}, {"meta", meta1_text(b1)}};
    out["round_trip"] = {{"sentinel", ok_sentinel}, {"bitvector4", ok_4b}, {"bitvector1", ok_1b}, {"ok", ok}};
    std::cout << out.dump(2) << "\n";
  } else {
    std::cout << "input      data=" << hex_bytes(line.data) << " mask=" << hex_fixed(*mask, 16) << "\n";
    std::cout << "bitvector8 data=" << hex_bytes(line.data) << " meta=" << hex_fixed(mask_bits(line.mask), 16) << "\n";
    std::cout << "sentinel   califormed=" << (sentinel.califormed ? 1 : 0)
              << " payload=" << hex_bytes(sentinel.payload) << "\n";
    if (header) {
      std::cout << "           count_code=" << static_cast<int>(header->count_code) << " locations=";
      for (std::size_t i = 0; i < header->locations.size(); ++i) {
        std::cout << (i ? "," : "") << static_cast<int>(header->locations[i]);
      }
      std::cout << " sentinel="
                << (header->sentinel ? std::to_string(*header->sentinel) : std::string("none")) << "\n";
    }
    std::cout << "bitvector4 payload=" << hex_bytes(b4.payload) << " meta=" << meta4_text(b4) << "\n";
    std::cout << "bitvector1 payload=" << hex_bytes(b1.payload) << " meta=" << meta1_text(b1) << "\n";
    if (ok) {
      std::cout << "round-trip OK\n";
    } else {
      std::cout << "round-trip FAILED:" << (ok_sentinel ? "" : " sentinel") << (ok_4b ? "" : " bitvector4")
                << (ok_1b ? "" : " bitvector1") << "\n";
    }
  }
  return ok ? kExitOk : kExitViolations;
}

// ---------------------------------------------------------------------------
// attack

struct AttackArgs {
  double pn = 0.1;
  std::uint64_t objects = 250;
  std::uint64_t spans = 1;
  std::size_t min_pad = 1;
  std::size_t max_pad = 7;
  std::size_t trials = 100000;
  std::uint64_t seed = 0;
  std::size_t object_size = 1000;
};

int run_attack(const AttackArgs &args) {
  if (args.min_pad > args.max_pad) throw InputError("--min must not exceed --max");
  const AttackParams params{args.pn, args.objects, args.spans, args.min_pad, args.max_pad};
  const double survival = scan_survival_probability(params);
  const double guess = guess_success_probability(args.spans, args.min_pad, args.max_pad);

  json out;
  out["version"] = kTraceFormatVersion;
  out["params"] = {{"pn", args.pn},        {"objects", args.objects}, {"spans", args.spans},
                   {"min", args.min_pad},  {"max", args.max_pad},     {"trials", args.trials},
                   {"seed", args.seed},    {"object_size", args.object_size}};
  out["closed_form"] = {{"scan_survival", survival},
                        {"scan_detection", 1.0 - survival},
                        {"guess_success", guess}};

  bool agrees = true;
  if (args.trials > 0) {
    const ScanScenario scenario = scenario_for(args.pn, args.objects, args.object_size, args.seed);
    const ScanEstimate est = monte_carlo_scan(scenario, args.trials, args.seed);
    const double realised = static_cast<double>(scenario.security_bytes) / static_cast<double>(scenario.object_size);
    agrees = est.z_score() <= 3.0;
    out["empirical"] = {{"trials", est.trials},
                        {"detections", est.detections},
                        {"detection_rate", est.detection_rate},
                        {"survival_rate", 1.0 - est.detection_rate},
                        {"security_bytes", scenario.security_bytes},
                        {"realised_pn", realised}};
    out["ci"] = {{"expected_detection", est.expected_rate},
                 {"sigma", est.sigma},
                 {"lower", est.expected_rate - 3.0 * est.sigma},
                 {"upper", est.expected_rate + 3.0 * est.sigma},
                 {"z", est.z_score()},
                 {"within_3_sigma", agrees}};
  } else {
    out["empirical"] = nullptr;
    out["ci"] = nullptr;
  }
  std::cout << out.dump(2) << "\n";
  return agrees ? kExitOk : kExitViolations;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Byte-granular memory blacklisting simulator and analysis toolkit"};
  app.require_subcommand(1);

  AnalyzeArgs analyze;
  auto *an = app.add_subcommand("analyze", "Struct layouts, padding, density and security-byte insertion");
  an->add_option("input", analyze.input, "Struct definitions (C subset or JSON)")->required();
  an->add_option("--policy", analyze.policy, "opportunistic | full | intelligent")
      ->check(CLI::IsMember({"opportunistic", "full", "intelligent"}));
  an->add_option("--min", analyze.min_pad, "Minimum security span length");
  an->add_option("--max", analyze.max_pad, "Maximum security span length");
  an->add_option("--seed", analyze.seed, "Seed for span lengths");
  an->add_option("--bins", analyze.bins, "Density histogram bins");
  an->add_option("--format", analyze.format, "json | table")->check(CLI::IsMember({"json", "table"}));

  SimulateArgs sim;
  auto *si = app.add_subcommand("simulate", "Run a JSON-lines trace through the memory model");
  si->add_option("trace", sim.trace, "Trace file ('-' for stdin)")->required();
  si->add_option("--structs", sim.structs, "Struct definitions for malloc by type name");
  si->add_flag("--strict", sim.strict, "Stop at the first violation");
  si->add_flag("--record-loads", sim.record_loads, "Include every load value in the output");
  si->add_option("--policy", sim.policy, "Default malloc policy")
      ->check(CLI::IsMember({"opportunistic", "full", "intelligent"}));
  si->add_option("--seed", sim.seed, "Default malloc seed");
  si->add_option("--min", sim.min_pad, "Default minimum span length");
  si->add_option("--max", sim.max_pad, "Default maximum span length");
  si->add_option("--l1-lines", sim.l1_lines, "L1 capacity in lines");
  si->add_option("--l2-lines", sim.l2_lines, "L2 capacity in lines");
  si->add_option("--quarantine", sim.quarantine, "Quarantine threshold in bytes");
  si->add_option("--heap-size", sim.heap_size, "Heap capacity in bytes");

  ConvertArgs conv;
  auto *co = app.add_subcommand("convert", "Show all line encodings of one 64-byte line");
  co->add_option("--line", conv.line, "64 data bytes as 128 hex digits, byte 0 first")->required();
  co->add_option("--mask", conv.mask, "Security mask as 16 hex digits, bit i = byte i")->required();
  co->add_option("--format", conv.format, "text | json")->check(CLI::IsMember({"text", "json"}));

  AttackArgs atk;
  auto *at = app.add_subcommand("attack", "Derandomization probabilities and Monte Carlo check");
  at->add_option("--pn", atk.pn, "Fraction of security bytes per object (P/N)")->check(CLI::Range(0.0, 1.0));
  at->add_option("--objects", atk.objects, "Number of objects scanned (O)");
  at->add_option("--spans", atk.spans, "Spans to guess (n)");
  at->add_option("--min", atk.min_pad, "Minimum span width");
  at->add_option("--max", atk.max_pad, "Maximum span width");
  at->add_option("--trials", atk.trials, "Monte Carlo trials (0 disables)");
  at->add_option("--seed", atk.seed, "Monte Carlo seed");
  at->add_option("--object-size", atk.object_size, "Object size N used by the Monte Carlo scan")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*an) return run_analyze(analyze);
    if (*si) return run_simulate(sim);
    if (*co) return run_convert(conv);
    if (*at) return run_attack(atk);
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
