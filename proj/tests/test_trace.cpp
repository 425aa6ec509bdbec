#include <sstream>

#include <ostream>

#include <doctest.h>

#include "califorms/trace.hpp"

using namespace califorms;
using nlohmann::json;

namespace {

TraceReport run(const std::string &text, TraceOptions opts = {}) {
  std::istringstream in(text);
  return run_trace(in, "t.jsonl", opts);
}

} // namespace

TEST_SUITE("trace") {

TEST_CASE("use after free") {
  const TraceReport r = run(R"({"op":"malloc","id":"p","size":16}
{"op":"store","ptr":"p","offset":8,"width":8,"value":"0x55"}
{"op":"free","id":"p"}
{"op":"load","ptr":"p","offset":8,"width":8}
)");
  CHECK(r.exit_code == 2);
  CHECK(r.stats["violations_by_kind"]["TemporalViolation"] == 1);
  CHECK(r.stats["exceptions"].size() == 1);
  CHECK(r.stats["exceptions"][0]["line"] == 4);
  CHECK(r.stats["heap"]["quarantined_bytes"] == 64);
}

TEST_CASE("clean trace exits 0 and records loads") {
  TraceOptions opts;
  opts.record_loads = true;
  const TraceReport r = run(R"({"op":"store","addr":"0x2000","width":4,"value":"0xcafe"}

{"op":"load","addr":"0x2000","width":4}
{"op":"flush"}
)",
                            opts);
  CHECK(r.exit_code == 0);
  CHECK(r.stats["ops"] == 3);
  CHECK(r.stats["loads"][0]["value"] == "0xcafe");
  CHECK(r.stats["counters"]["fills"] == r.stats["counters"]["spills"]);
}

TEST_CASE("strict stops at the first violation") {
  const std::string text = R"({"op":"cform","addr":"0x1000","set":"0000000000000001","mask":"0000000000000001"}
{"op":"load","addr":"0x1000","width":1}
{"op":"load","addr":"0x1000","width":1}
)";
  TraceOptions opts;
  opts.strict = true;
  const TraceReport strict = run(text, opts);
  CHECK(strict.stats["stopped_early"] == true);
  CHECK(strict.stats["exceptions"].size() == 1);
  CHECK(strict.exit_code == 2);
  CHECK(run(text).stats["exceptions"].size() == 2);
}

TEST_CASE("whitelist, lsq, stack and typed malloc") {
  TraceOptions opts;
  opts.catalog.add(compute_layout({scalar_field("c", 1, 1, "char"), scalar_field("i", 4, 4, "int")}, "CI"));
  opts.record_loads = true;
  const TraceReport r = run(R"({"op":"malloc","id":"a","type":"CI"}
{"op":"whitelist_enter"}
{"op":"load","ptr":"a","width":8}
{"op":"whitelist_exit"}
{"op":"lsq","ops":[{"op":"store","addr":"0x3000","width":8,"value":"5"},{"op":"load","addr":"0x3000","width":8}]}
{"op":"stack_enter","objects":[{"type":"CI"}]}
{"op":"stack_exit"}
{"op":"malloc","id":"b","type":"int"}
{"op":"malloc","id":"c","layout":{"fields":[{"name":"x","type":"char"},{"name":"p","type":"ptr"}]},"policy":"full","seed":3}
)",
                            opts);
  CHECK(r.exit_code == 0);
  CHECK(r.stats["counters"]["suppressed_violations"] == 1);
  CHECK(r.stats["loads"][1]["value"] == "0x5");
  CHECK(r.stats["heap"]["live_allocations"] == 3);
}

TEST_CASE("malformed traces report the line") {
  auto line_of = [](const std::string &text) -> std::size_t {
    try {
      run(text);
    } catch (const ParseError &e) {
      return e.line();
    }
    return 0;
  };
  CHECK(line_of("{\"op\":\"flush\"}\nnot json\n") == 2);
  CHECK(line_of("{\"op\":\"teleport\"}\n") == 1);
  CHECK(line_of("{\"op\":\"load\",\"addr\":\"0x1001\",\"width\":2}\n") == 1);
  CHECK(line_of("{\"op\":\"cform\",\"addr\":\"0x1000\",\"set\":\"1\",\"mask\":\"1\"}\n") == 1);
  CHECK(line_of("{\"op\":\"free\",\"id\":\"nope\"}\n") == 1);
  CHECK(line_of("{\"op\":\"flush\"}\n{\"op\":\"whitelist_exit\"}\n") == 2);
  CHECK(line_of("{\"op\":\"malloc\",\"id\":\"x\",\"type\":\"struct Q\"}\n") == 1);
  CHECK(line_of("{\"op\":\"malloc\",\"id\":\"x\",\"size\":8}\n{\"op\":\"malloc\",\"id\":\"x\",\"size\":8}\n") == 2);
}

TEST_CASE("hex values") {
  CHECK(parse_hex_u64(json("0x10")) == 16);
  CHECK(parse_hex_u64(json("ff")) == 255);
  CHECK(parse_hex_u64(json(12)) == 12);
  CHECK_THROWS(parse_hex_u64(json(-1)));
  CHECK_THROWS(parse_hex_u64(json("0xzz")));
}

}
