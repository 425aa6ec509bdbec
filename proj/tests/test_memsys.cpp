#include <bit>

#include <ostream>

#include <doctest.h>

#include "califorms/memsys.hpp"
#include "support.hpp"

using namespace califorms;

namespace {

constexpr std::uint64_t kLine = 0x1000;

// Line at kLine with bytes 1..3 califormed and 0x11.. data elsewhere.
Machine padded_machine() {
  Machine m;
  for (unsigned i = 0; i < 8; ++i) m.store(kLine + 8 * i, 8, 0x1111111111111111ull * (i + 1));
  REQUIRE_FALSE(m.cform_at({kLine, 0b1110, 0b1110, false}));
  return m;
}

} // namespace

TEST_SUITE("memsys") {

TEST_CASE("loads of regular and security bytes") {
  Machine m = padded_machine();
  auto r = m.load(kLine + 4, 4);
  CHECK(r.value == 0x11111111);
  CHECK_FALSE(r.exception);

  r = m.load(kLine + 2, 1);
  CHECK(r.value == 0);
  REQUIRE(r.exception);
  CHECK(r.exception->kind == ViolationKind::LoadViolation);
  CHECK(r.exception->addr == kLine + 2);
  CHECK(m.exception_log().size() == 1);

  // Whitelisted 8-byte load over three security bytes: zeros, no exception.
  m.whitelist_enter();
  r = m.load(kLine, 8);
  m.whitelist_exit();
  CHECK(r.value == 0x1111111100000011ull);
  CHECK_FALSE(r.exception);
  CHECK(m.exception_log().size() == 1);
  CHECK(m.counters().suppressed_violations == 1);
}

TEST_CASE("one exception per violating access") {
  Machine m = padded_machine();
  m.load(kLine, 8); // touches three security bytes
  CHECK(m.exception_log().size() == 1);
  CHECK(m.exception_log()[0].addr == kLine + 1);
}

TEST_CASE("stores") {
  Machine m = padded_machine();
  CHECK_FALSE(m.store(kLine + 8, 8, 0xdeadbeef));
  CHECK(m.load(kLine + 8, 8).value == 0xdeadbeef);

  const CaliLine before = m.peek_line(kLine);
  auto exc = m.store(kLine, 4, 0xffffffff);
  REQUIRE(exc);
  CHECK(exc->kind == ViolationKind::StoreViolation);
  CHECK(m.peek_line(kLine) == before);

  m.whitelist_enter();
  CHECK_FALSE(m.store(kLine, 8, 0xa1a2a3a4a5a6a7a8ull));
  m.whitelist_exit();
  const CaliLine after = m.peek_line(kLine);
  CHECK(after.mask == before.mask);
  CHECK(after.data[0] == 0xa8);
  CHECK(after.data[1] == 0);
  CHECK(after.data[3] == 0);
  CHECK(after.data[4] == 0xa4);
}

TEST_CASE("access checks are usage errors") {
  Machine m;
  CHECK_THROWS_AS(m.load(kLine + 1, 2), UsageError);
  CHECK_THROWS_AS(m.load(kLine, 3), UsageError);
  CHECK_THROWS_AS(m.store(kLine + 4, 8, 0), UsageError);
  CHECK_THROWS_AS(m.cform_at({kLine + 8, 1, 1, false}), UsageError);
}

TEST_CASE("cform through the machine") {
  Machine m;
  CHECK_FALSE(m.cform_at({kLine, 0b1110, 0b1110, false}));
  CHECK(mask_bits(m.peek_line(kLine).mask) == 0b1110);

  auto exc = m.cform_at({kLine, 0b0010, 0b0010, false});
  REQUIRE(exc);
  CHECK(exc->kind == ViolationKind::IllegalSet);

  // Not suppressible.
  m.whitelist_enter();
  exc = m.cform_at({kLine, 0, 1, false});
  m.whitelist_exit();
  REQUIRE(exc);
  CHECK(exc->kind == ViolationKind::IllegalUnset);

  const CaliLine before = m.peek_line(kLine);
  CHECK_FALSE(m.cform_at({kLine, ~0ull, 0, false}));
  CHECK(m.peek_line(kLine) == before);
}

TEST_CASE("spill and fill convert formats") {
  Machine m;
  m.store(kLine, 8, 0x0123456789abcdefull);
  m.spill(kLine);
  CHECK(m.where(kLine) == Machine::Level::L2);
  auto enc = m.l2_line(kLine);
  REQUIRE(enc);
  CHECK_FALSE(enc->califormed);
  CHECK(enc->payload[0] == 0xef);

  m.fill(kLine);
  CHECK_FALSE(m.cform_at({kLine, 1ull << 9, 1ull << 9, false}));
  const CaliLine l1 = m.peek_line(kLine);
  m.spill(kLine);
  enc = m.l2_line(kLine);
  REQUIRE(enc);
  CHECK(enc->califormed);
  CHECK((enc->payload[0] & 3) == 0);
  CHECK((enc->payload[0] >> 2) == 9);
  CHECK(enc->payload[9] == 0xef); // displaced data[0]
  m.fill(kLine);
  CHECK(m.peek_line(kLine) == l1);

  CHECK_THROWS_AS(m.fill(kLine), UsageError);
  CHECK_THROWS_AS(m.spill(kLine + 64), UsageError);
}

TEST_CASE("corrupt L2 metadata surfaces as a fault and leaves the line") {
  Machine m;
  EncodedLine bad;
  bad.califormed = true;
  bad.payload[0] = 0x15;
  bad.payload[1] = 0x05; // duplicate locations
  m.poke_l2(kLine, bad);
  CHECK_THROWS_AS(m.load(kLine, 8), CorruptLineError);
  CHECK(m.where(kLine) == Machine::Level::L2);
}

TEST_CASE("hierarchy transparency under eviction pressure") {
  MachineConfig small{4, 8};
  Machine m(small);
  Machine ref;
  std::mt19937_64 rng(31);
  std::vector<std::uint64_t> lines;
  for (int i = 0; i < 40; ++i) lines.push_back(0x4000 + 64 * static_cast<std::uint64_t>(i) * 3);

  for (auto line : lines) {
    const std::uint64_t bits = rng() & rng() & rng();
    for (Machine *x : {&m, &ref}) {
      for (unsigned w = 0; w < 8; ++w) x->store(line + 8 * w, 8, line * 31 + w);
      x->cform_at({line, bits, bits, false});
    }
  }
  for (int n = 0; n < 3000; ++n) {
    const auto line = lines[rng() % lines.size()];
    const unsigned width = 1u << (rng() % 4);
    const std::uint64_t addr = line + (rng() % (64 / width)) * width;
    CHECK(m.load(addr, width).value == ref.load(addr, width).value);
  }
  CHECK(m.exception_log().size() == ref.exception_log().size());
  CHECK(m.counters().spills > 0);
}

TEST_CASE("fills equal spills after a final flush") {
  Machine m(MachineConfig{8, 16});
  for (std::uint64_t i = 0; i < 100; ++i) {
    m.store(0x8000 + 64 * i, 8, i);
    m.load(0x8000 + 64 * ((i * 7) % 100), 8);
  }
  m.flush();
  CHECK(m.l1_occupancy() == 0);
  CHECK(m.counters().fills == m.counters().spills);
}

TEST_CASE("lsq scenarios") {
  const std::uint64_t x = kLine + 8;

  SUBCASE("store then load forwards") {
    Machine m;
    auto r = m.lsq_execute({{LsqOpKind::Store, x, 8, 5}, {LsqOpKind::Load, x, 8}});
    CHECK(r[1].value == 5);
    CHECK(r[1].forwarded);
    CHECK_FALSE(r[0].exception);
    CHECK_FALSE(r[1].exception);
  }
  SUBCASE("cform then load reads zero") {
    Machine m;
    m.store(x, 8, 0x7777);
    auto r = m.lsq_execute({{LsqOpKind::Cform, kLine, 8, 0, 0xffull << 8, 0xffull << 8},
                            {LsqOpKind::Load, x, 8}});
    CHECK_FALSE(r[0].exception);
    CHECK(r[1].value == 0);
    CHECK_FALSE(r[1].forwarded);
    REQUIRE(r[1].exception);
    CHECK(r[1].exception->kind == ViolationKind::LsqViolation);
    CHECK(m.exception_log().size() == 1);
  }
  SUBCASE("cform then store is squashed") {
    Machine m;
    auto r = m.lsq_execute({{LsqOpKind::Cform, kLine, 8, 0, 0xffull << 8, 0xffull << 8},
                            {LsqOpKind::Store, x, 8, 0x42}});
    REQUIRE(r[1].exception);
    CHECK(r[1].exception->kind == ViolationKind::LsqViolation);
    CHECK(m.peek_line(kLine).data[8] == 0);
    CHECK(m.exception_log().size() == 1);
  }
  SUBCASE("store outside the cform mask forwards normally") {
    Machine m;
    m.store(kLine + 32, 8, 0x9999);
    auto r = m.lsq_execute({{LsqOpKind::Cform, kLine, 8, 0, 1, 1},
                            {LsqOpKind::Store, kLine + 32, 8, 0x1234},
                            {LsqOpKind::Load, kLine + 32, 8}});
    CHECK(r[2].value == 0x1234);
    CHECK_FALSE(r[2].exception);
  }
  SUBCASE("whitelisted store does not forward into security bytes") {
    Machine m;
    m.cform_at({kLine, 0b10, 0b10, false});
    m.whitelist_enter();
    auto r = m.lsq_execute({{LsqOpKind::Store, kLine, 8, ~0ull}, {LsqOpKind::Load, kLine, 8}});
    m.whitelist_exit();
    CHECK(r[1].value == 0xffffffffffff00ffull);
  }
}

TEST_CASE("page swap") {
  Machine m;
  const std::uint64_t page = 0x20000;
  for (std::uint64_t l : {0, 3, 7, 40, 63}) {
    m.store(page + 64 * l, 8, 0xabc + l);
    m.cform_at({page + 64 * l, 1ull << 20, 1ull << 20, false});
  }
  m.store(page + 64 * 10, 8, 0x55);
  std::vector<CaliLine> before;
  for (std::size_t l = 0; l < kLinesPerPage; ++l) before.push_back(m.peek_line(page + 64 * l));

  const PageImage img = m.page_swap_out(page);
  CHECK(img.bytes.size() == kPageSize);
  CHECK(std::popcount(img.meta.line_bits) == 5);
  CHECK(m.reserved_page_meta().at(page) == img.meta.line_bits);
  CHECK(m.where(page) == Machine::Level::None);

  m.page_swap_in(page, img.bytes, img.meta);
  for (std::size_t l = 0; l < kLinesPerPage; ++l) CHECK(m.peek_line(page + 64 * l) == before[l]);
  CHECK(m.reserved_page_meta().empty());

  const PageImage plain = Machine().page_swap_out(0x40000);
  CHECK(plain.meta.line_bits == 0);

  CHECK_THROWS_AS(m.page_swap_out(page + 64), UsageError);
  CHECK_THROWS_AS(m.page_swap_in(0x50000, std::vector<std::uint8_t>(100), {0x50000, 0}), UsageError);
}

TEST_CASE("classifier relabels access violations only") {
  Machine m;
  m.cform_at({kLine, 1, 1, false});
  m.set_classifier([](std::uint64_t, ViolationKind) { return ViolationKind::TemporalViolation; });
  CHECK(m.load(kLine, 1).exception->kind == ViolationKind::TemporalViolation);
  CHECK(m.cform_at({kLine, 1, 1, false})->kind == ViolationKind::IllegalSet);
}

}
