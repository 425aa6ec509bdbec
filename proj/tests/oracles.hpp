// Reference models the tests check the library against. Written from the
// format rules directly; nothing here calls into the code under test.
#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

namespace oracle {

struct Line {
  std::array<std::uint8_t, 64> data{};
  std::array<bool, 64> security{};
  std::size_t count() const { return static_cast<std::size_t>(std::count(security.begin(), security.end(), true)); }
};

// Smallest 6-bit value absent from the low bits of every regular byte.
inline std::optional<unsigned> sentinel(const Line &l) {
  if (l.count() == 0) return std::nullopt;
  for (unsigned v = 0; v < 64; ++v) {
    bool used = false;
    for (std::size_t i = 0; i < 64; ++i) {
      if (!l.security[i] && (l.data[i] & 0x3f) == v) used = true;
    }
    if (!used) return v;
  }
  return std::nullopt;
}

// What any correct codec must hand back: same mask, regular bytes kept,
// security bytes read as zero.
inline Line expected_roundtrip(const Line &in) {
  Line out = in;
  for (std::size_t i = 0; i < 64; ++i) {
    if (out.security[i]) out.data[i] = 0;
  }
  return out;
}

// Sentinel format, built bit by bit. Header word (little endian, bytes
// 0..h-1, h = min(k,4)): bits[1:0] count code, then 6-bit locations from
// bit 2, sentinel at bits 26..31 when k >= 4. Regular header bytes move, in
// order, to the first four security locations that lie outside the header.
inline std::array<std::uint8_t, 64> sentinel_payload(const Line &in) {
  std::array<std::uint8_t, 64> out = in.data;
  std::vector<std::size_t> locs;
  for (std::size_t i = 0; i < 64; ++i) {
    if (in.security[i]) locs.push_back(i);
  }
  const std::size_t k = locs.size();
  const std::size_t h = std::min<std::size_t>(k, 4);
  std::uint64_t word = std::min<std::size_t>(k, 4) - 1;
  for (std::size_t i = 0; i < h; ++i) word |= static_cast<std::uint64_t>(locs[i]) << (2 + 6 * i);
  const unsigned s = k >= 4 ? *sentinel(in) : 0;
  if (k >= 4) word |= static_cast<std::uint64_t>(s) << 26;

  for (std::size_t i : locs) out[i] = 0;
  for (std::size_t i = 4; i < k; ++i) out[locs[i]] = static_cast<std::uint8_t>(s);
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < h; ++i) {
    if (locs[i] >= h) slots.push_back(locs[i]);
  }
  std::size_t next = 0;
  for (std::size_t j = 0; j < h; ++j) {
    if (!in.security[j]) out[slots.at(next++)] = in.data[j];
  }
  for (std::size_t j = 0; j < h; ++j) out[j] = static_cast<std::uint8_t>(word >> (8 * j));
  return out;
}

// CFORM truth table. 0 regular, 1 security, 2 exception.
// Rows: current state (regular, security). Columns: (set, allow).
inline int kmap(bool is_security, bool set, bool allow) {
  //                    ¬allow     set,allow   ¬set,allow
  static const int regular[3] = {0, 1, 2};
  static const int security[3] = {1, 2, 0};
  const int col = !allow ? 0 : (set ? 1 : 2);
  return is_security ? security[col] : regular[col];
}

// Plain C struct layout: every field at its natural alignment, tail padded.
struct Field {
  std::size_t size;
  std::size_t align;
};
struct Layout {
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  std::vector<std::pair<std::size_t, std::size_t>> padding; // (offset, length)
};
inline Layout c_layout(const std::vector<Field> &fields) {
  Layout out;
  std::size_t at = 0;
  std::size_t max_align = 1;
  for (const Field &f : fields) {
    std::size_t placed = at;
    while (placed % f.align != 0) ++placed;
    if (placed > at) out.padding.push_back({at, placed - at});
    out.offsets.push_back(placed);
    at = placed + f.size;
    max_align = std::max(max_align, f.align);
  }
  std::size_t total = at;
  while (total % max_align != 0) ++total;
  if (total > at) out.padding.push_back({at, total - at});
  out.total = total;
  return out;
}

// Randomised corpus shared by the round-trip tests and the acceptance run.
// Mixes uniform data with adversarial data whose regular bytes cover as
// many distinct low-6-bit patterns as possible.
class Corpus {
public:
  explicit Corpus(std::uint64_t seed) : rng_(seed) {}

  Line next() {
    Line l;
    const std::size_t k = pick(65);
    std::array<std::size_t, 64> idx;
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng_);
    for (std::size_t i = 0; i < k; ++i) l.security[idx[i]] = true;

    switch (pick(4)) {
    case 0: // uniform bytes
      for (auto &b : l.data) b = static_cast<std::uint8_t>(rng_());
      break;
    case 1: { // regular bytes take distinct low-6-bit patterns
      std::array<std::uint8_t, 64> pats;
      std::iota(pats.begin(), pats.end(), 0);
      std::shuffle(pats.begin(), pats.end(), rng_);
      std::size_t p = 0;
      for (std::size_t i = 0; i < 64; ++i) {
        l.data[i] = static_cast<std::uint8_t>(pats[p++ % 64] | (rng_() & 0xc0));
      }
      break;
    }
    case 2: // one repeated byte (often collides with header patterns)
      l.data.fill(static_cast<std::uint8_t>(rng_()));
      break;
    default: // small values near the sentinel search start
      for (auto &b : l.data) b = static_cast<std::uint8_t>(pick(6));
      break;
    }
    // Garbage at security positions must not leak through any codec.
    for (std::size_t i = 0; i < 64; ++i) {
      if (l.security[i] && pick(2)) l.data[i] = static_cast<std::uint8_t>(rng_());
    }
    return l;
  }

private:
  std::size_t pick(std::size_t n) { return static_cast<std::size_t>(rng_() % n); }
  std::mt19937_64 rng_;
};

// Lines with exactly one free low-6-bit pattern: 63 regular bytes carrying
// 63 distinct patterns, one security byte at `hole`, `missing` unused.
inline Line worst_case(std::size_t hole, unsigned missing, std::uint8_t high_bits) {
  Line l;
  l.security[hole] = true;
  unsigned pat = 0;
  for (std::size_t i = 0; i < 64; ++i) {
    if (i == hole) continue;
    if (pat == missing) ++pat;
    l.data[i] = static_cast<std::uint8_t>(pat | (high_bits & 0xc0));
    ++pat;
  }
  return l;
}

} // namespace oracle
