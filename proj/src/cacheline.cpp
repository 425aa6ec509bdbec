#include "califorms/cacheline.hpp"

#include <algorithm>
#include <bit>
#include <string>

namespace califorms {

namespace {

constexpr std::uint8_t kLow6 = 0x3f;
constexpr unsigned kLocBits = 6;
constexpr unsigned kCountBits = 2;
constexpr unsigned kSentinelShift = kCountBits + 4 * kLocBits; // 26

// Regular header bytes are parked in the security locations (among the first
// h) that lie outside the header. Both lists are ascending and equally long.
struct Displacement {
  std::vector<std::uint8_t> header_positions;
  std::vector<std::uint8_t> slots;
};

Displacement displacement_for(const std::vector<std::uint8_t> &first_locs,
                              const SecurityMask &mask) {
  const std::size_t h = first_locs.size();
  Displacement d;
  for (std::size_t j = 0; j < h; ++j) {
    if (!mask.test(j)) d.header_positions.push_back(static_cast<std::uint8_t>(j));
  }
  for (std::uint8_t loc : first_locs) {
    if (loc >= h) d.slots.push_back(loc);
  }
  return d;
}

} // namespace

std::vector<std::uint8_t> security_locations(const SecurityMask &mask) {
  std::vector<std::uint8_t> locs;
  locs.reserve(mask.count());
  for (std::size_t i = 0; i < kLineSize; ++i) {
    if (mask.test(i)) locs.push_back(static_cast<std::uint8_t>(i));
  }
  return locs;
}

std::uint8_t find_sentinel(const CaliLine &line) {
  if (line.mask.none()) {
    throw std::invalid_argument("find_sentinel: line has no security byte");
  }
  std::bitset<64> used;
  for (std::size_t i = 0; i < kLineSize; ++i) {
    if (!line.mask.test(i)) used.set(line.data[i] & kLow6);
  }
  for (std::uint8_t v = 0; v < 64; ++v) {
    if (!used.test(v)) return v;
  }
  // At most 63 regular bytes exist, so some pattern is always free.
  throw std::logic_error("find_sentinel: no free pattern");
}

EncodedLine encode_sentinel(const CaliLine &line) {
  if (line.mask.none()) return {line.data, false};

  const auto locs = security_locations(line.mask);
  const std::size_t k = locs.size();
  const std::size_t h = std::min<std::size_t>(k, 4);
  const std::vector<std::uint8_t> first(locs.begin(), locs.begin() + h);

  EncodedLine enc{line.data, true};
  for (std::uint8_t loc : locs) enc.payload[loc] = 0;

  const auto disp = displacement_for(first, line.mask);
  for (std::size_t i = 0; i < disp.slots.size(); ++i) {
    enc.payload[disp.slots[i]] = line.data[disp.header_positions[i]];
  }

  std::uint32_t word = static_cast<std::uint32_t>(h - 1);
  for (std::size_t i = 0; i < h; ++i) {
    word |= static_cast<std::uint32_t>(first[i]) << (kCountBits + kLocBits * i);
  }
  if (k >= 4) {
    const std::uint8_t sentinel = find_sentinel(line);
    word |= static_cast<std::uint32_t>(sentinel) << kSentinelShift;
    for (std::size_t i = 4; i < k; ++i) enc.payload[locs[i]] = sentinel;
  }
  for (std::size_t b = 0; b < h; ++b) {
    enc.payload[b] = static_cast<std::uint8_t>(word >> (8 * b));
  }
  return enc;
}

SentinelHeader read_sentinel_header(std::span<const std::uint8_t, 4> first_word) {
  SentinelHeader hdr;
  hdr.count_code = first_word[0] & 0x3;
  const std::size_t h = hdr.count_code + 1u;

  std::uint32_t word = 0;
  for (std::size_t b = 0; b < h; ++b) {
    word |= static_cast<std::uint32_t>(first_word[b]) << (8 * b);
  }
  for (std::size_t i = 0; i < h; ++i) {
    hdr.locations.push_back(
        static_cast<std::uint8_t>((word >> (kCountBits + kLocBits * i)) & kLow6));
  }
  if (h == 4) {
    hdr.sentinel = static_cast<std::uint8_t>((word >> kSentinelShift) & kLow6);
  } else {
    const unsigned used = kCountBits + kLocBits * static_cast<unsigned>(h);
    if ((word >> used) != 0) {
      throw CorruptLineError("sentinel header: nonzero unused metadata bits");
    }
  }
  for (std::size_t i = 1; i < h; ++i) {
    if (hdr.locations[i] <= hdr.locations[i - 1]) {
      throw CorruptLineError("sentinel header: locations not strictly ascending (" +
                             std::to_string(hdr.locations[i - 1]) + ", " +
                             std::to_string(hdr.locations[i]) + ")");
    }
  }
  return hdr;
}

CaliLine decode_sentinel(const EncodedLine &enc) {
  if (!enc.califormed) return {enc.payload, {}};

  const auto hdr = read_sentinel_header(
      std::span<const std::uint8_t, 4>(enc.payload.data(), 4));
  CaliLine line{enc.payload, {}};
  for (std::uint8_t loc : hdr.locations) line.mask.set(loc);

  if (hdr.sentinel) {
    const std::uint8_t fourth = hdr.locations.back();
    for (std::size_t j = 4; j < kLineSize; ++j) {
      if (line.mask.test(j)) continue;
      if ((enc.payload[j] & kLow6) != *hdr.sentinel) continue;
      if (j < fourth) {
        throw CorruptLineError("sentinel match at byte " + std::to_string(j) +
                               " precedes the fourth recorded location");
      }
      line.mask.set(j);
    }
  }

  const auto disp = displacement_for(hdr.locations, line.mask);
  if (disp.slots.size() != disp.header_positions.size()) {
    throw CorruptLineError("sentinel header: displacement slots do not match header");
  }
  for (std::size_t i = 0; i < disp.slots.size(); ++i) {
    line.data[disp.header_positions[i]] = enc.payload[disp.slots[i]];
  }
  for (std::size_t j = 0; j < kLineSize; ++j) {
    if (line.mask.test(j)) line.data[j] = 0;
  }
  return line;
}

ChunkedLine4B encode_4b(const CaliLine &line) {
  ChunkedLine4B out{line.data, {}};
  for (std::size_t c = 0; c < kChunks; ++c) {
    const std::size_t base = c * kChunkSize;
    std::uint8_t bits = 0;
    for (std::size_t i = 0; i < kChunkSize; ++i) {
      if (line.mask.test(base + i)) {
        bits |= static_cast<std::uint8_t>(1u << i);
        out.payload[base + i] = 0;
      }
    }
    if (bits == 0) continue;
    const auto holder = static_cast<std::uint8_t>(std::countr_zero(bits));
    out.payload[base + holder] = bits;
    out.chunks[c] = {true, holder};
  }
  return out;
}

CaliLine decode_4b(const ChunkedLine4B &cl) {
  CaliLine line{cl.payload, {}};
  for (std::size_t c = 0; c < kChunks; ++c) {
    if (!cl.chunks[c].califormed) continue;
    const std::size_t base = c * kChunkSize;
    const std::uint8_t holder = cl.chunks[c].holder;
    if (holder >= kChunkSize) {
      throw CorruptLineError("4B chunk " + std::to_string(c) + ": holder index out of range");
    }
    const std::uint8_t bits = cl.payload[base + holder];
    if (!(bits >> holder & 1u)) {
      throw CorruptLineError("4B chunk " + std::to_string(c) +
                             ": holder byte is not a security byte");
    }
    for (std::size_t i = 0; i < kChunkSize; ++i) {
      if (bits >> i & 1u) {
        line.mask.set(base + i);
        line.data[base + i] = 0;
      }
    }
  }
  return line;
}

ChunkedLine1B encode_1b(const CaliLine &line) {
  ChunkedLine1B out{line.data, {}};
  for (std::size_t c = 0; c < kChunks; ++c) {
    const std::size_t base = c * kChunkSize;
    std::uint8_t bits = 0;
    for (std::size_t i = 0; i < kChunkSize; ++i) {
      if (line.mask.test(base + i)) {
        bits |= static_cast<std::uint8_t>(1u << i);
        out.payload[base + i] = 0;
      }
    }
    if (bits == 0) continue;
    if (!(bits & 1u)) {
      const std::size_t last = kChunkSize - 1 - std::countl_zero(bits);
      out.payload[base + last] = line.data[base];
    }
    out.payload[base] = bits;
    out.califormed.set(c);
  }
  return out;
}

CaliLine decode_1b(const ChunkedLine1B &cl) {
  CaliLine line{cl.payload, {}};
  for (std::size_t c = 0; c < kChunks; ++c) {
    if (!cl.califormed.test(c)) continue;
    const std::size_t base = c * kChunkSize;
    const std::uint8_t bits = cl.payload[base];
    if (bits == 0) {
      throw CorruptLineError("1B chunk " + std::to_string(c) +
                             ": califormed chunk with empty bit vector");
    }
    if (!(bits & 1u)) {
      const std::size_t last = kChunkSize - 1 - std::countl_zero(bits);
      line.data[base] = cl.payload[base + last];
    }
    for (std::size_t i = 0; i < kChunkSize; ++i) {
      if (bits >> i & 1u) {
        line.mask.set(base + i);
        line.data[base + i] = 0;
      }
    }
  }
  return line;
}

} // namespace califorms
