// Cache-line metadata formats and the conversions between them.
//
// Four representations of a line with security bytes are supported:
//
//   CaliLine       L1 bitvector: one metadata bit per byte (64 bits/line).
//   EncodedLine    L2+ sentinel: one califormed bit per line, locations of the
//                  security bytes packed into the first four payload bytes.
//   ChunkedLine4B  bitvector stored inside a security byte of each 8B chunk,
//                  plus 4 external bits per chunk (32 bits/line).
//   ChunkedLine1B  bitvector stored in byte 0 of each 8B chunk, plus 1
//                  external bit per chunk (8 bits/line).
//
// The bit-exact layouts are documented in docs/formats.md.
#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace califorms {

inline constexpr std::size_t kLineSize = 64;
inline constexpr std::size_t kChunkSize = 8;
inline constexpr std::size_t kChunks = kLineSize / kChunkSize;

constexpr std::uint64_t line_base(std::uint64_t addr) { return addr & ~std::uint64_t{kLineSize - 1}; }

using LineBytes = std::array<std::uint8_t, kLineSize>;
using SecurityMask = std::bitset<kLineSize>;

// External metadata cost of each format, in bits per 64B line.
inline constexpr std::size_t kBitvector8MetaBits = 64;
inline constexpr std::size_t kBitvector4MetaBits = 32;
inline constexpr std::size_t kBitvector1MetaBits = 8;
inline constexpr std::size_t kSentinelMetaBits = 1;

/// Raised when encoded metadata cannot describe any valid line.
class CorruptLineError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Canonical (L1) line: data plus one security bit per byte.
struct CaliLine {
  LineBytes data{};
  SecurityMask mask{};

  bool califormed() const { return mask.any(); }
  friend bool operator==(const CaliLine &, const CaliLine &) = default;
};

/// L2-and-beyond line: 64 payload bytes and one califormed bit.
struct EncodedLine {
  LineBytes payload{};
  bool califormed = false;

  friend bool operator==(const EncodedLine &, const EncodedLine &) = default;
};

struct ChunkMeta4B {
  bool califormed = false;
  std::uint8_t holder = 0; // 0..7, meaningful only when califormed

  friend bool operator==(const ChunkMeta4B &, const ChunkMeta4B &) = default;
};

struct ChunkedLine4B {
  LineBytes payload{};
  std::array<ChunkMeta4B, kChunks> chunks{};

  friend bool operator==(const ChunkedLine4B &, const ChunkedLine4B &) = default;
};

struct ChunkedLine1B {
  LineBytes payload{};
  std::bitset<kChunks> califormed{};

  friend bool operator==(const ChunkedLine1B &, const ChunkedLine1B &) = default;
};

/// Metadata recoverable from the first four payload bytes of a califormed
/// sentinel line.
struct SentinelHeader {
  std::uint8_t count_code = 0;           // bits [1:0] of byte 0
  std::vector<std::uint8_t> locations;   // first min(k,4) security bytes, ascending
  std::optional<std::uint8_t> sentinel;  // present iff count_code == 3

  /// Number of header bytes the metadata occupies (1..4).
  std::size_t header_bytes() const { return locations.size(); }
  friend bool operator==(const SentinelHeader &, const SentinelHeader &) = default;
};

/// Smallest 6-bit value not equal to the low 6 bits of any regular byte.
/// Throws std::invalid_argument if the line has no security byte.
std::uint8_t find_sentinel(const CaliLine &line);

EncodedLine encode_sentinel(const CaliLine &line);

/// Throws CorruptLineError on inconsistent metadata.
CaliLine decode_sentinel(const EncodedLine &enc);

/// Critical-word-first view: parses the header from payload bytes 0..3 only.
/// Throws CorruptLineError on malformed fields.
SentinelHeader read_sentinel_header(std::span<const std::uint8_t, 4> first_word);

ChunkedLine4B encode_4b(const CaliLine &line);
CaliLine decode_4b(const ChunkedLine4B &cl);

ChunkedLine1B encode_1b(const CaliLine &line);
CaliLine decode_1b(const ChunkedLine1B &cl);

/// Ascending indices of the security bytes.
std::vector<std::uint8_t> security_locations(const SecurityMask &mask);

inline SecurityMask mask_from_bits(std::uint64_t bits) { return SecurityMask(bits); }
inline std::uint64_t mask_bits(const SecurityMask &mask) { return mask.to_ullong(); }

} // namespace califorms
