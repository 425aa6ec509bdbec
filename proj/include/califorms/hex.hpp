#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace califorms {

/// "0x" followed by lowercase hex, no leading zeros (at least one digit).
std::string hex_u64(std::uint64_t value);

/// Exactly `digits` lowercase hex digits, no prefix.
std::string hex_fixed(std::uint64_t value, std::size_t digits);

/// Two lowercase hex digits per byte, no separators.
std::string hex_bytes(std::span<const std::uint8_t> bytes);

/// Accepts an optional 0x prefix. Empty on bad digits or overflow.
std::optional<std::uint64_t> parse_hex(std::string_view text);

/// Decodes an even-length hex string (optional 0x prefix).
std::optional<std::vector<std::uint8_t>> parse_hex_bytes(std::string_view text);

} // namespace califorms
