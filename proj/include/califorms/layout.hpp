// Struct layout engine: C-style (LP64) field placement, padding and density,
// and security-byte insertion under the three policies.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "califorms/cform.hpp"

namespace califorms {

class LayoutError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

enum class FieldKind { Scalar, Array, Pointer, FunctionPointer, Aggregate };

struct FieldDef {
  std::string name;
  FieldKind kind = FieldKind::Scalar;
  std::size_t size = 0;
  std::size_t alignment = 1;
  std::size_t count = 1;      // element count for arrays
  std::string type_name;      // informational ("int", "struct node", ...)
  bool holds_pointers = false; // aggregates: contains an array or pointer

  friend bool operator==(const FieldDef &, const FieldDef &) = default;
};

FieldDef scalar_field(std::string name, std::size_t size, std::size_t alignment,
                      std::string type_name = {});
FieldDef pointer_field(std::string name, std::string type_name = "void *");
FieldDef function_pointer_field(std::string name);
FieldDef array_field(std::string name, const FieldDef &element, std::size_t count);

/// Field for a builtin LP64 type name (char, short, int, long, float, double,
/// long long, bool, size_t, intN_t/uintN_t, ...). Empty if unknown.
std::optional<FieldDef> builtin_field(std::string_view type, std::string name);

/// Arrays, pointers and function pointers; aggregates that contain one.
bool is_protected(const FieldDef &field);

struct ByteSpan {
  std::size_t offset = 0;
  std::size_t length = 0;

  std::size_t end() const { return offset + length; }
  friend bool operator==(const ByteSpan &, const ByteSpan &) = default;
};

struct StructLayout {
  std::string name;
  std::vector<FieldDef> fields;
  std::vector<std::size_t> offsets;
  std::vector<ByteSpan> padding_spans;
  std::size_t total_size = 0;
  std::size_t alignment = 1;

  std::size_t field_bytes() const;
  /// field_bytes / total_size
  double density() const;
  bool has_padding() const { return !padding_spans.empty(); }

  /// Nested use of this struct as a field.
  FieldDef as_field(std::string field_name) const;
};

/// Places fields in declaration order at their natural alignment and adds
/// tail padding to the struct alignment.
StructLayout compute_layout(std::vector<FieldDef> fields, std::string name = {});

enum class Policy { Opportunistic, Full, Intelligent };

std::string_view to_string(Policy policy);
std::optional<Policy> parse_policy(std::string_view text);

struct CaliformedLayout {
  StructLayout base;
  StructLayout layout; // offsets after span insertion; == base for opportunistic
  std::vector<ByteSpan> security_spans;
  Policy policy = Policy::Opportunistic;
  std::uint64_t seed = 0;
  std::size_t min_pad = 1;
  std::size_t max_pad = 7;

  std::size_t security_bytes() const;
  std::size_t overhead() const { return layout.total_size - base.total_size; }
};

/// Inserts security bytes. Span lengths are drawn from [min_pad, max_pad]
/// with std::mt19937_64(seed) as min_pad + raw % (max_pad - min_pad + 1).
CaliformedLayout caliform_layout(const StructLayout &layout, Policy policy, std::uint64_t seed,
                                 std::size_t min_pad = 1, std::size_t max_pad = 7);

struct DensityHistogram {
  std::size_t bins = 0;
  std::vector<std::size_t> counts; // bin b covers [b/bins, (b+1)/bins), last bin closed
  std::size_t structs = 0;
  std::size_t with_padding = 0;

  double fraction_with_padding() const {
    return structs == 0 ? 0.0 : static_cast<double>(with_padding) / static_cast<double>(structs);
  }
};

DensityHistogram density_histogram(std::span<const StructLayout> layouts, std::size_t bins);

/// One request per touched line; set (or unset) exactly the given spans,
/// which are relative to base_addr.
std::vector<CformRequest> cform_plan(std::span<const ByteSpan> spans, std::uint64_t base_addr,
                                     bool set);

/// CFORM requests that caliform an object laid out by cl at base_addr.
std::vector<CformRequest> emit_cform_plan(const CaliformedLayout &cl, std::uint64_t base_addr);

/// Complement of spans within [0, size), as sorted disjoint spans.
std::vector<ByteSpan> complement_spans(std::span<const ByteSpan> spans, std::size_t size);

} // namespace califorms
