#include "califorms/layout.hpp"

#include <algorithm>
#include <bit>
#include <map>
#include <random>
#include <unordered_map>

namespace califorms {

namespace {

std::size_t align_up(std::size_t value, std::size_t alignment) {
  return (value + alignment - 1) / alignment * alignment;
}

void validate(const FieldDef &f) {
  if (f.size == 0) throw LayoutError("field '" + f.name + "' has zero size");
  if (f.alignment == 0 || !std::has_single_bit(f.alignment)) {
    throw LayoutError("field '" + f.name + "' alignment " + std::to_string(f.alignment) +
                      " is not a power of two");
  }
}

} // namespace

FieldDef scalar_field(std::string name, std::size_t size, std::size_t alignment,
                      std::string type_name) {
  return {std::move(name), FieldKind::Scalar, size, alignment, 1, std::move(type_name), false};
}

FieldDef pointer_field(std::string name, std::string type_name) {
  return {std::move(name), FieldKind::Pointer, 8, 8, 1, std::move(type_name), false};
}

FieldDef function_pointer_field(std::string name) {
  return {std::move(name), FieldKind::FunctionPointer, 8, 8, 1, "void (*)()", false};
}

FieldDef array_field(std::string name, const FieldDef &element, std::size_t count) {
  FieldDef f;
  f.name = std::move(name);
  f.kind = FieldKind::Array;
  f.size = element.size * count;
  f.alignment = element.alignment;
  f.count = element.kind == FieldKind::Array ? element.count * count : count;
  f.type_name = element.type_name;
  return f;
}

std::optional<FieldDef> builtin_field(std::string_view type, std::string name) {
  static const std::unordered_map<std::string_view, std::size_t> sizes = {
      {"char", 1},          {"signed char", 1},    {"unsigned char", 1}, {"bool", 1},
      {"_Bool", 1},         {"int8_t", 1},         {"uint8_t", 1},       {"short", 2},
      {"unsigned short", 2}, {"int16_t", 2},       {"uint16_t", 2},      {"int", 4},
      {"unsigned", 4},      {"unsigned int", 4},   {"int32_t", 4},       {"uint32_t", 4},
      {"float", 4},         {"long", 8},           {"unsigned long", 8}, {"long long", 8},
      {"unsigned long long", 8}, {"int64_t", 8},   {"uint64_t", 8},      {"size_t", 8},
      {"ssize_t", 8},       {"intptr_t", 8},       {"uintptr_t", 8},     {"double", 8},
      {"long double", 16},  {"int128_t", 16},      {"uint128_t", 16},
  };
  if (type == "ptr" || type == "pointer") return pointer_field(std::move(name));
  if (type == "fnptr" || type == "function_pointer") return function_pointer_field(std::move(name));
  auto it = sizes.find(type);
  if (it == sizes.end()) return std::nullopt;
  return scalar_field(std::move(name), it->second, it->second, std::string(type));
}

bool is_protected(const FieldDef &field) {
  switch (field.kind) {
  case FieldKind::Array:
  case FieldKind::Pointer:
  case FieldKind::FunctionPointer:
    return true;
  case FieldKind::Aggregate:
    return field.holds_pointers;
  case FieldKind::Scalar:
    break;
  }
  return false;
}

std::size_t StructLayout::field_bytes() const {
  std::size_t n = 0;
  for (const auto &f : fields) n += f.size;
  return n;
}

double StructLayout::density() const {
  return total_size == 0 ? 0.0
                         : static_cast<double>(field_bytes()) / static_cast<double>(total_size);
}

FieldDef StructLayout::as_field(std::string field_name) const {
  FieldDef f;
  f.name = std::move(field_name);
  f.kind = FieldKind::Aggregate;
  f.size = total_size;
  f.alignment = alignment;
  f.type_name = "struct " + name;
  f.holds_pointers = std::any_of(fields.begin(), fields.end(), is_protected);
  return f;
}

StructLayout compute_layout(std::vector<FieldDef> fields, std::string name) {
  if (fields.empty()) throw LayoutError("struct '" + name + "' has no fields");
  StructLayout out;
  out.name = std::move(name);
  std::size_t offset = 0;
  for (const auto &f : fields) {
    validate(f);
    const std::size_t at = align_up(offset, f.alignment);
    if (at > offset) out.padding_spans.push_back({offset, at - offset});
    out.offsets.push_back(at);
    offset = at + f.size;
    out.alignment = std::max(out.alignment, f.alignment);
  }
  out.total_size = align_up(offset, out.alignment);
  if (out.total_size > offset) out.padding_spans.push_back({offset, out.total_size - offset});
  out.fields = std::move(fields);
  return out;
}

std::string_view to_string(Policy policy) {
  switch (policy) {
  case Policy::Opportunistic: return "opportunistic";
  case Policy::Full: return "full";
  case Policy::Intelligent: return "intelligent";
  }
  return "unknown";
}

std::optional<Policy> parse_policy(std::string_view text) {
  if (text == "opportunistic") return Policy::Opportunistic;
  if (text == "full") return Policy::Full;
  if (text == "intelligent") return Policy::Intelligent;
  return std::nullopt;
}

std::size_t CaliformedLayout::security_bytes() const {
  std::size_t n = 0;
  for (const auto &s : security_spans) n += s.length;
  return n;
}

CaliformedLayout caliform_layout(const StructLayout &layout, Policy policy, std::uint64_t seed,
                                 std::size_t min_pad, std::size_t max_pad) {
  if (min_pad > max_pad) throw LayoutError("min_pad must not exceed max_pad");

  CaliformedLayout out{layout, layout, {}, policy, seed, min_pad, max_pad};
  if (policy == Policy::Opportunistic) {
    out.security_spans = layout.padding_spans;
    return out;
  }

  std::mt19937_64 rng(seed);
  const std::uint64_t widths = max_pad - min_pad + 1;
  auto draw = [&] { return min_pad + static_cast<std::size_t>(rng() % widths); };

  StructLayout &cal = out.layout;
  cal.offsets.clear();
  cal.padding_spans.clear();
  std::vector<ByteSpan> plain_padding;
  std::size_t offset = 0;

  // A gap before the next field (or the end). Alignment padding inside a
  // secure gap becomes part of the span.
  auto gap = [&](bool secure, std::size_t alignment) {
    const std::size_t start = offset;
    if (secure) offset += draw();
    offset = align_up(offset, alignment);
    if (offset > start) (secure ? out.security_spans : plain_padding).push_back({start, offset - start});
  };

  const bool full = policy == Policy::Full;
  for (std::size_t i = 0; i < layout.fields.size(); ++i) {
    const FieldDef &f = layout.fields[i];
    const bool secure = full || is_protected(f) || (i > 0 && is_protected(layout.fields[i - 1]));
    gap(secure, f.alignment);
    cal.offsets.push_back(offset);
    offset += f.size;
  }
  gap(full || is_protected(layout.fields.back()), layout.alignment);
  cal.total_size = offset;

  cal.padding_spans = out.security_spans;
  cal.padding_spans.insert(cal.padding_spans.end(), plain_padding.begin(), plain_padding.end());
  std::sort(cal.padding_spans.begin(), cal.padding_spans.end(),
            [](const ByteSpan &a, const ByteSpan &b) { return a.offset < b.offset; });
  return out;
}

DensityHistogram density_histogram(std::span<const StructLayout> layouts, std::size_t bins) {
  if (bins == 0) throw LayoutError("histogram needs at least one bin");
  DensityHistogram h;
  h.bins = bins;
  h.counts.assign(bins, 0);
  for (const auto &l : layouts) {
    const std::size_t bin = std::min(bins - 1, l.field_bytes() * bins / l.total_size);
    ++h.counts[bin];
    ++h.structs;
    if (l.has_padding()) ++h.with_padding;
  }
  return h;
}

std::vector<CformRequest> cform_plan(std::span<const ByteSpan> spans, std::uint64_t base_addr,
                                     bool set) {
  std::map<std::uint64_t, std::uint64_t> lines;
  for (const auto &span : spans) {
    for (std::size_t i = 0; i < span.length; ++i) {
      const std::uint64_t addr = base_addr + span.offset + i;
      lines[line_base(addr)] |= std::uint64_t{1} << (addr % kLineSize);
    }
  }
  std::vector<CformRequest> plan;
  plan.reserve(lines.size());
  for (const auto &[line, bits] : lines) plan.push_back({line, set ? bits : 0, bits});
  return plan;
}

std::vector<CformRequest> emit_cform_plan(const CaliformedLayout &cl, std::uint64_t base_addr) {
  if (base_addr % kLineSize != 0) throw UsageError("emit_cform_plan: base address not line aligned");
  return cform_plan(cl.security_spans, base_addr, true);
}

std::vector<ByteSpan> complement_spans(std::span<const ByteSpan> spans, std::size_t size) {
  std::vector<ByteSpan> sorted(spans.begin(), spans.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ByteSpan &a, const ByteSpan &b) { return a.offset < b.offset; });
  std::vector<ByteSpan> out;
  std::size_t cursor = 0;
  for (const auto &s : sorted) {
    const std::size_t begin = std::min(s.offset, size);
    if (begin > cursor) out.push_back({cursor, begin - cursor});
    cursor = std::max(cursor, std::min(s.end(), size));
  }
  if (size > cursor) out.push_back({cursor, size - cursor});
  return out;
}

} // namespace califorms
