// Readers for struct definitions: a JSON description and a small C subset
// (struct declarations with LP64 builtin types, pointers, function pointers,
// fixed-size arrays and nested structs). Bit-fields are rejected.
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "califorms/layout.hpp"

namespace califorms {

class ParseError : public std::runtime_error {
public:
  ParseError(std::string source, std::size_t line, const std::string &what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what),
        source_(std::move(source)), line_(line) {}

  const std::string &source() const { return source_; }
  std::size_t line() const { return line_; }

private:
  std::string source_;
  std::size_t line_;
};

/// Structs in declaration order; later structs may embed earlier ones.
class StructCatalog {
public:
  const StructLayout *find(std::string_view name) const;
  void add(StructLayout layout);
  const std::vector<StructLayout> &structs() const { return structs_; }
  bool empty() const { return structs_.empty(); }

private:
  std::vector<StructLayout> structs_;
};

/// Dispatches on content: a leading '{' or '[' selects JSON.
StructCatalog parse_struct_definitions(std::string_view text, std::string_view source_name);

StructCatalog parse_struct_c(std::string_view text, std::string_view source_name);
StructCatalog parse_struct_json(std::string_view text, std::string_view source_name);

/// One JSON struct description: {"name": ..., "fields": [...]}. Throws
/// LayoutError on unknown types or malformed entries.
StructLayout struct_from_json(const nlohmann::json &desc, const StructCatalog &known);

} // namespace califorms
