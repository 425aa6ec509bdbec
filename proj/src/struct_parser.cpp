#include "califorms/struct_parser.hpp"

#include <algorithm>
#include <cctype>
#include <optional>

namespace califorms {

const StructLayout *StructCatalog::find(std::string_view name) const {
  if (name.starts_with("struct ")) name.remove_prefix(7);
  for (const auto &s : structs_) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

void StructCatalog::add(StructLayout layout) {
  if (find(layout.name)) throw LayoutError("duplicate struct '" + layout.name + "'");
  structs_.push_back(std::move(layout));
}

StructCatalog parse_struct_definitions(std::string_view text, std::string_view source_name) {
  const auto first = std::find_if(text.begin(), text.end(),
                                  [](char c) { return !std::isspace(static_cast<unsigned char>(c)); });
  if (first != text.end() && (*first == '{' || *first == '[')) {
    return parse_struct_json(text, source_name);
  }
  return parse_struct_c(text, source_name);
}

// ---------------------------------------------------------------------------
// JSON

namespace {

std::size_t line_of(std::string_view text, std::size_t pos) {
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + std::min(pos, text.size()), '\n'));
}

FieldDef field_from_json(const nlohmann::json &f, const StructCatalog &known) {
  if (!f.is_object()) throw LayoutError("field entry must be an object");
  const std::string name = f.value("name", "");
  if (name.empty()) throw LayoutError("field without a name");
  if (f.contains("bits")) throw LayoutError("field '" + name + "': bit-fields are not supported");

  FieldDef elem;
  if (f.contains("size")) {
    const auto size = f.at("size").get<std::size_t>();
    const auto align = f.value("align", size);
    elem = scalar_field(name, size, align, f.value("type", "bytes"));
  } else {
    const std::string type = f.value("type", "");
    if (type.empty()) throw LayoutError("field '" + name + "' needs a type or a size");
    if (auto b = builtin_field(type, name)) {
      elem = *b;
    } else if (const StructLayout *nested = known.find(type)) {
      elem = nested->as_field(name);
    } else {
      throw LayoutError("field '" + name + "': unknown type '" + type + "'");
    }
  }
  if (f.contains("count")) {
    const auto count = f.at("count").get<std::size_t>();
    if (count == 0) throw LayoutError("field '" + name + "' has zero size");
    return array_field(name, elem, count);
  }
  return elem;
}

} // namespace

StructLayout struct_from_json(const nlohmann::json &desc, const StructCatalog &known) {
  if (!desc.is_object()) throw LayoutError("struct description must be an object");
  const std::string name = desc.value("name", "");
  if (name.empty()) throw LayoutError("struct without a name");
  if (!desc.contains("fields") || !desc.at("fields").is_array()) {
    throw LayoutError("struct '" + name + "' needs a fields array");
  }
  std::vector<FieldDef> fields;
  for (const auto &f : desc.at("fields")) fields.push_back(field_from_json(f, known));
  return compute_layout(std::move(fields), name);
}

StructCatalog parse_struct_json(std::string_view text, std::string_view source_name) {
  const std::string source(source_name);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error &e) {
    throw ParseError(source, line_of(text, e.byte == 0 ? 0 : e.byte - 1), e.what());
  }
  const nlohmann::json *list = &doc;
  if (doc.is_object()) {
    if (!doc.contains("structs")) throw ParseError(source, 1, "expected a \"structs\" array");
    list = &doc.at("structs");
  }
  if (!list->is_array()) throw ParseError(source, 1, "expected an array of structs");

  StructCatalog catalog;
  std::size_t search_from = 0;
  for (const auto &desc : *list) {
    const std::string name = desc.is_object() ? desc.value("name", "") : "";
    std::size_t pos = name.empty() ? std::string_view::npos
                                   : text.find("\"" + name + "\"", search_from);
    if (pos == std::string_view::npos) pos = search_from;
    search_from = pos + 1;
    try {
      catalog.add(struct_from_json(desc, catalog));
    } catch (const std::exception &e) {
      throw ParseError(source, line_of(text, pos), e.what());
    }
  }
  return catalog;
}

// ---------------------------------------------------------------------------
// C subset

namespace {

struct Token {
  enum Kind { Ident, Number, Punct, End } kind;
  std::string text;
  std::size_t line;
};

class Lexer {
public:
  Lexer(std::string_view text, std::string source) : text_(text), source_(std::move(source)) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_space_and_comments();
      if (pos_ >= text_.size()) break;
      const char c = text_[pos_];
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        const std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
          ++pos_;
        }
        out.push_back({Token::Ident, std::string(text_.substr(start, pos_ - start)), line_});
      } else if (std::isdigit(static_cast<unsigned char>(c))) {
        const std::size_t start = pos_;
        while (pos_ < text_.size() && std::isalnum(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        out.push_back({Token::Number, std::string(text_.substr(start, pos_ - start)), line_});
      } else if (std::string_view("{}[]();*,:").find(c) != std::string_view::npos) {
        out.push_back({Token::Punct, std::string(1, c), line_});
        ++pos_;
      } else {
        throw ParseError(source_, line_, std::string("unexpected character '") + c + "'");
      }
    }
    out.push_back({Token::End, "", line_});
    return out;
  }

private:
  void skip_space_and_comments() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '\n') {
        ++line_;
        ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else if (text_.substr(pos_, 2) == "//" || c == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
      } else if (text_.substr(pos_, 2) == "/*") {
        const std::size_t start_line = line_;
        const std::size_t end = text_.find("*/", pos_ + 2);
        if (end == std::string_view::npos) throw ParseError(source_, start_line, "unterminated comment");
        line_ += static_cast<std::size_t>(std::count(text_.begin() + pos_, text_.begin() + end, '\n'));
        pos_ = end + 2;
      } else {
        break;
      }
    }
  }

  std::string_view text_;
  std::string source_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

class CParser {
public:
  CParser(std::vector<Token> tokens, std::string source)
      : toks_(std::move(tokens)), source_(std::move(source)) {}

  StructCatalog run() {
    StructCatalog catalog;
    while (peek().kind != Token::End) {
      if (peek().text == ";") {
        next();
        continue;
      }
      expect_ident("struct");
      const Token name = next();
      if (name.kind != Token::Ident) fail(name, "expected struct name");
      expect("{");
      std::vector<FieldDef> fields;
      while (peek().text != "}") {
        if (peek().kind == Token::End) fail(peek(), "unterminated struct '" + name.text + "'");
        member(catalog, fields);
      }
      next(); // }
      if (peek().text == ";") next();
      try {
        catalog.add(compute_layout(std::move(fields), name.text));
      } catch (const LayoutError &e) {
        fail(name, e.what());
      }
    }
    return catalog;
  }

private:
  const Token &peek() const { return toks_[pos_]; }
  Token next() { return toks_[pos_ == toks_.size() - 1 ? pos_ : pos_++]; }

  [[noreturn]] void fail(const Token &at, const std::string &what) const {
    throw ParseError(source_, at.line, what);
  }

  void expect(std::string_view punct) {
    const Token t = next();
    if (t.text != punct) {
      fail(t, "expected '" + std::string(punct) + "', found '" + (t.kind == Token::End ? "end of input" : t.text) + "'");
    }
  }

  void expect_ident(std::string_view word) {
    const Token t = next();
    if (t.kind != Token::Ident || t.text != word) {
      fail(t, "expected '" + std::string(word) + "', found '" + (t.kind == Token::End ? "end of input" : t.text) + "'");
    }
  }

  std::size_t number(const Token &t) {
    if (t.kind != Token::Number) fail(t, "expected a number, found '" + t.text + "'");
    try {
      return static_cast<std::size_t>(std::stoull(t.text, nullptr, 0));
    } catch (const std::exception &) {
      fail(t, "bad number '" + t.text + "'");
    }
  }

  // Type specifier: builtin words, "struct X" or "void", qualifiers ignored.
  std::string type_spec(const Token &start) {
    std::vector<std::string> words;
    while (peek().kind == Token::Ident) {
      const std::string &w = peek().text;
      if (w == "const" || w == "volatile") {
        next();
        continue;
      }
      if (w == "struct") {
        next();
        const Token n = next();
        if (n.kind != Token::Ident) fail(n, "expected struct name");
        return "struct " + n.text;
      }
      // Stop before the declarator name: the last identifier before a
      // declarator punctuation belongs to the declarator.
      if (!words.empty() && (toks_[pos_ + 1].kind == Token::Punct)) break;
      words.push_back(w);
      next();
    }
    if (words.empty()) fail(start, "expected a type");
    std::string type;
    for (const auto &w : words) type += (type.empty() ? "" : " ") + w;
    if (type == "signed") type = "int";
    if (type == "short int") type = "short";
    if (type == "long int") type = "long";
    if (type == "long long int") type = "long long";
    if (type == "unsigned long int") type = "unsigned long";
    return type;
  }

  FieldDef element_for(const std::string &type, const std::string &name, const Token &at,
                       const StructCatalog &catalog) {
    if (type.starts_with("struct ")) {
      const StructLayout *nested = catalog.find(type);
      if (!nested) fail(at, "incomplete type '" + type + "' (declare it before use)");
      return nested->as_field(name);
    }
    if (type == "void") fail(at, "field '" + name + "' has type void");
    auto b = builtin_field(type, name);
    if (!b) fail(at, "unknown type '" + type + "'");
    return *b;
  }

  void member(const StructCatalog &catalog, std::vector<FieldDef> &fields) {
    const Token start = peek();
    const std::string type = type_spec(start);
    while (true) {
      fields.push_back(declarator(type, start, catalog));
      const Token sep = next();
      if (sep.text == ";") return;
      if (sep.text != ",") fail(sep, "expected ';' or ','");
    }
  }

  FieldDef declarator(const std::string &type, const Token &start, const StructCatalog &catalog) {
    // Function pointer: ( * name ) ( ... )
    if (peek().text == "(") {
      next();
      expect("*");
      const Token name = next();
      if (name.kind != Token::Ident) fail(name, "expected function pointer name");
      expect(")");
      expect("(");
      int depth = 1;
      while (depth > 0) {
        const Token t = next();
        if (t.kind == Token::End) fail(t, "unterminated parameter list");
        if (t.text == "(") ++depth;
        if (t.text == ")") --depth;
      }
      return arrays(function_pointer_field(name.text), name);
    }

    std::size_t stars = 0;
    while (peek().text == "*") {
      next();
      ++stars;
    }
    const Token name = next();
    if (name.kind != Token::Ident) fail(name, "expected field name");
    if (peek().text == ":") fail(peek(), "field '" + name.text + "': bit-fields are not supported");

    FieldDef elem = stars > 0 ? pointer_field(name.text, type + " " + std::string(stars, '*'))
                              : element_for(type, name.text, start, catalog);
    return arrays(std::move(elem), name);
  }

  FieldDef arrays(FieldDef elem, const Token &name) {
    std::vector<std::size_t> dims;
    while (peek().text == "[") {
      next();
      const Token n = next();
      const std::size_t count = number(n);
      if (count == 0) fail(n, "field '" + name.text + "' has zero size");
      dims.push_back(count);
      expect("]");
    }
    if (peek().text == ":") fail(peek(), "field '" + name.text + "': bit-fields are not supported");
    if (dims.empty()) return elem;
    std::size_t total = 1;
    for (auto d : dims) total *= d;
    return array_field(name.text, elem, total);
  }

  std::vector<Token> toks_;
  std::string source_;
  std::size_t pos_ = 0;
};

} // namespace

StructCatalog parse_struct_c(std::string_view text, std::string_view source_name) {
  const std::string source(source_name);
  return CParser(Lexer(text, source).run(), source).run();
}

} // namespace califorms
