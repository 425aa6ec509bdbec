#include "califorms/trace.hpp"

#include <map>
#include <memory>
#include <optional>

#include "califorms/hex.hpp"

namespace califorms {

using nlohmann::json;

std::uint64_t parse_hex_u64(const json &value) {
  if (value.is_number_unsigned() || value.is_number_integer()) {
    if (value.is_number_integer() && value.get<std::int64_t>() < 0) {
      throw UsageError("negative value");
    }
    return value.get<std::uint64_t>();
  }
  if (value.is_string()) {
    if (auto v = parse_hex(value.get<std::string>())) return *v;
    throw UsageError("bad hex value '" + value.get<std::string>() + "'");
  }
  throw UsageError("expected a hex string or integer");
}

namespace {

// Thrown for semantically bad ops; converted to ParseError with the line.
struct OpError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const json &require(const json &op, const char *key) {
  if (!op.contains(key)) throw OpError(std::string("missing field \"") + key + "\"");
  return op.at(key);
}

std::uint64_t parse_bitvector(const json &value, const char *what) {
  if (!value.is_string()) throw OpError(std::string(what) + " must be a hex string");
  auto text = value.get<std::string>();
  std::string_view digits = text;
  if (digits.starts_with("0x") || digits.starts_with("0X")) digits.remove_prefix(2);
  if (digits.size() != 16) {
    throw OpError(std::string(what) + " must have exactly 16 hex digits (64 bits)");
  }
  auto v = parse_hex(digits);
  if (!v) throw OpError(std::string("bad hex in ") + what);
  return *v;
}

class TraceRunner {
public:
  TraceRunner(const std::string &source, const TraceOptions &options)
      : source_(source), opts_(options), machine_(options.machine),
        heap_(std::make_unique<Heap>(machine_, options.heap)), stack_(machine_, options.stack) {}

  TraceReport run(std::istream &in) {
    std::string text;
    std::size_t line_no = 0;
    bool stopped = false;
    while (std::getline(in, text)) {
      ++line_no;
      if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
      json op;
      try {
        op = json::parse(text);
      } catch (const json::parse_error &e) {
        throw ParseError(source_, line_no, std::string("invalid JSON: ") + e.what());
      }
      const std::size_t before = machine_.exception_log().size();
      try {
        execute(op);
      } catch (const OpError &e) {
        throw ParseError(source_, line_no, e.what());
      } catch (const UsageError &e) {
        throw ParseError(source_, line_no, e.what());
      } catch (const LayoutError &e) {
        throw ParseError(source_, line_no, e.what());
      } catch (const OutOfMemory &e) {
        throw ParseError(source_, line_no, e.what());
      } catch (const CorruptLineError &e) {
        throw ParseError(source_, line_no, std::string("simulator fault: ") + e.what());
      } catch (const json::exception &e) {
        throw ParseError(source_, line_no, e.what());
      }
      const auto &log = machine_.exception_log();
      for (std::size_t i = before; i < log.size(); ++i) {
        exceptions_.push_back({{"kind", std::string(to_string(log[i].kind))},
                               {"addr", hex_u64(log[i].addr)},
                               {"op_index", op_index_},
                               {"line", line_no},
                               {"detail", log[i].detail}});
        ++by_kind_[std::string(to_string(log[i].kind))];
      }
      ++op_index_;
      if (opts_.strict && log.size() > before) {
        stopped = true;
        break;
      }
    }
    return finish(stopped);
  }

private:
  std::uint64_t address(const json &op) {
    if (op.contains("ptr")) {
      const std::string label = op.at("ptr").get<std::string>();
      // Freed labels stay resolvable so traces can express dangling accesses.
      const Allocation *a = nullptr;
      if (auto it = labels_.find(label); it != labels_.end()) {
        a = &it->second;
      } else if (auto f = freed_.find(label); f != freed_.end()) {
        a = &f->second;
      } else {
        throw OpError("unknown pointer label '" + label + "'");
      }
      return a->base + (op.contains("offset") ? parse_hex_u64(op.at("offset")) : 0);
    }
    return parse_hex_u64(require(op, "addr"));
  }

  unsigned width(const json &op) {
    const auto w = require(op, "width").get<unsigned>();
    return w;
  }

  CaliformedLayout layout_for(const json &op) {
    Policy policy = opts_.policy;
    if (op.contains("policy")) {
      const std::string name = op.at("policy").get<std::string>();
      auto parsed = parse_policy(name);
      if (!parsed) throw OpError("unknown policy '" + name + "'");
      policy = *parsed;
    }
    const std::uint64_t seed = op.contains("seed") ? parse_hex_u64(op.at("seed")) : opts_.seed;
    const std::size_t min = op.value("min", opts_.min_pad);
    const std::size_t max = op.value("max", opts_.max_pad);

    StructLayout base;
    if (op.contains("type")) {
      const std::string type = op.at("type").get<std::string>();
      const StructLayout *found = opts_.catalog.find(type);
      if (found) {
        base = *found;
      } else if (auto b = builtin_field(type, "value")) {
        base = compute_layout({*b}, type);
      } else {
        throw OpError("unknown type '" + type + "'");
      }
    } else if (op.contains("layout")) {
      json desc = op.at("layout");
      if (!desc.contains("name")) desc["name"] = "anonymous";
      base = struct_from_json(desc, opts_.catalog);
    } else if (op.contains("size")) {
      const auto size = op.at("size").get<std::size_t>();
      base = compute_layout({scalar_field("bytes", size, 1, "char[]")}, "bytes");
      return caliform_layout(base, Policy::Opportunistic, seed, min, max);
    } else {
      throw OpError("malloc needs \"type\", \"layout\" or \"size\"");
    }
    return caliform_layout(base, policy, seed, min, max);
  }

  LsqEntry lsq_entry(const json &e) {
    const std::string kind = require(e, "op").get<std::string>();
    LsqEntry entry;
    if (kind == "load") {
      entry.kind = LsqOpKind::Load;
      entry.addr = address(e);
      entry.width = width(e);
    } else if (kind == "store") {
      entry.kind = LsqOpKind::Store;
      entry.addr = address(e);
      entry.width = width(e);
      entry.value = parse_hex_u64(require(e, "value"));
    } else if (kind == "cform") {
      entry.kind = LsqOpKind::Cform;
      entry.addr = address(e);
      entry.set_bits = parse_bitvector(require(e, "set"), "set");
      entry.change_mask = parse_bitvector(require(e, "mask"), "mask");
    } else {
      throw OpError("lsq entries must be load, store or cform");
    }
    return entry;
  }

  void execute(const json &op) {
    if (!op.is_object()) throw OpError("each line must be a JSON object");
    const std::string kind = require(op, "op").get<std::string>();

    if (kind == "load") {
      const std::uint64_t addr = address(op);
      const LoadResult r = machine_.load(addr, width(op));
      if (opts_.record_loads) {
        loads_.push_back({{"op_index", op_index_}, {"addr", hex_u64(addr)}, {"value", hex_u64(r.value)}});
      }
    } else if (kind == "store") {
      const std::uint64_t addr = address(op);
      machine_.store(addr, width(op), parse_hex_u64(require(op, "value")));
    } else if (kind == "cform") {
      CformRequest req{address(op), parse_bitvector(require(op, "set"), "set"),
                       parse_bitvector(require(op, "mask"), "mask"), op.value("nt", false)};
      machine_.cform_at(req);
    } else if (kind == "malloc") {
      const std::string label = require(op, "id").get<std::string>();
      if (labels_.contains(label)) throw OpError("pointer label '" + label + "' is still live");
      const Allocation a = heap_->alloc(layout_for(op));
      labels_[label] = a;
      freed_.erase(label);
    } else if (kind == "free") {
      const std::string label = require(op, "id").get<std::string>();
      auto it = labels_.find(label);
      if (it == labels_.end()) throw OpError("free of unknown or already freed pointer '" + label + "'");
      heap_->free(it->second.id, op.value("nt", false));
      freed_[label] = it->second;
      labels_.erase(it);
    } else if (kind == "whitelist_enter") {
      machine_.whitelist_enter();
    } else if (kind == "whitelist_exit") {
      machine_.whitelist_exit();
    } else if (kind == "flush") {
      machine_.flush();
    } else if (kind == "lsq") {
      const json &ops = require(op, "ops");
      if (!ops.is_array()) throw OpError("\"ops\" must be an array");
      std::vector<LsqEntry> entries;
      for (const auto &e : ops) entries.push_back(lsq_entry(e));
      const auto results = machine_.lsq_execute(entries);
      if (opts_.record_loads) {
        for (std::size_t i = 0; i < entries.size(); ++i) {
          if (entries[i].kind != LsqOpKind::Load) continue;
          loads_.push_back({{"op_index", op_index_}, {"lsq_index", i},
                            {"addr", hex_u64(entries[i].addr)},
                            {"value", hex_u64(results[i].value)},
                            {"forwarded", results[i].forwarded}});
        }
      }
    } else if (kind == "stack_enter") {
      std::vector<ObjectShape> shapes;
      for (const auto &t : require(op, "objects")) shapes.push_back(shape_of(layout_for(t)));
      stack_.enter(shapes);
    } else if (kind == "stack_exit") {
      stack_.exit();
    } else {
      throw OpError("unknown op '" + kind + "'");
    }
  }

  TraceReport finish(bool stopped) {
    const Counters &c = machine_.counters();
    json stats;
    stats["version"] = kTraceFormatVersion;
    stats["source"] = source_;
    stats["ops"] = op_index_;
    stats["stopped_early"] = stopped;
    stats["counters"] = {{"loads", c.loads},
                         {"stores", c.stores},
                         {"cforms", c.cforms},
                         {"fills", c.fills},
                         {"spills", c.spills},
                         {"writebacks", c.writebacks},
                         {"exceptions", c.exceptions},
                         {"suppressed_violations", c.suppressed_violations}};
    stats["heap"] = {{"live_allocations", heap_->live().size()},
                     {"live_bytes", heap_->live_bytes()},
                     {"quarantined_bytes", heap_->quarantined_bytes()},
                     {"consumed_bytes", heap_->consumed_bytes()}};
    json kinds = json::object();
    for (const auto &[k, n] : by_kind_) kinds[k] = n;
    stats["violations_by_kind"] = kinds;
    stats["exceptions"] = exceptions_;
    if (opts_.record_loads) stats["loads"] = loads_;

    TraceReport report;
    report.exit_code = exceptions_.empty() ? 0 : 2;
    report.stats = std::move(stats);
    return report;
  }

  std::string source_;
  const TraceOptions &opts_;
  Machine machine_;
  std::unique_ptr<Heap> heap_;
  Stack stack_;
  std::map<std::string, Allocation> labels_;
  std::map<std::string, Allocation> freed_;
  std::map<std::string, std::size_t> by_kind_;
  json exceptions_ = json::array();
  json loads_ = json::array();
  std::size_t op_index_ = 0;
};

} // namespace

TraceReport run_trace(std::istream &in, const std::string &source, const TraceOptions &options) {
  TraceRunner runner(source, options);
  return runner.run(in);
}

} // namespace califorms
