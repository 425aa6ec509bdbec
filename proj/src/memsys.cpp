#include "califorms/memsys.hpp"

#include <algorithm>
#include <sstream>

namespace califorms {

namespace {

std::string hex_addr(std::uint64_t addr) {
  std::ostringstream os;
  os << "0x" << std::hex << addr;
  return os.str();
}

bool covers(const LsqEntry &cform, std::uint64_t byte_addr) {
  return line_base(byte_addr) == cform.addr && (cform.change_mask >> (byte_addr - cform.addr) & 1u);
}

bool covers_store(const LsqEntry &store, std::uint64_t byte_addr) {
  return byte_addr >= store.addr && byte_addr < store.addr + store.width;
}

} // namespace

Machine::Machine(MachineConfig config)
    : config_(config), l1_(config.l1_lines), l2_(config.l2_lines) {
  if (config_.l1_lines == 0 || config_.l2_lines == 0) {
    throw UsageError("cache capacities must be nonzero");
  }
}

std::size_t Machine::l1_index(std::uint64_t line_addr) const {
  return (line_addr / kLineSize) % config_.l1_lines;
}

std::size_t Machine::l2_index(std::uint64_t line_addr) const {
  return (line_addr / kLineSize) % config_.l2_lines;
}

void Machine::check_access(std::uint64_t addr, unsigned width) {
  if (width != 1 && width != 2 && width != 4 && width != 8) {
    throw UsageError("access width must be 1, 2, 4 or 8 bytes");
  }
  if (addr % width != 0) {
    throw UsageError("misaligned " + std::to_string(width) + "-byte access at " + hex_addr(addr));
  }
}

std::optional<CaliException> Machine::report(ViolationKind kind, std::uint64_t addr,
                                             std::string detail) {
  if (is_suppressible(kind) && mask_.suppressed()) {
    ++counters_.suppressed_violations;
    return std::nullopt;
  }
  if (classifier_ && (kind == ViolationKind::LoadViolation || kind == ViolationKind::StoreViolation)) {
    kind = classifier_(addr, kind);
  }
  CaliException exc{kind, addr, std::move(detail)};
  log_.push_back(exc);
  ++counters_.exceptions;
  return exc;
}

Machine::Level Machine::where(std::uint64_t line_addr) const {
  const auto &s1 = l1_[l1_index(line_addr)];
  if (s1 && s1->addr == line_addr) return Level::L1;
  const auto &s2 = l2_[l2_index(line_addr)];
  if (s2 && s2->addr == line_addr) return Level::L2;
  if (memory_.contains(line_addr)) return Level::Memory;
  return Level::None;
}

std::size_t Machine::l1_occupancy() const {
  std::size_t n = 0;
  for (const auto &slot : l1_) n += slot.has_value();
  return n;
}

CaliLine Machine::peek_line(std::uint64_t line_addr) const {
  line_addr = line_base(line_addr);
  switch (where(line_addr)) {
  case Level::L1: return l1_[l1_index(line_addr)]->line;
  case Level::L2: return decode_sentinel(l2_[l2_index(line_addr)]->line);
  case Level::Memory:
    return decode_sentinel({memory_.at(line_addr), califormed_bits_.contains(line_addr)});
  case Level::None: break;
  }
  return {};
}

bool Machine::is_security(std::uint64_t addr) const {
  return peek_line(line_base(addr)).mask.test(addr - line_base(addr));
}

std::optional<EncodedLine> Machine::l2_line(std::uint64_t line_addr) const {
  const auto &slot = l2_[l2_index(line_addr)];
  if (slot && slot->addr == line_addr) return slot->line;
  return std::nullopt;
}

void Machine::poke_l2(std::uint64_t line_addr, const EncodedLine &enc) {
  if (line_addr % kLineSize != 0) throw UsageError("poke_l2: unaligned line address");
  if (where(line_addr) == Level::L1) throw UsageError("poke_l2: line is resident in L1");
  if (where(line_addr) == Level::Memory) {
    memory_.erase(line_addr);
    califormed_bits_.erase(line_addr);
  }
  insert_l2(line_addr, enc);
}

void Machine::writeback(const L2Slot &slot) {
  memory_[slot.addr] = slot.line.payload;
  if (slot.line.califormed) {
    califormed_bits_.insert(slot.addr);
  } else {
    califormed_bits_.erase(slot.addr);
  }
  ++counters_.writebacks;
}

void Machine::insert_l2(std::uint64_t line_addr, const EncodedLine &enc) {
  auto &slot = l2_[l2_index(line_addr)];
  if (slot && slot->addr != line_addr) writeback(*slot);
  slot = L2Slot{line_addr, enc};
}

std::optional<EncodedLine> Machine::take_from_lower(std::uint64_t line_addr) {
  auto &slot = l2_[l2_index(line_addr)];
  if (slot && slot->addr == line_addr) {
    EncodedLine enc = slot->line;
    slot.reset();
    return enc;
  }
  if (auto it = memory_.find(line_addr); it != memory_.end()) {
    EncodedLine enc{it->second, califormed_bits_.contains(line_addr)};
    memory_.erase(it);
    califormed_bits_.erase(line_addr);
    return enc;
  }
  return std::nullopt;
}

void Machine::fill(std::uint64_t line_addr) {
  if (line_addr % kLineSize != 0) throw UsageError("fill: unaligned line address");
  if (where(line_addr) == Level::L1) throw UsageError("fill: line already in L1");

  // Decode before detaching the line so a corrupt line stays where it was.
  CaliLine line = peek_line(line_addr);
  take_from_lower(line_addr);

  auto &slot = l1_[l1_index(line_addr)];
  if (slot) spill(slot->addr);
  slot = L1Slot{line_addr, line};
  ++counters_.fills;
}

void Machine::spill(std::uint64_t line_addr) {
  auto &slot = l1_[l1_index(line_addr)];
  if (!slot || slot->addr != line_addr) {
    throw UsageError("spill: line " + hex_addr(line_addr) + " not in L1");
  }
  const EncodedLine enc = encode_sentinel(slot->line);
  slot.reset();
  insert_l2(line_addr, enc);
  ++counters_.spills;
}

void Machine::flush() {
  for (auto &slot : l1_) {
    if (slot) spill(slot->addr);
  }
}

CaliLine &Machine::ensure_l1(std::uint64_t line_addr) {
  if (where(line_addr) != Level::L1) fill(line_addr);
  return l1_[l1_index(line_addr)]->line;
}

LoadResult Machine::load(std::uint64_t addr, unsigned width) {
  check_access(addr, width);
  ++counters_.loads;
  const std::uint64_t base = line_base(addr);
  const CaliLine &line = ensure_l1(base);
  const std::size_t off = addr - base;

  LoadResult result;
  std::optional<std::size_t> first_hit;
  for (unsigned i = 0; i < width; ++i) {
    if (line.mask.test(off + i)) {
      if (!first_hit) first_hit = off + i;
      continue; // security bytes read as zero
    }
    result.value |= static_cast<std::uint64_t>(line.data[off + i]) << (8 * i);
  }
  if (first_hit) {
    result.exception = report(ViolationKind::LoadViolation, base + *first_hit,
                              "load of a security byte");
  }
  return result;
}

std::optional<CaliException> Machine::store(std::uint64_t addr, unsigned width,
                                            std::uint64_t value) {
  check_access(addr, width);
  ++counters_.stores;
  const std::uint64_t base = line_base(addr);
  CaliLine &line = ensure_l1(base);
  const std::size_t off = addr - base;

  for (unsigned i = 0; i < width; ++i) {
    if (line.mask.test(off + i)) {
      if (auto exc = report(ViolationKind::StoreViolation, base + off + i,
                            "store to a security byte")) {
        return exc; // squashed
      }
      break;
    }
  }
  for (unsigned i = 0; i < width; ++i) {
    if (!line.mask.test(off + i)) line.data[off + i] = static_cast<std::uint8_t>(value >> (8 * i));
  }
  return std::nullopt;
}

std::optional<CaliException> Machine::cform_at(const CformRequest &req) {
  if (req.addr % kLineSize != 0) throw UsageError("cform: address is not 64-byte aligned");
  ++counters_.cforms;
  CaliLine &line = ensure_l1(req.addr);
  auto result = apply_cform(line, req);
  if (auto *exc = std::get_if<CaliException>(&result)) {
    return report(exc->kind, exc->addr, exc->detail);
  }
  line = std::get<CaliLine>(std::move(result));
  return std::nullopt;
}

std::vector<LsqResult> Machine::lsq_execute(const std::vector<LsqEntry> &ops) {
  std::vector<LsqResult> results(ops.size());
  std::vector<bool> squashed(ops.size(), false);

  for (std::size_t i = 0; i < ops.size(); ++i) {
    const LsqEntry &op = ops[i];
    LsqResult &r = results[i];

    if (op.kind == LsqOpKind::Cform) {
      r.exception = cform_at({op.addr, op.set_bits, op.change_mask});
      continue;
    }
    check_access(op.addr, op.width);

    if (op.kind == LsqOpKind::Store) {
      std::optional<std::uint64_t> hit;
      for (std::size_t j = 0; j < i && !hit; ++j) {
        if (ops[j].kind != LsqOpKind::Cform) continue;
        for (unsigned b = 0; b < op.width; ++b) {
          if (covers(ops[j], op.addr + b)) {
            hit = op.addr + b;
            break;
          }
        }
      }
      if (hit) {
        r.exception = report(ViolationKind::LsqViolation, *hit,
                             "store younger than an in-flight CFORM");
        if (r.exception) {
          ++counters_.stores;
          squashed[i] = true;
          continue;
        }
      }
      r.exception = store(op.addr, op.width, op.value);
      squashed[i] = r.exception.has_value();
      continue;
    }

    // Load: resolve each byte against the youngest older in-flight writer.
    enum class Source { Memory, Forwarded, Cform };
    std::vector<Source> source(op.width, Source::Memory);
    std::uint64_t forwarded = 0;
    std::optional<std::uint64_t> cform_hit;
    for (unsigned b = 0; b < op.width; ++b) {
      const std::uint64_t byte_addr = op.addr + b;
      for (std::size_t j = i; j-- > 0;) {
        const LsqEntry &older = ops[j];
        if (older.kind == LsqOpKind::Cform && covers(older, byte_addr)) {
          source[b] = Source::Cform;
          if (!cform_hit) cform_hit = byte_addr;
          break;
        }
        if (older.kind == LsqOpKind::Store && !squashed[j] && covers_store(older, byte_addr)) {
          source[b] = Source::Forwarded;
          forwarded |= (older.value >> (8 * (byte_addr - older.addr)) & 0xff) << (8 * b);
          break;
        }
      }
    }
    for (auto s : source) r.forwarded |= (s == Source::Forwarded);

    if (cform_hit) {
      ++counters_.loads;
      const CaliLine &line = ensure_l1(line_base(op.addr));
      const std::size_t off = op.addr - line_base(op.addr);
      for (unsigned b = 0; b < op.width; ++b) {
        std::uint64_t byte = 0;
        if (source[b] == Source::Forwarded) {
          byte = forwarded >> (8 * b) & 0xff;
        } else if (source[b] == Source::Memory && !line.mask.test(off + b)) {
          byte = line.data[off + b];
        }
        r.value |= byte << (8 * b);
      }
      r.exception = report(ViolationKind::LsqViolation, *cform_hit,
                           "load younger than an in-flight CFORM");
      continue;
    }

    LoadResult lr = load(op.addr, op.width);
    r.value = lr.value;
    r.exception = std::move(lr.exception);
    const CaliLine &line = l1_[l1_index(line_base(op.addr))]->line;
    const std::size_t off = op.addr - line_base(op.addr);
    for (unsigned b = 0; b < op.width; ++b) {
      // A whitelisted store never wrote its security bytes; nothing to forward.
      if (source[b] == Source::Forwarded && !line.mask.test(off + b)) {
        r.value &= ~(std::uint64_t{0xff} << (8 * b));
        r.value |= forwarded & (std::uint64_t{0xff} << (8 * b));
      }
    }
  }
  return results;
}

void Machine::move_to_memory(std::uint64_t line_addr) {
  if (where(line_addr) == Level::L1) spill(line_addr);
  auto &slot = l2_[l2_index(line_addr)];
  if (slot && slot->addr == line_addr) {
    writeback(*slot);
    slot.reset();
  }
}

PageImage Machine::page_swap_out(std::uint64_t page_addr) {
  if (page_addr % kPageSize != 0) throw UsageError("page_swap_out: address not page aligned");
  PageImage image{std::vector<std::uint8_t>(kPageSize, 0), {page_addr, 0}};
  for (std::size_t l = 0; l < kLinesPerPage; ++l) {
    const std::uint64_t line_addr = page_addr + l * kLineSize;
    move_to_memory(line_addr);
    if (auto it = memory_.find(line_addr); it != memory_.end()) {
      std::copy(it->second.begin(), it->second.end(), image.bytes.begin() + l * kLineSize);
      memory_.erase(it);
    }
    if (califormed_bits_.erase(line_addr)) image.meta.line_bits |= std::uint64_t{1} << l;
  }
  reserved_meta_[page_addr] = image.meta.line_bits;
  return image;
}

void Machine::page_swap_in(std::uint64_t page_addr, const std::vector<std::uint8_t> &bytes,
                           const PageMeta &meta) {
  if (page_addr % kPageSize != 0) throw UsageError("page_swap_in: address not page aligned");
  if (bytes.size() != kPageSize) {
    throw UsageError("page_swap_in: expected 4096 bytes, got " + std::to_string(bytes.size()));
  }
  if (meta.page_addr != page_addr) throw UsageError("page_swap_in: metadata is for another page");
  for (std::size_t l = 0; l < kLinesPerPage; ++l) {
    if (where(page_addr + l * kLineSize) != Level::None) {
      throw UsageError("page_swap_in: page is already resident");
    }
  }
  for (std::size_t l = 0; l < kLinesPerPage; ++l) {
    const std::uint64_t line_addr = page_addr + l * kLineSize;
    LineBytes line{};
    std::copy_n(bytes.begin() + l * kLineSize, kLineSize, line.begin());
    memory_[line_addr] = line;
    if (meta.line_bits >> l & 1u) califormed_bits_.insert(line_addr);
  }
  reserved_meta_.erase(page_addr);
}

} // namespace califorms
