#include "califorms/allocator.hpp"

#include <algorithm>

namespace califorms {

namespace {

std::size_t round_to_lines(std::size_t bytes) {
  return (bytes + kLineSize - 1) / kLineSize * kLineSize;
}

void validate_shape(const ObjectShape &shape) {
  if (shape.size == 0) throw UsageError("allocation of zero bytes");
  for (const auto &s : shape.security_spans) {
    if (s.end() > shape.size) throw UsageError("security span exceeds object size");
  }
}

} // namespace

ObjectShape shape_of(const CaliformedLayout &layout) {
  return {layout.layout.total_size, layout.security_spans};
}

Heap::Heap(Machine &machine, HeapConfig config)
    : machine_(machine), config_(config), top_(config.base) {
  if (config_.base % kLineSize != 0) throw UsageError("heap base must be line aligned");
  machine_.set_classifier([this](std::uint64_t addr, ViolationKind kind) {
    return in_quarantine(addr) ? ViolationKind::TemporalViolation : kind;
  });
}

Heap::~Heap() { machine_.set_classifier(nullptr); }

void Heap::run_plan(const std::vector<CformRequest> &plan) {
  for (const auto &req : plan) {
    if (auto exc = machine_.cform_at(req)) {
      throw std::logic_error("allocator CFORM raised " + std::string(to_string(exc->kind)));
    }
  }
}

std::uint64_t Heap::take_region(std::size_t bytes) {
  for (auto it = free_.begin(); it != free_.end(); ++it) {
    if (it->second < bytes) continue;
    const std::uint64_t base = it->first;
    const std::size_t remaining = it->second - bytes;
    free_.erase(it);
    if (remaining > 0) free_.emplace(base + bytes, remaining);
    return base;
  }
  if (top_ + bytes > config_.base + config_.capacity) {
    throw OutOfMemory("heap exhausted: " + std::to_string(bytes) + " bytes requested, " +
                      std::to_string(config_.base + config_.capacity - top_) + " uncarved, " +
                      std::to_string(quarantined_bytes()) + " quarantined");
  }
  // Newly carved memory becomes califormed before first use.
  const std::uint64_t base = top_;
  const ByteSpan whole{0, bytes};
  run_plan(cform_plan(std::span(&whole, 1), base, true));
  top_ += bytes;
  return base;
}

Allocation Heap::alloc(const ObjectShape &shape) {
  validate_shape(shape);
  const std::size_t reserved = round_to_lines(shape.size);
  const std::uint64_t base = take_region(reserved);

  const auto data = complement_spans(shape.security_spans, shape.size);
  run_plan(cform_plan(data, base, false));

  Allocation a{next_id_++, base, shape.size, reserved, shape};
  consumed_ += reserved;
  by_base_[base] = a.id;
  live_[a.id] = a;
  return a;
}

void Heap::free(AllocationId id, bool non_temporal) {
  auto it = live_.find(id);
  if (it == live_.end()) {
    throw UsageError("free of allocation " + std::to_string(id) + " that is not live (double free?)");
  }
  const Allocation a = it->second;
  const auto data = complement_spans(a.shape.security_spans, a.size);
  auto plan = cform_plan(data, a.base, true);
  for (auto &req : plan) req.non_temporal = non_temporal;
  run_plan(plan);

  live_.erase(it);
  by_base_.erase(a.base);
  quarantine_.push_back({a.base, a.reserved});
  watermark_ += a.reserved;
  release_quarantine();
}

void Heap::release_quarantine() {
  while (!quarantine_.empty() && watermark_ >= config_.quarantine_threshold) {
    const QuarantinedRegion r = quarantine_.front();
    quarantine_.pop_front();
    watermark_ -= r.size;
    insert_free(r.base, r.size);
  }
}

void Heap::insert_free(std::uint64_t base, std::size_t size) {
  auto next = free_.lower_bound(base);
  if (next != free_.end() && base + size == next->first) {
    size += next->second;
    next = free_.erase(next);
  }
  if (next != free_.begin()) {
    auto prev = std::prev(next);
    if (prev->first + prev->second == base) {
      prev->second += size;
      return;
    }
  }
  free_.emplace(base, size);
}

const Allocation *Heap::find(AllocationId id) const {
  auto it = live_.find(id);
  return it == live_.end() ? nullptr : &it->second;
}

const Allocation *Heap::owner(std::uint64_t addr) const {
  auto it = by_base_.upper_bound(addr);
  if (it == by_base_.begin()) return nullptr;
  --it;
  const Allocation &a = live_.at(it->second);
  return addr < a.base + a.reserved ? &a : nullptr;
}

bool Heap::in_quarantine(std::uint64_t addr) const {
  return std::any_of(quarantine_.begin(), quarantine_.end(), [addr](const QuarantinedRegion &r) {
    return addr >= r.base && addr < r.base + r.size;
  });
}

std::size_t Heap::live_bytes() const {
  std::size_t n = 0;
  for (const auto &[id, a] : live_) n += a.size;
  return n;
}

bool Heap::expected_security(std::uint64_t addr) const {
  if (addr < config_.base || addr >= top_) return false;
  const Allocation *a = owner(addr);
  if (!a) return true;
  const std::size_t off = addr - a->base;
  if (off >= a->size) return true;
  return std::any_of(a->shape.security_spans.begin(), a->shape.security_spans.end(),
                     [off](const ByteSpan &s) { return off >= s.offset && off < s.end(); });
}

Stack::Stack(Machine &machine, StackConfig config)
    : machine_(machine), config_(config), sp_(config.base) {
  if (config_.base % kLineSize != 0) throw UsageError("stack base must be line aligned");
}

const StackFrame &Stack::enter(const std::vector<ObjectShape> &objects) {
  StackFrame frame;
  frame.base = sp_;
  std::uint64_t cursor = sp_;
  for (const auto &obj : objects) {
    validate_shape(obj);
    frame.object_bases.push_back(cursor);
    frame.objects.push_back(obj);
    cursor += round_to_lines(obj.size);
  }
  frame.size = cursor - sp_;
  if (cursor > config_.base + config_.capacity) throw OutOfMemory("stack overflow");

  for (std::size_t i = 0; i < objects.size(); ++i) {
    for (const auto &req : cform_plan(objects[i].security_spans, frame.object_bases[i], true)) {
      if (auto exc = machine_.cform_at(req)) {
        throw std::logic_error("stack CFORM raised " + std::string(to_string(exc->kind)));
      }
    }
  }
  sp_ = cursor;
  frames_.push_back(std::move(frame));
  return frames_.back();
}

void Stack::exit() {
  if (frames_.empty()) throw UsageError("stack exit without a live frame");
  const StackFrame frame = frames_.back();
  for (std::size_t i = 0; i < frame.objects.size(); ++i) {
    for (const auto &req : cform_plan(frame.objects[i].security_spans, frame.object_bases[i], false)) {
      if (auto exc = machine_.cform_at(req)) {
        throw std::logic_error("stack CFORM raised " + std::string(to_string(exc->kind)));
      }
    }
  }
  for (std::uint64_t addr = frame.base; addr < frame.base + frame.size; addr += 8) {
    machine_.store(addr, 8, 0);
  }
  frames_.pop_back();
  sp_ = frame.base;
}

} // namespace califorms
