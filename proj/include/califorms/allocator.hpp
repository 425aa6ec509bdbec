// Heap and stack models driving the machine through CFORM plans.
//
// Heap: clean-before-use. Every carved byte that is not part of a live
// object is a zeroed security byte. Allocation unsets the object's data
// bytes, free sets them again and parks the region in a FIFO quarantine.
//
// Stack: dirty-before-use. Security spans exist only while a frame is live.
#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "califorms/layout.hpp"
#include "califorms/memsys.hpp"

namespace califorms {

class OutOfMemory : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Byte extent of an object and the security spans inside it.
struct ObjectShape {
  std::size_t size = 0;
  std::vector<ByteSpan> security_spans;
};

ObjectShape shape_of(const CaliformedLayout &layout);

struct HeapConfig {
  std::uint64_t base = 0x10000000;
  std::size_t capacity = std::size_t{16} << 20;
  std::size_t quarantine_threshold = std::size_t{256} << 10;
};

using AllocationId = std::uint64_t;

struct Allocation {
  AllocationId id = 0;
  std::uint64_t base = 0;
  std::size_t size = 0;          // object size
  std::size_t reserved = 0;      // line-rounded footprint
  ObjectShape shape;
};

struct QuarantinedRegion {
  std::uint64_t base = 0;
  std::size_t size = 0;
};

class Heap {
public:
  Heap(Machine &machine, HeapConfig config = {});
  ~Heap();
  Heap(const Heap &) = delete;
  Heap &operator=(const Heap &) = delete;

  Allocation alloc(const ObjectShape &shape);
  Allocation alloc(const CaliformedLayout &layout) { return alloc(shape_of(layout)); }
  /// Throws UsageError on double free or unknown id.
  void free(AllocationId id, bool non_temporal = false);

  const Allocation *find(AllocationId id) const;
  /// Live allocation containing addr, if any.
  const Allocation *owner(std::uint64_t addr) const;
  bool in_quarantine(std::uint64_t addr) const;

  std::size_t live_bytes() const;
  std::size_t quarantined_bytes() const { return watermark_; }
  std::size_t consumed_bytes() const { return consumed_; }
  std::size_t carved_bytes() const { return top_ - config_.base; }
  const std::deque<QuarantinedRegion> &quarantine() const { return quarantine_; }
  const std::map<std::uint64_t, std::size_t> &free_regions() const { return free_; }
  const std::map<AllocationId, Allocation> &live() const { return live_; }
  const HeapConfig &config() const { return config_; }

  /// Expected security state of a carved heap byte.
  bool expected_security(std::uint64_t addr) const;

private:
  std::uint64_t take_region(std::size_t bytes);
  void release_quarantine();
  void insert_free(std::uint64_t base, std::size_t size);
  void run_plan(const std::vector<CformRequest> &plan);

  Machine &machine_;
  HeapConfig config_;
  std::uint64_t top_;
  std::map<std::uint64_t, std::size_t> free_;
  std::map<AllocationId, Allocation> live_;
  std::map<std::uint64_t, AllocationId> by_base_;
  std::deque<QuarantinedRegion> quarantine_;
  std::size_t watermark_ = 0;
  std::size_t consumed_ = 0;
  AllocationId next_id_ = 1;
};

struct StackConfig {
  std::uint64_t base = 0x7f0000000000;
  std::size_t capacity = std::size_t{1} << 20;
};

struct StackFrame {
  std::uint64_t base = 0;
  std::size_t size = 0;
  std::vector<std::uint64_t> object_bases;
  std::vector<ObjectShape> objects;
};

class Stack {
public:
  explicit Stack(Machine &machine, StackConfig config = {});

  /// Places each object line-aligned in a new frame and sets its spans.
  const StackFrame &enter(const std::vector<ObjectShape> &objects);
  /// Unsets the innermost frame's spans and zeroes it.
  void exit();

  std::size_t depth() const { return frames_.size(); }
  const std::vector<StackFrame> &frames() const { return frames_; }

private:
  Machine &machine_;
  StackConfig config_;
  std::uint64_t sp_;
  std::vector<StackFrame> frames_;
};

} // namespace califorms
