// Functional memory hierarchy: an L1 holding lines in bitvector form, an L2
// holding sentinel-encoded lines, and a backing memory that keeps the
// sentinel payload plus one side bit per line (the spare ECC bit).
//
// The hierarchy is exclusive: each line lives in exactly one level. Lines
// never touched before read as 64 zero bytes with no security bytes.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "califorms/cacheline.hpp"
#include "califorms/cform.hpp"

namespace califorms {

inline constexpr std::size_t kPageSize = 4096;
inline constexpr std::size_t kLinesPerPage = kPageSize / kLineSize;

struct MachineConfig {
  std::size_t l1_lines = 512;  // direct mapped, 32KB
  std::size_t l2_lines = 4096; // direct mapped, 256KB
};

struct Counters {
  std::uint64_t loads = 0;
  std::uint64_t stores = 0;
  std::uint64_t cforms = 0;
  std::uint64_t fills = 0;
  std::uint64_t spills = 0;
  std::uint64_t writebacks = 0; // L2 -> memory
  std::uint64_t exceptions = 0;
  std::uint64_t suppressed_violations = 0;
};

struct LoadResult {
  std::uint64_t value = 0;
  std::optional<CaliException> exception;
};

/// Per-page metadata saved by the swap handler: bit i = line i califormed.
struct PageMeta {
  std::uint64_t page_addr = 0;
  std::uint64_t line_bits = 0;
};

struct PageImage {
  std::vector<std::uint8_t> bytes; // kPageSize bytes, memory (sentinel) format
  PageMeta meta;
};

enum class LsqOpKind { Load, Store, Cform };

struct LsqEntry {
  LsqOpKind kind = LsqOpKind::Load;
  std::uint64_t addr = 0;
  unsigned width = 8;
  std::uint64_t value = 0;       // store data
  std::uint64_t set_bits = 0;    // cform R2
  std::uint64_t change_mask = 0; // cform R3
};

struct LsqResult {
  std::uint64_t value = 0; // loads only
  bool forwarded = false;  // at least one byte came from an older store
  std::optional<CaliException> exception;
};

class Machine {
public:
  /// Relabels an access violation (e.g. as TemporalViolation) before it is
  /// logged. Installed by higher layers that know about object lifetimes.
  using Classifier = std::function<ViolationKind(std::uint64_t addr, ViolationKind kind)>;

  explicit Machine(MachineConfig config = {});

  LoadResult load(std::uint64_t addr, unsigned width);
  std::optional<CaliException> store(std::uint64_t addr, unsigned width, std::uint64_t value);
  std::optional<CaliException> cform_at(const CformRequest &req);

  void fill(std::uint64_t line_addr);
  void spill(std::uint64_t line_addr);
  /// Spills every L1 line to L2.
  void flush();

  std::vector<LsqResult> lsq_execute(const std::vector<LsqEntry> &ops);

  PageImage page_swap_out(std::uint64_t page_addr);
  void page_swap_in(std::uint64_t page_addr, const std::vector<std::uint8_t> &bytes,
                    const PageMeta &meta);
  /// Metadata held in the OS-reserved area for swapped-out pages.
  const std::unordered_map<std::uint64_t, std::uint64_t> &reserved_page_meta() const {
    return reserved_meta_;
  }

  void whitelist_enter() { mask_.enter(); }
  void whitelist_exit() { mask_.exit(); }
  const ExceptionMask &exception_mask() const { return mask_; }

  void set_classifier(Classifier classifier) { classifier_ = std::move(classifier); }

  /// Decoded view of a line wherever it lives, without moving it.
  CaliLine peek_line(std::uint64_t line_addr) const;
  bool is_security(std::uint64_t addr) const;

  enum class Level { None, L1, L2, Memory };
  Level where(std::uint64_t line_addr) const;
  std::size_t l1_occupancy() const;

  /// Raw access to the L2 copy of a line, for fault injection in tests.
  std::optional<EncodedLine> l2_line(std::uint64_t line_addr) const;
  void poke_l2(std::uint64_t line_addr, const EncodedLine &enc);

  const Counters &counters() const { return counters_; }
  const std::vector<CaliException> &exception_log() const { return log_; }
  void clear_exception_log() { log_.clear(); }

  const MachineConfig &config() const { return config_; }

private:
  struct L1Slot {
    std::uint64_t addr = 0;
    CaliLine line;
  };
  struct L2Slot {
    std::uint64_t addr = 0;
    EncodedLine line;
  };

  std::size_t l1_index(std::uint64_t line_addr) const;
  std::size_t l2_index(std::uint64_t line_addr) const;
  CaliLine &ensure_l1(std::uint64_t line_addr);
  void insert_l2(std::uint64_t line_addr, const EncodedLine &enc);
  void writeback(const L2Slot &slot);
  std::optional<EncodedLine> take_from_lower(std::uint64_t line_addr);
  void move_to_memory(std::uint64_t line_addr);

  std::optional<CaliException> report(ViolationKind kind, std::uint64_t addr, std::string detail);
  static void check_access(std::uint64_t addr, unsigned width);

  MachineConfig config_;
  std::vector<std::optional<L1Slot>> l1_;
  std::vector<std::optional<L2Slot>> l2_;
  std::unordered_map<std::uint64_t, LineBytes> memory_;
  std::unordered_set<std::uint64_t> califormed_bits_;
  std::unordered_map<std::uint64_t, std::uint64_t> reserved_meta_;
  ExceptionMask mask_;
  Classifier classifier_;
  std::vector<CaliException> log_;
  Counters counters_;
};

} // namespace califorms
