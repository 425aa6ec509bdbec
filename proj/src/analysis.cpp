#include "califorms/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "califorms/allocator.hpp"

namespace califorms {

double scan_survival_probability(const AttackParams &p) {
  if (!(p.security_fraction >= 0.0 && p.security_fraction <= 1.0)) {
    throw std::invalid_argument("P/N must lie in [0, 1]");
  }
  return std::pow(1.0 - p.security_fraction, static_cast<double>(p.objects));
}

double guess_success_probability(std::uint64_t spans, std::size_t span_min, std::size_t span_max) {
  if (span_min > span_max) throw std::invalid_argument("span_min must not exceed span_max");
  const double widths = static_cast<double>(span_max - span_min + 1);
  return std::pow(1.0 / widths, static_cast<double>(spans));
}

ScanScenario scenario_for(double security_fraction, std::size_t objects, std::size_t object_size,
                          std::uint64_t layout_seed) {
  if (!(security_fraction >= 0.0 && security_fraction <= 1.0)) {
    throw std::invalid_argument("P/N must lie in [0, 1]");
  }
  if (object_size == 0) throw std::invalid_argument("object size must be positive");
  const auto p = static_cast<std::size_t>(std::llround(security_fraction * static_cast<double>(object_size)));
  return {objects, object_size, p, layout_seed};
}

double ScanEstimate::z_score() const {
  const double diff = std::abs(detection_rate - expected_rate);
  if (sigma == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return diff / sigma;
}

ScanEstimate monte_carlo_scan(const ScanScenario &scenario, std::size_t trials, std::uint64_t seed) {
  if (scenario.security_bytes > scenario.object_size) {
    throw std::invalid_argument("more security bytes than object bytes");
  }
  const std::size_t n = scenario.object_size;

  // One shape shared by all objects: security bytes at seeded offsets.
  std::vector<std::size_t> offsets(n);
  std::iota(offsets.begin(), offsets.end(), std::size_t{0});
  std::mt19937_64 layout_rng(scenario.layout_seed);
  std::shuffle(offsets.begin(), offsets.end(), layout_rng);
  offsets.resize(scenario.security_bytes);
  std::sort(offsets.begin(), offsets.end());
  ObjectShape shape{n, {}};
  for (std::size_t off : offsets) shape.security_spans.push_back({off, 1});

  Machine machine;
  HeapConfig hc;
  hc.capacity = std::max<std::size_t>(hc.capacity, (n / kLineSize + 1) * kLineSize * (scenario.objects + 1));
  Heap heap(machine, hc);
  std::vector<std::uint64_t> bases;
  for (std::size_t i = 0; i < scenario.objects; ++i) bases.push_back(heap.alloc(shape).base);

  std::mt19937_64 rng(seed);
  ScanEstimate est;
  est.trials = trials;
  for (std::size_t t = 0; t < trials; ++t) {
    bool detected = false;
    for (std::uint64_t base : bases) {
      const std::uint64_t probe = base + rng() % n;
      if (machine.load(probe, 1).exception) detected = true;
    }
    if (detected) ++est.detections;
    machine.clear_exception_log();
  }

  const double fraction = static_cast<double>(scenario.security_bytes) / static_cast<double>(n);
  est.expected_rate = 1.0 - scan_survival_probability({fraction, scenario.objects, 0, 1, 7});
  est.detection_rate = trials == 0 ? 0.0 : static_cast<double>(est.detections) / static_cast<double>(trials);
  est.sigma = trials == 0 ? 0.0
                          : std::sqrt(est.expected_rate * (1.0 - est.expected_rate) /
                                      static_cast<double>(trials));
  return est;
}

} // namespace califorms
