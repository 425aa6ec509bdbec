// Derandomization-attack probabilities and a Monte Carlo scan over the
// simulated heap that checks them.
#pragma once

#include <cstddef>
#include <cstdint>

namespace califorms {

struct AttackParams {
  double security_fraction = 0.0; // P/N
  std::uint64_t objects = 0;      // O
  std::uint64_t spans = 0;        // n
  std::size_t span_min = 1;
  std::size_t span_max = 7;
};

/// (1 - P/N)^O: chance that one probe per object never hits a security byte.
double scan_survival_probability(const AttackParams &p);

/// (1 / widths)^n with widths = span_max - span_min + 1.
double guess_success_probability(std::uint64_t spans, std::size_t span_min = 1,
                                 std::size_t span_max = 7);

struct ScanScenario {
  std::size_t objects = 10;
  std::size_t object_size = 1000;
  std::size_t security_bytes = 100; // per object, at seeded random offsets
  std::uint64_t layout_seed = 0;
};

/// Scenario with object_size bytes and round(fraction * object_size)
/// security bytes per object.
ScanScenario scenario_for(double security_fraction, std::size_t objects,
                          std::size_t object_size = 1000, std::uint64_t layout_seed = 0);

struct ScanEstimate {
  std::size_t trials = 0;
  std::size_t detections = 0;
  double detection_rate = 0.0;
  double expected_rate = 0.0; // 1 - (1 - P/N)^O for the realised P/N
  double sigma = 0.0;         // binomial standard deviation of the rate

  /// |detection_rate - expected_rate| in units of sigma (0 when sigma == 0
  /// and the rates agree).
  double z_score() const;
};

/// Each trial probes one uniformly random byte of every object through the
/// simulated load path; a trial is a detection when any probe faults.
/// Deterministic for a given seed.
ScanEstimate monte_carlo_scan(const ScanScenario &scenario, std::size_t trials, std::uint64_t seed);

} // namespace califorms
