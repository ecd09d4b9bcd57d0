// SPDX-License-Identifier: Apache-2.0
//
// End-to-end Monte Carlo ghost imaging: reference-arm intensities correlated
// against an ideal bucket detector behind the object, for all three particle
// statistics. Images are reported in normalized g2 units with baseline 1;
// the fermionic image is the bosonic one mirrored through the classical
// level, so its features are dips below the background.

#pragma once

#include "gi/core.hpp"
#include "gi/speckle.hpp"

#include <cstdint>

namespace gi {

struct GhostConfig {
  SourceSpec source;
  Geometry geometry;  // balanced arms required
  TransmissionMask mask;
  DetectorGrid reference_scan;
  std::uint64_t ensemble_size = 0;  // realizations (intensity) or pairs per
                                    // scan point (amplitude_pair)
  std::uint64_t seed = 0;
  Estimator estimator = Estimator::intensity;

  void validate() const;
};

/// One realization's bucket reading B = sum |field|^2 |T|^2 d_rho2.
struct BucketSample {
  double value = 0;
};

/// Grid sum of transmitted intensity over the mask support, in grid order.
/// The field grid must equal the mask grid.
BucketSample bucket_signal(const ComplexField& object_field,
                           const TransmissionMask& mask);

struct GhostResult {
  GhostImage boson;
  GhostImage fermion;
  GhostImage classical;
};

GhostResult run_ghost_imaging(const GhostConfig& config, unsigned workers = 1);

struct SnrReport {
  double snr = 0;
  bool infinite = false;  // degenerate background (zero variance)
  double background_mean = 0;
  double background_stddev = 0;
  double excursion = 0;
};

/// Peak-or-dip excursion over background noise. The background region is
/// auto-detected as the outer 20% ring of the scan grid.
SnrReport snr_estimate(const GhostImage& image);

}  // namespace gi
