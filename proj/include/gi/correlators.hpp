// SPDX-License-Identifier: Apache-2.0
//
// Normalized second-order coherence scans by two independent estimators.
//
// The amplitude-pair estimator samples two emitters per draw and applies the
// two-particle interference forms directly:
//   fermion:   |A_a1 A_b2 - A_a2 A_b1|^2
//   boson:     |A_a1 A_b2 + A_a2 A_b1|^2
//   classical: |A_a1 A_b2|^2 + |A_a2 A_b1|^2
// The intensity estimator propagates full speckle realizations and
// correlates intensities, g2 = <I1 I2> / (<I1><I2>). Both normalize by the
// classical (independent-particle) rate so classical maps are identically 1,
// and the fermionic map can be synthesized as 2*classical - boson.

#pragma once

#include "gi/core.hpp"
#include "gi/speckle.hpp"

#include <cstdint>

namespace gi {

struct HbtScanConfig {
  SourceSpec source;
  Geometry geometry;
  Vec2 fixed_point{0.0, 0.0};  // D2 position in the object plane
  DetectorGrid scan;           // D1 positions
  std::uint64_t ensemble_size = 0;  // realizations (intensity) or pairs per
                                    // scan point (amplitude_pair)
  std::uint64_t seed = 0;
  Estimator estimator = Estimator::intensity;

  void validate() const;
};

/// Single-sample g2 for one amplitude configuration. Always >= 0; fermion,
/// boson and classical obey the parallelogram identity
/// fermion + boson == 2 * classical up to rounding.
double g2_from_amplitude_pair(const AmplitudePair& pair, Statistics kind);

struct HbtScanResult {
  CorrelationMap boson;
  CorrelationMap fermion;
  CorrelationMap classical;
};

struct IntensityScanResult {
  CorrelationMap boson;
  CorrelationMap classical;
};

/// Monte Carlo scan with the amplitude-pair estimator; emitter positions are
/// drawn uniformly over the source support, amplitudes in unit_phasor mode.
/// Returns all three kinds, normalized by the classical average.
HbtScanResult hbt_scan_amplitude_pair(const HbtScanConfig& config,
                                      unsigned workers = 1);

/// Monte Carlo scan with full-field realizations (gaussian_field mode).
/// boson: <I1 I2> / (<I1><I2>); classical: identically 1 with the propagated
/// normalization uncertainty.
IntensityScanResult hbt_scan_intensity(const HbtScanConfig& config,
                                       unsigned workers = 1);

/// Pointwise 2*classical - boson with errors combined in quadrature.
CorrelationMap synthesize_fermion(const CorrelationMap& boson,
                                  const CorrelationMap& classical);

}  // namespace gi
