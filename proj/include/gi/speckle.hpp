// SPDX-License-Identifier: Apache-2.0
//
// Seeded pseudothermal source realizations: the in-silico counterpart of a
// laser spot on a rotating diffuser. Every realization is one independent
// speckle configuration, fully determined by (SourceSpec, SeedSpec, mode).

#pragma once

#include "gi/core.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace gi {

/// One realization of the source ensemble is addressed by a master seed and
/// a realization index; the pair fully determines the draw.
struct SeedSpec {
  std::uint64_t master_seed = 0;
  std::uint64_t realization_index = 0;
};

enum class AmplitudeMode {
  gaussian_field,  // i.i.d. circular complex Gaussian, E|a|^2 = intensity
  unit_phasor      // uniform-phase phasor of modulus sqrt(intensity)
};

struct SourceRealization {
  std::vector<Vec2> positions;  // emitter cell centers, fixed lattice order
  ArrayXcd amplitudes;
  AmplitudeMode mode = AmplitudeMode::gaussian_field;
};

/// SplitMix64 avalanche (finalizer) step:
///   z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
///   z ^= z >> 27; z *= 0x94D049BB133111EB;
///   z ^= z >> 31;
std::uint64_t avalanche(std::uint64_t z);

/// Per-realization seed derivation over the concatenated 128-bit input:
///   derive_seed(s, i) = avalanche(avalanche(s ^ 0x9E3779B97F4A7C15) ^ i)
/// Pure integer arithmetic, identical on every platform, and injective in i
/// for fixed s (a composition of bijections on 64-bit words).
std::uint64_t derive_seed(std::uint64_t master_seed,
                          std::uint64_t realization_index);

/// Counter-free stream generator: state advances by the golden-gamma
/// increment and each output is avalanche(state). Uniform doubles use the
/// top 53 bits; Gaussian pairs use the Box-Muller transform
///   r = sqrt(-2 ln(1 - u1)), z = r (cos 2 pi u2, sin 2 pi u2).
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return avalanche(state_);
  }

  /// Uniform in [0, 1).
  double next_unit() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  void next_gaussian_pair(double& z1, double& z2);

 private:
  std::uint64_t state_;
};

/// Fixed emitter lattice of a source plus per-emitter emission intensity
/// (1 for uniform shapes). Lattice order: j outer, i inner, ascending.
struct EmitterLayout {
  std::vector<Vec2> positions;
  ArrayXd intensities;
};

EmitterLayout emitter_layout(const SourceSpec& source);

/// Amplitude draw for one realization over a precomputed layout; the stream
/// is seeded with derive_seed(seed.master_seed, seed.realization_index) and
/// consumed in emitter order.
ArrayXcd draw_amplitudes(const EmitterLayout& layout, const SeedSpec& seed,
                         AmplitudeMode mode);

SourceRealization sample_realization(const SourceSpec& source,
                                     const SeedSpec& seed, AmplitudeMode mode);

/// Uniform position draws over the source support for the amplitude-pair
/// estimator: rejection sampling from the bounding square (disk), direct
/// (rectangle), or a uniform pick among positive cells (bitmap). Each draw
/// returns the position and the local emission intensity.
class SupportSampler {
 public:
  explicit SupportSampler(const SourceSpec& source);
  std::pair<Vec2, double> draw(SplitMix64& rng) const;

 private:
  SourceSpec source_;
  EmitterLayout bitmap_support_;  // bitmap mode only
};

}  // namespace gi
