// SPDX-License-Identifier: Apache-2.0

#include "gi/speckle.hpp"

#include <cmath>
#include <numbers>

namespace gi {

std::uint64_t avalanche(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

std::uint64_t derive_seed(std::uint64_t master_seed,
                          std::uint64_t realization_index) {
  return avalanche(avalanche(master_seed ^ 0x9E3779B97F4A7C15ULL) ^
                   realization_index);
}

void SplitMix64::next_gaussian_pair(double& z1, double& z2) {
  const double u1 = next_unit();
  const double u2 = next_unit();
  // 1 - u1 is in (0, 1], so the log never sees zero.
  const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
  const double t = 2.0 * std::numbers::pi * u2;
  z1 = r * std::cos(t);
  z2 = r * std::sin(t);
}

EmitterLayout emitter_layout(const SourceSpec& source) {
  source.validate();
  EmitterLayout layout;

  if (source.shape == SourceShape::bitmap) {
    const DetectorGrid& g = source.bitmap_grid;
    std::vector<double> intensities;
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) {
        const double v = source.bitmap[g.index(i, j)];
        if (v > 0) {
          layout.positions.push_back(g.point(i, j));
          intensities.push_back(v);
        }
      }
    layout.intensities = Eigen::Map<const ArrayXd>(
        intensities.data(), static_cast<Eigen::Index>(intensities.size()));
    return layout;
  }

  const double p = source.emitter_pitch;
  double hx = 0, hy = 0;
  if (source.shape == SourceShape::disk) {
    hx = hy = 0.5 * source.diameter;
  } else {
    hx = 0.5 * source.width;
    hy = 0.5 * source.height;
  }
  const int ni = static_cast<int>(std::ceil(hx / p));
  const int nj = static_cast<int>(std::ceil(hy / p));
  for (int j = -nj; j <= nj; ++j)
    for (int i = -ni; i <= ni; ++i) {
      const Vec2 pt(i * p, j * p);
      if (source.contains(pt)) layout.positions.push_back(pt);
    }
  layout.intensities = ArrayXd::Ones(static_cast<Eigen::Index>(
      layout.positions.size()));
  return layout;
}

ArrayXcd draw_amplitudes(const EmitterLayout& layout, const SeedSpec& seed,
                         AmplitudeMode mode) {
  const Eigen::Index n = static_cast<Eigen::Index>(layout.positions.size());
  ArrayXcd amps(n);
  SplitMix64 rng(derive_seed(seed.master_seed, seed.realization_index));
  if (mode == AmplitudeMode::gaussian_field) {
    for (Eigen::Index k = 0; k < n; ++k) {
      double z1, z2;
      rng.next_gaussian_pair(z1, z2);
      const double s = std::sqrt(0.5 * layout.intensities[k]);
      amps[k] = Complex(s * z1, s * z2);
    }
  } else {
    for (Eigen::Index k = 0; k < n; ++k) {
      const double t = 2.0 * std::numbers::pi * rng.next_unit();
      const double s = std::sqrt(layout.intensities[k]);
      amps[k] = Complex(s * std::cos(t), s * std::sin(t));
    }
  }
  return amps;
}

SourceRealization sample_realization(const SourceSpec& source,
                                     const SeedSpec& seed,
                                     AmplitudeMode mode) {
  EmitterLayout layout = emitter_layout(source);
  SourceRealization real;
  real.amplitudes = draw_amplitudes(layout, seed, mode);
  real.positions = std::move(layout.positions);
  real.mode = mode;
  return real;
}

SupportSampler::SupportSampler(const SourceSpec& source) : source_(source) {
  source_.validate();
  if (source_.shape == SourceShape::bitmap)
    bitmap_support_ = emitter_layout(source_);
}

std::pair<Vec2, double> SupportSampler::draw(SplitMix64& rng) const {
  switch (source_.shape) {
    case SourceShape::disk: {
      const double r = 0.5 * source_.diameter;
      for (;;) {
        const double x = (2.0 * rng.next_unit() - 1.0) * r;
        const double y = (2.0 * rng.next_unit() - 1.0) * r;
        if (x * x + y * y < r * r) return {Vec2(x, y), 1.0};
      }
    }
    case SourceShape::rectangle: {
      const double x = (rng.next_unit() - 0.5) * source_.width;
      const double y = (rng.next_unit() - 0.5) * source_.height;
      return {Vec2(x, y), 1.0};
    }
    case SourceShape::bitmap: {
      const std::size_t n = bitmap_support_.positions.size();
      std::size_t k = static_cast<std::size_t>(rng.next_unit() *
                                               static_cast<double>(n));
      if (k >= n) k = n - 1;
      return {bitmap_support_.positions[k],
              bitmap_support_.intensities[static_cast<Eigen::Index>(k)]};
    }
  }
  throw DomainError("SupportSampler: unknown source shape");
}

}  // namespace gi
