// SPDX-License-Identifier: Apache-2.0

#include "gi/propagation.hpp"

#include "gi/parallel.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <numbers>
#include <sstream>

namespace gi {

namespace {

std::atomic<bool> paraxial_warned{false};

void check_paraxial(std::span<const Vec2> points,
                    const std::vector<Vec2>& emitters, double distance) {
  if (paraxial_warned.load(std::memory_order_relaxed)) return;
  double det_max = 0, src_max = 0;
  for (const Vec2& p : points) det_max = std::max(det_max, p.lpNorm<Eigen::Infinity>());
  for (const Vec2& s : emitters) src_max = std::max(src_max, s.lpNorm<Eigen::Infinity>());
  // Conservative bound on the largest transverse separation.
  const double sep = std::numbers::sqrt2 * (det_max + src_max);
  if (sep > 0.1 * distance && !paraxial_warned.exchange(true)) {
    std::cerr << "gi: warning: transverse separation up to " << sep
              << " m exceeds 0.1 x propagation distance (" << distance
              << " m); paraxial accuracy degrades\n";
  }
}

}  // namespace

Complex propagator_amplitude(const Vec2& source_pt, const Vec2& det_pt,
                             double distance, double wavelength) {
  if (!(std::isfinite(distance) && distance > 0))
    throw DomainError("propagator_amplitude: distance must be positive");
  if (!(std::isfinite(wavelength) && wavelength > 0))
    throw DomainError("propagator_amplitude: wavelength must be positive");
  if (!source_pt.allFinite() || !det_pt.allFinite())
    throw DomainError("propagator_amplitude: non-finite point");
  const double phase = std::numbers::pi *
                       (det_pt - source_pt).squaredNorm() /
                       (wavelength * distance);
  return Complex(std::cos(phase), std::sin(phase));
}

ArrayXcd propagate_to_points(const SourceRealization& realization,
                             std::span<const Vec2> points, double distance,
                             double wavelength) {
  if (realization.positions.empty())
    throw DomainError("propagate: empty source realization");
  if (!(std::isfinite(distance) && distance > 0))
    throw DomainError("propagate: distance must be positive");
  if (!(std::isfinite(wavelength) && wavelength > 0))
    throw DomainError("propagate: wavelength must be positive");
  check_paraxial(points, realization.positions, distance);

  const double k2 = std::numbers::pi / (wavelength * distance);
  const std::size_t n_src = realization.positions.size();
  ArrayXcd out(static_cast<Eigen::Index>(points.size()));
  for (std::size_t k = 0; k < points.size(); ++k) {
    const Vec2& p = points[k];
    KahanSum re, im;
    for (std::size_t s = 0; s < n_src; ++s) {
      const double dx = p.x() - realization.positions[s].x();
      const double dy = p.y() - realization.positions[s].y();
      const double phase = k2 * (dx * dx + dy * dy);
      const double cp = std::cos(phase);
      const double sp = std::sin(phase);
      const Complex a = realization.amplitudes[static_cast<Eigen::Index>(s)];
      re.add(a.real() * cp - a.imag() * sp);
      im.add(a.real() * sp + a.imag() * cp);
    }
    out[static_cast<Eigen::Index>(k)] = Complex(re.value(), im.value());
  }
  return out;
}

ComplexField propagate(const SourceRealization& realization,
                       const PropagationPlan& plan) {
  plan.geometry.validate();
  plan.target.validate();
  const std::vector<Vec2> pts = plan.target.nodes();
  ComplexField field;
  field.grid = plan.target;
  field.values = propagate_to_points(realization, pts, plan.distance(),
                                     plan.geometry.wavelength);
  return field;
}

}  // namespace gi
