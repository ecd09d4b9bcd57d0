// SPDX-License-Identifier: Apache-2.0
//
// Paraxial Fresnel propagation of source realizations by direct quadrature
// over the emitters. The constant 1/(i lambda l) exp(ikl) prefactor is
// dropped throughout: every reported quantity is a normalized g2 in which it
// cancels. Emitter sums run in fixed index order with compensated
// accumulation, so fields are bitwise reproducible.

#pragma once

#include "gi/core.hpp"
#include "gi/speckle.hpp"

#include <span>

namespace gi {

enum class PlanTarget { to_reference, to_object };

struct PropagationPlan {
  Geometry geometry;
  PlanTarget which = PlanTarget::to_reference;
  DetectorGrid target;

  double distance() const {
    return which == PlanTarget::to_reference ? geometry.dist_reference
                                             : geometry.dist_object;
  }
};

/// Unit-modulus paraxial propagator exp(i pi |det - src|^2 / (lambda l)).
Complex propagator_amplitude(const Vec2& source_pt, const Vec2& det_pt,
                             double distance, double wavelength);

/// Field at arbitrary detector points: sum over emitters of
/// amplitude * propagator, in emitter-index order.
ArrayXcd propagate_to_points(const SourceRealization& realization,
                             std::span<const Vec2> points, double distance,
                             double wavelength);

ComplexField propagate(const SourceRealization& realization,
                       const PropagationPlan& plan);

}  // namespace gi
