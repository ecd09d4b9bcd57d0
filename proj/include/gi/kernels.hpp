// SPDX-License-Identifier: Apache-2.0
//
// Closed-form correlation kernels and quadrature evaluation of the analytic
// ghost-image expressions: the somb^2 / sinc^2 point-to-spot kernels, their
// fermion/boson/classical g2 forms, and the large-source delta limit.

#pragma once

#include "gi/core.hpp"

namespace gi {

/// First-kind order-1 Bessel function. Ascending power series for |x| < 12,
/// Hankel asymptotic expansion beyond; absolute error <= 1e-10 on |x| <= 50.
/// Odd symmetry is exact by construction.
double bessel_j1(double x);

/// somb(x) = 2 J1(x)/x, with the Taylor branch 1 - x^2/8 + x^4/192 for
/// |x| <= 1e-4. somb(0) == 1 exactly; even.
double somb(double x);

/// sin(x)/x with sinc(0) == 1 (unnormalized convention). Even.
double sinc(double x);

/// Positive root of sinc^2(u) = 1/2 (~1.39156), bisected to 1e-10 once and
/// cached. The FWHM of a sinc^2 dip of width parameter w is 2*u*w.
double sinc2_half_max_arg();

enum class Dimensionality { one_d, two_d };

struct KernelParams {
  double source_extent = 0;  // disk diameter (2D) or slit length (1D) [m]
  double wavelength = 0;     // [m]
  double distance = 0;       // balanced source->plane distance l [m]
  Dimensionality dim = Dimensionality::two_d;
  void validate() const;
};

/// Normalized g2 at transverse separation |delta|:
///   u = pi * d * |delta| / (lambda l)
///   fermion: 1 - K(u), boson: 1 + K(u), classical: 1
/// with K = somb^2 (two_d) or sinc^2 (one_d).
double g2_analytic(double delta, Statistics kind, const KernelParams& params);

/// Midpoint quadrature of the kernel against |T|^2 over the mask support:
///   values(rho1) = sum_rho2 g2(|rho1 - rho2|) |T(rho2)|^2 d_rho2.
/// The classical output is flat and equals the |T|^2 integral.
GhostImage ghost_image_analytic(const TransmissionMask& mask, Statistics kind,
                                const KernelParams& params,
                                const DetectorGrid& scan, unsigned workers = 1);

/// Large-source limit: values(rho1) = c1 - |T(rho1)|^2 on the mask grid,
/// with c1 the support area. Only the shape (affine-invariant) is physical;
/// c1 carries area units while |T|^2 is dimensionless.
GhostImage ghost_image_delta_limit(const TransmissionMask& mask);

}  // namespace gi
