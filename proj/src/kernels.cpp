// SPDX-License-Identifier: Apache-2.0

#include "gi/kernels.hpp"

#include "gi/parallel.hpp"

#include <array>
#include <cmath>
#include <numbers>

namespace gi {

namespace {

// Ascending series J1(x) = (x/2) sum_k (-1)^k (x^2/4)^k / (k! (k+1)!).
// Terms are generated by T_{k+1} = -T_k q / ((k+1)(k+2)); for |x| < 12 they
// decrease in magnitude once k >= x/2, so the truncation error is bounded by
// the first omitted term (< 0.25 eps |sum| at the stopping test).
double j1_series(double ax) {
  const double q = 0.25 * ax * ax;
  double term = 0.5 * ax;
  double sum = term;
  for (int k = 0; k < 64; ++k) {
    term *= -q / (static_cast<double>(k + 1) * static_cast<double>(k + 2));
    sum += term;
    if (std::fabs(term) < 0x1.0p-54 * std::fabs(sum) + 1e-300) break;
  }
  return sum;
}

// Hankel asymptotic expansion for x >= 12 (mu = 4 nu^2 = 4):
//   J1(x) = sqrt(2/(pi x)) [P cos(chi) - Q sin(chi)], chi = x - 3 pi / 4
//   P = 1 - a2/x^2 + a4/x^4 - ...,  Q = a1/x - a3/x^3 + ...
//   a_k = prod_{j=1..k} (4 - (2j-1)^2) / (k! 8^k)
// At x = 12 the retained terms reach ~1e-13, well inside the 1e-10 budget.
double j1_asymptotic(double ax) {
  constexpr int n_coeff = 12;
  static const auto a = [] {
    std::array<double, n_coeff> c{};
    c[0] = 1.0;
    for (int k = 1; k < n_coeff; ++k) {
      const double f = 4.0 - static_cast<double>(2 * k - 1) *
                                 static_cast<double>(2 * k - 1);
      c[k] = c[k - 1] * f / (8.0 * k);
    }
    return c;
  }();

  const double inv_x = 1.0 / ax;
  const double inv_x2 = inv_x * inv_x;
  double p = 0, q = 0, pow2 = 1.0;
  double sign = 1.0;
  for (int m = 0; 2 * m + 1 < n_coeff; ++m) {
    p += sign * a[2 * m] * pow2;
    q += sign * a[2 * m + 1] * pow2 * inv_x;
    pow2 *= inv_x2;
    sign = -sign;
  }
  const double chi = ax - 0.75 * std::numbers::pi;
  return std::sqrt(2.0 / (std::numbers::pi * ax)) *
         (p * std::cos(chi) - q * std::sin(chi));
}

}  // namespace

double bessel_j1(double x) {
  if (!std::isfinite(x)) throw DomainError("bessel_j1: non-finite input");
  const double ax = std::fabs(x);
  const double value = ax < 12.0 ? j1_series(ax) : j1_asymptotic(ax);
  return x < 0 ? -value : value;
}

double somb(double x) {
  if (!std::isfinite(x)) throw DomainError("somb: non-finite input");
  const double ax = std::fabs(x);
  if (ax <= 1e-4) {
    const double x2 = ax * ax;
    return 1.0 - x2 / 8.0 + x2 * x2 / 192.0;
  }
  return 2.0 * bessel_j1(ax) / ax;
}

double sinc(double x) {
  if (!std::isfinite(x)) throw DomainError("sinc: non-finite input");
  const double ax = std::fabs(x);
  if (ax <= 1e-4) {
    const double x2 = ax * ax;
    return 1.0 - x2 / 6.0 + x2 * x2 / 120.0;
  }
  return std::sin(ax) / ax;
}

double sinc2_half_max_arg() {
  static const double root = [] {
    double lo = 1.0, hi = 2.0;  // sinc^2(1) > 1/2 > sinc^2(2)
    while (hi - lo > 1e-12) {
      const double mid = 0.5 * (lo + hi);
      const double s = sinc(mid);
      (s * s > 0.5 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }();
  return root;
}

void KernelParams::validate() const {
  if (!(std::isfinite(source_extent) && source_extent > 0))
    throw ValidationError("kernel.source_extent must be positive");
  if (!(std::isfinite(wavelength) && wavelength > 0))
    throw ValidationError("kernel.wavelength must be positive");
  if (!(std::isfinite(distance) && distance > 0))
    throw ValidationError("kernel.distance must be positive");
}

double g2_analytic(double delta, Statistics kind, const KernelParams& params) {
  params.validate();
  if (kind == Statistics::classical) return 1.0;
  const double u = std::numbers::pi * params.source_extent *
                   std::fabs(delta) /
                   (params.wavelength * params.distance);
  const double k = params.dim == Dimensionality::two_d ? somb(u) : sinc(u);
  const double k2 = k * k;
  return kind == Statistics::fermion ? 1.0 - k2 : 1.0 + k2;
}

GhostImage ghost_image_analytic(const TransmissionMask& mask, Statistics kind,
                                const KernelParams& params,
                                const DetectorGrid& scan, unsigned workers) {
  mask.validate();
  params.validate();
  scan.validate();
  const std::vector<int> support = mask.support_indices();
  if (support.empty())
    throw DomainError("ghost_image_analytic: mask support is empty");

  const double measure = cell_measure(mask.grid);
  const std::vector<Vec2> obj_pts = mask.grid.nodes();
  const std::vector<Vec2> scan_pts = scan.nodes();

  std::vector<double> weights(support.size());
  KahanSum total;
  for (std::size_t s = 0; s < support.size(); ++s) {
    const double t = mask.values[support[s]];
    weights[s] = t * t * measure;
    total.add(weights[s]);
  }

  GhostImage image;
  image.scan = scan;
  image.kind = kind;
  image.baseline = total.value();
  image.values = ArrayXd::Zero(scan.size());
  image.std_error = ArrayXd::Zero(scan.size());
  parallel_for_each_index(
      scan_pts.size(), workers, [&](std::size_t k) {
        KahanSum acc;
        for (std::size_t s = 0; s < support.size(); ++s) {
          const double d = (scan_pts[k] - obj_pts[support[s]]).norm();
          acc.add(g2_analytic(d, kind, params) * weights[s]);
        }
        image.values[static_cast<Eigen::Index>(k)] = acc.value();
      });
  return image;
}

GhostImage ghost_image_delta_limit(const TransmissionMask& mask) {
  mask.validate();
  const int n_support = mask.support_count();
  if (n_support == 0)
    throw DomainError("ghost_image_delta_limit: mask support is empty");
  const double c1 = n_support * cell_measure(mask.grid);

  GhostImage image;
  image.scan = mask.grid;
  image.kind = Statistics::fermion;
  image.baseline = c1;
  image.values = c1 - mask.values.square();
  image.std_error = ArrayXd::Zero(mask.grid.size());
  return image;
}

}  // namespace gi
