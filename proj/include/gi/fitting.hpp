// SPDX-License-Identifier: Apache-2.0
//
// Nonlinear least-squares fitting of correlation profiles: sinc^2 dip/peak
// models for coherence scans and multi-Gaussian dip models for ghost-image
// sections, plus FWHM and dip-separation extraction.
//
// The minimizer is a Nelder-Mead simplex with coefficients reflection 1,
// expansion 2, contraction 0.5, shrink 0.5; it stops when the simplex value
// spread falls below 1e-12 * (1 + |best|) or after 10^4 iterations.
//
// Auto-initialization (used when no init vector is given) is part of the
// contract: baseline = median(y); center = argmin (dip) or argmax (peak);
// amplitude = |extremum - baseline|; widths from the half-excursion crossing
// points around the extremum (x-range/8 when no crossing exists). For two
// Gaussian dips the secondary center is the lowest sample at least 15% of
// the x-range away from the primary; centers are reported in ascending
// order.

#pragma once

#include "gi/core.hpp"

#include <optional>
#include <span>
#include <vector>

namespace gi {

enum class ModelKind { sinc2_dip, sinc2_peak, gaussian_dips };

/// Parameter layout: sinc2 models (baseline, amplitude, center, w) with
/// value = baseline -+ amplitude * sinc^2((x - center)/w); gaussian_dips(n)
/// (baseline, then per dip amplitude, center, sigma) with dips subtracted
/// from the baseline.
struct ProfileModel {
  ModelKind kind = ModelKind::sinc2_dip;
  int n_dips = 1;  // gaussian_dips only
  Eigen::VectorXd params;

  int param_count() const;
  double evaluate(double x) const;
  void validate() const;
};

struct FitResult {
  ProfileModel model;
  double residual_rms = 0;
  unsigned iterations = 0;
  bool converged = false;
  Eigen::VectorXd param_stderr;  // residual-variance x numerical-Hessian
                                 // inverse at the optimum (approximate)
};

struct FitOptions {
  std::optional<Eigen::VectorXd> init;
  bool fix_baseline = false;
  double baseline = 0;  // used when fix_baseline is set
  unsigned max_iterations = 10000;
  std::vector<double>* best_trace = nullptr;  // per-iteration best objective
};

FitResult fit_profile(std::span<const double> xs, std::span<const double> ys,
                      ModelKind kind, int n_dips = 1,
                      const FitOptions& options = {});

/// Full width at half the fitted excursion, from the fitted model
/// analytically: sinc^2 -> 2 * 1.39156 * w, Gaussian -> 2.35482 * sigma.
double fwhm(const FitResult& fit);

struct Separation {
  double value = 0;      // [m]
  double std_error = 0;  // propagated from param_stderr in quadrature
};

/// |center2 - center1| of a converged two-dip Gaussian fit.
Separation dip_separation(const FitResult& fit);

struct SectionProfile {
  ArrayXd xs;  // signed arclength from the segment midpoint [m]
  ArrayXd ys;
};

/// Bilinear interpolation of grid values along the segment [start, end] at
/// `samples` equally spaced points.
SectionProfile extract_section(const DetectorGrid& grid, const ArrayXd& values,
                               const Vec2& start, const Vec2& end,
                               int samples);
SectionProfile extract_section(const CorrelationMap& map, const Vec2& start,
                               const Vec2& end, int samples);
SectionProfile extract_section(const GhostImage& image, const Vec2& start,
                               const Vec2& end, int samples);

}  // namespace gi
