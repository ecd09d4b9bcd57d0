// SPDX-License-Identifier: Apache-2.0

#include "gi/fitting.hpp"

#include "gi/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace gi {

namespace {

constexpr double kGaussFwhm = 2.3548200450309493;  // 2 sqrt(2 ln 2)
constexpr double kBig = 1e300;  // objective barrier for invalid parameters

double median(std::span<const double> ys) {
  std::vector<double> tmp(ys.begin(), ys.end());
  std::sort(tmp.begin(), tmp.end());
  const std::size_t n = tmp.size();
  return n % 2 == 1 ? tmp[n / 2] : 0.5 * (tmp[n / 2 - 1] + tmp[n / 2]);
}

struct Objective {
  std::span<const double> xs;
  std::span<const double> ys;
  ModelKind kind;
  int n_dips;

  double operator()(const Eigen::VectorXd& p) const {
    // Positivity barriers keep the simplex out of invalid parameter space.
    if (kind == ModelKind::gaussian_dips) {
      for (int d = 0; d < n_dips; ++d)
        if (!(p[1 + 3 * d] >= 0) || !(p[3 + 3 * d] > 0)) return kBig;
    } else {
      if (!(p[1] >= 0) || !(p[3] > 0)) return kBig;
    }
    ProfileModel m{kind, n_dips, p};
    double sse = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double r = ys[i] - m.evaluate(xs[i]);
      sse += r * r;
    }
    return std::isfinite(sse) ? sse : kBig;
  }
};

struct NelderMeadOutcome {
  Eigen::VectorXd best;
  double value = 0;
  unsigned iterations = 0;
  bool converged = false;
};

template <typename F>
NelderMeadOutcome nelder_mead(const F& f, const Eigen::VectorXd& x0,
                              const Eigen::VectorXd& steps,
                              unsigned max_iterations,
                              std::vector<double>* trace) {
  const int n = static_cast<int>(x0.size());
  std::vector<Eigen::VectorXd> v(n + 1, x0);
  std::vector<double> fv(n + 1);
  for (int i = 0; i < n; ++i) v[i + 1][i] += steps[i];
  for (int i = 0; i <= n; ++i) fv[i] = f(v[i]);

  std::vector<int> order(n + 1);
  NelderMeadOutcome out;
  for (out.iterations = 0; out.iterations < max_iterations; ++out.iterations) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return fv[a] < fv[b]; });
    const int best = order[0], second = order[n - 1], worst = order[n];
    if (trace) trace->push_back(fv[best]);
    if (fv[worst] - fv[best] < 1e-12 * (1.0 + std::fabs(fv[best]))) {
      out.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i <= n; ++i)
      if (i != worst) centroid += v[i];
    centroid /= n;

    const Eigen::VectorXd reflected = centroid + (centroid - v[worst]);
    const double fr = f(reflected);
    if (fr < fv[best]) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - v[worst]);
      const double fe = f(expanded);
      if (fe < fr) {
        v[worst] = expanded;
        fv[worst] = fe;
      } else {
        v[worst] = reflected;
        fv[worst] = fr;
      }
    } else if (fr < fv[second]) {
      v[worst] = reflected;
      fv[worst] = fr;
    } else {
      const bool outside = fr < fv[worst];
      const Eigen::VectorXd contracted =
          outside ? centroid + 0.5 * (reflected - centroid)
                  : centroid - 0.5 * (centroid - v[worst]);
      const double fc = f(contracted);
      if (fc < std::min(fr, fv[worst])) {
        v[worst] = contracted;
        fv[worst] = fc;
      } else {
        for (int i = 0; i <= n; ++i) {
          if (i == best) continue;
          v[i] = v[best] + 0.5 * (v[i] - v[best]);
          fv[i] = f(v[i]);
        }
      }
    }
  }

  const auto it = std::min_element(fv.begin(), fv.end());
  out.best = v[static_cast<std::size_t>(it - fv.begin())];
  out.value = *it;
  return out;
}

// Half-excursion crossing width around index `ext`, or fallback.
double crossing_width(std::span<const double> xs, std::span<const double> ys,
                      std::size_t ext, double level, bool dip,
                      double fallback) {
  auto crossed = [&](double y) { return dip ? y > level : y < level; };
  double left = xs.front(), right = xs.back();
  bool found_left = false, found_right = false;
  for (std::size_t i = ext; i-- > 0;) {
    if (crossed(ys[i])) {
      const double t = (level - ys[i + 1]) / (ys[i] - ys[i + 1]);
      left = xs[i + 1] + t * (xs[i] - xs[i + 1]);
      found_left = true;
      break;
    }
  }
  for (std::size_t i = ext + 1; i < ys.size(); ++i) {
    if (crossed(ys[i])) {
      const double t = (level - ys[i - 1]) / (ys[i] - ys[i - 1]);
      right = xs[i - 1] + t * (xs[i] - xs[i - 1]);
      found_right = true;
      break;
    }
  }
  if (found_left && found_right && right > left) return right - left;
  if (found_left && !found_right) return 2.0 * (xs[ext] - left);
  if (found_right && !found_left) return 2.0 * (right - xs[ext]);
  return fallback;
}

Eigen::VectorXd auto_init(std::span<const double> xs,
                          std::span<const double> ys, ModelKind kind,
                          int n_dips) {
  const double base = median(ys);
  const double range = xs.back() - xs.front();
  const bool dip = kind != ModelKind::sinc2_peak;

  if (kind != ModelKind::gaussian_dips) {
    std::size_t ext = 0;
    for (std::size_t i = 1; i < ys.size(); ++i)
      if (dip ? ys[i] < ys[ext] : ys[i] > ys[ext]) ext = i;
    const double amp = std::fabs(ys[ext] - base);
    const double level = dip ? base - 0.5 * amp : base + 0.5 * amp;
    const double width =
        crossing_width(xs, ys, ext, level, dip, range / 8.0);
    Eigen::VectorXd p(4);
    p << base, amp, xs[ext], width / (2.0 * sinc2_half_max_arg());
    return p;
  }

  // Gaussian dips: primary = global minimum; further dips = lowest sample at
  // least 15% of the x-range from every already chosen center.
  std::vector<std::size_t> centers;
  for (int d = 0; d < n_dips; ++d) {
    auto admissible = [&](std::size_t i) {
      for (std::size_t c : centers)
        if (std::fabs(xs[i] - xs[c]) < 0.15 * range) return false;
      return true;
    };
    std::size_t ext = ys.size();
    for (std::size_t i = 0; i < ys.size(); ++i) {
      if (!admissible(i)) continue;
      if (ext == ys.size() || ys[i] < ys[ext]) ext = i;
    }
    if (ext == ys.size()) ext = ys.size() / 2;  // all excluded: midpoint
    centers.push_back(ext);
  }
  std::sort(centers.begin(), centers.end());

  Eigen::VectorXd p(1 + 3 * n_dips);
  p[0] = base;
  for (int d = 0; d < n_dips; ++d) {
    const std::size_t ext = centers[static_cast<std::size_t>(d)];
    const double amp = std::fabs(ys[ext] - base);
    const double level = base - 0.5 * amp;
    const double width = crossing_width(xs, ys, ext, level, true,
                                        range / (8.0 * n_dips));
    p[1 + 3 * d] = amp;
    p[2 + 3 * d] = xs[ext];
    p[3 + 3 * d] = width / kGaussFwhm;
  }
  return p;
}

Eigen::VectorXd param_scales(const Eigen::VectorXd& p0,
                             std::span<const double> xs,
                             std::span<const double> ys, ModelKind kind,
                             int n_dips) {
  const double y_scale = std::max(
      1e-30, *std::max_element(ys.begin(), ys.end()) -
                 *std::min_element(ys.begin(), ys.end()));
  const double x_scale = xs.back() - xs.front();
  Eigen::VectorXd s(p0.size());
  if (kind != ModelKind::gaussian_dips) {
    s << y_scale, y_scale, x_scale, std::max(std::fabs(p0[3]), 0.05 * x_scale);
  } else {
    s[0] = y_scale;
    for (int d = 0; d < n_dips; ++d) {
      s[1 + 3 * d] = y_scale;
      s[2 + 3 * d] = x_scale;
      s[3 + 3 * d] = std::max(std::fabs(p0[3 + 3 * d]), 0.02 * x_scale);
    }
  }
  return s;
}

}  // namespace

int ProfileModel::param_count() const {
  return kind == ModelKind::gaussian_dips ? 1 + 3 * n_dips : 4;
}

double ProfileModel::evaluate(double x) const {
  if (kind == ModelKind::gaussian_dips) {
    double v = params[0];
    for (int d = 0; d < n_dips; ++d) {
      const double z = (x - params[2 + 3 * d]) / params[3 + 3 * d];
      v -= params[1 + 3 * d] * std::exp(-0.5 * z * z);
    }
    return v;
  }
  const double s = sinc((x - params[2]) / params[3]);
  const double bump = params[1] * s * s;
  return kind == ModelKind::sinc2_dip ? params[0] - bump : params[0] + bump;
}

void ProfileModel::validate() const {
  if (params.size() != param_count())
    throw ValidationError("profile model: wrong parameter count");
  if (kind == ModelKind::gaussian_dips) {
    if (n_dips < 1) throw ValidationError("gaussian_dips: need n >= 1");
    for (int d = 0; d < n_dips; ++d) {
      if (!(params[1 + 3 * d] >= 0))
        throw ValidationError("gaussian_dips: amplitude must be >= 0");
      if (!(params[3 + 3 * d] > 0))
        throw ValidationError("gaussian_dips: sigma must be > 0");
    }
  } else {
    if (!(params[1] >= 0))
      throw ValidationError("sinc2 model: amplitude must be >= 0");
    if (!(params[3] > 0)) throw ValidationError("sinc2 model: w must be > 0");
  }
}

FitResult fit_profile(std::span<const double> xs, std::span<const double> ys,
                      ModelKind kind, int n_dips, const FitOptions& options) {
  if (kind != ModelKind::gaussian_dips) n_dips = 1;
  const int n_params = kind == ModelKind::gaussian_dips ? 1 + 3 * n_dips : 4;
  if (xs.size() != ys.size())
    throw ValidationError("fit_profile: xs and ys lengths differ");
  if (static_cast<int>(xs.size()) < n_params + 2) {
    std::ostringstream os;
    os << "fit_profile: need at least " << n_params + 2 << " samples (got "
       << xs.size() << ")";
    throw ValidationError(os.str());
  }
  for (std::size_t i = 1; i < xs.size(); ++i)
    if (!(xs[i] > xs[i - 1]))
      throw ValidationError("fit_profile: xs must be strictly increasing");

  FitResult result;
  result.model.kind = kind;
  result.model.n_dips = n_dips;
  result.param_stderr = Eigen::VectorXd::Zero(n_params);

  // Degenerate data: no excursion at all. Flagged, not thrown.
  const double y_min = *std::min_element(ys.begin(), ys.end());
  const double y_max = *std::max_element(ys.begin(), ys.end());
  if (y_max - y_min == 0) {
    result.model.params = auto_init(xs, ys, kind, n_dips);
    result.converged = false;
    return result;
  }

  Eigen::VectorXd p0 =
      options.init ? *options.init : auto_init(xs, ys, kind, n_dips);
  if (p0.size() != n_params)
    throw ValidationError("fit_profile: init vector has wrong length");
  if (options.fix_baseline) p0[0] = options.baseline;

  const Eigen::VectorXd scales = param_scales(p0, xs, ys, kind, n_dips);
  const Objective objective{xs, ys, kind, n_dips};

  // Reduced parameterization when the baseline is pinned.
  const int offset = options.fix_baseline ? 1 : 0;
  const int n_free = n_params - offset;
  Eigen::VectorXd x0(n_free), steps(n_free);
  for (int i = 0; i < n_free; ++i) {
    x0[i] = p0[i + offset];
    steps[i] = 0.1 * scales[i + offset];
  }
  auto expand = [&](const Eigen::VectorXd& xfree) {
    Eigen::VectorXd full(n_params);
    if (options.fix_baseline) full[0] = options.baseline;
    for (int i = 0; i < n_free; ++i) full[i + offset] = xfree[i];
    return full;
  };
  auto f = [&](const Eigen::VectorXd& xfree) { return objective(expand(xfree)); };

  const NelderMeadOutcome nm =
      nelder_mead(f, x0, steps, options.max_iterations, options.best_trace);

  Eigen::VectorXd best = expand(nm.best);
  result.iterations = nm.iterations;
  result.converged = nm.converged && nm.value < kBig;
  result.residual_rms =
      std::sqrt(nm.value / static_cast<double>(xs.size()));

  // Canonical dip order: ascending centers.
  if (kind == ModelKind::gaussian_dips && n_dips > 1) {
    std::vector<int> order(n_dips);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return best[2 + 3 * a] < best[2 + 3 * b];
    });
    Eigen::VectorXd sorted(best.size());
    sorted[0] = best[0];
    for (int d = 0; d < n_dips; ++d)
      for (int j = 0; j < 3; ++j)
        sorted[1 + 3 * d + j] = best[1 + 3 * order[d] + j];
    best = sorted;
  }
  result.model.params = best;

  if (result.converged) {
    // Central-difference Hessian of the SSE at the optimum (step
    // 1e-5 * scale); covariance = residual variance * 2 H^{-1}.
    const int dof = static_cast<int>(xs.size()) - n_free;
    const double sigma2 = dof > 0 ? nm.value / dof : 0.0;
    Eigen::MatrixXd hessian(n_free, n_free);
    Eigen::VectorXd h(n_free);
    Eigen::VectorXd center = nm.best;
    // Re-map scales onto the (possibly re-sorted) best vector.
    for (int i = 0; i < n_free; ++i)
      center[i] = best[i + offset];
    for (int i = 0; i < n_free; ++i)
      h[i] = 1e-5 * std::max(scales[i + offset], std::fabs(center[i]));
    const double f0 = f(center);
    for (int i = 0; i < n_free; ++i) {
      Eigen::VectorXd up = center, dn = center;
      up[i] += h[i];
      dn[i] -= h[i];
      hessian(i, i) = (f(up) - 2.0 * f0 + f(dn)) / (h[i] * h[i]);
      for (int j = i + 1; j < n_free; ++j) {
        Eigen::VectorXd pp = center, pm = center, mp = center, mm = center;
        pp[i] += h[i]; pp[j] += h[j];
        pm[i] += h[i]; pm[j] -= h[j];
        mp[i] -= h[i]; mp[j] += h[j];
        mm[i] -= h[i]; mm[j] -= h[j];
        const double v = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * h[i] * h[j]);
        hessian(i, j) = v;
        hessian(j, i) = v;
      }
    }
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian);
    if (ldlt.info() == Eigen::Success) {
      const Eigen::MatrixXd cov =
          2.0 * sigma2 *
          ldlt.solve(Eigen::MatrixXd::Identity(n_free, n_free));
      for (int i = 0; i < n_free; ++i) {
        const double c = cov(i, i);
        result.param_stderr[i + offset] = c > 0 ? std::sqrt(c) : 0.0;
      }
    }
  }
  return result;
}

double fwhm(const FitResult& fit) {
  if (!fit.converged) throw DomainError("fwhm: fit did not converge");
  const ProfileModel& m = fit.model;
  if (m.kind == ModelKind::gaussian_dips) {
    if (m.n_dips != 1)
      throw DomainError("fwhm: ambiguous for multi-dip Gaussian fits");
    return kGaussFwhm * m.params[3];
  }
  return 2.0 * sinc2_half_max_arg() * m.params[3];
}

Separation dip_separation(const FitResult& fit) {
  if (!fit.converged) throw DomainError("dip_separation: fit did not converge");
  if (fit.model.kind != ModelKind::gaussian_dips || fit.model.n_dips != 2)
    throw DomainError("dip_separation: requires a two-dip Gaussian fit");
  Separation sep;
  sep.value = std::fabs(fit.model.params[5] - fit.model.params[2]);
  sep.std_error = std::hypot(fit.param_stderr[2], fit.param_stderr[5]);
  return sep;
}

SectionProfile extract_section(const DetectorGrid& grid, const ArrayXd& values,
                               const Vec2& start, const Vec2& end,
                               int samples) {
  grid.validate();
  if (values.size() != grid.size())
    throw ShapeError("extract_section: values length does not match grid");
  if (samples < 2)
    throw ValidationError("extract_section: need at least 2 samples");
  const double length = (end - start).norm();
  if (!(length > 0))
    throw ValidationError("extract_section: degenerate zero-length segment");
  if (!grid.contains(start) || !grid.contains(end)) {
    std::ostringstream os;
    os << "extract_section: segment exits the grid extent [" << grid.origin.x()
       << ", " << grid.origin.x() + grid.extent_x() << "] x ["
       << grid.origin.y() << ", " << grid.origin.y() + grid.extent_y() << "]";
    throw RangeError(os.str());
  }

  SectionProfile profile;
  profile.xs = ArrayXd(samples);
  profile.ys = ArrayXd(samples);
  for (int s = 0; s < samples; ++s) {
    const double t = static_cast<double>(s) / (samples - 1);
    const Vec2 p = start + t * (end - start);
    profile.xs[s] = (t - 0.5) * length;

    const double u = (p.x() - grid.origin.x()) / grid.pitch;
    const double v = (p.y() - grid.origin.y()) / grid.pitch;
    if (grid.ny == 1 && std::fabs(v) > 1e-9)
      throw RangeError("extract_section: segment leaves a single-row grid");
    int i0 = static_cast<int>(std::floor(u));
    int j0 = static_cast<int>(std::floor(v));
    i0 = std::clamp(i0, 0, std::max(grid.nx - 2, 0));
    j0 = std::clamp(j0, 0, std::max(grid.ny - 2, 0));
    const double fx = std::clamp(u - i0, 0.0, 1.0);
    const double fy = grid.ny == 1 ? 0.0 : std::clamp(v - j0, 0.0, 1.0);
    const int i1 = std::min(i0 + 1, grid.nx - 1);
    const int j1 = std::min(j0 + 1, grid.ny - 1);
    const double v00 = values[grid.index(i0, j0)];
    const double v10 = values[grid.index(i1, j0)];
    const double v01 = values[grid.index(i0, j1)];
    const double v11 = values[grid.index(i1, j1)];
    profile.ys[s] = (1 - fy) * ((1 - fx) * v00 + fx * v10) +
                    fy * ((1 - fx) * v01 + fx * v11);
  }
  return profile;
}

SectionProfile extract_section(const CorrelationMap& map, const Vec2& start,
                               const Vec2& end, int samples) {
  return extract_section(map.scan, map.values, start, end, samples);
}

SectionProfile extract_section(const GhostImage& image, const Vec2& start,
                               const Vec2& end, int samples) {
  return extract_section(image.scan, image.values, start, end, samples);
}

}  // namespace gi
