// SPDX-License-Identifier: Apache-2.0

#include "gi/correlators.hpp"

#include "gi/parallel.hpp"
#include "gi/propagation.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace gi {

namespace {

void require_balanced(const Geometry& g) {
  if (!g.balanced()) {
    std::ostringstream os;
    os << "scan refused: geometry is unbalanced (l1=" << g.dist_reference
       << " m, l2=" << g.dist_object
       << " m); the sinc/somb comparison kernels assume l1 == l2";
    throw ConfigError(os.str());
  }
}

struct PairAccumulator {
  KahanSum f, b, c;     // first moments
  KahanSum f2, b2, c2;  // second moments, for standard errors
  void add(double vf, double vb, double vc) {
    f.add(vf);
    b.add(vb);
    c.add(vc);
    f2.add(vf * vf);
    b2.add(vb * vb);
    c2.add(vc * vc);
  }
};

// Standard error of mean(x)/denom with the denominator treated as
// high-precision (delta method).
double ratio_stderr(double sum, double sum_sq, double n, double denom) {
  const double mean = sum / n;
  double var = (sum_sq - n * mean * mean) / (n - 1.0);
  if (var < 0) var = 0;  // rounding guard
  return std::sqrt(var / n) / denom;
}

}  // namespace

void HbtScanConfig::validate() const {
  source.validate();
  geometry.validate();
  scan.validate();
  if (!fixed_point.allFinite())
    throw ValidationError("hbt.fixed_point must be finite");
  const std::uint64_t min_size =
      estimator == Estimator::intensity ? 100 : 1000;
  if (ensemble_size < min_size) {
    std::ostringstream os;
    os << "hbt.ensemble must be >= " << min_size << " for the "
       << to_string(estimator) << " estimator (got " << ensemble_size << ")";
    throw ValidationError(os.str());
  }
  require_balanced(geometry);
}

double g2_from_amplitude_pair(const AmplitudePair& pair, Statistics kind) {
  const bool finite = std::isfinite(pair.a1.real()) &&
                      std::isfinite(pair.a1.imag()) &&
                      std::isfinite(pair.a2.real()) &&
                      std::isfinite(pair.a2.imag()) &&
                      std::isfinite(pair.b1.real()) &&
                      std::isfinite(pair.b1.imag()) &&
                      std::isfinite(pair.b2.real()) &&
                      std::isfinite(pair.b2.imag());
  if (!finite) throw DomainError("g2_from_amplitude_pair: non-finite amplitude");
  const Complex u = pair.a1 * pair.b2;
  const Complex v = pair.a2 * pair.b1;
  switch (kind) {
    case Statistics::fermion: return std::norm(u - v);
    case Statistics::boson: return std::norm(u + v);
    case Statistics::classical: return std::norm(u) + std::norm(v);
  }
  return 0;
}

HbtScanResult hbt_scan_amplitude_pair(const HbtScanConfig& config,
                                      unsigned workers) {
  config.validate();
  if (config.estimator != Estimator::amplitude_pair)
    throw ConfigError("hbt_scan_amplitude_pair requires estimator=amplitude_pair");

  const std::vector<Vec2> scan_pts = config.scan.nodes();
  const std::size_t n_pts = scan_pts.size();
  const std::uint64_t n_pairs = config.ensemble_size;
  const SupportSampler sampler(config.source);
  const double l1 = config.geometry.dist_reference;
  const double l2 = config.geometry.dist_object;
  const double lambda = config.geometry.wavelength;

  auto make_map = [&](Statistics kind) {
    CorrelationMap map;
    map.scan = config.scan;
    map.kind = kind;
    map.values = ArrayXd::Zero(config.scan.size());
    map.std_error = ArrayXd::Zero(config.scan.size());
    return map;
  };
  HbtScanResult result{make_map(Statistics::boson),
                       make_map(Statistics::fermion),
                       make_map(Statistics::classical)};

  parallel_for_each_index(
      n_pts, resolve_workers(workers), [&](std::size_t k) {
        SplitMix64 rng(derive_seed(config.seed, k));
        const Vec2 rho1 = scan_pts[k];
        PairAccumulator acc;
        for (std::uint64_t m = 0; m < n_pairs; ++m) {
          // Draw order is fixed: position a, position b, phase a, phase b.
          const auto [pa, ia] = sampler.draw(rng);
          const auto [pb, ib] = sampler.draw(rng);
          const double ta = 2.0 * std::numbers::pi * rng.next_unit();
          const double tb = 2.0 * std::numbers::pi * rng.next_unit();
          const Complex ca = std::sqrt(ia) * Complex(std::cos(ta), std::sin(ta));
          const Complex cb = std::sqrt(ib) * Complex(std::cos(tb), std::sin(tb));
          const Complex u = ca * propagator_amplitude(pa, rho1, l1, lambda) *
                            cb * propagator_amplitude(pb, config.fixed_point, l2, lambda);
          const Complex v = ca * propagator_amplitude(pa, config.fixed_point, l2, lambda) *
                            cb * propagator_amplitude(pb, rho1, l1, lambda);
          acc.add(std::norm(u - v), std::norm(u + v),
                  std::norm(u) + std::norm(v));
        }
        const double n = static_cast<double>(n_pairs);
        const double mean_c = acc.c.value() / n;
        const Eigen::Index idx = static_cast<Eigen::Index>(k);
        result.fermion.values[idx] = acc.f.value() / n / mean_c;
        result.boson.values[idx] = acc.b.value() / n / mean_c;
        result.classical.values[idx] = 1.0;  // self-normalized
        result.fermion.std_error[idx] =
            ratio_stderr(acc.f.value(), acc.f2.value(), n, mean_c);
        result.boson.std_error[idx] =
            ratio_stderr(acc.b.value(), acc.b2.value(), n, mean_c);
        result.classical.std_error[idx] =
            ratio_stderr(acc.c.value(), acc.c2.value(), n, mean_c);
      });
  return result;
}

IntensityScanResult hbt_scan_intensity(const HbtScanConfig& config,
                                       unsigned workers) {
  config.validate();
  if (config.estimator != Estimator::intensity)
    throw ConfigError("hbt_scan_intensity requires estimator=intensity");

  const std::vector<Vec2> scan_pts = config.scan.nodes();
  const std::size_t n_pts = scan_pts.size();
  const std::size_t n_real = config.ensemble_size;
  const EmitterLayout layout = emitter_layout(config.source);
  const std::vector<Vec2> fixed{config.fixed_point};

  // Per-realization intensities; column k is reduced sequentially below.
  Eigen::ArrayXXd i1(n_real, n_pts);
  ArrayXd i2(n_real);
  parallel_for_each_index(
      n_real, resolve_workers(workers), [&](std::size_t r) {
        SourceRealization real;
        real.positions = layout.positions;
        real.amplitudes = draw_amplitudes(
            layout, SeedSpec{config.seed, r}, AmplitudeMode::gaussian_field);
        real.mode = AmplitudeMode::gaussian_field;
        const ArrayXcd f1 =
            propagate_to_points(real, scan_pts, config.geometry.dist_reference,
                                config.geometry.wavelength);
        const ArrayXcd f2 = propagate_to_points(
            real, fixed, config.geometry.dist_object,
            config.geometry.wavelength);
        for (std::size_t k = 0; k < n_pts; ++k)
          i1(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) =
              std::norm(f1[static_cast<Eigen::Index>(k)]);
        i2[static_cast<Eigen::Index>(r)] = std::norm(f2[0]);
      });

  // Ordered reduction in realization-index order.
  const double n = static_cast<double>(n_real);
  KahanSum s2;
  for (std::size_t r = 0; r < n_real; ++r)
    s2.add(i2[static_cast<Eigen::Index>(r)]);
  const double mean_i2 = s2.value() / n;

  IntensityScanResult result;
  for (CorrelationMap* map : {&result.boson, &result.classical}) {
    map->scan = config.scan;
    map->values = ArrayXd::Zero(config.scan.size());
    map->std_error = ArrayXd::Zero(config.scan.size());
  }
  result.boson.kind = Statistics::boson;
  result.classical.kind = Statistics::classical;

  KahanSum var2_acc;
  for (std::size_t r = 0; r < n_real; ++r) {
    const double d = i2[static_cast<Eigen::Index>(r)] - mean_i2;
    var2_acc.add(d * d);
  }
  const double rel_var_i2 = var2_acc.value() / (n - 1.0) / (mean_i2 * mean_i2);

  for (std::size_t k = 0; k < n_pts; ++k) {
    const Eigen::Index kk = static_cast<Eigen::Index>(k);
    KahanSum s1, sx;
    for (std::size_t r = 0; r < n_real; ++r) {
      const Eigen::Index rr = static_cast<Eigen::Index>(r);
      s1.add(i1(rr, kk));
      sx.add(i1(rr, kk) * i2[rr]);
    }
    const double mean_i1 = s1.value() / n;
    const double mean_x = sx.value() / n;
    if (!(mean_i1 > 0) || !(mean_i2 > 0))
      throw DomainError("hbt_scan_intensity: degenerate ensemble (zero mean intensity)");

    KahanSum var_x, var_1;
    for (std::size_t r = 0; r < n_real; ++r) {
      const Eigen::Index rr = static_cast<Eigen::Index>(r);
      const double dx = i1(rr, kk) * i2[rr] - mean_x;
      const double d1 = i1(rr, kk) - mean_i1;
      var_x.add(dx * dx);
      var_1.add(d1 * d1);
    }
    const double denom = mean_i1 * mean_i2;
    result.boson.values[kk] = mean_x / denom;
    result.boson.std_error[kk] =
        std::sqrt(var_x.value() / (n - 1.0) / n) / denom;
    result.classical.values[kk] = 1.0;
    const double rel_var_i1 =
        var_1.value() / (n - 1.0) / (mean_i1 * mean_i1);
    result.classical.std_error[kk] = std::sqrt((rel_var_i1 + rel_var_i2) / n);
  }
  return result;
}

CorrelationMap synthesize_fermion(const CorrelationMap& boson,
                                  const CorrelationMap& classical) {
  if (!(boson.scan == classical.scan))
    throw ShapeError("synthesize_fermion: scan grids do not match");
  if (boson.kind != Statistics::boson ||
      classical.kind != Statistics::classical)
    throw ShapeError("synthesize_fermion: expected (boson, classical) inputs");

  CorrelationMap fermion;
  fermion.scan = boson.scan;
  fermion.kind = Statistics::fermion;
  fermion.values = 2.0 * classical.values - boson.values;
  fermion.std_error =
      (boson.std_error.square() + 4.0 * classical.std_error.square()).sqrt();
  return fermion;
}

}  // namespace gi
