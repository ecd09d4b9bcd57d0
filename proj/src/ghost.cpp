// SPDX-License-Identifier: Apache-2.0

#include "gi/ghost.hpp"

#include "gi/parallel.hpp"
#include "gi/propagation.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace gi {

namespace {

double ratio_stderr(double sum, double sum_sq, double n, double denom) {
  const double mean = sum / n;
  double var = (sum_sq - n * mean * mean) / (n - 1.0);
  if (var < 0) var = 0;
  return std::sqrt(var / n) / denom;
}

}  // namespace

void GhostConfig::validate() const {
  source.validate();
  geometry.validate();
  mask.validate();
  reference_scan.validate();
  if (!geometry.balanced()) {
    std::ostringstream os;
    os << "ghost imaging refused: geometry is unbalanced (l1="
       << geometry.dist_reference << " m, l2=" << geometry.dist_object
       << " m); the point-to-spot correlation forms only for l1 == l2";
    throw ConfigError(os.str());
  }
  if (mask.support_count() == 0)
    throw DomainError("ghost config: mask support is empty (opaque object)");
  const std::uint64_t min_size =
      estimator == Estimator::intensity ? 500 : 10000;
  if (ensemble_size < min_size) {
    std::ostringstream os;
    os << "ghost.ensemble must be >= " << min_size << " for the "
       << to_string(estimator) << " estimator (got " << ensemble_size << ")";
    throw ValidationError(os.str());
  }
}

BucketSample bucket_signal(const ComplexField& object_field,
                           const TransmissionMask& mask) {
  if (!(object_field.grid == mask.grid))
    throw ShapeError("bucket_signal: field grid does not match mask grid");
  if (object_field.values.size() != mask.values.size())
    throw ShapeError("bucket_signal: field length does not match mask");
  const double measure = cell_measure(mask.grid);
  KahanSum acc;
  for (Eigen::Index k = 0; k < mask.values.size(); ++k) {
    const double t = mask.values[k];
    if (t > 0) acc.add(std::norm(object_field.values[k]) * t * t * measure);
  }
  return BucketSample{acc.value()};
}

GhostResult run_ghost_imaging(const GhostConfig& config, unsigned workers) {
  config.validate();

  const std::vector<Vec2> scan_pts = config.reference_scan.nodes();
  const std::size_t n_pts = scan_pts.size();
  const std::vector<int> support = config.mask.support_indices();
  const std::vector<Vec2> obj_nodes = config.mask.grid.nodes();
  const double measure = cell_measure(config.mask.grid);

  std::vector<Vec2> support_pts(support.size());
  std::vector<double> weights(support.size());
  for (std::size_t s = 0; s < support.size(); ++s) {
    support_pts[s] = obj_nodes[support[s]];
    const double t = config.mask.values[support[s]];
    weights[s] = t * t * measure;
  }

  auto make_image = [&](Statistics kind) {
    GhostImage img;
    img.scan = config.reference_scan;
    img.kind = kind;
    img.baseline = 1.0;
    img.values = ArrayXd::Zero(config.reference_scan.size());
    img.std_error = ArrayXd::Zero(config.reference_scan.size());
    return img;
  };
  GhostResult result{make_image(Statistics::boson),
                     make_image(Statistics::fermion),
                     make_image(Statistics::classical)};

  const double l1 = config.geometry.dist_reference;
  const double l2 = config.geometry.dist_object;
  const double lambda = config.geometry.wavelength;

  if (config.estimator == Estimator::intensity) {
    const EmitterLayout layout = emitter_layout(config.source);
    const std::size_t n_real = config.ensemble_size;
    Eigen::ArrayXXd i1(n_real, n_pts);
    ArrayXd bucket(n_real);

    parallel_for_each_index(
        n_real, resolve_workers(workers), [&](std::size_t r) {
          SourceRealization real;
          real.positions = layout.positions;
          real.amplitudes = draw_amplitudes(layout, SeedSpec{config.seed, r},
                                            AmplitudeMode::gaussian_field);
          real.mode = AmplitudeMode::gaussian_field;
          const ArrayXcd f_ref =
              propagate_to_points(real, scan_pts, l1, lambda);
          const ArrayXcd f_obj =
              propagate_to_points(real, support_pts, l2, lambda);
          for (std::size_t k = 0; k < n_pts; ++k)
            i1(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) =
                std::norm(f_ref[static_cast<Eigen::Index>(k)]);
          KahanSum b;
          for (std::size_t s = 0; s < support.size(); ++s)
            b.add(std::norm(f_obj[static_cast<Eigen::Index>(s)]) * weights[s]);
          bucket[static_cast<Eigen::Index>(r)] = b.value();
        });

    // Ordered reduction.
    const double n = static_cast<double>(n_real);
    KahanSum sb;
    for (std::size_t r = 0; r < n_real; ++r)
      sb.add(bucket[static_cast<Eigen::Index>(r)]);
    const double mean_b = sb.value() / n;
    KahanSum var_b_acc;
    for (std::size_t r = 0; r < n_real; ++r) {
      const double d = bucket[static_cast<Eigen::Index>(r)] - mean_b;
      var_b_acc.add(d * d);
    }
    if (!(mean_b > 0))
      throw DomainError("ghost imaging: degenerate ensemble (zero bucket mean)");
    const double rel_var_b =
        var_b_acc.value() / (n - 1.0) / (mean_b * mean_b);

    for (std::size_t k = 0; k < n_pts; ++k) {
      const Eigen::Index kk = static_cast<Eigen::Index>(k);
      KahanSum s1, sx;
      for (std::size_t r = 0; r < n_real; ++r) {
        const Eigen::Index rr = static_cast<Eigen::Index>(r);
        s1.add(i1(rr, kk));
        sx.add(i1(rr, kk) * bucket[rr]);
      }
      const double mean_i1 = s1.value() / n;
      const double mean_x = sx.value() / n;
      if (!(mean_i1 > 0))
        throw DomainError("ghost imaging: degenerate ensemble (zero reference mean)");
      KahanSum var_x, var_1;
      for (std::size_t r = 0; r < n_real; ++r) {
        const Eigen::Index rr = static_cast<Eigen::Index>(r);
        const double dx = i1(rr, kk) * bucket[rr] - mean_x;
        const double d1 = i1(rr, kk) - mean_i1;
        var_x.add(dx * dx);
        var_1.add(d1 * d1);
      }
      const double denom = mean_i1 * mean_b;
      result.boson.values[kk] = mean_x / denom;
      result.boson.std_error[kk] =
          std::sqrt(var_x.value() / (n - 1.0) / n) / denom;
      result.classical.values[kk] = 1.0;
      const double rel_var_1 =
          var_1.value() / (n - 1.0) / (mean_i1 * mean_i1);
      result.classical.std_error[kk] =
          std::sqrt((rel_var_1 + rel_var_b) / n);
      // Image-level synthesis: fermion = 2*classical - boson.
      result.fermion.values[kk] = 2.0 - result.boson.values[kk];
      result.fermion.std_error[kk] = std::sqrt(
          result.boson.std_error[kk] * result.boson.std_error[kk] +
          4.0 * result.classical.std_error[kk] *
              result.classical.std_error[kk]);
    }
    return result;
  }

  // Amplitude-pair estimator: for each reference point, average the
  // two-emitter g2 forms over the mask support, weighted |T|^2 d_rho2.
  const SupportSampler sampler(config.source);
  const std::uint64_t n_pairs = config.ensemble_size;
  parallel_for_each_index(
      n_pts, resolve_workers(workers), [&](std::size_t k) {
        SplitMix64 rng(derive_seed(config.seed, k));
        const Vec2 rho1 = scan_pts[k];
        KahanSum sf, sb2, sc, sf2, sb22, sc2;
        for (std::uint64_t m = 0; m < n_pairs; ++m) {
          const auto [pa, ia] = sampler.draw(rng);
          const auto [pb, ib] = sampler.draw(rng);
          const double ta = 2.0 * std::numbers::pi * rng.next_unit();
          const double tb = 2.0 * std::numbers::pi * rng.next_unit();
          const Complex ca =
              std::sqrt(ia) * Complex(std::cos(ta), std::sin(ta));
          const Complex cb =
              std::sqrt(ib) * Complex(std::cos(tb), std::sin(tb));
          const Complex a1 = ca * propagator_amplitude(pa, rho1, l1, lambda);
          const Complex b1 = cb * propagator_amplitude(pb, rho1, l1, lambda);
          KahanSum qf, qb, qc;
          for (std::size_t s = 0; s < support.size(); ++s) {
            const Complex a2 =
                ca * propagator_amplitude(pa, support_pts[s], l2, lambda);
            const Complex b2 =
                cb * propagator_amplitude(pb, support_pts[s], l2, lambda);
            const Complex u = a1 * b2;
            const Complex v = a2 * b1;
            qf.add(std::norm(u - v) * weights[s]);
            qb.add(std::norm(u + v) * weights[s]);
            qc.add((std::norm(u) + std::norm(v)) * weights[s]);
          }
          sf.add(qf.value());
          sb2.add(qb.value());
          sc.add(qc.value());
          sf2.add(qf.value() * qf.value());
          sb22.add(qb.value() * qb.value());
          sc2.add(qc.value() * qc.value());
        }
        const double n = static_cast<double>(n_pairs);
        const double mean_c = sc.value() / n;
        const Eigen::Index kk = static_cast<Eigen::Index>(k);
        result.fermion.values[kk] = sf.value() / n / mean_c;
        result.boson.values[kk] = sb2.value() / n / mean_c;
        result.classical.values[kk] = 1.0;
        result.fermion.std_error[kk] =
            ratio_stderr(sf.value(), sf2.value(), n, mean_c);
        result.boson.std_error[kk] =
            ratio_stderr(sb2.value(), sb22.value(), n, mean_c);
        result.classical.std_error[kk] =
            ratio_stderr(sc.value(), sc2.value(), n, mean_c);
      });
  return result;
}

SnrReport snr_estimate(const GhostImage& image) {
  const DetectorGrid& g = image.scan;
  if (g.size() < 10)
    throw DomainError("snr_estimate: need at least 10 scan points");

  // Background: outer 20% ring in normalized grid coordinates.
  SnrReport report;
  KahanSum bg_sum;
  std::vector<int> bg;
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      double xi = g.nx > 1
                      ? std::fabs(i - 0.5 * (g.nx - 1)) / (0.5 * (g.nx - 1))
                      : 0.0;
      double eta = g.ny > 1
                       ? std::fabs(j - 0.5 * (g.ny - 1)) / (0.5 * (g.ny - 1))
                       : 0.0;
      if (std::max(xi, eta) >= 0.8) {
        bg.push_back(g.index(i, j));
        bg_sum.add(image.values[g.index(i, j)]);
      }
    }
  if (bg.empty()) throw DomainError("snr_estimate: empty background ring");
  report.background_mean = bg_sum.value() / static_cast<double>(bg.size());

  KahanSum var_acc;
  for (int idx : bg) {
    const double d = image.values[idx] - report.background_mean;
    var_acc.add(d * d);
  }
  report.background_stddev =
      bg.size() > 1
          ? std::sqrt(var_acc.value() / static_cast<double>(bg.size() - 1))
          : 0.0;

  for (Eigen::Index k = 0; k < image.values.size(); ++k)
    report.excursion = std::max(
        report.excursion, std::fabs(image.values[k] - report.background_mean));

  if (report.excursion == 0) {
    report.snr = 0;  // no image content at all
  } else if (report.background_stddev == 0) {
    report.infinite = true;
    report.snr = std::numeric_limits<double>::infinity();
  } else {
    report.snr = report.excursion / report.background_stddev;
  }
  return report;
}

}  // namespace gi
