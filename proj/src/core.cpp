// SPDX-License-Identifier: Apache-2.0

#include "gi/core.hpp"

#include <cmath>
#include <sstream>

namespace gi {

namespace {

void require_finite_positive(double v, const char* name) {
  if (!(std::isfinite(v) && v > 0)) {
    std::ostringstream os;
    os << name << " must be positive and finite (got " << v << ")";
    throw ValidationError(os.str());
  }
}

}  // namespace

const char* to_string(Statistics kind) {
  switch (kind) {
    case Statistics::boson: return "boson";
    case Statistics::fermion: return "fermion";
    case Statistics::classical: return "classical";
  }
  return "?";
}

const char* to_string(Estimator est) {
  return est == Estimator::intensity ? "intensity" : "amplitude_pair";
}

Statistics statistics_from_string(const std::string& s) {
  if (s == "boson") return Statistics::boson;
  if (s == "fermion") return Statistics::fermion;
  if (s == "classical") return Statistics::classical;
  throw ValidationError("unknown statistics kind '" + s +
                        "' (expected boson|fermion|classical)");
}

Estimator estimator_from_string(const std::string& s) {
  if (s == "intensity") return Estimator::intensity;
  if (s == "amplitude_pair") return Estimator::amplitude_pair;
  throw ValidationError("unknown estimator '" + s +
                        "' (expected intensity|amplitude_pair)");
}

bool Geometry::balanced() const {
  return std::fabs(dist_reference - dist_object) < 1e-12 * dist_reference;
}

void Geometry::validate() const {
  require_finite_positive(wavelength, "geometry.wavelength");
  require_finite_positive(dist_reference, "geometry.dist_reference");
  require_finite_positive(dist_object, "geometry.dist_object");
}

bool DetectorGrid::contains(const Vec2& p) const {
  const double eps = 1e-9 * pitch;
  return p.x() >= origin.x() - eps && p.x() <= origin.x() + extent_x() + eps &&
         p.y() >= origin.y() - eps && p.y() <= origin.y() + extent_y() + eps;
}

std::vector<Vec2> DetectorGrid::nodes() const {
  std::vector<Vec2> out;
  out.reserve(static_cast<std::size_t>(size()));
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) out.push_back(point(i, j));
  return out;
}

void DetectorGrid::validate() const {
  require_finite_positive(pitch, "grid.pitch");
  if (nx < 1 || ny < 1) {
    std::ostringstream os;
    os << "grid counts must be >= 1 (got nx=" << nx << ", ny=" << ny << ")";
    throw ValidationError(os.str());
  }
  if (!std::isfinite(origin.x()) || !std::isfinite(origin.y()))
    throw ValidationError("grid.origin must be finite");
}

double cell_measure(const DetectorGrid& grid) {
  return grid.ny == 1 ? grid.pitch : grid.pitch * grid.pitch;
}

double SourceSpec::min_dimension() const {
  switch (shape) {
    case SourceShape::disk: return diameter;
    case SourceShape::rectangle: return std::min(width, height);
    case SourceShape::bitmap: {
      int imin = bitmap_grid.nx, imax = -1, jmin = bitmap_grid.ny, jmax = -1;
      for (int j = 0; j < bitmap_grid.ny; ++j)
        for (int i = 0; i < bitmap_grid.nx; ++i)
          if (bitmap[bitmap_grid.index(i, j)] > 0) {
            imin = std::min(imin, i);
            imax = std::max(imax, i);
            jmin = std::min(jmin, j);
            jmax = std::max(jmax, j);
          }
      if (imax < 0) return 0;
      const int span = std::min(imax - imin + 1, jmax - jmin + 1);
      return span * bitmap_grid.pitch;
    }
  }
  return 0;
}

bool SourceSpec::contains(const Vec2& p) const {
  switch (shape) {
    case SourceShape::disk:
      return p.squaredNorm() < 0.25 * diameter * diameter;
    case SourceShape::rectangle:
      return std::fabs(p.x()) < 0.5 * width && std::fabs(p.y()) < 0.5 * height;
    case SourceShape::bitmap:
      return false;  // bitmap membership is per-node, not geometric
  }
  return false;
}

void SourceSpec::validate() const {
  switch (shape) {
    case SourceShape::disk:
      require_finite_positive(diameter, "source.diameter");
      break;
    case SourceShape::rectangle:
      require_finite_positive(width, "source.width");
      require_finite_positive(height, "source.height");
      break;
    case SourceShape::bitmap: {
      bitmap_grid.validate();
      if (bitmap.size() != bitmap_grid.size())
        throw ValidationError("source.bitmap length does not match its grid");
      bool any_positive = false;
      for (Eigen::Index k = 0; k < bitmap.size(); ++k) {
        if (!(std::isfinite(bitmap[k]) && bitmap[k] >= 0)) {
          std::ostringstream os;
          os << "source.bitmap[" << k << "] must be >= 0 (got " << bitmap[k]
             << ")";
          throw ValidationError(os.str());
        }
        any_positive = any_positive || bitmap[k] > 0;
      }
      if (!any_positive)
        throw ValidationError("source.bitmap has no positive samples");
      break;
    }
  }
  require_finite_positive(emitter_pitch, "source.emitter_pitch");
  const double min_dim = min_dimension();
  if (8.0 * emitter_pitch > min_dim) {
    std::ostringstream os;
    os << "source.emitter_pitch too coarse: need pitch <= " << min_dim / 8.0
       << " m so that 8 emitters span the smallest source dimension ("
       << min_dim << " m)";
    throw ConfigError(os.str());
  }
}

SourceSpec disk_source(double diameter, double emitter_pitch) {
  SourceSpec s;
  s.shape = SourceShape::disk;
  s.diameter = diameter;
  s.emitter_pitch = emitter_pitch;
  s.validate();
  return s;
}

SourceSpec rectangle_source(double width, double height, double emitter_pitch) {
  SourceSpec s;
  s.shape = SourceShape::rectangle;
  s.width = width;
  s.height = height;
  s.emitter_pitch = emitter_pitch;
  s.validate();
  return s;
}

SourceSpec bitmap_source(const DetectorGrid& grid, ArrayXd intensity) {
  SourceSpec s;
  s.shape = SourceShape::bitmap;
  s.bitmap_grid = grid;
  s.bitmap = std::move(intensity);
  s.emitter_pitch = grid.pitch;
  s.validate();
  return s;
}

int TransmissionMask::support_count() const {
  int n = 0;
  for (Eigen::Index k = 0; k < values.size(); ++k)
    if (values[k] > 0) ++n;
  return n;
}

std::vector<int> TransmissionMask::support_indices() const {
  std::vector<int> out;
  for (int k = 0; k < static_cast<int>(values.size()); ++k)
    if (values[k] > 0) out.push_back(k);
  return out;
}

void TransmissionMask::validate() const {
  grid.validate();
  if (values.size() != grid.size())
    throw ValidationError("mask values length does not match its grid");
  for (Eigen::Index k = 0; k < values.size(); ++k)
    if (!(std::isfinite(values[k]) && values[k] >= 0 && values[k] <= 1)) {
      std::ostringstream os;
      os << "mask value out of range [0,1] at index " << k << " (got "
         << values[k] << ")";
      throw ValidationError(os.str());
    }
}

TransmissionMask make_double_pinhole_mask(const DetectorGrid& grid,
                                          double diameter, double separation) {
  grid.validate();
  require_finite_positive(diameter, "pinhole diameter");
  if (!(std::isfinite(separation) && separation >= 0))
    throw ValidationError("pinhole separation must be >= 0");

  const Vec2 c = grid.center();
  const double r = 0.5 * diameter;
  const Vec2 left(c.x() - 0.5 * separation, c.y());
  const Vec2 right(c.x() + 0.5 * separation, c.y());

  const double need_x = separation + diameter;
  const double need_y = diameter;
  const bool covered =
      grid.origin.x() <= left.x() - r &&
      grid.origin.x() + grid.extent_x() >= right.x() + r &&
      grid.origin.y() <= c.y() - r &&
      grid.origin.y() + grid.extent_y() >= c.y() + r;
  if (!covered) {
    std::ostringstream os;
    os << "grid too small for double pinhole: need extent >= " << need_x
       << " m x " << need_y << " m centered on the grid (have "
       << grid.extent_x() << " m x " << grid.extent_y() << " m)";
    throw ConfigError(os.str());
  }

  TransmissionMask mask;
  mask.grid = grid;
  mask.values = ArrayXd::Zero(grid.size());
  const double r2 = r * r;
  for (int j = 0; j < grid.ny; ++j)
    for (int i = 0; i < grid.nx; ++i) {
      const Vec2 p = grid.point(i, j);
      if ((p - left).squaredNorm() < r2 || (p - right).squaredNorm() < r2)
        mask.values[grid.index(i, j)] = 1.0;
    }
  return mask;
}

TransmissionMask make_mask_from_bitmap(const DetectorGrid& grid,
                                       const ArrayXd& samples) {
  grid.validate();
  if (samples.size() != grid.size()) {
    std::ostringstream os;
    os << "bitmap length " << samples.size() << " does not match grid size "
       << grid.size();
    throw ValidationError(os.str());
  }
  TransmissionMask mask;
  mask.grid = grid;
  mask.values = samples;
  mask.validate();
  return mask;
}

}  // namespace gi
