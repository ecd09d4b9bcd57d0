// SPDX-License-Identifier: Apache-2.0
//
// Shared domain types for the ghost-imaging simulator: propagation geometry,
// sampling grids, source and object descriptions, and the correlation/image
// value carriers produced by the estimator modules.

#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace gi {

using Vec2 = Eigen::Vector2d;
using ArrayXd = Eigen::ArrayXd;
using ArrayXcd = Eigen::ArrayXcd;
using Complex = std::complex<double>;

// Error taxonomy. The CLI maps each class onto a distinct exit code.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Mismatched grids or array shapes between operands.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RangeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Statistics { boson, fermion, classical };
enum class Estimator { intensity, amplitude_pair };

const char* to_string(Statistics kind);
const char* to_string(Estimator est);
Statistics statistics_from_string(const std::string& s);
Estimator estimator_from_string(const std::string& s);

/// Wavelength and the two source-to-plane distances of the two-arm layout.
/// All lengths are SI meters throughout the library.
struct Geometry {
  double wavelength = 0;      // [m]
  double dist_reference = 0;  // l1: source -> reference (scanning) plane [m]
  double dist_object = 0;     // l2: source -> object plane [m]

  /// True iff |l1 - l2| / l1 < 1e-12. The closed-form correlation kernels
  /// assume balanced arms.
  bool balanced() const;
  void validate() const;
};

/// Regular rectangular sampling grid. Node (i, j) sits at
/// origin + (i * pitch, j * pitch), exactly; 1D scans use ny == 1.
struct DetectorGrid {
  Vec2 origin{0.0, 0.0};
  double pitch = 0;
  int nx = 0;
  int ny = 0;

  int size() const { return nx * ny; }
  int index(int i, int j) const { return j * nx + i; }
  Vec2 point(int i, int j) const {
    return Vec2(origin.x() + i * pitch, origin.y() + j * pitch);
  }
  Vec2 center() const {
    return Vec2(origin.x() + 0.5 * (nx - 1) * pitch,
                origin.y() + 0.5 * (ny - 1) * pitch);
  }
  double extent_x() const { return (nx - 1) * pitch; }
  double extent_y() const { return (ny - 1) * pitch; }
  /// True iff p lies within the node bounding box (inclusive).
  bool contains(const Vec2& p) const;
  /// All nodes in storage order (i fastest, j outer).
  std::vector<Vec2> nodes() const;
  void validate() const;

  bool operator==(const DetectorGrid&) const = default;
};

/// Integration measure of one grid cell: pitch^2 for 2D grids, pitch for
/// single-row (1D) grids.
double cell_measure(const DetectorGrid& grid);

enum class SourceShape { disk, rectangle, bitmap };

/// Thermal source description. Emitters are discretized on a fixed square
/// lattice (multiples of emitter_pitch about the source center) clipped to
/// the shape; a lattice point belongs to the source iff it lies strictly
/// inside. Bitmap sources emit from their grid nodes with the stored
/// intensity.
struct SourceSpec {
  SourceShape shape = SourceShape::disk;
  double diameter = 0;  // disk [m]
  double width = 0;     // rectangle [m]
  double height = 0;    // rectangle [m]
  DetectorGrid bitmap_grid;
  ArrayXd bitmap;  // emission intensity per bitmap node, >= 0
  double emitter_pitch = 0;  // [m]; bitmap sources use their grid pitch

  /// Smallest transverse extent of the emitting region.
  double min_dimension() const;
  /// Strict interior test for disk/rectangle shapes.
  bool contains(const Vec2& p) const;
  void validate() const;
};

SourceSpec disk_source(double diameter, double emitter_pitch);
SourceSpec rectangle_source(double width, double height, double emitter_pitch);
SourceSpec bitmap_source(const DetectorGrid& grid, ArrayXd intensity);

/// Amplitude transmission |T| sampled on an object-plane grid. Image
/// formulas weight by |T|^2.
struct TransmissionMask {
  DetectorGrid grid;
  ArrayXd values;  // in [0, 1]

  int support_count() const;
  std::vector<int> support_indices() const;
  void validate() const;
};

struct ComplexField {
  DetectorGrid grid;
  ArrayXcd values;
};

/// The four probability amplitudes of one two-particle coincidence:
/// particle alpha in {a, b} reaching detector j in {1, 2}.
struct AmplitudePair {
  Complex a1, a2, b1, b2;
};

/// Normalized g2 over scan coordinates. std_error is the per-point standard
/// error for Monte Carlo maps and zero for analytic ones.
struct CorrelationMap {
  DetectorGrid scan;
  ArrayXd values;
  Statistics kind = Statistics::boson;
  ArrayXd std_error;
};

/// Reconstructed ghost image g2(rho1). baseline is the background level
/// (1 for normalized Monte Carlo images, the |T|^2 integral for analytic
/// quadrature output, c1 for the delta-limit map).
struct GhostImage {
  DetectorGrid scan;
  ArrayXd values;
  Statistics kind = Statistics::fermion;
  double baseline = 0;
  ArrayXd std_error;
};

/// Binary mask of two unit-transmission disks of the given diameter centered
/// at (+-separation/2, 0) relative to the grid center. A pixel belongs to a
/// disk iff its center lies strictly inside.
TransmissionMask make_double_pinhole_mask(const DetectorGrid& grid,
                                          double diameter, double separation);

/// Wraps samples verbatim after validating range and length.
TransmissionMask make_mask_from_bitmap(const DetectorGrid& grid,
                                       const ArrayXd& samples);

}  // namespace gi
