// SPDX-License-Identifier: Apache-2.0
//
// Configuration parsing, portable serialization, and the run dispatcher.
//
// Configs are flat INI-style documents: [section] headers, key = value
// lines, '#'/';' comments. Lengths are SI meters (plain or scientific
// decimals). The schema is strict: unknown sections or keys, and sections a
// command does not use, are rejected with the offending section.key named.
//
// CSV files carry '#' metadata headers (kind, seed, ensemble, grid) and
// 17-significant-digit decimals, so re-reading and re-serializing a file
// reproduces it byte for byte. Images are additionally written as 16-bit
// big-endian binary PGM with a text sidecar recording the affine value
// mapping, grid geometry, kind and baseline.

#pragma once

#include "gi/core.hpp"
#include "gi/correlators.hpp"
#include "gi/fitting.hpp"
#include "gi/ghost.hpp"
#include "gi/kernels.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace gi {

enum class Command { hbt_scan, ghost_image, analytic, fit, section };

const char* to_string(Command cmd);

enum class AnalyticMode { g2_profile, ghost_image, delta_limit };

struct AnalyticConfig {
  AnalyticMode mode = AnalyticMode::g2_profile;
  Statistics kind = Statistics::fermion;
  KernelParams params;
  std::optional<TransmissionMask> mask;  // image modes
  std::optional<DetectorGrid> scan;      // g2_profile / ghost_image
};

struct FitConfig {
  std::filesystem::path input;
  ModelKind model = ModelKind::sinc2_dip;
  int n_dips = 1;
  bool fix_baseline = false;
  double baseline = 0;
  std::optional<Eigen::VectorXd> init;
};

struct SectionConfig {
  std::filesystem::path input;
  Vec2 start{0.0, 0.0};
  Vec2 end{0.0, 0.0};
  int samples = 2;
};

struct RunConfig {
  Command command = Command::hbt_scan;
  std::optional<HbtScanConfig> hbt;
  std::optional<GhostConfig> ghost;
  std::optional<AnalyticConfig> analytic;
  std::optional<FitConfig> fit;
  std::optional<SectionConfig> section;
  std::filesystem::path output_dir = ".";
  std::uint64_t master_seed = 0;
  unsigned workers = 0;  // 0 = auto
};

/// Parses and fully validates a config document. Every module invariant is
/// checked here with field-precise messages.
RunConfig parse_config(const std::string& text);
RunConfig parse_config_file(const std::filesystem::path& path);

/// Canonical re-serialization of a parsed config (fixed section and key
/// order, 17-significant-digit values). Embedded in the manifest.
std::string canonical_config(const RunConfig& config);

struct RunManifest {
  std::string command;
  std::string config_echo;
  std::string version;
  double wall_time_s = 0;
  std::uint64_t seed = 0;
  unsigned workers = 0;
  std::map<std::string, std::string> output_checksums;  // file -> fnv1a64 hex
};

/// Dispatches the configured pipeline, writes all outputs plus
/// manifest.json into config.output_dir. Partial outputs are removed if the
/// run fails.
RunManifest run(const RunConfig& config);

// --- serialization primitives -------------------------------------------

struct CsvMeta {
  std::string kind;
  std::uint64_t seed = 0;
  std::uint64_t ensemble = 0;
  std::optional<double> baseline;
};

void write_map_csv(const DetectorGrid& grid, const ArrayXd& values,
                   const ArrayXd* std_error, const CsvMeta& meta,
                   const std::filesystem::path& path);
void write_correlation_csv(const CorrelationMap& map, std::uint64_t seed,
                           std::uint64_t ensemble,
                           const std::filesystem::path& path);
void write_ghost_csv(const GhostImage& image, std::uint64_t seed,
                     std::uint64_t ensemble,
                     const std::filesystem::path& path);
void write_profile_csv(const ArrayXd& xs, const ArrayXd& ys,
                       const CsvMeta& meta,
                       const std::filesystem::path& path);

struct MapCsv {
  bool is_profile = false;  // profile files carry no grid header
  DetectorGrid grid;
  ArrayXd xs;  // profile abscissae (profile files only)
  ArrayXd values;
  ArrayXd std_error;
  CsvMeta meta;
};

MapCsv read_map_csv(const std::filesystem::path& path);

/// 16-bit big-endian binary PGM plus a text sidecar (<path>.txt) recording
/// the affine [min, max] -> [0, 65535] mapping, grid, kind and baseline.
/// Constant images map to mid-gray and are flagged in the sidecar.
void write_image_pgm(const GhostImage& image, const std::filesystem::path& path);

/// FNV-1a 64-bit checksum of a file's bytes, as a hex string.
std::string file_checksum(const std::filesystem::path& path);

/// 17-significant-digit decimal formatting (round-trip exact for doubles).
std::string format_g17(double v);

}  // namespace gi
