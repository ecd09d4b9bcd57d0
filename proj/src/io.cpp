// SPDX-License-Identifier: Apache-2.0

#include "gi/io.hpp"

#include "gi/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <vector>

namespace fs = std::filesystem;

namespace gi {

namespace {

constexpr const char* kVersion = "1.0.0";

const std::set<std::string> kKnownSections = {
    "run",  "geometry", "source",   "scan", "hbt",
    "mask", "ghost",    "analytic", "fit",  "section"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

struct IniEntry {
  std::string section;
  std::string key;
  std::string value;
  int line = 0;
  mutable bool used = false;
};

struct IniDoc {
  std::vector<IniEntry> entries;
  std::vector<std::string> sections;  // in order of first appearance
};

IniDoc parse_ini(const std::string& text) {
  IniDoc doc;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  std::set<std::pair<std::string, std::string>> seen;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": empty section name");
      if (std::find(doc.sections.begin(), doc.sections.end(), section) ==
          doc.sections.end())
        doc.sections.push_back(section);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value (got '" + line + "')");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": empty key name");
    if (section.empty())
      throw ConfigError("config line " + std::to_string(line_no) + ": key '" +
                        key + "' outside any [section]");
    if (!seen.insert({section, key}).second)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": duplicate key " + section + "." + key);
    doc.entries.push_back({section, key, value, line_no, false});
  }
  return doc;
}

/// Strict schema accessor: every read marks its entry used; finish() rejects
/// anything left over.
class ConfigReader {
 public:
  explicit ConfigReader(IniDoc doc) : doc_(std::move(doc)) {}

  bool has(const std::string& section, const std::string& key) const {
    return find(section, key) != nullptr;
  }

  std::string get_string(const std::string& section, const std::string& key) {
    const IniEntry* e = find(section, key);
    if (!e)
      throw ConfigError("missing required key " + section + "." + key);
    e->used = true;
    used_sections_.insert(section);
    return e->value;
  }

  std::string get_string_or(const std::string& section, const std::string& key,
                            const std::string& fallback) {
    return has(section, key) ? get_string(section, key) : fallback;
  }

  double get_double(const std::string& section, const std::string& key) {
    return parse_double(section, key, get_string(section, key));
  }

  double get_double_or(const std::string& section, const std::string& key,
                       double fallback) {
    return has(section, key) ? get_double(section, key) : fallback;
  }

  std::uint64_t get_u64(const std::string& section, const std::string& key) {
    const std::string s = get_string(section, key);
    errno = 0;
    char* end = nullptr;
    if (!s.empty() && s[0] == '-')
      throw ConfigError("malformed unsigned integer for " + section + "." +
                        key + " (got '" + s + "')");
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (errno != 0 || end != s.c_str() + s.size() || s.empty())
      throw ConfigError("malformed unsigned integer for " + section + "." +
                        key + " (got '" + s + "')");
    return v;
  }

  std::uint64_t get_u64_or(const std::string& section, const std::string& key,
                           std::uint64_t fallback) {
    return has(section, key) ? get_u64(section, key) : fallback;
  }

  int get_int(const std::string& section, const std::string& key) {
    const std::uint64_t v = get_u64(section, key);
    if (v > static_cast<std::uint64_t>(std::numeric_limits<int>::max()))
      throw ConfigError(section + "." + key + " is too large");
    return static_cast<int>(v);
  }

  bool get_bool_or(const std::string& section, const std::string& key,
                   bool fallback) {
    if (!has(section, key)) return fallback;
    const std::string s = get_string(section, key);
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("malformed boolean for " + section + "." + key +
                      " (got '" + s + "', expected true|false)");
  }

  void finish(const std::string& command) const {
    for (const IniEntry& e : doc_.entries) {
      if (e.used) continue;
      if (!kKnownSections.count(e.section))
        throw ConfigError("unknown section [" + e.section + "] at line " +
                          std::to_string(e.line));
      if (!used_sections_.count(e.section))
        throw ConfigError("section [" + e.section +
                          "] is not used by command '" + command + "'");
      throw ConfigError("unknown key '" + e.key + "' in section [" +
                        e.section + "] at line " + std::to_string(e.line));
    }
  }

 private:
  const IniEntry* find(const std::string& section,
                       const std::string& key) const {
    for (const IniEntry& e : doc_.entries)
      if (e.section == section && e.key == key) return &e;
    return nullptr;
  }

  double parse_double(const std::string& section, const std::string& key,
                      const std::string& s) const {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (errno != 0 || end != s.c_str() + s.size() || s.empty() ||
        !std::isfinite(v))
      throw ConfigError("malformed number for " + section + "." + key +
                        " (got '" + s + "')");
    return v;
  }

  IniDoc doc_;
  std::set<std::string> used_sections_;
};

Command command_from_string(const std::string& s) {
  if (s == "hbt_scan") return Command::hbt_scan;
  if (s == "ghost_image") return Command::ghost_image;
  if (s == "analytic") return Command::analytic;
  if (s == "fit") return Command::fit;
  if (s == "section") return Command::section;
  throw ConfigError(
      "unknown command '" + s +
      "' (expected hbt_scan|ghost_image|analytic|fit|section)");
}

Geometry read_geometry(ConfigReader& r) {
  Geometry g;
  g.wavelength = r.get_double("geometry", "wavelength");
  g.dist_reference = r.get_double("geometry", "dist_reference");
  g.dist_object = r.get_double("geometry", "dist_object");
  g.validate();
  return g;
}

SourceSpec read_source(ConfigReader& r) {
  const std::string shape = r.get_string("source", "shape");
  if (shape == "disk")
    return disk_source(r.get_double("source", "diameter"),
                       r.get_double("source", "emitter_pitch"));
  if (shape == "rectangle")
    return rectangle_source(r.get_double("source", "width"),
                            r.get_double("source", "height"),
                            r.get_double("source", "emitter_pitch"));
  if (shape == "bitmap") {
    const MapCsv csv = read_map_csv(r.get_string("source", "file"));
    if (csv.is_profile)
      throw ConfigError("source.file must be a map CSV with a grid header");
    return bitmap_source(csv.grid, csv.values);
  }
  throw ConfigError("unknown source.shape '" + shape +
                    "' (expected disk|rectangle|bitmap)");
}

int count_from_span(double lo, double hi, double step, const char* what) {
  if (!(step > 0 && std::isfinite(step)))
    throw ConfigError(std::string(what) + ": step/pitch must be positive");
  if (!(hi >= lo))
    throw ConfigError(std::string(what) + ": max must be >= min");
  return static_cast<int>(std::llround((hi - lo) / step)) + 1;
}

DetectorGrid read_scan(ConfigReader& r, const std::string& sec) {
  DetectorGrid g;
  const double x_min = r.get_double(sec, "x_min");
  const double x_max = r.get_double(sec, "x_max");
  g.pitch = r.get_double(sec, "step");
  g.nx = count_from_span(x_min, x_max, g.pitch, sec.c_str());
  if (r.has(sec, "y_min") || r.has(sec, "y_max")) {
    const double y_min = r.get_double(sec, "y_min");
    const double y_max = r.get_double(sec, "y_max");
    g.ny = count_from_span(y_min, y_max, g.pitch, sec.c_str());
    g.origin = Vec2(x_min, y_min);
  } else {
    g.ny = 1;
    g.origin = Vec2(x_min, r.get_double_or(sec, "y", 0.0));
  }
  g.validate();
  return g;
}

TransmissionMask read_mask(ConfigReader& r) {
  const std::string kind = r.get_string("mask", "kind");
  if (kind == "double_pinhole") {
    DetectorGrid g;
    const double x_min = r.get_double("mask", "x_min");
    const double x_max = r.get_double("mask", "x_max");
    const double y_min = r.get_double("mask", "y_min");
    const double y_max = r.get_double("mask", "y_max");
    g.pitch = r.get_double("mask", "pitch");
    g.nx = count_from_span(x_min, x_max, g.pitch, "mask");
    g.ny = count_from_span(y_min, y_max, g.pitch, "mask");
    g.origin = Vec2(x_min, y_min);
    g.validate();
    return make_double_pinhole_mask(g,
                                    r.get_double("mask", "pinhole_diameter"),
                                    r.get_double("mask", "pinhole_separation"));
  }
  if (kind == "bitmap_file") {
    const MapCsv csv = read_map_csv(r.get_string("mask", "file"));
    if (csv.is_profile)
      throw ConfigError("mask.file must be a map CSV with a grid header");
    return make_mask_from_bitmap(csv.grid, csv.values);
  }
  throw ConfigError("unknown mask.kind '" + kind +
                    "' (expected double_pinhole|bitmap_file)");
}

}  // namespace

const char* to_string(Command cmd) {
  switch (cmd) {
    case Command::hbt_scan: return "hbt_scan";
    case Command::ghost_image: return "ghost_image";
    case Command::analytic: return "analytic";
    case Command::fit: return "fit";
    case Command::section: return "section";
  }
  return "?";
}

RunConfig parse_config(const std::string& text) {
  ConfigReader r(parse_ini(text));
  RunConfig rc;
  rc.command = command_from_string(r.get_string("run", "command"));
  rc.output_dir = r.get_string_or("run", "output_dir", ".");
  rc.master_seed = r.get_u64_or("run", "master_seed", 0);
  rc.workers = static_cast<unsigned>(r.get_u64_or("run", "workers", 0));

  switch (rc.command) {
    case Command::hbt_scan: {
      HbtScanConfig c;
      c.geometry = read_geometry(r);
      c.source = read_source(r);
      c.scan = read_scan(r, "scan");
      c.estimator = estimator_from_string(r.get_string("hbt", "estimator"));
      c.ensemble_size = r.get_u64("hbt", "ensemble");
      c.fixed_point = Vec2(r.get_double_or("hbt", "fixed_x", 0.0),
                           r.get_double_or("hbt", "fixed_y", 0.0));
      c.seed = rc.master_seed;
      c.validate();
      rc.hbt = std::move(c);
      break;
    }
    case Command::ghost_image: {
      GhostConfig c;
      c.geometry = read_geometry(r);
      c.source = read_source(r);
      c.mask = read_mask(r);
      c.reference_scan = read_scan(r, "scan");
      c.estimator = estimator_from_string(r.get_string("ghost", "estimator"));
      c.ensemble_size = r.get_u64("ghost", "ensemble");
      c.seed = rc.master_seed;
      c.validate();
      rc.ghost = std::move(c);
      break;
    }
    case Command::analytic: {
      AnalyticConfig c;
      const std::string mode = r.get_string("analytic", "mode");
      const Geometry geom = read_geometry(r);
      if (!geom.balanced())
        throw ConfigError(
            "analytic: geometry must be balanced (l1 == l2); the closed-form "
            "kernels assume equal distances");
      c.kind = statistics_from_string(
          r.get_string_or("analytic", "kind", "fermion"));
      c.params.wavelength = geom.wavelength;
      c.params.distance = geom.dist_object;
      if (mode == "g2_profile" || mode == "ghost_image") {
        c.params.source_extent = r.get_double("analytic", "source_extent");
        const std::string dim =
            r.get_string_or("analytic", "dimensionality", "two_d");
        if (dim == "one_d")
          c.params.dim = Dimensionality::one_d;
        else if (dim == "two_d")
          c.params.dim = Dimensionality::two_d;
        else
          throw ConfigError("unknown analytic.dimensionality '" + dim +
                            "' (expected one_d|two_d)");
        c.params.validate();
      }
      if (mode == "g2_profile") {
        c.mode = AnalyticMode::g2_profile;
        c.scan = read_scan(r, "scan");
      } else if (mode == "ghost_image") {
        c.mode = AnalyticMode::ghost_image;
        c.mask = read_mask(r);
        c.scan = read_scan(r, "scan");
      } else if (mode == "delta_limit") {
        c.mode = AnalyticMode::delta_limit;
        c.mask = read_mask(r);
      } else {
        throw ConfigError("unknown analytic.mode '" + mode +
                          "' (expected g2_profile|ghost_image|delta_limit)");
      }
      rc.analytic = std::move(c);
      break;
    }
    case Command::fit: {
      FitConfig c;
      c.input = r.get_string("fit", "input");
      const std::string model = r.get_string("fit", "model");
      if (model == "sinc2_dip")
        c.model = ModelKind::sinc2_dip;
      else if (model == "sinc2_peak")
        c.model = ModelKind::sinc2_peak;
      else if (model == "gaussian_dips")
        c.model = ModelKind::gaussian_dips;
      else
        throw ConfigError("unknown fit.model '" + model +
                          "' (expected sinc2_dip|sinc2_peak|gaussian_dips)");
      c.n_dips = c.model == ModelKind::gaussian_dips
                     ? r.get_int("fit", "dips")
                     : 1;
      if (c.n_dips < 1) throw ConfigError("fit.dips must be >= 1");
      c.fix_baseline = r.get_bool_or("fit", "fix_baseline", false);
      if (c.fix_baseline) c.baseline = r.get_double("fit", "baseline");
      if (r.has("fit", "init")) {
        const std::string list = r.get_string("fit", "init");
        std::vector<double> vals;
        std::istringstream ss(list);
        std::string item;
        while (std::getline(ss, item, ',')) {
          errno = 0;
          char* end = nullptr;
          const std::string t = trim(item);
          const double v = std::strtod(t.c_str(), &end);
          if (errno != 0 || t.empty() || end != t.c_str() + t.size())
            throw ConfigError("malformed number in fit.init: '" + item + "'");
          vals.push_back(v);
        }
        Eigen::VectorXd init(static_cast<Eigen::Index>(vals.size()));
        for (std::size_t i = 0; i < vals.size(); ++i)
          init[static_cast<Eigen::Index>(i)] = vals[i];
        c.init = std::move(init);
      }
      rc.fit = std::move(c);
      break;
    }
    case Command::section: {
      SectionConfig c;
      c.input = r.get_string("section", "input");
      c.start = Vec2(r.get_double("section", "start_x"),
                     r.get_double("section", "start_y"));
      c.end = Vec2(r.get_double("section", "end_x"),
                   r.get_double("section", "end_y"));
      c.samples = r.get_int("section", "samples");
      if (c.samples < 2) throw ConfigError("section.samples must be >= 2");
      rc.section = std::move(c);
      break;
    }
  }
  r.finish(to_string(rc.command));
  return rc;
}

RunConfig parse_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config(os.str());
}

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

void emit_grid_line(std::ostream& os, const DetectorGrid& g) {
  os << "# grid origin_x=" << format_g17(g.origin.x())
     << " origin_y=" << format_g17(g.origin.y())
     << " pitch=" << format_g17(g.pitch) << " nx=" << g.nx << " ny=" << g.ny
     << "\n";
}

void emit_scan_section(std::ostream& os, const char* name,
                       const DetectorGrid& g) {
  os << "[" << name << "]\n";
  os << "x_min = " << format_g17(g.origin.x()) << "\n";
  os << "x_max = " << format_g17(g.origin.x() + g.extent_x()) << "\n";
  os << "step = " << format_g17(g.pitch) << "\n";
  if (g.ny == 1) {
    os << "y = " << format_g17(g.origin.y()) << "\n";
  } else {
    os << "y_min = " << format_g17(g.origin.y()) << "\n";
    os << "y_max = " << format_g17(g.origin.y() + g.extent_y()) << "\n";
  }
}

void emit_source_section(std::ostream& os, const SourceSpec& s) {
  os << "[source]\n";
  switch (s.shape) {
    case SourceShape::disk:
      os << "shape = disk\n";
      os << "diameter = " << format_g17(s.diameter) << "\n";
      os << "emitter_pitch = " << format_g17(s.emitter_pitch) << "\n";
      break;
    case SourceShape::rectangle:
      os << "shape = rectangle\n";
      os << "width = " << format_g17(s.width) << "\n";
      os << "height = " << format_g17(s.height) << "\n";
      os << "emitter_pitch = " << format_g17(s.emitter_pitch) << "\n";
      break;
    case SourceShape::bitmap:
      os << "shape = bitmap\n";
      os << "# bitmap grid: nx=" << s.bitmap_grid.nx
         << " ny=" << s.bitmap_grid.ny << "\n";
      break;
  }
}

void emit_geometry_section(std::ostream& os, const Geometry& g) {
  os << "[geometry]\n";
  os << "wavelength = " << format_g17(g.wavelength) << "\n";
  os << "dist_reference = " << format_g17(g.dist_reference) << "\n";
  os << "dist_object = " << format_g17(g.dist_object) << "\n";
}

}  // namespace

std::string canonical_config(const RunConfig& config) {
  std::ostringstream os;
  os << "[run]\n";
  os << "command = " << to_string(config.command) << "\n";
  os << "output_dir = " << config.output_dir.string() << "\n";
  os << "master_seed = " << config.master_seed << "\n";
  os << "workers = " << config.workers << "\n";
  switch (config.command) {
    case Command::hbt_scan: {
      const HbtScanConfig& c = *config.hbt;
      emit_geometry_section(os, c.geometry);
      emit_source_section(os, c.source);
      emit_scan_section(os, "scan", c.scan);
      os << "[hbt]\n";
      os << "estimator = " << to_string(c.estimator) << "\n";
      os << "ensemble = " << c.ensemble_size << "\n";
      os << "fixed_x = " << format_g17(c.fixed_point.x()) << "\n";
      os << "fixed_y = " << format_g17(c.fixed_point.y()) << "\n";
      break;
    }
    case Command::ghost_image: {
      const GhostConfig& c = *config.ghost;
      emit_geometry_section(os, c.geometry);
      emit_source_section(os, c.source);
      emit_scan_section(os, "scan", c.reference_scan);
      os << "[mask]\n";
      os << "# support cells = " << c.mask.support_count() << "\n";
      os << "pitch = " << format_g17(c.mask.grid.pitch) << "\n";
      os << "[ghost]\n";
      os << "estimator = " << to_string(c.estimator) << "\n";
      os << "ensemble = " << c.ensemble_size << "\n";
      break;
    }
    case Command::analytic: {
      const AnalyticConfig& c = *config.analytic;
      os << "[analytic]\n";
      os << "mode = "
         << (c.mode == AnalyticMode::g2_profile
                 ? "g2_profile"
                 : c.mode == AnalyticMode::ghost_image ? "ghost_image"
                                                       : "delta_limit")
         << "\n";
      os << "kind = " << to_string(c.kind) << "\n";
      if (c.mode != AnalyticMode::delta_limit) {
        os << "source_extent = " << format_g17(c.params.source_extent) << "\n";
        os << "dimensionality = "
           << (c.params.dim == Dimensionality::one_d ? "one_d" : "two_d")
           << "\n";
      }
      os << "wavelength = " << format_g17(c.params.wavelength) << "\n";
      os << "distance = " << format_g17(c.params.distance) << "\n";
      break;
    }
    case Command::fit: {
      const FitConfig& c = *config.fit;
      os << "[fit]\n";
      os << "input = " << c.input.string() << "\n";
      os << "model = "
         << (c.model == ModelKind::sinc2_dip
                 ? "sinc2_dip"
                 : c.model == ModelKind::sinc2_peak ? "sinc2_peak"
                                                    : "gaussian_dips")
         << "\n";
      os << "dips = " << c.n_dips << "\n";
      os << "fix_baseline = " << (c.fix_baseline ? "true" : "false") << "\n";
      break;
    }
    case Command::section: {
      const SectionConfig& c = *config.section;
      os << "[section]\n";
      os << "input = " << c.input.string() << "\n";
      os << "start_x = " << format_g17(c.start.x()) << "\n";
      os << "start_y = " << format_g17(c.start.y()) << "\n";
      os << "end_x = " << format_g17(c.end.x()) << "\n";
      os << "end_y = " << format_g17(c.end.y()) << "\n";
      os << "samples = " << c.samples << "\n";
      break;
    }
  }
  return os.str();
}

void write_map_csv(const DetectorGrid& grid, const ArrayXd& values,
                   const ArrayXd* std_error, const CsvMeta& meta,
                   const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# ghostsim map v1\n";
  if (!meta.kind.empty()) out << "# kind=" << meta.kind << "\n";
  out << "# seed=" << meta.seed << "\n";
  out << "# ensemble=" << meta.ensemble << "\n";
  if (meta.baseline) out << "# baseline=" << format_g17(*meta.baseline) << "\n";
  emit_grid_line(out, grid);
  const bool two_d = grid.ny > 1;
  out << (two_d ? "x_m,y_m,g2,stderr\n" : "x_m,g2,stderr\n");
  for (int j = 0; j < grid.ny; ++j)
    for (int i = 0; i < grid.nx; ++i) {
      const Vec2 p = grid.point(i, j);
      const int k = grid.index(i, j);
      out << format_g17(p.x()) << ',';
      if (two_d) out << format_g17(p.y()) << ',';
      out << format_g17(values[k]) << ','
          << format_g17(std_error ? (*std_error)[k] : 0.0) << "\n";
    }
  if (!out) throw IoError("write failed for " + path.string());
}

void write_correlation_csv(const CorrelationMap& map, std::uint64_t seed,
                           std::uint64_t ensemble, const fs::path& path) {
  CsvMeta meta{to_string(map.kind), seed, ensemble, std::nullopt};
  write_map_csv(map.scan, map.values, &map.std_error, meta, path);
}

void write_ghost_csv(const GhostImage& image, std::uint64_t seed,
                     std::uint64_t ensemble, const fs::path& path) {
  CsvMeta meta{to_string(image.kind), seed, ensemble, image.baseline};
  write_map_csv(image.scan, image.values, &image.std_error, meta, path);
}

void write_profile_csv(const ArrayXd& xs, const ArrayXd& ys,
                       const CsvMeta& meta, const fs::path& path) {
  if (xs.size() != ys.size())
    throw ShapeError("write_profile_csv: xs and ys lengths differ");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# ghostsim profile v1\n";
  if (!meta.kind.empty()) out << "# kind=" << meta.kind << "\n";
  out << "# seed=" << meta.seed << "\n";
  out << "# ensemble=" << meta.ensemble << "\n";
  out << "x_m,value\n";
  for (Eigen::Index k = 0; k < xs.size(); ++k)
    out << format_g17(xs[k]) << ',' << format_g17(ys[k]) << "\n";
  if (!out) throw IoError("write failed for " + path.string());
}

namespace {

std::map<std::string, std::string> parse_kv_line(const std::string& line) {
  std::map<std::string, std::string> kv;
  std::istringstream ss(line);
  std::string token;
  while (ss >> token) {
    const auto eq = token.find('=');
    if (eq != std::string::npos)
      kv[token.substr(0, eq)] = token.substr(eq + 1);
  }
  return kv;
}

double parse_csv_double(const std::string& s, const fs::path& path) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (errno != 0 || s.empty() || end != s.c_str() + s.size())
    throw IoError("malformed number '" + s + "' in " + path.string());
  return v;
}

}  // namespace

MapCsv read_map_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty file " + path.string());

  MapCsv csv;
  if (line == "# ghostsim profile v1")
    csv.is_profile = true;
  else if (line != "# ghostsim map v1")
    throw IoError(path.string() + " is not a ghostsim CSV (bad signature)");

  bool have_grid = false;
  int n_columns = 0;
  std::vector<double> xs, ys_col, values, errors;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# kind=", 0) == 0) {
        csv.meta.kind = line.substr(7);
      } else if (line.rfind("# seed=", 0) == 0) {
        csv.meta.seed = std::strtoull(line.c_str() + 7, nullptr, 10);
      } else if (line.rfind("# ensemble=", 0) == 0) {
        csv.meta.ensemble = std::strtoull(line.c_str() + 11, nullptr, 10);
      } else if (line.rfind("# baseline=", 0) == 0) {
        csv.meta.baseline = parse_csv_double(line.substr(11), path);
      } else if (line.rfind("# grid ", 0) == 0) {
        auto kv = parse_kv_line(line.substr(7));
        csv.grid.origin =
            Vec2(parse_csv_double(kv.at("origin_x"), path),
                 parse_csv_double(kv.at("origin_y"), path));
        csv.grid.pitch = parse_csv_double(kv.at("pitch"), path);
        csv.grid.nx = static_cast<int>(std::stol(kv.at("nx")));
        csv.grid.ny = static_cast<int>(std::stol(kv.at("ny")));
        have_grid = true;
      }
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(line[0]))) {
      n_columns = 1 + static_cast<int>(std::count(line.begin(), line.end(), ','));
      continue;  // column header
    }
    std::vector<std::string> fields;
    std::istringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (static_cast<int>(fields.size()) != n_columns || n_columns == 0)
      throw IoError("inconsistent column count in " + path.string());
    if (csv.is_profile) {
      xs.push_back(parse_csv_double(fields[0], path));
      values.push_back(parse_csv_double(fields[1], path));
    } else if (n_columns == 3) {
      xs.push_back(parse_csv_double(fields[0], path));
      values.push_back(parse_csv_double(fields[1], path));
      errors.push_back(parse_csv_double(fields[2], path));
    } else if (n_columns == 4) {
      xs.push_back(parse_csv_double(fields[0], path));
      ys_col.push_back(parse_csv_double(fields[1], path));
      values.push_back(parse_csv_double(fields[2], path));
      errors.push_back(parse_csv_double(fields[3], path));
    } else {
      throw IoError("unexpected column layout in " + path.string());
    }
  }

  auto to_array = [](const std::vector<double>& v) {
    return Eigen::Map<const ArrayXd>(v.data(),
                                     static_cast<Eigen::Index>(v.size()))
        .eval();
  };
  csv.xs = to_array(xs);
  csv.values = to_array(values);
  csv.std_error = to_array(errors);
  if (!csv.is_profile) {
    if (!have_grid)
      throw IoError(path.string() + " is missing the '# grid' header");
    csv.grid.validate();
    if (csv.values.size() != csv.grid.size())
      throw IoError(path.string() + ": row count does not match grid size");
  }
  return csv;
}

void write_image_pgm(const GhostImage& image, const fs::path& path) {
  const DetectorGrid& g = image.scan;
  double lo = image.values.minCoeff();
  double hi = image.values.maxCoeff();
  const bool constant = !(hi > lo);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << g.nx << " " << g.ny << "\n65535\n";
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      unsigned v16 = 32768;
      if (!constant) {
        const double v = image.values[g.index(i, j)];
        const double t = (v - lo) / (hi - lo) * 65535.0;
        v16 = static_cast<unsigned>(
            std::clamp(std::llround(t), 0ll, 65535ll));
      }
      const unsigned char bytes[2] = {static_cast<unsigned char>(v16 >> 8),
                                      static_cast<unsigned char>(v16 & 0xFF)};
      out.write(reinterpret_cast<const char*>(bytes), 2);
    }
  if (!out) throw IoError("write failed for " + path.string());

  std::ofstream side(path.string() + ".txt", std::ios::binary);
  if (!side) throw IoError("cannot write " + path.string() + ".txt");
  side << "# ghostsim pgm sidecar v1\n";
  side << "kind=" << to_string(image.kind) << "\n";
  side << "baseline=" << format_g17(image.baseline) << "\n";
  side << "min=" << format_g17(lo) << "\n";
  side << "max=" << format_g17(hi) << "\n";
  side << "constant=" << (constant ? 1 : 0) << "\n";
  side << "grid origin_x=" << format_g17(g.origin.x())
       << " origin_y=" << format_g17(g.origin.y())
       << " pitch=" << format_g17(g.pitch) << " nx=" << g.nx << " ny=" << g.ny
       << "\n";
  side << "mapping=v16 = round((v - min)/(max - min) * 65535), rows j=0 "
          "first\n";
  if (!side) throw IoError("write failed for " + path.string() + ".txt");
}

std::string file_checksum(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!in) break;
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(h));
  return hex;
}

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json model_to_json(const FitResult& result) {
  const ProfileModel& m = result.model;
  ordered_json j;
  j["converged"] = result.converged;
  j["iterations"] = result.iterations;
  j["residual_rms"] = result.residual_rms;
  if (m.kind == ModelKind::gaussian_dips) {
    j["model"] = "gaussian_dips";
    j["baseline"] = m.params[0];
    j["baseline_stderr"] = result.param_stderr[0];
    ordered_json dips = ordered_json::array();
    for (int d = 0; d < m.n_dips; ++d) {
      ordered_json dip;
      dip["amplitude"] = m.params[1 + 3 * d];
      dip["center_m"] = m.params[2 + 3 * d];
      dip["sigma_m"] = m.params[3 + 3 * d];
      dip["amplitude_stderr"] = result.param_stderr[1 + 3 * d];
      dip["center_stderr_m"] = result.param_stderr[2 + 3 * d];
      dip["sigma_stderr_m"] = result.param_stderr[3 + 3 * d];
      dips.push_back(dip);
    }
    j["dips"] = dips;
    if (result.converged && m.n_dips == 1) j["fwhm_m"] = fwhm(result);
    if (result.converged && m.n_dips == 2) {
      const Separation sep = dip_separation(result);
      j["separation_m"] = sep.value;
      j["separation_stderr_m"] = sep.std_error;
    }
  } else {
    j["model"] =
        m.kind == ModelKind::sinc2_dip ? "sinc2_dip" : "sinc2_peak";
    j["baseline"] = m.params[0];
    j["amplitude"] = m.params[1];
    j["center_m"] = m.params[2];
    j["w_m"] = m.params[3];
    j["baseline_stderr"] = result.param_stderr[0];
    j["amplitude_stderr"] = result.param_stderr[1];
    j["center_stderr_m"] = result.param_stderr[2];
    j["w_stderr_m"] = result.param_stderr[3];
    if (result.converged) j["fwhm_m"] = fwhm(result);
  }
  return j;
}

struct OutputTracker {
  fs::path dir;
  std::vector<fs::path> files;

  fs::path target(const std::string& name) {
    files.push_back(dir / name);
    return files.back();
  }
  void discard_all() {
    std::error_code ec;
    for (const fs::path& p : files) fs::remove(p, ec);
  }
};

void write_json(const ordered_json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed for " + path.string());
}

void run_hbt(const RunConfig& config, unsigned workers, OutputTracker& out) {
  const HbtScanConfig& c = *config.hbt;
  CorrelationMap boson, fermion, classical;
  if (c.estimator == Estimator::intensity) {
    IntensityScanResult res = hbt_scan_intensity(c, workers);
    fermion = synthesize_fermion(res.boson, res.classical);
    boson = std::move(res.boson);
    classical = std::move(res.classical);
  } else {
    HbtScanResult res = hbt_scan_amplitude_pair(c, workers);
    boson = std::move(res.boson);
    fermion = std::move(res.fermion);
    classical = std::move(res.classical);
  }
  write_correlation_csv(boson, c.seed, c.ensemble_size,
                        out.target("hbt_boson.csv"));
  write_correlation_csv(fermion, c.seed, c.ensemble_size,
                        out.target("hbt_fermion.csv"));
  write_correlation_csv(classical, c.seed, c.ensemble_size,
                        out.target("hbt_classical.csv"));
}

void run_ghost(const RunConfig& config, unsigned workers, OutputTracker& out) {
  const GhostConfig& c = *config.ghost;
  const GhostResult res = run_ghost_imaging(c, workers);
  const std::array<const GhostImage*, 3> images = {&res.boson, &res.fermion,
                                                   &res.classical};
  for (const GhostImage* img : images) {
    const std::string stem = std::string("ghost_") + to_string(img->kind);
    write_ghost_csv(*img, c.seed, c.ensemble_size, out.target(stem + ".csv"));
    const fs::path pgm = out.target(stem + ".pgm");
    out.files.push_back(out.dir / (stem + ".pgm.txt"));  // sidecar
    write_image_pgm(*img, pgm);
  }

  // Dip-separation summary for single-row scans.
  if (c.reference_scan.ny == 1 && c.reference_scan.nx >= 11) {
    std::vector<double> xs(c.reference_scan.nx), ys(c.reference_scan.nx);
    for (int i = 0; i < c.reference_scan.nx; ++i) {
      xs[static_cast<std::size_t>(i)] = c.reference_scan.point(i, 0).x();
      ys[static_cast<std::size_t>(i)] = res.fermion.values[i];
    }
    const FitResult fit =
        fit_profile(xs, ys, ModelKind::gaussian_dips, 2, {});
    write_json(model_to_json(fit), out.target("ghost_fit.json"));
  }
}

void run_analytic(const RunConfig& config, unsigned workers,
                  OutputTracker& out) {
  const AnalyticConfig& c = *config.analytic;
  if (c.mode == AnalyticMode::g2_profile) {
    const DetectorGrid& scan = *c.scan;
    ArrayXd values(scan.size());
    for (int j = 0; j < scan.ny; ++j)
      for (int i = 0; i < scan.nx; ++i)
        values[scan.index(i, j)] =
            g2_analytic(scan.point(i, j).norm(), c.kind, c.params);
    CsvMeta meta{to_string(c.kind), config.master_seed, 0, std::nullopt};
    write_map_csv(scan, values, nullptr, meta, out.target("analytic_g2.csv"));
    return;
  }
  if (c.mode == AnalyticMode::ghost_image) {
    const GhostImage img =
        ghost_image_analytic(*c.mask, c.kind, c.params, *c.scan, workers);
    write_ghost_csv(img, config.master_seed, 0,
                    out.target("analytic_image.csv"));
    const fs::path pgm = out.target("analytic_image.pgm");
    out.files.push_back(out.dir / "analytic_image.pgm.txt");
    write_image_pgm(img, pgm);
    return;
  }
  const GhostImage img = ghost_image_delta_limit(*c.mask);
  write_ghost_csv(img, config.master_seed, 0, out.target("delta_limit.csv"));
  const fs::path pgm = out.target("delta_limit.pgm");
  out.files.push_back(out.dir / "delta_limit.pgm.txt");
  write_image_pgm(img, pgm);
}

void run_fit(const RunConfig& config, OutputTracker& out) {
  const FitConfig& c = *config.fit;
  const MapCsv csv = read_map_csv(c.input);
  std::vector<double> xs, ys;
  if (csv.is_profile) {
    xs.assign(csv.xs.data(), csv.xs.data() + csv.xs.size());
    ys.assign(csv.values.data(), csv.values.data() + csv.values.size());
  } else {
    if (csv.grid.ny != 1)
      throw DomainError(
          "fit: input must be a 1D profile or single-row map (use the "
          "section command to cut 2D maps first)");
    for (int i = 0; i < csv.grid.nx; ++i) {
      xs.push_back(csv.grid.point(i, 0).x());
      ys.push_back(csv.values[i]);
    }
  }
  FitOptions options;
  options.init = c.init;
  options.fix_baseline = c.fix_baseline;
  options.baseline = c.baseline;
  const FitResult fit = fit_profile(xs, ys, c.model, c.n_dips, options);
  write_json(model_to_json(fit), out.target("fit.json"));

  ArrayXd fit_xs = Eigen::Map<const ArrayXd>(
      xs.data(), static_cast<Eigen::Index>(xs.size()));
  ArrayXd fit_ys(fit_xs.size());
  for (Eigen::Index k = 0; k < fit_xs.size(); ++k)
    fit_ys[k] = fit.model.params.size() > 0 ? fit.model.evaluate(fit_xs[k])
                                            : 0.0;
  CsvMeta meta{csv.meta.kind, csv.meta.seed, csv.meta.ensemble, std::nullopt};
  write_profile_csv(fit_xs, fit_ys, meta, out.target("fit_curve.csv"));
}

void run_section(const RunConfig& config, OutputTracker& out) {
  const SectionConfig& c = *config.section;
  const MapCsv csv = read_map_csv(c.input);
  if (csv.is_profile)
    throw DomainError("section: input must be a map CSV with a grid header");
  const SectionProfile profile =
      extract_section(csv.grid, csv.values, c.start, c.end, c.samples);
  CsvMeta meta{csv.meta.kind, csv.meta.seed, csv.meta.ensemble, std::nullopt};
  write_profile_csv(profile.xs, profile.ys, meta, out.target("section.csv"));
}

}  // namespace

RunManifest run(const RunConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  const unsigned workers = resolve_workers(config.workers);

  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec && !fs::is_directory(config.output_dir))
    throw IoError("cannot create output directory " +
                  config.output_dir.string());

  OutputTracker out;
  out.dir = config.output_dir;
  try {
    switch (config.command) {
      case Command::hbt_scan: run_hbt(config, workers, out); break;
      case Command::ghost_image: run_ghost(config, workers, out); break;
      case Command::analytic: run_analytic(config, workers, out); break;
      case Command::fit: run_fit(config, out); break;
      case Command::section: run_section(config, out); break;
    }
  } catch (...) {
    out.discard_all();
    throw;
  }

  RunManifest manifest;
  manifest.command = to_string(config.command);
  manifest.config_echo = canonical_config(config);
  manifest.version = kVersion;
  manifest.seed = config.master_seed;
  manifest.workers = workers;
  for (const fs::path& p : out.files)
    manifest.output_checksums[p.filename().string()] = file_checksum(p);
  manifest.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  ordered_json j;
  j["artifact"] = "ghostsim";
  j["version"] = manifest.version;
  j["command"] = manifest.command;
  j["seed"] = manifest.seed;
  j["workers"] = manifest.workers;
  j["wall_time_s"] = manifest.wall_time_s;
  j["outputs"] = manifest.output_checksums;
  j["config"] = manifest.config_echo;
  write_json(j, config.output_dir / "manifest.json");
  return manifest;
}

}  // namespace gi
