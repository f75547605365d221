#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "perilayer/study.hpp"

namespace perilayer {

// ---------------------------------------------------------------------------
// Run configuration: sectioned key = value text with a strict schema. Unknown
// keys are rejected with a line diagnostic; physical constraints are
// re-validated after parsing.

struct RunConfig {
  int version = 1;
  StudyConfig study;
  double nearfield_window = 3.0;
  std::string out_dir = "out";

  std::string raw_text;  // exact file contents (hashed into the manifest)
};

namespace configdetail {

struct ParsedFile {
  // section -> key -> (value, line number)
  std::map<std::string, std::map<std::string, std::pair<std::string, int>>> data;
};

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline ParsedFile parse_ini(const std::string& text) {
  ParsedFile out;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw config_error("config line " + std::to_string(lineno) +
                           ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("config line " + std::to_string(lineno) +
                         ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw config_error("config line " + std::to_string(lineno) + ": empty key");
    out.data[section][key] = {value, lineno};
  }
  return out;
}

class SectionReader {
 public:
  SectionReader(const ParsedFile& file, std::string section)
      : section_(std::move(section)) {
    auto it = file.data.find(section_);
    if (it != file.data.end()) entries_ = it->second;
  }

  bool has(const std::string& key) {
    touched_.insert(key);
    return entries_.count(key) > 0;
  }

  std::string get(const std::string& key, const std::string& fallback) {
    touched_.insert(key);
    auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second.first;
  }

  double number(const std::string& key, double fallback) {
    touched_.insert(key);
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    return parse_number(key, it->second.first, it->second.second);
  }

  std::vector<double> numbers(const std::string& key,
                              const std::vector<double>& fallback) {
    touched_.insert(key);
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    std::istringstream is(it->second.first);
    std::vector<double> out;
    std::string tok;
    while (is >> tok) out.push_back(parse_number(key, tok, it->second.second));
    if (out.empty())
      throw config_error("config line " + std::to_string(it->second.second) +
                         ": key '" + key + "' needs at least one value");
    return out;
  }

  void reject_unknown() const {
    for (auto& [key, val] : entries_)
      if (!touched_.count(key))
        throw config_error("config line " + std::to_string(val.second) +
                           ": unknown key '" + key + "' in section [" + section_ +
                           "]");
  }

 private:
  static double parse_number(const std::string& key, const std::string& tok,
                             int lineno) {
    // Accept plain decimals and simple fractions like 2/3.
    const auto slash = tok.find('/');
    try {
      if (slash != std::string::npos) {
        const double num = std::stod(tok.substr(0, slash));
        const double den = std::stod(tok.substr(slash + 1));
        if (den == 0.0) throw std::invalid_argument("zero denominator");
        return num / den;
      }
      size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw config_error("config line " + std::to_string(lineno) + ": key '" +
                         key + "' has a non-numeric value '" + tok + "'");
    }
  }

  std::string section_;
  std::map<std::string, std::pair<std::string, int>> entries_;
  std::set<std::string> touched_;
};

inline uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace configdetail

struct StudyThresholds {
  // Optional acceptance gates checked by the study subcommand (exit code 5).
  std::optional<double> eoc_level0_min;
  std::optional<double> eoc_gap01_min;
  std::optional<double> u20_worsening_max;  // relative error increase allowed
};

inline RunConfig parse_config_text(const std::string& text,
                                   StudyThresholds* thresholds = nullptr) {
  using configdetail::SectionReader;
  RunConfig cfg;
  cfg.raw_text = text;
  const auto file = configdetail::parse_ini(text);
  for (auto& [section, entries] : file.data) {
    (void)entries;
    if (section != "" && section != "domain" && section != "cell" &&
        section != "study" && section != "nearfield" && section != "output")
      throw config_error("config: unknown section [" + section + "]");
  }

  {
    SectionReader top(file, "");
    cfg.version = static_cast<int>(top.number("version", 1));
    if (cfg.version != 1)
      throw config_error("config: unsupported schema version " +
                         std::to_string(cfg.version));
    top.reject_unknown();
  }
  {
    SectionReader dom(file, "domain");
    auto& d = cfg.study.domain;
    d.half_length = dom.number("half_length", d.half_length);
    d.half_length_top = dom.number("half_length_top", d.half_length_top);
    d.height_bottom = dom.number("height_bottom", d.height_bottom);
    d.height_top = dom.number("height_top", d.height_top);
    d.source.center.x = dom.number("source_x", d.source.center.x);
    d.source.center.y = dom.number("source_y", d.source.center.y);
    d.source.radius = dom.number("source_radius", d.source.radius);
    d.source.amplitude = dom.number("source_amplitude", d.source.amplitude);
    dom.reject_unknown();
    d.validate();
  }
  {
    SectionReader cell(file, "cell");
    const std::string hole = cell.get("hole", "disk");
    if (hole == "disk") {
      DiskHole d;
      d.center.x = cell.number("disk_x", 0.5);
      d.center.y = cell.number("disk_y", 0.0);
      d.radius = cell.number("disk_radius", 0.25);
      cfg.study.cell.hole = d;
    } else if (hole == "none") {
      cell.number("disk_x", 0.5);
      cell.number("disk_y", 0.0);
      cell.number("disk_radius", 0.25);
      cfg.study.cell.hole = std::monostate{};
    } else {
      throw config_error("config: [cell] hole must be 'disk' or 'none'");
    }
    const std::string chi = cell.get("chi", "quintic");
    if (chi == "quintic")
      cfg.study.chi_profile.kind = CutoffKind::QuinticSmoothstep;
    else if (chi == "cosine")
      cfg.study.chi_profile.kind = CutoffKind::Cosine;
    else
      throw config_error("config: [cell] chi must be 'quintic' or 'cosine'");
    cfg.study.l_band = cell.number("l_band", cfg.study.l_band);
    cfg.study.band_h = cell.number("band_h", cfg.study.band_h);
    cfg.study.max_order = static_cast<int>(cell.number("max_order", 2));
    cell.reject_unknown();
    try {
      cfg.study.cell.validate();
    } catch (const geometry_error& e) {
      throw config_error(e.what());
    }
  }
  {
    SectionReader study(file, "study");
    cfg.study.deltas = study.numbers("deltas", cfg.study.deltas);
    cfg.study.bulk_h = study.number("bulk_h", cfg.study.bulk_h);
    cfg.study.macro_h = study.number("macro_h", cfg.study.macro_h);
    cfg.study.alpha = study.number("alpha", cfg.study.alpha);
    cfg.study.levels = study.numbers("levels", cfg.study.levels);
    if (thresholds) {
      if (study.has("require_eoc_level0"))
        thresholds->eoc_level0_min = study.number("require_eoc_level0", 0.0);
      if (study.has("require_eoc_gap01"))
        thresholds->eoc_gap01_min = study.number("require_eoc_gap01", 0.0);
      if (study.has("require_u20_worsening_max"))
        thresholds->u20_worsening_max =
            study.number("require_u20_worsening_max", 0.0);
    } else {
      study.number("require_eoc_level0", 0.0);
      study.number("require_eoc_gap01", 0.0);
      study.number("require_u20_worsening_max", 0.0);
    }
    study.reject_unknown();
  }
  {
    SectionReader nf(file, "nearfield");
    cfg.study.sector_r_max = nf.number("r_max", cfg.study.sector_r_max);
    cfg.study.sector_h_near = nf.number("h_near", cfg.study.sector_h_near);
    cfg.nearfield_window = nf.number("window", cfg.nearfield_window);
    nf.reject_unknown();
  }
  {
    SectionReader outp(file, "output");
    cfg.out_dir = outp.get("dir", cfg.out_dir);
    outp.reject_unknown();
  }
  cfg.study.validate();
  return cfg;
}

inline RunConfig load_config(const std::string& path,
                             StudyThresholds* thresholds = nullptr) {
  std::ifstream in(path);
  if (!in) throw config_error("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), thresholds);
}

inline std::string config_hash(const RunConfig& cfg) {
  std::ostringstream os;
  os << std::hex << configdetail::fnv1a(cfg.raw_text);
  return os.str();
}

// ---------------------------------------------------------------------------
// Constants record: key = value text, byte-reproducible.

inline std::string format_constants(const TransmissionConstants& tc,
                                    const std::string& cell_hash) {
  std::ostringstream os;
  os.precision(17);
  os << "schema = perilayer-constants-1\n";
  os << "cell_hash = " << cell_hash << "\n";
  os << "chi = "
     << (tc.diagnostics.chi_kind == CutoffKind::QuinticSmoothstep ? "quintic"
                                                                  : "cosine")
     << "\n";
  os << "l_band = " << tc.diagnostics.l_band << "\n";
  os << "h = " << tc.diagnostics.h << "\n";
  os << "max_order = " << tc.max_order << "\n";
  os << "d_infinity = " << tc.d_infinity << "\n";
  for (int p = 0; p <= tc.max_order; ++p) {
    os << "d_t[" << p << "] = " << tc.d_t[p] << "\n";
    os << "d_n[" << p << "] = " << tc.d_n[p] << "\n";
    os << "n_t[" << p << "] = " << tc.n_t[p] << "\n";
    os << "n_n[" << p << "] = " << tc.n_n[p] << "\n";
  }
  return os.str();
}

inline bool parse_constants(const std::string& text, const std::string& cell_hash,
                            TransmissionConstants& out) {
  std::istringstream in(text);
  std::string line;
  std::map<std::string, std::string> kv;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[configdetail::trim(line.substr(0, eq))] =
        configdetail::trim(line.substr(eq + 1));
  }
  if (kv["schema"] != "perilayer-constants-1") return false;
  if (kv["cell_hash"] != cell_hash) return false;
  try {
    out.max_order = std::stoi(kv.at("max_order"));
    out.d_infinity = std::stod(kv.at("d_infinity"));
    out.d_t.assign(out.max_order + 1, 0.0);
    out.d_n.assign(out.max_order + 1, 0.0);
    out.n_t.assign(out.max_order + 1, 0.0);
    out.n_n.assign(out.max_order + 1, 0.0);
    for (int p = 0; p <= out.max_order; ++p) {
      out.d_t[p] = std::stod(kv.at("d_t[" + std::to_string(p) + "]"));
      out.d_n[p] = std::stod(kv.at("d_n[" + std::to_string(p) + "]"));
      out.n_t[p] = std::stod(kv.at("n_t[" + std::to_string(p) + "]"));
      out.n_n[p] = std::stod(kv.at("n_n[" + std::to_string(p) + "]"));
    }
    out.diagnostics.l_band = std::stod(kv.at("l_band"));
    out.diagnostics.h = std::stod(kv.at("h"));
    out.diagnostics.chi_kind =
        kv.at("chi") == "cosine" ? CutoffKind::Cosine : CutoffKind::QuinticSmoothstep;
  } catch (const std::exception&) {
    return false;
  }
  return true;
}

// The cell-relevant slice of the configuration, hashed into the constants
// record so stale caches are rejected.
inline std::string cell_config_hash(const RunConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "chi=" << static_cast<int>(cfg.study.chi_profile.kind)
     << ";l_band=" << cfg.study.l_band << ";h=" << cfg.study.band_h
     << ";P=" << cfg.study.max_order;
  if (const auto* d = std::get_if<DiskHole>(&cfg.study.cell.hole))
    os << ";disk=" << d->center.x << "," << d->center.y << "," << d->radius;
  else
    os << ";empty";
  std::ostringstream h;
  h << std::hex << configdetail::fnv1a(os.str());
  return h.str();
}

// ---------------------------------------------------------------------------
// Manifest: everything needed to reproduce a run.

inline std::string format_manifest(const RunConfig& cfg, const std::string& command,
                                   const StageLog& stages) {
  std::ostringstream os;
  os.precision(6);
  os << "perilayer manifest\n";
  os << "schema = 1\n";
  os << "command = " << command << "\n";
  os << "config_hash = " << config_hash(cfg) << "\n";
  os << "cell_hash = " << cell_config_hash(cfg) << "\n";
  for (auto& [stage, seconds] : stages.timings)
    os << "stage " << stage << " = " << seconds << " s\n";
  return os.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace perilayer
