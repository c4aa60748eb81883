#include "config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "common.hpp"

namespace trend {

namespace {

std::string fmt_double(double v) {
  if (std::isnan(v)) return "auto";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& s) {
  if (s == "auto") return std::numeric_limits<double>::quiet_NaN();
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail_config("config: bad number for '" + key + "': " + s);
  }
}

int64_t parse_int(const std::string& key, const std::string& s) {
  try {
    size_t pos = 0;
    int64_t v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail_config("config: bad integer for '" + key + "': " + s);
  }
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "on" || s == "true" || s == "1") return true;
  if (s == "off" || s == "false" || s == "0") return false;
  fail_config("config: bad switch for '" + key + "': " + s + " (use on/off)");
}

struct KeyEntry {
  const char* name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

const std::vector<KeyEntry>& registry() {
  auto s = [](const std::string& v) { return v; };
  static const std::vector<KeyEntry> reg = [&] {
    std::vector<KeyEntry> r;
    auto add_str = [&](const char* n, std::string RunConfig::* f) {
      r.push_back({n, [f](const RunConfig& c) { return c.*f; },
                   [f](RunConfig& c, const std::string& v) { c.*f = v; }});
    };
    auto add_u64 = [&](const char* n, uint64_t RunConfig::* f) {
      r.push_back({n, [f](const RunConfig& c) { return std::to_string(c.*f); },
                   [f, n](RunConfig& c, const std::string& v) {
                     c.*f = uint64_t(parse_int(n, v));
                   }});
    };
    auto add_int = [&](const char* n, int RunConfig::* f) {
      r.push_back({n, [f](const RunConfig& c) { return std::to_string(c.*f); },
                   [f, n](RunConfig& c, const std::string& v) { c.*f = int(parse_int(n, v)); }});
    };
    auto add_dbl = [&](const char* n, double RunConfig::* f) {
      r.push_back({n, [f](const RunConfig& c) { return fmt_double(c.*f); },
                   [f, n](RunConfig& c, const std::string& v) { c.*f = parse_double(n, v); }});
    };
    auto add_bool = [&](const char* n, bool RunConfig::* f) {
      r.push_back({n, [f](const RunConfig& c) { return std::string(c.*f ? "on" : "off"); },
                   [f, n](RunConfig& c, const std::string& v) { c.*f = parse_bool(n, v); }});
    };
    auto add_ivec = [&](const char* n, std::vector<int> RunConfig::* f) {
      r.push_back({n,
                   [f](const RunConfig& c) {
                     std::string out;
                     for (size_t i = 0; i < (c.*f).size(); ++i) {
                       if (i) out += ",";
                       out += std::to_string((c.*f)[i]);
                     }
                     return out;
                   },
                   [f, n](RunConfig& c, const std::string& v) {
                     std::vector<int> vals;
                     std::stringstream ss(v);
                     std::string item;
                     while (std::getline(ss, item, ','))
                       vals.push_back(int(parse_int(n, item)));
                     if (vals.empty()) fail_config(std::string("config: empty list for ") + n);
                     c.*f = vals;
                   }});
    };

    // `preset` must come first so explicit keys in a file override it
    r.push_back({"preset", [](const RunConfig& c) { return c.preset; },
                 [](RunConfig& c, const std::string& v) {
                   if (v == "paper") {
                     c.feat_dim = 128;
                     c.d_sin = 32;
                     c.d_act = 16;
                     c.n_render = 12288;
                     c.n_ray = 48;
                   } else if (v == "desk") {
                     c.feat_dim = 16;
                     c.d_sin = 8;
                     c.d_act = 8;
                     c.n_render = 512;
                     c.n_ray = 32;
                   } else {
                     fail_config("config: unknown preset '" + v + "'");
                   }
                   c.preset = v;
                 }});
    add_u64("seed", &RunConfig::seed);
    add_str("scene_file", &RunConfig::scene_file);
    add_int("scenes", &RunConfig::scenes);
    add_int("frames", &RunConfig::frames);
    add_dbl("dt", &RunConfig::dt);
    add_dbl("sensor_height", &RunConfig::sensor_height);
    add_int("beams_azimuth", &RunConfig::beams_azimuth);
    add_int("beams_elevation", &RunConfig::beams_elevation);
    add_dbl("fov_h_deg", &RunConfig::fov_h_deg);
    add_dbl("el_min_deg", &RunConfig::el_min_deg);
    add_dbl("el_max_deg", &RunConfig::el_max_deg);
    add_dbl("r_max", &RunConfig::r_max);
    add_int("grid_d", &RunConfig::grid_d);
    add_int("grid_h", &RunConfig::grid_h);
    add_int("grid_w", &RunConfig::grid_w);
    add_dbl("vol_min_x", &RunConfig::vol_min_x);
    add_dbl("vol_max_x", &RunConfig::vol_max_x);
    add_dbl("vol_min_y", &RunConfig::vol_min_y);
    add_dbl("vol_max_y", &RunConfig::vol_max_y);
    add_dbl("vol_min_z", &RunConfig::vol_min_z);
    add_dbl("vol_max_z", &RunConfig::vol_max_z);
    add_int("feat_dim", &RunConfig::feat_dim);
    add_int("d_sin", &RunConfig::d_sin);
    add_int("d_act", &RunConfig::d_act);
    add_dbl("sin_base", &RunConfig::sin_base);
    add_int("enc_c1", &RunConfig::enc_c1);
    add_int("enc_c2", &RunConfig::enc_c2);
    add_int("act_hidden", &RunConfig::act_hidden);
    add_int("sdf_width", &RunConfig::sdf_width);
    add_int("sdf_hidden_layers", &RunConfig::sdf_hidden_layers);
    add_int("n_render", &RunConfig::n_render);
    add_int("n_ray", &RunConfig::n_ray);
    add_dbl("near", &RunConfig::near);
    add_dbl("far", &RunConfig::far);
    add_dbl("min_weight_sum", &RunConfig::min_weight_sum);
    add_dbl("z_init", &RunConfig::z_init);
    add_dbl("z_thd", &RunConfig::z_thd);
    add_dbl("lr", &RunConfig::lr);
    add_ivec("curri_epochs", &RunConfig::curri_epochs);
    add_int("k_max", &RunConfig::k_max);
    add_dbl("mask_rate", &RunConfig::mask_rate);
    add_dbl("decay_base", &RunConfig::decay_base);
    add_int("epochs", &RunConfig::epochs);
    add_int("steps_per_epoch", &RunConfig::steps_per_epoch);
    add_int("checkpoint_every", &RunConfig::checkpoint_every);
    add_bool("recurrent", &RunConfig::recurrent);
    add_bool("temporal_field", &RunConfig::temporal_field);
    add_bool("forecast", &RunConfig::forecast);
    add_bool("raw_action_concat", &RunConfig::raw_action_concat);
    add_str("precision", &RunConfig::precision);
    add_dbl("fd_step", &RunConfig::fd_step);
    add_int("fd_seeds", &RunConfig::fd_seeds);
    add_str("fault_op", &RunConfig::fault_op);
    (void)s;
    return r;
  }();
  return reg;
}

const KeyEntry* find_key(const std::string& key) {
  for (const KeyEntry& e : registry())
    if (key == e.name) return &e;
  return nullptr;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const KeyEntry* e = find_key(key);
  if (!e) fail_config("config: unknown key '" + key + "'");
  e->set(*this, trim(value));
}

std::string RunConfig::get(const std::string& key) const {
  const KeyEntry* e = find_key(key);
  if (!e) fail_config("config: unknown key '" + key + "'");
  return e->get(*this);
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const KeyEntry& e : registry()) {
    out += e.name;
    out += " = ";
    out += e.get(*this);
    out += "\n";
  }
  return out;
}

uint64_t RunConfig::hash() const { return fnv1a64(serialize()); }

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    size_t hashpos = line.find('#');
    if (hashpos != std::string::npos) line.resize(hashpos);
    std::string t = trim(line);
    if (t.empty()) continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      fail_config("config: line " + std::to_string(lineno) + " is not key = value");
    cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail_io("cannot open config file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return from_text(ss.str());
}

void RunConfig::save(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail_io("cannot open for write: " + path);
  f << serialize();
  if (!f) fail_io("write failed: " + path);
}

void RunConfig::validate() const {
  if (mask_rate < 0 || mask_rate >= 1) fail_config("config: mask_rate must be in [0,1)");
  if (k_max < 1) fail_config("config: k_max must be >= 1");
  if (d_sin <= 0 || d_sin % 2 != 0) fail_config("config: d_sin must be even and positive");
  if (n_ray < 2) fail_config("config: n_ray must be >= 2");
  if (n_render < 1) fail_config("config: n_render must be >= 1");
  if (near <= 0) fail_config("config: near must be > 0");
  if (!std::isnan(far) && far != 0 && far <= near) fail_config("config: far must exceed near");
  if (grid_d < 2 || grid_h < 2 || grid_w < 2) fail_config("config: grid dims must be >= 2");
  for (int e : curri_epochs)
    if (e <= 0) fail_config("config: curriculum epochs must be positive");
  if (precision != "f64" && precision != "f32")
    fail_config("config: precision must be f64 or f32");
  if (dt <= 0) fail_config("config: dt must be > 0");
  if (frames < 1) fail_config("config: frames must be >= 1");
}

GridGeom RunConfig::grid() const {
  GridGeom g;
  g.vmin = {vol_min_x, vol_min_y, vol_min_z};
  g.vmax = {vol_max_x, vol_max_y, vol_max_z};
  g.d = grid_d;
  g.h = grid_h;
  g.w = grid_w;
  return g;
}

BeamPattern RunConfig::beams() const {
  BeamPattern b;
  b.n_azimuth = beams_azimuth;
  b.n_elevation = beams_elevation;
  b.fov_h = deg2rad(fov_h_deg);
  b.el_min = deg2rad(el_min_deg);
  b.el_max = deg2rad(el_max_deg);
  b.r_max = r_max;
  return b;
}

double RunConfig::effective_z_thd() const {
  // sensor-frame threshold: 0.3 m above the ground plane
  return std::isnan(z_thd) ? 0.3 - sensor_height : z_thd;
}

double RunConfig::effective_far() const { return far > 0 ? far : grid().diagonal(); }

int RunConfig::total_epochs() const {
  if (epochs > 0) return epochs;
  return std::accumulate(curri_epochs.begin(), curri_epochs.end(), 0);
}

}  // namespace trend
