#include "drsim/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "drsim/errors.hpp"

namespace drsim {

using nlohmann::json;
namespace fs = std::filesystem;

const char* to_string(DrMode mode) {
  switch (mode) {
    case DrMode::None: return "none";
    case DrMode::Anticipator: return "anticipator";
    case DrMode::Taker: return "taker";
  }
  return "?";
}

const char* to_string(Uptake uptake) {
  switch (uptake) {
    case Uptake::None: return "none";
    case Uptake::Low: return "low";
    case Uptake::Medium: return "medium";
    case Uptake::High: return "high";
  }
  return "?";
}

DrMode parse_dr_mode(const std::string& text) {
  for (auto m : {DrMode::None, DrMode::Anticipator, DrMode::Taker}) {
    if (text == to_string(m)) return m;
  }
  throw ValidationError("unknown dr_mode '" + text + "' (expected none, anticipator or taker)");
}

Uptake parse_uptake(const std::string& text) {
  for (auto u : {Uptake::None, Uptake::Low, Uptake::Medium, Uptake::High}) {
    if (text == to_string(u)) return u;
  }
  throw ValidationError("unknown uptake '" + text + "' (expected none, low, medium or high)");
}

const std::map<std::string, std::map<Uptake, UptakeRow>>& default_uptake_table() {
  // GWh / GW as published, converted to MWh / MW.
  static const auto table = [] {
    struct Raw {
      const char* region;
      Uptake uptake;
      double soc_min, soc_max, cap, pv;
    };
    const Raw raw[] = {
        {"QLD", Uptake::Low, 0.4, 4.3, 0.44, 1.3},    {"QLD", Uptake::Medium, 0.6, 6.4, 0.63, 1.9},
        {"QLD", Uptake::High, 0.9, 8.5, 0.83, 2.6},   {"NSW", Uptake::Low, 0.7, 6.7, 0.62, 2.0},
        {"NSW", Uptake::Medium, 1.0, 10.1, 1.01, 3.0}, {"NSW", Uptake::High, 1.4, 13.5, 1.34, 4.1},
        {"VIC", Uptake::Low, 0.5, 5.0, 0.47, 1.5},    {"VIC", Uptake::Medium, 0.8, 7.5, 0.72, 2.3},
        {"VIC", Uptake::High, 1.0, 10.0, 0.95, 3.0},  {"SA", Uptake::Low, 0.1, 1.2, 0.10, 0.3},
        {"SA", Uptake::Medium, 0.2, 1.7, 0.16, 0.5},  {"SA", Uptake::High, 0.2, 2.3, 0.22, 0.7},
    };
    std::map<std::string, std::map<Uptake, UptakeRow>> t;
    for (const auto& r : raw) {
      t[r.region][r.uptake] = {r.soc_min * 1000, r.soc_max * 1000, r.cap * 1000, r.pv * 1000};
    }
    return t;
  }();
  return table;
}

std::vector<double> shift_circular(const std::vector<double>& trace, int delay) {
  const auto n = static_cast<long long>(trace.size());
  std::vector<double> out(trace.size());
  if (n == 0) return out;
  for (long long t = 0; t < n; ++t) {
    long long src = (t - delay) % n;
    if (src < 0) src += n;
    out[t] = trace[src];
  }
  return out;
}

namespace {

// ---- config parsing ------------------------------------------------------

class Reader {
 public:
  Reader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw ValidationError(where_ + ": expected an object");
  }

  bool has(const char* key) const { return obj_.contains(key) && !obj_.at(key).is_null(); }

  const json& raw(const char* key) const {
    used_.insert(key);
    if (!obj_.contains(key)) throw ValidationError(where_ + ": missing '" + key + "'");
    return obj_.at(key);
  }

  template <class T>
  T get(const char* key) const {
    const json& v = raw(key);
    try {
      return v.get<T>();
    } catch (const json::exception&) {
      throw ValidationError(where_ + ": '" + key + "' has the wrong type");
    }
  }

  template <class T>
  T get(const char* key, T fallback) const {
    if (!has(key)) {
      used_.insert(key);
      return fallback;
    }
    return get<T>(key);
  }

  double number(const char* key, double fallback) const {
    const double v = get<double>(key, fallback);
    if (!std::isfinite(v)) throw ValidationError(where_ + ": '" + key + "' must be finite");
    return v;
  }

  std::string where(const std::string& sub) const { return where_ + "." + sub; }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!used_.count(it.key())) throw ValidationError(where_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const json& obj_;
  std::string where_;
  mutable std::set<std::string> used_;
};

json parse_json(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(source + ": " + e.what());
  }
}

std::string read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_atomic(const fs::path& file, const std::string& text) {
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out.flush()) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, file, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + file.string() + ": " + ec.message());
}

std::vector<std::size_t> parse_days(const json& v, const std::string& where) {
  std::vector<std::size_t> out;
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "all") return out;
    const auto dots = s.find("..");
    try {
      if (dots == std::string::npos) throw std::invalid_argument(s);
      const std::size_t a = std::stoul(s.substr(0, dots));
      const std::size_t b = std::stoul(s.substr(dots + 2));
      if (b < a) throw std::invalid_argument(s);
      for (std::size_t d = a; d <= b; ++d) out.push_back(d);
    } catch (const std::exception&) {
      throw ValidationError(where + ": expected \"all\", \"a..b\" or a list of day indices");
    }
    return out;
  }
  if (!v.is_array()) throw ValidationError(where + ": expected \"all\", \"a..b\" or a list of day indices");
  for (const auto& d : v) {
    if (!d.is_number_unsigned()) throw ValidationError(where + ": day indices must be nonnegative integers");
    out.push_back(d.get<std::size_t>());
  }
  return out;
}

CalibrationConfig parse_calibration(const json& v, const std::string& where) {
  Reader r(v, where);
  CalibrationConfig c;
  if (r.has("alpha")) c.alpha = r.get<double>("alpha");
  else r.get<double>("alpha", 0.0);
  if (r.has("beta")) c.beta = r.get<double>("beta");
  else r.get<double>("beta", 0.0);
  c.epsilon = r.number("epsilon", c.epsilon);
  c.max_outer_iters = r.get<std::size_t>("max_outer_iters", c.max_outer_iters);
  c.max_inner_iters = r.get<std::size_t>("max_inner_iters", c.max_inner_iters);
  c.soc_tolerance = r.number("soc_tolerance", c.soc_tolerance);
  const auto mode = r.get<std::string>("mode", "joint");
  if (mode == "joint") c.mode = CalibrationMode::Joint;
  else if (mode == "sequential") c.mode = CalibrationMode::Sequential;
  else throw ValidationError(where + ": mode must be joint or sequential");
  r.finish();
  check_config(c);
  return c;
}

double capacity_field(const Reader& r, const std::string& where) {
  if (r.has("capacity_mw") == r.has("capacity_gw")) {
    throw ValidationError(where + ": give exactly one of capacity_mw or capacity_gw");
  }
  const double mw = r.has("capacity_mw") ? r.number("capacity_mw", 0) : 1000 * r.number("capacity_gw", 0);
  r.get<double>("capacity_mw", 0.0);
  r.get<double>("capacity_gw", 0.0);
  if (mw < 0) throw ValidationError(where + ": capacity must be nonnegative");
  return mw;
}

}  // namespace

ScenarioSpec parse_scenario(const std::string& json_text, const fs::path& base_dir,
                            const std::string& source) {
  const json doc = parse_json(json_text, source);
  Reader r(doc, source);
  ScenarioSpec s;
  s.base_dir = base_dir;
  s.name = r.get<std::string>("name");
  if (s.name.empty() || s.name.find_first_of("/\\") != std::string::npos) {
    throw ValidationError(source + ": name must be nonempty and contain no path separators");
  }
  s.network = r.get<std::string>("network");
  for (const auto& [region, v] : r.raw("profiles").items()) {
    Reader p(v, r.where("profiles." + region));
    ProfileSource src;
    src.demand = p.get<std::string>("demand", "");
    src.pv = p.get<std::string>("pv", "");
    src.wide = p.get<std::string>("wide", "");
    p.finish();
    if (src.wide.empty() == src.demand.empty()) {
      throw ValidationError(r.where("profiles." + region) + ": give either demand (+ pv) or wide");
    }
    s.profiles[region] = src;
  }
  s.responsive_share = r.number("responsive_share", s.responsive_share);
  if (s.responsive_share < 0 || s.responsive_share > 1) {
    throw ValidationError(source + ": responsive_share must lie in [0, 1]");
  }
  if (r.has("substitutions")) {
    std::size_t i = 0;
    for (const auto& v : r.raw("substitutions")) {
      const std::string where = r.where("substitutions[" + std::to_string(i++) + "]");
      Reader q(v, where);
      Substitution sub;
      sub.replace = q.get<std::string>("replace");
      sub.with.id = q.get<std::string>("id");
      sub.with.region = q.get<std::string>("region");
      const auto kind = parse_generator_kind(q.get<std::string>("kind"));
      if (!kind || (*kind != GeneratorKind::Wind && *kind != GeneratorKind::Csp)) {
        throw ValidationError(where + ": kind must be wind or csp");
      }
      sub.with.kind = *kind;
      sub.with.p_max = capacity_field(q, where);
      sub.with.blocks = {{0.0, sub.with.p_max}};
      sub.with.must_take = true;
      sub.trace = q.get<std::string>("trace", "");
      if (sub.trace.empty()) throw ValidationError(where + ": missing availability trace");
      q.finish();
      s.substitutions.push_back(sub);
    }
  } else {
    r.get<json>("substitutions", json());
  }
  s.dr_mode = parse_dr_mode(r.get<std::string>("dr_mode", "none"));
  s.uptake = parse_uptake(r.get<std::string>("uptake", "none"));
  if (s.dr_mode != DrMode::None && s.uptake == Uptake::None) {
    throw ValidationError(r.where("uptake") + ": dr_mode " + to_string(s.dr_mode) + " needs an uptake level");
  }
  s.uptake_table = default_uptake_table();
  if (r.has("uptake_table")) {
    for (const auto& [region, levels] : r.raw("uptake_table").items()) {
      for (const auto& [level, v] : levels.items()) {
        const std::string where = r.where("uptake_table." + region + "." + level);
        Reader q(v, where);
        const auto soc = q.get<std::vector<double>>("soc_gwh");
        if (soc.size() != 2) throw ValidationError(where + ": soc_gwh needs [min, max]");
        UptakeRow row{soc[0] * 1000, soc[1] * 1000, q.number("charge_cap_gw", 0) * 1000,
                      q.number("pv_gw", 0) * 1000};
        q.finish();
        s.uptake_table[region][parse_uptake(level)] = row;
      }
    }
  } else {
    r.get<json>("uptake_table", json());
  }
  s.round_trip_efficiency = r.number("round_trip_efficiency", s.round_trip_efficiency);
  s.flex_min = r.number("flex_min", s.flex_min);
  s.csp_shift = r.get<int>("csp_shift", 0);
  s.horizon.steps = r.get<std::size_t>("steps", 24);
  s.horizon.step_length = r.number("step_length", 1.0);
  s.year_days = r.get<std::size_t>("year_days", 365);
  if (s.horizon.steps == 0 || !(s.horizon.step_length > 0) || s.year_days == 0) {
    throw ValidationError(source + ": steps, step_length and year_days must be positive");
  }
  if (r.has("days")) s.days = parse_days(r.raw("days"), r.where("days"));
  else r.get<json>("days", json());
  if (r.has("calibration_days")) {
    s.calibration_days = parse_days(r.raw("calibration_days"), r.where("calibration_days"));
  } else {
    r.get<json>("calibration_days", json());
  }
  for (const auto* list : {&s.days, &s.calibration_days}) {
    for (std::size_t d : *list) {
      if (d >= s.year_days) {
        throw ValidationError(source + ": day " + std::to_string(d) + " is outside the " +
                              std::to_string(s.year_days) + "-day year");
      }
    }
  }
  if (r.has("calibration")) s.calibration = parse_calibration(r.raw("calibration"), r.where("calibration"));
  else r.get<json>("calibration", json());
  s.price_mode = parse_price_mode(r.get<std::string>("price_mode", "nodal"));
  if (r.has("loadability")) {
    Reader q(r.raw("loadability"), r.where("loadability"));
    s.loadability.target_region = q.get<std::string>("target_region", s.loadability.target_region);
    if (q.has("pickup_region")) s.loadability.pickup_region = q.get<std::string>("pickup_region");
    else q.get<json>("pickup_region", json());
    s.loadability.step_size = q.number("step_size", s.loadability.step_size);
    q.finish();
  } else {
    r.get<json>("loadability", json());
  }
  s.value_of_lost_load = r.number("value_of_lost_load", s.value_of_lost_load);
  r.finish();
  s.canonical = doc.dump();
  return s;
}

void set_price_mode(ScenarioSpec& spec, PriceMode mode) {
  json doc = json::parse(spec.canonical);
  doc["price_mode"] = to_string(mode);
  spec.price_mode = mode;
  spec.canonical = doc.dump();
}

std::vector<ScenarioSpec> load_scenarios(const fs::path& file) {
  const std::string text = read_file(file);
  const json doc = parse_json(text, file.string());
  const fs::path dir = fs::absolute(file).parent_path();
  if (!doc.is_object() || !doc.contains("scenarios")) {
    return {parse_scenario(text, dir, file.string())};
  }
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (it.key() != "base" && it.key() != "scenarios") {
      throw ValidationError(file.string() + ": unknown batch key '" + it.key() + "'");
    }
  }
  const json base = doc.value("base", json::object());
  std::vector<ScenarioSpec> out;
  std::set<std::string> names;
  std::size_t i = 0;
  for (const auto& entry : doc.at("scenarios")) {
    json merged = base;
    merged.merge_patch(entry);
    auto spec = parse_scenario(merged.dump(), dir,
                               file.string() + ": scenarios[" + std::to_string(i++) + "]");
    if (!names.insert(spec.name).second) {
      throw ValidationError(file.string() + ": duplicate scenario name " + spec.name);
    }
    out.push_back(std::move(spec));
  }
  if (out.empty()) throw ValidationError(file.string() + ": batch has no scenarios");
  return out;
}

NetworkModel load_network(const fs::path& file) {
  const std::string src = file.string();
  const json doc = parse_json(read_file(file), src);
  Reader r(doc, src);
  NetworkModel m;
  for (const auto& v : r.raw("regions")) {
    Reader q(v, src + ": region");
    Region reg;
    reg.id = q.get<std::string>("id");
    reg.name = q.get<std::string>("name", reg.id);
    q.finish();
    m.regions.push_back(reg);
  }
  m.reference_region = r.get<std::string>("reference_region", m.regions.empty() ? "" : m.regions[0].id);
  if (r.has("lines")) {
    for (const auto& v : r.raw("lines")) {
      Reader q(v, src + ": line");
      Line line;
      line.from = q.get<std::string>("from");
      line.to = q.get<std::string>("to");
      line.susceptance = q.number("susceptance", 1.0);
      const double inf = std::numeric_limits<double>::infinity();
      line.flow_max = q.has("flow_max") ? q.number("flow_max", 0) : inf;  // null: unlimited
      line.flow_min = q.has("flow_min") ? q.number("flow_min", 0) : -line.flow_max;
      q.get<json>("flow_max", json());
      q.get<json>("flow_min", json());
      q.finish();
      m.lines.push_back(line);
    }
  } else {
    r.get<json>("lines", json());
  }
  for (const auto& v : r.raw("generators")) {
    const std::string where = src + ": generator " + v.value("id", std::string("?"));
    Reader q(v, where);
    Generator g;
    g.id = q.get<std::string>("id");
    g.region = q.get<std::string>("region");
    const auto kind = parse_generator_kind(q.get<std::string>("kind"));
    if (!kind) throw ValidationError(where + ": unknown kind");
    g.kind = *kind;
    g.p_min = q.number("p_min", 0.0);
    if (q.has("prices")) {
      g.p_max = q.number("p_max", 0.0);
      g.blocks = equal_blocks(g.p_max, q.get<std::vector<double>>("prices"));
      q.get<json>("blocks", json());
    } else {
      for (const auto& b : q.raw("blocks")) {
        Reader br(b, where + " block");
        g.blocks.push_back({br.number("price", 0.0), br.number("capacity", 0.0)});
        br.finish();
      }
      double total = 0;
      for (const auto& b : g.blocks) total += b.capacity;
      g.p_max = q.number("p_max", total);
      q.get<json>("prices", json());
    }
    g.must_take = q.get<bool>("must_take", g.renewable());
    q.finish();
    m.generators.push_back(g);
  }
  r.finish();
  return m;
}

std::vector<double> read_series_csv(const fs::path& file, std::size_t expected) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  const std::string src = file.string();
  std::string line;
  if (!std::getline(in, line) || (line != "step,value" && line != "step,value\r")) {
    throw ValidationError(src + ": expected header 'step,value'");
  }
  std::vector<double> out;
  out.reserve(expected);
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw ValidationError(src + ": row " + std::to_string(row) + " needs exactly 2 columns");
    }
    std::size_t step = 0;
    double value = 0;
    const std::string a = line.substr(0, comma), b = line.substr(comma + 1);
    try {
      std::size_t used = 0;
      step = std::stoul(a, &used);
      if (used != a.size()) throw std::invalid_argument(a);
    } catch (const std::exception&) {
      throw ValidationError(src + ": row " + std::to_string(row) + " column 1 (step) is not an integer");
    }
    try {
      std::size_t used = 0;
      value = std::stod(b, &used);
      if (used != b.size()) throw std::invalid_argument(b);
    } catch (const std::exception&) {
      throw ValidationError(src + ": row " + std::to_string(row) + " column 2 (value) is not a number");
    }
    if (step != out.size()) {
      throw ValidationError(src + ": row " + std::to_string(row) + " has step " + std::to_string(step) +
                            ", expected " + std::to_string(out.size()));
    }
    if (!std::isfinite(value) || value < 0) {
      throw ValidationError(src + ": row " + std::to_string(row) + " column 2 is negative or not finite");
    }
    out.push_back(value);
  }
  if (out.size() != expected) {
    throw ValidationError(src + ": has " + std::to_string(out.size()) + " rows, expected " +
                          std::to_string(expected));
  }
  return out;
}

namespace {

struct WideSeries {
  std::vector<double> pl, pu, pv;
};

WideSeries read_wide_csv(const fs::path& file, std::size_t expected) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  const std::string src = file.string();
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(src + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "step,P_L,P_U,P_PV") throw ValidationError(src + ": expected header 'step,P_L,P_U,P_PV'");
  WideSeries w;
  std::size_t row = 1;
  static const char* names[] = {"step", "P_L", "P_U", "P_PV"};
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 4) {
      throw ValidationError(src + ": row " + std::to_string(row) + " needs exactly 4 columns");
    }
    double v[4];
    for (int c = 0; c < 4; ++c) {
      try {
        std::size_t used = 0;
        v[c] = std::stod(cells[c], &used);
        if (used != cells[c].size()) throw std::invalid_argument(cells[c]);
      } catch (const std::exception&) {
        throw ValidationError(src + ": row " + std::to_string(row) + " column " + std::to_string(c + 1) +
                              " (" + names[c] + ") is not a number");
      }
      if (!std::isfinite(v[c]) || v[c] < 0) {
        throw ValidationError(src + ": row " + std::to_string(row) + " column " + std::to_string(c + 1) +
                              " (" + names[c] + ") is negative or not finite");
      }
    }
    if (v[0] != static_cast<double>(w.pl.size())) {
      throw ValidationError(src + ": row " + std::to_string(row) + " has step " + cells[0] + ", expected " +
                            std::to_string(w.pl.size()));
    }
    w.pl.push_back(v[1]);
    w.pu.push_back(v[2]);
    w.pv.push_back(v[3]);
  }
  if (w.pl.size() != expected) {
    throw ValidationError(src + ": has " + std::to_string(w.pl.size()) + " rows, expected " +
                          std::to_string(expected));
  }
  return w;
}

fs::path resolve(const ScenarioSpec& spec, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : spec.base_dir / path;
}

std::size_t year_steps(const ScenarioSpec& spec) { return spec.year_days * spec.horizon.steps; }

const UptakeRow* uptake_row(const ScenarioSpec& spec, const std::string& region) {
  if (spec.uptake == Uptake::None) return nullptr;
  const auto r = spec.uptake_table.find(region);
  if (r == spec.uptake_table.end() || !r->second.count(spec.uptake)) {
    throw ValidationError("scenario " + spec.name + ": no " + to_string(spec.uptake) +
                          " uptake row for region " + region);
  }
  return &r->second.at(spec.uptake);
}

}  // namespace

YearProfiles load_profiles(const ScenarioSpec& spec, const NetworkModel& base) {
  YearProfiles y;
  y.steps = year_steps(spec);
  for (const auto& region : base.regions) {
    const auto src = spec.profiles.find(region.id);
    if (src == spec.profiles.end()) {
      throw ValidationError("scenario " + spec.name + ": no profiles for region " + region.id);
    }
    const UptakeRow* row = uptake_row(spec, region.id);
    if (!src->second.wide.empty()) {
      auto w = read_wide_csv(resolve(spec, src->second.wide), y.steps);
      y.inflexible[region.id] = std::move(w.pl);
      y.responsive[region.id] = std::move(w.pu);
      y.pv[region.id] = row ? std::move(w.pv) : std::vector<double>(y.steps, 0.0);
      continue;
    }
    const auto total = read_series_csv(resolve(spec, src->second.demand), y.steps);
    auto& pl = y.inflexible[region.id];
    auto& pu = y.responsive[region.id];
    for (double d : total) {
      pu.push_back(spec.responsive_share * d);
      pl.push_back(d - spec.responsive_share * d);
    }
    auto& pv = y.pv[region.id];
    if (row && row->pv_capacity > 0) {
      if (src->second.pv.empty()) {
        throw ValidationError("scenario " + spec.name + ": region " + region.id + " needs a pv trace");
      }
      pv = read_series_csv(resolve(spec, src->second.pv), y.steps);
      for (double& v : pv) {
        if (v > 1.0 + 1e-9) throw ValidationError(src->second.pv + ": per-unit PV must not exceed 1");
        v *= row->pv_capacity;
      }
    } else {
      pv.assign(y.steps, 0.0);
    }
  }
  return y;
}

NetworkModel apply_substitutions(const NetworkModel& base, const ScenarioSpec& spec) {
  NetworkModel m = base;
  for (const auto& sub : spec.substitutions) {
    const auto it = std::find_if(m.generators.begin(), m.generators.end(),
                                 [&](const Generator& g) { return g.id == sub.replace; });
    if (it == m.generators.end()) {
      throw ValidationError("scenario " + spec.name + ": cannot replace unknown generator " + sub.replace);
    }
    m.generators.erase(it);
    Generator g = sub.with;
    g.availability = read_series_csv(resolve(spec, sub.trace), year_steps(spec));
    for (double v : g.availability) {
      if (v > 1.0 + 1e-9) throw ValidationError(sub.trace + ": availability must not exceed 1");
    }
    if (g.kind == GeneratorKind::Csp) g.availability = shift_circular(g.availability, spec.csp_shift);
    m.generators.push_back(std::move(g));
  }
  return m;
}

ScenarioInputs prepare(const ScenarioSpec& spec) {
  ScenarioInputs in;
  in.spec = spec;
  const auto network = load_network(resolve(spec, spec.network));
  in.model = apply_substitutions(network, spec);
  in.profiles = load_profiles(spec, in.model);
  in.model.aggregators.clear();
  for (const auto& region : in.model.regions) {
    AggregatorProfile a;
    a.region = region.id;
    if (const UptakeRow* row = uptake_row(spec, region.id)) {
      a.storage.soc_min = row->soc_min;
      a.storage.soc_max = row->soc_max;
    }
    a.storage.soc_initial = 0.5 * (a.storage.soc_min + a.storage.soc_max);
    a.storage.round_trip_efficiency = spec.round_trip_efficiency;
    in.model.aggregators.push_back(a);
  }
  for (const auto& g : in.model.generators) in.has_renewables = in.has_renewables || g.renewable();
  if (!in.model.region_index(spec.loadability.target_region)) {
    throw ValidationError("scenario " + spec.name + ": loadability target region " +
                          spec.loadability.target_region + " does not exist");
  }
  return in;
}

DispatchProblem day_problem(const ScenarioInputs& in, std::size_t day) {
  const auto& spec = in.spec;
  if (day >= spec.year_days) throw ValidationError("day " + std::to_string(day) + " is outside the year");
  const std::size_t H = spec.horizon.steps;
  const std::size_t first = day * H;
  auto slice = [&](const std::vector<double>& v) {
    return std::vector<double>(v.begin() + first, v.begin() + first + H);
  };
  DispatchProblem p;
  p.horizon = spec.horizon;
  p.model = in.model;
  for (auto& g : p.model.generators) {
    if (!g.availability.empty()) g.availability = slice(g.availability);
  }
  for (auto& a : p.model.aggregators) {
    a.inflexible_load = slice(in.profiles.inflexible.at(a.region));
    a.responsive_load = slice(in.profiles.responsive.at(a.region));
    a.pv = slice(in.profiles.pv.at(a.region));
    a.flex_min.assign(H, spec.flex_min);
    a.charge_cap = 0.0;
  }
  p.battery_loss.assign(p.model.aggregators.size(), 0.0);
  p.value_of_lost_load = spec.value_of_lost_load;
  require_valid(p.model, p.horizon);
  if (spec.dr_mode == DrMode::None) p = without_flexibility(p);
  return p;
}

namespace {

std::vector<std::size_t> selected_days(const ScenarioSpec& spec) {
  std::vector<std::size_t> days = spec.days;
  if (days.empty()) {
    for (std::size_t d = 0; d < spec.year_days; ++d) days.push_back(d);
  }
  return days;
}

template <class F>
auto with_context(const std::string& context, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const NonConvergence& e) {
    throw NonConvergence(context + ": " + e.what(), e.last_gap());
  } catch (const NoGeneratorsInRegion& e) {
    throw NoGeneratorsInRegion(context + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(context + ": " + e.what());
  } catch (const InfeasibleModel& e) {
    throw InfeasibleModel(context + ": " + e.what());
  } catch (const NumericalFailure& e) {
    throw NumericalFailure(context + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError(context + ": " + e.what());
  }
}

double soc_excess(const std::vector<double>& soc, const StorageParams& s) {
  double worst = 0.0;
  for (std::size_t h = 1; h < soc.size(); ++h) {
    worst = std::max({worst, s.soc_min - soc[h], soc[h] - s.soc_max});
  }
  return worst;
}

}  // namespace

StorageCalibration calibrate_scenario(const ScenarioInputs& in) {
  if (in.spec.dr_mode == DrMode::None) return {};
  std::vector<std::size_t> days = in.spec.calibration_days;
  if (days.empty()) days = {selected_days(in.spec).front()};
  std::vector<DispatchProblem> problems;
  for (std::size_t d : days) problems.push_back(day_problem(in, d));
  return with_context("scenario " + in.spec.name + " calibration",
                      [&] { return calibrate_charge_cap(problems, in.spec.calibration); });
}

DaySummary run_day(const ScenarioInputs& in, const std::vector<double>& charge_caps,
                   std::size_t day, std::ostream* lp_dump) {
  const auto& spec = in.spec;
  return with_context("scenario " + spec.name + " day " + std::to_string(day), [&] {
    DispatchProblem p = day_problem(in, day);
    const std::size_t M = p.model.aggregators.size();
    DaySummary out;
    out.day = day;
    DispatchSolution sol;
    if (spec.dr_mode == DrMode::None) {
      DispatchSession session(p);
      if (lp_dump) session.write_mps(*lp_dump);
      sol = session.solve();
      out.anticipator_objective = sol.objective;
      out.battery_loss.assign(M, 0.0);
      out.loss_gap.assign(M, 0.0);
    } else {
      for (std::size_t m = 0; m < M; ++m) p.model.aggregators[m].charge_cap = charge_caps.at(m);
      DispatchSession session(p);
      const auto lc = calibrate_loss(session, std::vector<bool>(M, true),
                                     resolve_beta(spec.calibration, p.model), spec.calibration);
      if (lp_dump) session.write_mps(*lp_dump);
      out.battery_loss = lc.battery_loss;
      out.loss_gap = lc.gap;
      out.loss_iterations = lc.iterations;
      out.anticipator_objective = lc.solution.objective;
      p.battery_loss = lc.battery_loss;
      if (spec.dr_mode == DrMode::Anticipator) {
        sol = lc.solution;
      } else {
        const auto signal = derive_price_signal(p, spec.price_mode);
        sol = taker_dispatch(p, taker_responses(p, signal));
      }
    }
    out.objective = sol.objective;
    out.metrics = balancing_metrics(sol);
    out.loadability =
        loadability(p.model, sol, spec.loadability.target_region, spec.loadability.step_size,
                    spec.loadability.pickup_region)
            .per_hour;
    DispatchProblem unfrozen = p;
    unfrozen.frozen_flex.clear();
    out.residuals = check_residuals(unfrozen, sol);

    const double dh = p.horizon.step_length;
    for (std::size_t g = 0; g < p.model.generators.size(); ++g) {
      if (!p.model.generators[g].renewable()) continue;
      for (double v : sol.generation[g]) out.renewable_energy += v * dh;
    }
    for (const auto& series : sol.spill) {
      for (double v : series) out.renewable_energy -= v * dh;
    }
    for (std::size_t m = 0; m < M; ++m) {
      const auto& a = p.model.aggregators[m];
      RegionDay r;
      r.region = a.region;
      r.inflexible = a.inflexible_load;
      r.responsive = a.responsive_load;
      r.flexible = sol.flexible_demand[m];
      r.pv = a.pv;
      for (std::size_t h = 0; h < p.horizon.steps; ++h) {
        r.battery.push_back(r.flexible[h] - r.responsive[h] + r.pv[h]);
        out.demand_energy += (r.inflexible[h] + r.flexible[h]) * dh;
      }
      r.soc = soc_trajectory(sol, m);
      r.price = sol.nodal_price[*p.model.region_index(a.region)];
      out.soc_excess = std::max(out.soc_excess, soc_excess(r.soc, a.storage));
      out.regions.push_back(std::move(r));
    }
    out.generation = sol.generation;
    out.line_flows = sol.line_flows;
    return out;
  });
}

// ---- persistence ----------------------------------------------------------

namespace {

json metrics_json(const BalancingMetrics& m) {
  return {{"spilled_energy", m.spilled_energy}, {"spilled_hours", m.spilled_hours},
          {"unserved_energy", m.unserved_energy}, {"unserved_hours", m.unserved_hours},
          {"backup_energy", m.backup_energy},   {"hours", m.hours}};
}

BalancingMetrics metrics_from(const json& j) {
  BalancingMetrics m;
  m.spilled_energy = j.at("spilled_energy").get<double>();
  m.spilled_hours = j.at("spilled_hours").get<std::size_t>();
  m.unserved_energy = j.at("unserved_energy").get<double>();
  m.unserved_hours = j.at("unserved_hours").get<std::size_t>();
  m.backup_energy = j.at("backup_energy").get<double>();
  m.hours = j.at("hours").get<std::size_t>();
  m.spilled_hours_pct = m.hours ? 100.0 * static_cast<double>(m.spilled_hours) / m.hours : 0.0;
  return m;
}

json calibration_json(const std::vector<AggregatorCalibration>& cal) {
  json arr = json::array();
  for (const auto& a : cal) {
    arr.push_back({{"region", a.region},
                   {"charge_cap", a.charge_cap},
                   {"battery_loss", a.battery_loss},
                   {"loss_gap", a.loss_gap},
                   {"alpha", a.alpha},
                   {"soc", a.soc},
                   {"status", to_string(a.status)},
                   {"iterations", a.iterations},
                   {"inner_iterations", a.inner_iterations}});
  }
  return arr;
}

CalibrationStatus parse_status(const std::string& s) {
  for (auto st : {CalibrationStatus::Converged, CalibrationStatus::IterationCap,
                  CalibrationStatus::DegenerateStorage, CalibrationStatus::ViolatedAtZero}) {
    if (s == to_string(st)) return st;
  }
  throw ValidationError("unknown calibration status '" + s + "'");
}

std::vector<AggregatorCalibration> calibration_from(const json& arr) {
  std::vector<AggregatorCalibration> out;
  for (const auto& j : arr) {
    AggregatorCalibration a;
    a.region = j.at("region").get<std::string>();
    a.charge_cap = j.at("charge_cap").get<double>();
    a.battery_loss = j.at("battery_loss").get<double>();
    a.loss_gap = j.at("loss_gap").get<double>();
    a.alpha = j.at("alpha").get<double>();
    a.soc = j.at("soc").get<std::vector<std::vector<double>>>();
    a.status = parse_status(j.at("status").get<std::string>());
    a.iterations = j.at("iterations").get<std::size_t>();
    a.inner_iterations = j.at("inner_iterations").get<std::size_t>();
    out.push_back(std::move(a));
  }
  return out;
}

std::string day_file(std::size_t day) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "day_%03zu.json", day);
  return buf;
}

}  // namespace

std::string to_json(const DaySummary& d) {
  json regions = json::array();
  for (const auto& r : d.regions) {
    regions.push_back({{"region", r.region},
                       {"inflexible", r.inflexible},
                       {"responsive", r.responsive},
                       {"flexible", r.flexible},
                       {"pv", r.pv},
                       {"battery", r.battery},
                       {"soc", r.soc},
                       {"price", r.price}});
  }
  const json j = {{"day", d.day},
                  {"objective", d.objective},
                  {"anticipator_objective", d.anticipator_objective},
                  {"metrics", metrics_json(d.metrics)},
                  {"loadability", d.loadability},
                  {"residuals",
                   {{"nodal_balance", d.residuals.nodal_balance},
                    {"flow_consistency", d.residuals.flow_consistency},
                    {"flow_limit", d.residuals.flow_limit},
                    {"energy_neutrality", d.residuals.energy_neutrality}}},
                  {"battery_loss", d.battery_loss},
                  {"loss_gap", d.loss_gap},
                  {"loss_iterations", d.loss_iterations},
                  {"soc_excess", d.soc_excess},
                  {"renewable_energy", d.renewable_energy},
                  {"demand_energy", d.demand_energy},
                  {"regions", regions},
                  {"generation", d.generation},
                  {"line_flows", d.line_flows}};
  return j.dump() + "\n";
}

DaySummary day_from_json(const std::string& text, const std::string& source) {
  const json j = parse_json(text, source);
  try {
    DaySummary d;
    d.day = j.at("day").get<std::size_t>();
    d.objective = j.at("objective").get<double>();
    d.anticipator_objective = j.at("anticipator_objective").get<double>();
    d.metrics = metrics_from(j.at("metrics"));
    d.loadability = j.at("loadability").get<std::vector<double>>();
    const auto& res = j.at("residuals");
    d.residuals.nodal_balance = res.at("nodal_balance").get<double>();
    d.residuals.flow_consistency = res.at("flow_consistency").get<double>();
    d.residuals.flow_limit = res.at("flow_limit").get<double>();
    d.residuals.energy_neutrality = res.at("energy_neutrality").get<double>();
    d.battery_loss = j.at("battery_loss").get<std::vector<double>>();
    d.loss_gap = j.at("loss_gap").get<std::vector<double>>();
    d.loss_iterations = j.at("loss_iterations").get<std::size_t>();
    d.soc_excess = j.at("soc_excess").get<double>();
    d.renewable_energy = j.at("renewable_energy").get<double>();
    d.demand_energy = j.at("demand_energy").get<double>();
    for (const auto& r : j.at("regions")) {
      RegionDay rd;
      rd.region = r.at("region").get<std::string>();
      rd.inflexible = r.at("inflexible").get<std::vector<double>>();
      rd.responsive = r.at("responsive").get<std::vector<double>>();
      rd.flexible = r.at("flexible").get<std::vector<double>>();
      rd.pv = r.at("pv").get<std::vector<double>>();
      rd.battery = r.at("battery").get<std::vector<double>>();
      rd.soc = r.at("soc").get<std::vector<double>>();
      rd.price = r.at("price").get<std::vector<double>>();
      d.regions.push_back(std::move(rd));
    }
    d.generation = j.at("generation").get<Series2D>();
    d.line_flows = j.at("line_flows").get<Series2D>();
    return d;
  } catch (const json::exception& e) {
    throw ValidationError(source + ": malformed day summary (" + e.what() + ")");
  }
}

namespace {

void aggregate(ScenarioResult& r, const std::string& target, double step) {
  std::sort(r.days.begin(), r.days.end(),
            [](const DaySummary& a, const DaySummary& b) { return a.day < b.day; });
  r.metrics = {};
  r.loadability = {};
  r.loadability.target_region = target;
  r.loadability.step_size = step;
  for (const auto& d : r.days) {
    r.metrics += d.metrics;
    LoadabilityResult l;
    l.per_hour = d.loadability;
    r.loadability.append(l);
  }
}

json scenario_record(const ScenarioSpec& spec, bool has_renewables) {
  return {{"base_dir", spec.base_dir.string()},
          {"spec", json::parse(spec.canonical)},
          {"has_renewables", has_renewables}};
}

}  // namespace

ScenarioResult run_scenario(const ScenarioSpec& spec, const RunOptions& options) {
  auto log = [&](const std::string& msg) {
    if (options.log) options.log(msg);
  };
  const ScenarioInputs in = with_context("scenario " + spec.name, [&] { return prepare(spec); });

  std::vector<std::size_t> days;
  for (std::size_t d : selected_days(spec)) {
    if (!options.day_range || (d >= options.day_range->first && d <= options.day_range->second)) {
      days.push_back(d);
    }
  }

  std::optional<fs::path> dir = options.out_dir;
  if (dir) {
    std::error_code ec;
    fs::create_directories(*dir / "days", ec);
    if (ec) throw IoError("cannot create " + (*dir / "days").string() + ": " + ec.message());
    const fs::path record = *dir / "scenario.json";
    const json mine = scenario_record(spec, in.has_renewables);
    if (fs::exists(record)) {
      const json theirs = parse_json(read_file(record), record.string());
      if (theirs.value("spec", json()) != mine.at("spec")) {
        throw ValidationError(dir->string() + " holds results of a different scenario; use a fresh --out");
      }
    }
    write_atomic(record, mine.dump(2) + "\n");
  }

  ScenarioResult result;
  result.name = spec.name;
  result.dr_mode = spec.dr_mode;
  result.has_renewables = in.has_renewables;

  const fs::path cal_file = dir ? *dir / "calibration.json" : fs::path();
  if (dir && fs::exists(cal_file)) {
    result.calibration = calibration_from(parse_json(read_file(cal_file), cal_file.string()));
  } else {
    log(spec.name + ": calibrating charge caps");
    auto cal = calibrate_scenario(in);
    result.calibration = calibration_from(calibration_json(cal.aggregators));
    if (dir) write_atomic(cal_file, calibration_json(result.calibration).dump() + "\n");
  }
  std::vector<double> caps(in.model.aggregators.size(), 0.0);
  for (const auto& a : result.calibration) {
    if (const auto m = in.model.aggregator_index(a.region)) caps[*m] = a.charge_cap;
  }

  std::vector<std::optional<DaySummary>> done(days.size());
  std::vector<std::exception_ptr> errors(days.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next++;
      if (i >= days.size()) return;
      try {
        const std::size_t d = days[i];
        const fs::path file = dir ? *dir / "days" / day_file(d) : fs::path();
        if (dir && fs::exists(file)) {
          done[i] = day_from_json(read_file(file), file.string());
          continue;
        }
        std::ostringstream mps;
        const std::string text = to_json(run_day(in, caps, d, options.dump_lp ? &mps : nullptr));
        if (dir) {
          if (options.dump_lp) {
            fs::create_directories(*dir / "lp");
            write_atomic(*dir / "lp" / (day_file(d).substr(0, 7) + ".mps"), mps.str());
          }
          write_atomic(file, text);
        }
        // Always read back what was written so fresh and resumed runs agree bit for bit.
        done[i] = day_from_json(text, spec.name);
        if (d % 30 == 0) {
          std::lock_guard lock(log_mutex);
          log(spec.name + ": day " + std::to_string(d));
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(options.parallel, days.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (auto& d : done) result.days.push_back(std::move(*d));
  aggregate(result, spec.loadability.target_region, spec.loadability.step_size);
  return result;
}

namespace {

json run_record(const fs::path& dir) {
  const fs::path record = dir / "scenario.json";
  if (!fs::exists(record)) throw IoError(dir.string() + " is not a run directory (no scenario.json)");
  const json rec = parse_json(read_file(record), record.string());
  if (!rec.is_object() || !rec.contains("spec") || !rec.contains("base_dir")) {
    throw ValidationError(record.string() + ": malformed run record");
  }
  return rec;
}

}  // namespace

ScenarioSpec load_run_spec(const fs::path& dir) {
  const json rec = run_record(dir);
  return parse_scenario(rec.at("spec").dump(), rec.at("base_dir").get<std::string>(),
                        (dir / "scenario.json").string());
}

ScenarioResult load_result(const fs::path& dir) {
  const json rec = run_record(dir);
  const auto spec = load_run_spec(dir);
  ScenarioResult r;
  r.name = spec.name;
  r.dr_mode = spec.dr_mode;
  r.has_renewables = rec.value("has_renewables", false);
  const fs::path cal = dir / "calibration.json";
  if (fs::exists(cal)) r.calibration = calibration_from(parse_json(read_file(cal), cal.string()));
  std::vector<fs::path> files;
  if (fs::exists(dir / "days")) {
    for (const auto& e : fs::directory_iterator(dir / "days")) {
      if (e.path().extension() == ".json") files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) r.days.push_back(day_from_json(read_file(f), f.string()));
  aggregate(r, spec.loadability.target_region, spec.loadability.step_size);
  return r;
}

LoadabilityResult rerun_loadability(const ScenarioInputs& in, const std::vector<DaySummary>& days,
                                    const LoadabilitySpec& spec) {
  LoadabilityResult total;
  total.target_region = spec.target_region;
  total.step_size = spec.step_size;
  for (const auto& d : days) {
    const auto p = day_problem(in, d.day);
    DispatchSolution s;
    s.horizon = p.horizon;
    s.aggregators = p.model.aggregators;
    for (const auto& r : d.regions) s.flexible_demand.push_back(r.flexible);
    s.generation = d.generation;
    s.line_flows = d.line_flows;
    total.append(loadability(p.model, s, spec.target_region, spec.step_size, spec.pickup_region));
  }
  return total;
}

}  // namespace drsim
