#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace drsim::testing {

namespace fs = std::filesystem;

inline void write_text(const fs::path& file, const std::string& text) {
  fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  out << text;
}

inline std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_series(const fs::path& file, const std::vector<double>& v) {
  std::string text = "step,value\n";
  char buf[64];
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.4f\n", i, v[i]);
    text += buf;
  }
  write_text(file, text);
}

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = fs::temp_directory_path() / ("drsim_" + tag + "_" + std::to_string(rd()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

// Two regions A (coal, wind) and B (coal, gas turbine) over a short year.
// Midday demand peak, midday PV, wind strongest at night.
inline nlohmann::json write_mini_fixture(const fs::path& dir, std::size_t days = 4) {
  using nlohmann::json;
  const double pi = 3.14159265358979323846;
  const std::size_t n = 24 * days;
  std::vector<double> da(n), db(n), pv(n), wind(n);
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> noise(-0.03, 0.03);
  for (std::size_t t = 0; t < n; ++t) {
    const double h = static_cast<double>(t % 24);
    const double day = 1.0 + 0.05 * static_cast<double>(t / 24 % 3);
    const double shape = 0.8 + 0.35 * std::exp(-0.5 * std::pow((h - 13.0) / 3.5, 2));
    da[t] = 900 * shape * day * (1 + noise(rng));
    db[t] = 1300 * shape * day * (1 + noise(rng));
    pv[t] = std::max(0.0, std::sin(pi * (h - 6.0) / 13.0)) * 0.6;
    wind[t] = 0.5 + 0.4 * std::cos(2 * pi * (h - 3.0) / 24.0);
  }
  write_series(dir / "data/demand_A.csv", da);
  write_series(dir / "data/demand_B.csv", db);
  write_series(dir / "data/pv.csv", pv);
  write_series(dir / "data/wind_A.csv", wind);

  const json network = {
      {"regions", {{{"id", "A"}}, {{"id", "B"}}}},
      {"reference_region", "A"},
      {"lines", {{{"from", "A"}, {"to", "B"}, {"susceptance", 1.0}, {"flow_max", 600.0}}}},
      {"generators",
       {{{"id", "A_coal"}, {"region", "A"}, {"kind", "coal"}, {"p_max", 1100.0}, {"prices", {24.0, 36.0, 48.0}}},
        {{"id", "A_old"}, {"region", "A"}, {"kind", "coal"}, {"p_max", 300.0}, {"prices", {30.0}}},
        {{"id", "B_coal"}, {"region", "B"}, {"kind", "coal"}, {"p_max", 1400.0}, {"prices", {28.0, 42.0, 56.0}}},
        {{"id", "B_gt"}, {"region", "B"}, {"kind", "gas_turbine"}, {"p_max", 600.0}, {"prices", {70.0, 350.0}}}}}};
  write_text(dir / "network.json", network.dump(2));

  const json row_low = {{"soc_gwh", {0.2, 1.4}}, {"charge_cap_gw", 0.1}, {"pv_gw", 0.3}};
  const json row_high = {{"soc_gwh", {0.3, 1.6}}, {"charge_cap_gw", 0.2}, {"pv_gw", 0.5}};
  return {{"network", "network.json"},
          {"profiles",
           {{"A", {{"demand", "data/demand_A.csv"}, {"pv", "data/pv.csv"}}},
            {"B", {{"demand", "data/demand_B.csv"}, {"pv", "data/pv.csv"}}}}},
          {"year_days", days},
          {"responsive_share", 0.6},
          {"substitutions",
           {{{"replace", "A_old"},
             {"id", "A_wind"},
             {"region", "A"},
             {"kind", "wind"},
             {"capacity_mw", 500.0},
             {"trace", "data/wind_A.csv"}}}},
          {"uptake_table",
           {{"A", {{"low", row_low}, {"high", row_high}}}, {"B", {{"low", row_low}, {"high", row_high}}}}},
          {"loadability", {{"target_region", "A"}, {"step_size", 10.0}}},
          {"calibration_days", {0, 2}}};
}

}  // namespace drsim::testing
