// Writes the synthetic four-region fixture year: network, batch of the eight
// scenarios, and hourly demand / PV / wind / CSP traces. Deterministic for a
// given seed.
#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kDays = 365;
constexpr int kHours = 24;
constexpr double kPi = 3.14159265358979323846;

struct RegionShape {
  std::string id;
  double mean_mw;
  double latitude_swing;  // hours of daylength swing across the year
};

const std::vector<RegionShape> kRegions = {
    {"QLD", 6000, 1.2}, {"NSW", 8200, 1.8}, {"VIC", 5500, 2.4}, {"SA", 1400, 2.2}};

// Normal deviates built from mt19937_64 directly so the traces do not depend
// on the standard library's distribution implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : g_(seed) {}
  double uniform() { return (g_() >> 11) * (1.0 / 9007199254740992.0); }
  double normal() {
    double u = uniform();
    while (u <= 0) u = uniform();
    return std::sqrt(-2 * std::log(u)) * std::cos(2 * kPi * uniform());
  }

 private:
  std::mt19937_64 g_;
};

// Midday-peaking weekday shape, mean one.
std::vector<double> daily_shape(double peak_hour) {
  std::vector<double> s(kHours);
  double sum = 0;
  for (int h = 0; h < kHours; ++h) {
    const double t = h + 0.5;
    const double midday = std::exp(-0.5 * std::pow((t - peak_hour) / 3.6, 2));
    s[h] = 0.74 + 0.40 * midday;
    sum += s[h];
  }
  for (auto& v : s) v *= kHours / sum;
  return s;
}

double seasonal(int day) {
  // summer peak in late January, smaller winter peak in July
  return 1 + 0.06 * std::cos(2 * kPi * (day - 25) / 365.0) +
         0.03 * std::cos(4 * kPi * (day - 25) / 365.0);
}

std::vector<double> demand_trace(const RegionShape& r, double peak_hour, Rng& rng) {
  const auto shape = daily_shape(peak_hour);
  std::vector<double> out;
  out.reserve(kDays * kHours);
  double noise = 0;
  for (int d = 0; d < kDays; ++d) {
    const bool weekend = d % 7 == 5 || d % 7 == 6;
    for (int h = 0; h < kHours; ++h) {
      noise = 0.9 * noise + 0.012 * rng.normal();
      out.push_back(r.mean_mw * seasonal(d) * shape[h] * (weekend ? 0.93 : 1.0) * (1 + noise));
    }
  }
  return out;
}

// Clear-sky sinusoid between sunrise and sunset, scaled by a daily cloud draw.
std::vector<double> solar_trace(double swing, double peak, double cloud_lo, Rng& rng) {
  std::vector<double> out;
  out.reserve(kDays * kHours);
  for (int d = 0; d < kDays; ++d) {
    const double daylength = 12 + swing * std::cos(2 * kPi * (d + 10) / 365.0);
    const double rise = 12.5 - daylength / 2;
    const double cloud = cloud_lo + (1 - cloud_lo) * rng.uniform();
    for (int h = 0; h < kHours; ++h) {
      const double x = (h + 0.5 - rise) / daylength;
      out.push_back(x > 0 && x < 1 ? std::min(1.0, peak * cloud * std::sin(kPi * x)) : 0.0);
    }
  }
  return out;
}

// Collector output smoothed by thermal storage: the delivered profile keeps a
// floor through the evening and early night.
std::vector<double> csp_trace(double peak, double floor, Rng& rng) {
  const auto sun = solar_trace(1.2, peak, 0.55, rng);
  std::vector<double> out(sun.size());
  double store = 0;
  for (std::size_t t = 0; t < sun.size(); ++t) {
    const double excess = std::max(0.0, sun[t] - 0.7);
    store = std::min(6.0, store + excess);
    double v = std::min(sun[t], 0.7);
    const double draw = std::min(store, std::max(0.0, floor - v));
    store -= draw;
    out[t] = v + draw;
  }
  return out;
}

std::vector<double> wind_trace(double mean_speed, double diurnal_swing, Rng& rng) {
  std::vector<double> out;
  out.reserve(kDays * kHours);
  double z = 0;
  const double rho = 0.97;
  for (int d = 0; d < kDays; ++d) {
    for (int h = 0; h < kHours; ++h) {
      z = rho * z + std::sqrt(1 - rho * rho) * rng.normal();
      const double diurnal = diurnal_swing * std::cos(2 * kPi * (h - 3) / 24.0);
      const double v = std::max(0.0, mean_speed + 3.2 * z + diurnal);
      double p = 0;
      if (v >= 3 && v < 25) p = std::min(1.0, std::pow((v - 3) / 9.0, 3));
      out.push_back(p);
    }
  }
  return out;
}

void write_series(const fs::path& file, const std::vector<double>& v) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << "step,value\n";
  char buf[64];
  for (std::size_t t = 0; t < v.size(); ++t) {
    std::snprintf(buf, sizeof buf, "%zu,%.4f\n", t, v[t]);
    out << buf;
  }
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / v.size();
}

json generator(const std::string& id, const std::string& region, const std::string& kind,
               double p_max, std::vector<double> prices) {
  return {{"id", id}, {"region", region}, {"kind", kind}, {"p_max", p_max}, {"prices", prices}};
}

json network(double scale, double qld_link, double sa_link) {
  json g = json::array();
  auto add = [&](const std::string& id, const std::string& region, const std::string& kind,
                 double mw, std::vector<double> prices) {
    g.push_back(generator(id, region, kind, std::round(mw * scale), std::move(prices)));
  };
  add("BPS_2", "NSW", "coal", 3200, {28.45, 42.66, 56.90});
  add("EPS_2", "NSW", "gas_turbine", 2400, {69.20, 346.0, 692.0});
  add("MPS_2", "NSW", "coal", 2800, {27.43, 41.15, 54.86});
  add("VPS_2", "NSW", "coal", 2600, {26.40, 39.60, 52.80});
  add("LPS_3", "VIC", "biomass", 2000, {39.50, 59.25, 79.00});
  add("YPS_3", "VIC", "coal", 5000, {21.88, 32.82, 43.76});
  add("CPS_4", "QLD", "coal", 3000, {26.14, 39.21, 52.28});
  add("GPS_4", "QLD", "coal", 2000, {26.14, 39.21, 52.28});
  add("SPS_4", "QLD", "coal", 1600, {32.74, 49.11, 65.48});
  add("TPS_4", "QLD", "gas_turbine", 1800, {73.84, 369.2, 738.4});
  add("NPS_5", "SA", "coal", 800, {30.89, 46.34, 61.78});
  add("PPS_5", "SA", "coal", 1000, {30.89, 46.34, 61.78});
  add("TPS_5", "SA", "gas_turbine", 1200, {69.20, 346.0, 692.0});

  json regions = json::array();
  for (const auto& r : kRegions) regions.push_back({{"id", r.id}});
  json lines = json::array({
      {{"from", "QLD"}, {"to", "NSW"}, {"susceptance", 1.0}, {"flow_max", qld_link}},
      {{"from", "NSW"}, {"to", "VIC"}, {"susceptance", 1.0}, {"flow_max", 1600}},
      {{"from", "VIC"}, {"to", "SA"}, {"susceptance", 1.0}, {"flow_max", sa_link}},
  });
  return {{"regions", regions}, {"reference_region", "NSW"}, {"lines", lines}, {"generators", g}};
}

json batch(const json& calibration, const std::vector<int>& calibration_days, int csp_shift) {
  json profiles;
  for (const auto& r : kRegions) {
    profiles[r.id] = {{"demand", "data/demand_" + r.id + ".csv"}, {"pv", "data/pv_" + r.id + ".csv"}};
  }
  const json subs = json::array({
      {{"replace", "NPS_5"}, {"id", "WF_5"}, {"region", "SA"}, {"kind", "wind"},
       {"capacity_gw", 3.0}, {"trace", "data/wind_SA.csv"}},
      {{"replace", "GPS_4"}, {"id", "CSP1_4"}, {"region", "QLD"}, {"kind", "csp"},
       {"capacity_gw", 4.5}, {"trace", "data/csp_QLD_1.csv"}},
      {{"replace", "SPS_4"}, {"id", "CSP2_4"}, {"region", "QLD"}, {"kind", "csp"},
       {"capacity_gw", 4.5}, {"trace", "data/csp_QLD_2.csv"}},
  });
  json base = {{"network", "network.json"},
               {"profiles", profiles},
               {"responsive_share", 0.6},
               {"substitutions", subs},
               {"csp_shift", csp_shift},
               {"days", "all"},
               {"calibration_days", calibration_days},
               {"calibration", calibration},
               {"loadability", {{"target_region", "QLD"}, {"step_size", 10}}}};
  json scenarios = json::array();
  scenarios.push_back({{"name", "BAU"}, {"substitutions", json::array()}});
  scenarios.push_back({{"name", "CL"}});
  const char* levels[] = {"low", "medium", "high"};
  for (int i = 0; i < 3; ++i) {
    scenarios.push_back({{"name", "PADR" + std::to_string(i + 1)},
                         {"dr_mode", "anticipator"},
                         {"uptake", levels[i]}});
  }
  for (int i = 0; i < 3; ++i) {
    scenarios.push_back(
        {{"name", "PTDR" + std::to_string(i + 1)}, {"dr_mode", "taker"}, {"uptake", levels[i]}});
  }
  return {{"base", base}, {"scenarios", scenarios}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate the synthetic four-region fixture year"};
  std::string out = "fixtures/nem4";
  std::uint64_t seed = 2020;
  double scale = 1.3;
  double epsilon = 5.0;
  double pv_peak = 0.45;
  int csp_shift = 12;
  double peak_hour = 12.5;
  double wind_diurnal = 0.6;
  double qld_link = 1300;
  double sa_link = 900;
  app.add_option("--out", out, "output directory");
  app.add_option("--seed", seed, "random seed");
  app.add_option("--scale", scale, "multiplier on conventional capacities");
  app.add_option("--epsilon", epsilon, "loss search step and tolerance, MWh");
  app.add_option("--pv-peak", pv_peak, "per-unit PV output under a clear sky at noon");
  app.add_option("--csp-shift", csp_shift, "hours of CSP delay written to the batch");
  app.add_option("--peak-hour", peak_hour, "hour of the daily demand peak");
  app.add_option("--wind-diurnal", wind_diurnal, "m/s swing of the daily wind cycle, peaking at 3am");
  app.add_option("--qld-link", qld_link, "QLD-NSW transfer limit, MW");
  app.add_option("--sa-link", sa_link, "VIC-SA transfer limit, MW");
  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path dir(out);
    fs::create_directories(dir / "data");
    Rng rng(seed);
    for (const auto& r : kRegions) {
      const auto demand = demand_trace(r, peak_hour, rng);
      const auto pv = solar_trace(r.latitude_swing, pv_peak, 0.35, rng);
      write_series(dir / "data" / ("demand_" + r.id + ".csv"), demand);
      write_series(dir / "data" / ("pv_" + r.id + ".csv"), pv);
      std::printf("%s demand mean %.0f MW peak %.0f MW, pv cf %.3f\n", r.id.c_str(), mean(demand),
                  *std::max_element(demand.begin(), demand.end()), mean(pv));
    }
    const auto wind = wind_trace(8.2, wind_diurnal, rng);
    write_series(dir / "data" / "wind_SA.csv", wind);
    std::printf("wind cf %.3f\n", mean(wind));
    for (int i = 1; i <= 2; ++i) {
      const auto csp = csp_trace(1.4, 0.4, rng);
      write_series(dir / "data" / ("csp_QLD_" + std::to_string(i) + ".csv"), csp);
      std::printf("csp %d cf %.3f\n", i, mean(csp));
    }

    const json calibration = {{"beta", epsilon}, {"epsilon", epsilon}};
    std::vector<int> cal_days;
    for (int m = 0; m < 12; ++m) cal_days.push_back(m * 30 + 14);
    std::ofstream(dir / "network.json") << network(scale, qld_link, sa_link).dump(2) << "\n";
    std::ofstream(dir / "batch.json") << batch(calibration, cal_days, csp_shift).dump(2) << "\n";
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  return 0;
}
