#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "drsim/analysis.hpp"
#include "drsim/calibration.hpp"
#include "drsim/dispatch.hpp"
#include "drsim/price_taker.hpp"

namespace drsim {

enum class DrMode { None, Anticipator, Taker };
enum class Uptake { None, Low, Medium, High };

const char* to_string(DrMode mode);
const char* to_string(Uptake uptake);
DrMode parse_dr_mode(const std::string& text);
Uptake parse_uptake(const std::string& text);

// Aggregated storage and PV for one region at one uptake level. MW / MWh.
struct UptakeRow {
  double soc_min = 0.0;
  double soc_max = 0.0;
  double charge_cap = 0.0;  // published cap, informational only; calibration sets the real one
  double pv_capacity = 0.0;
};

// Built-in rows for QLD, NSW, VIC and SA (inputs given in GWh / GW).
const std::map<std::string, std::map<Uptake, UptakeRow>>& default_uptake_table();

struct Substitution {
  std::string replace;    // generator id to remove
  Generator with;         // single zero-price block of the full capacity
  std::string trace;      // per-unit availability CSV, step,value
};

// Where one region's yearly series come from. Either a `step,value` total
// demand file plus a per-unit PV file, or one wide `step,P_L,P_U,P_PV` file.
struct ProfileSource {
  std::string demand;
  std::string pv;
  std::string wide;
};

struct LoadabilitySpec {
  std::string target_region = "QLD";
  std::optional<std::string> pickup_region;
  double step_size = kDefaultLoadabilityStep;
};

struct ScenarioSpec {
  std::string name;
  std::filesystem::path base_dir;  // relative paths resolve against this
  std::string network;             // network file
  std::map<std::string, ProfileSource> profiles;
  double responsive_share = 0.6;
  std::vector<Substitution> substitutions;
  DrMode dr_mode = DrMode::None;
  Uptake uptake = Uptake::None;
  std::map<std::string, std::map<Uptake, UptakeRow>> uptake_table;
  double round_trip_efficiency = 0.9;
  double flex_min = 0.0;  // MW, every step
  int csp_shift = 0;      // hours of delay applied to CSP traces
  Horizon horizon;
  std::size_t year_days = 365;
  std::vector<std::size_t> days;              // empty: the whole year
  std::vector<std::size_t> calibration_days;  // empty: first selected day
  CalibrationConfig calibration;
  PriceMode price_mode = PriceMode::Nodal;
  LoadabilitySpec loadability;
  double value_of_lost_load = kDefaultValueOfLostLoad;
  std::string canonical;  // normalized JSON of the spec, used to guard resumes
};

// Parses one scenario object. `base` is merged under it first (batch files).
ScenarioSpec parse_scenario(const std::string& json_text, const std::filesystem::path& base_dir,
                            const std::string& source = "scenario");

// Overrides the price mode and keeps the canonical text in step.
void set_price_mode(ScenarioSpec& spec, PriceMode mode);

// Reads a scenario file or a batch file ({"base": {...}, "scenarios": [...]}).
std::vector<ScenarioSpec> load_scenarios(const std::filesystem::path& file);

NetworkModel load_network(const std::filesystem::path& file);

// `step,value` series with exactly `expected` rows.
std::vector<double> read_series_csv(const std::filesystem::path& file, std::size_t expected);

struct YearProfiles {
  std::size_t steps = 0;
  std::map<std::string, std::vector<double>> inflexible, responsive, pv;  // by region
};

YearProfiles load_profiles(const ScenarioSpec& spec, const NetworkModel& base);

// Removes replaced generators, inserts the renewables with their year-long
// availability traces (CSP delayed by csp_shift, circularly).
NetworkModel apply_substitutions(const NetworkModel& base, const ScenarioSpec& spec);

std::vector<double> shift_circular(const std::vector<double>& trace, int delay);

// Everything needed to build any day of the scenario, loaded once.
struct ScenarioInputs {
  ScenarioSpec spec;
  NetworkModel model;  // year-long availabilities, aggregator series empty
  YearProfiles profiles;
  bool has_renewables = false;
};

ScenarioInputs prepare(const ScenarioSpec& spec);

// Dispatch problem of one day, before calibration (charge caps zero, losses zero).
DispatchProblem day_problem(const ScenarioInputs& in, std::size_t day);

struct RegionDay {
  std::string region;
  std::vector<double> inflexible, responsive, flexible, pv, battery, soc, price;
};

struct DaySummary {
  std::size_t day = 0;
  double objective = 0.0;              // $ of the reported dispatch
  double anticipator_objective = 0.0;  // $; equals objective outside taker mode
  BalancingMetrics metrics;
  std::vector<double> loadability;  // MW per step
  BalanceResiduals residuals;
  std::vector<double> battery_loss;  // MWh per aggregator
  std::vector<double> loss_gap;      // MWh per aggregator (anticipator search)
  std::size_t loss_iterations = 0;
  double soc_excess = 0.0;        // MWh, worst excursion outside the SOC window
  double renewable_energy = 0.0;  // MWh delivered by wind and CSP, spill removed
  double demand_energy = 0.0;     // MWh of nett demand
  std::vector<RegionDay> regions;
  Series2D generation;  // [generator][step], kept so loadability can be rerun
  Series2D line_flows;  // [line][step]
};

struct ScenarioResult {
  std::string name;
  DrMode dr_mode = DrMode::None;
  bool has_renewables = false;
  BalancingMetrics metrics;
  LoadabilityResult loadability;
  std::vector<DaySummary> days;
  std::vector<AggregatorCalibration> calibration;
};

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;  // persistence and resume when set
  std::optional<std::pair<std::size_t, std::size_t>> day_range;  // inclusive
  std::size_t parallel = 1;
  bool dump_lp = false;
  std::function<void(const std::string&)> log;
};

// Joint charge-cap calibration on the scenario's calibration days.
StorageCalibration calibrate_scenario(const ScenarioInputs& in);

DaySummary run_day(const ScenarioInputs& in, const std::vector<double>& charge_caps,
                   std::size_t day, std::ostream* lp_dump = nullptr);

ScenarioResult run_scenario(const ScenarioSpec& spec, const RunOptions& options = {});

// Rebuilds a result from a run directory without solving anything.
ScenarioResult load_result(const std::filesystem::path& dir);
ScenarioSpec load_run_spec(const std::filesystem::path& dir);

// Reruns the loadability sweep on persisted days.
LoadabilityResult rerun_loadability(const ScenarioInputs& in, const std::vector<DaySummary>& days,
                                    const LoadabilitySpec& spec);

std::string to_json(const DaySummary& day);
DaySummary day_from_json(const std::string& text, const std::string& source);

}  // namespace drsim
