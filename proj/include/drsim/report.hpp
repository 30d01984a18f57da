#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "drsim/scenario.hpp"

namespace drsim {

struct TableOutput {
  std::string text;
  std::string csv;
};

/// One row per result, in the order given. Energies in TWh, loadability in
/// GW, two decimals; spill columns are "-" for scenarios without renewables.
TableOutput render_table(const std::vector<ScenarioResult>& results);

enum class Format { Csv, Txt, Svg };

Format parse_format(const std::string& text);

struct ReportSpec {
  std::vector<std::string> scenarios;  // empty: all
  std::vector<std::string> series;
  std::set<Format> formats{Format::Csv, Format::Txt};
  std::optional<std::pair<std::size_t, std::size_t>> day_range;  // inclusive
};

void check_report_spec(const ReportSpec& spec);

// demand, inflexible, responsive, flexible_demand, pv, battery_power, soc, price, loadability
const std::vector<std::string>& series_names();

struct SeriesTable {
  std::string name;
  std::string unit;
  std::vector<std::string> columns;
  std::vector<std::pair<std::size_t, std::size_t>> index;  // (day, step) per row
  std::vector<std::vector<double>> rows;
};

// One column per region (a single column for loadability).
SeriesTable extract_series(const ScenarioResult& result, const std::string& series,
                           const std::optional<std::pair<std::size_t, std::size_t>>& days = {});

// The same series for one region across several results, one column each.
SeriesTable overlay(const std::vector<ScenarioResult>& results, const std::string& series,
                    const std::string& region,
                    const std::optional<std::pair<std::size_t, std::size_t>>& days = {});

std::string series_csv(const SeriesTable& table);
std::string series_svg(const SeriesTable& table, const std::string& title);

// Writes <scenario>_<series>.csv / .svg for every requested series plus a
// combined <scenario>_series.csv. Returns the files written.
std::vector<std::filesystem::path> render_series(const ScenarioResult& result,
                                                 const ReportSpec& spec,
                                                 const std::filesystem::path& dir);

// metrics.csv, loadability.csv, profiles/<region>.csv, report.txt, calibration.csv
void write_run_outputs(const ScenarioResult& result, const std::filesystem::path& dir);

// Top-level report.txt and metrics.csv for a batch.
void write_batch_outputs(const std::vector<ScenarioResult>& results, const std::filesystem::path& dir);

}  // namespace drsim
