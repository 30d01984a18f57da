#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <filesystem>
#include <iostream>
#include <string>

#include "drsim/errors.hpp"
#include "drsim/report.hpp"
#include "drsim/scenario.hpp"

namespace fs = std::filesystem;
using namespace drsim;

namespace {

std::optional<std::pair<std::size_t, std::size_t>> parse_range(const std::string& text) {
  if (text.empty()) return std::nullopt;
  const auto dots = text.find("..");
  try {
    if (dots == std::string::npos) {
      const std::size_t d = std::stoul(text);
      return std::pair{d, d};
    }
    const std::size_t a = std::stoul(text.substr(0, dots));
    const std::size_t b = std::stoul(text.substr(dots + 2));
    if (b < a) throw std::invalid_argument(text);
    return std::pair{a, b};
  } catch (const std::exception&) {
    throw ValidationError("--days expects a..b, got '" + text + "'");
  }
}

std::vector<std::string> split(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

void log_line(const std::string& msg) { std::cerr << msg << std::endl; }

fs::path scenario_dir(const fs::path& out, const std::vector<ScenarioSpec>& specs,
                      const ScenarioSpec& s) {
  return specs.size() == 1 ? out : out / s.name;
}

int cmd_run(const std::string& file, const fs::path& out, const std::string& days,
            std::size_t parallel, bool dump_lp, const std::string& price_mode) {
  auto specs = load_scenarios(file);
  if (!price_mode.empty()) {
    const auto mode = parse_price_mode(price_mode);
    for (auto& s : specs) set_price_mode(s, mode);
  }
  RunOptions opt;
  opt.day_range = parse_range(days);
  opt.parallel = parallel;
  opt.dump_lp = dump_lp;
  opt.log = log_line;
  std::vector<ScenarioResult> results;
  for (const auto& s : specs) {
    opt.out_dir = scenario_dir(out, specs, s);
    results.push_back(run_scenario(s, opt));
    write_run_outputs(results.back(), *opt.out_dir);
  }
  if (specs.size() > 1) write_batch_outputs(results, out);
  std::cout << render_table(results).text;
  return 0;
}

int cmd_calibrate(const std::string& file, const fs::path& out) {
  const auto specs = load_scenarios(file);
  for (const auto& s : specs) {
    const auto dir = scenario_dir(out, specs, s);
    fs::create_directories(dir);
    log_line(s.name + ": calibrating charge caps");
    const auto cal = calibrate_scenario(prepare(s));
    std::ofstream csv(dir / "calibration.csv");
    if (!csv) throw IoError("cannot write " + (dir / "calibration.csv").string());
    write_calibration_csv(csv, cal);
    std::cout << s.name << "\n";
    write_calibration_csv(std::cout, cal);
  }
  return 0;
}

int cmd_loadability(const fs::path& run, const std::string& region, double step,
                    const std::string& pickup) {
  const auto spec = load_run_spec(run);
  const auto result = load_result(run);
  LoadabilitySpec ls = spec.loadability;
  if (!region.empty()) ls.target_region = region;
  if (step > 0) ls.step_size = step;
  else if (step != 0) throw ValidationError("--step must be positive");
  if (!pickup.empty()) ls.pickup_region = pickup;
  const auto l = rerun_loadability(prepare(spec), result.days, ls);
  std::string csv = "day,step,loadability_mw\n";
  char buf[64];
  std::size_t i = 0;
  for (const auto& d : result.days) {
    for (std::size_t h = 0; h < d.loadability.size(); ++h, ++i) {
      std::snprintf(buf, sizeof buf, "%.10g", l.per_hour[i]);
      csv += std::to_string(d.day) + "," + std::to_string(h) + "," + buf + "\n";
    }
  }
  const fs::path file = run / ("loadability_" + ls.target_region + ".csv");
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << csv;
  std::printf("%s average loadability: %.2f GW over %zu steps\n", ls.target_region.c_str(),
              l.average / 1e3, l.per_hour.size());
  return 0;
}

int cmd_report(const std::vector<std::string>& runs, const fs::path& out,
               const std::string& scenarios, const std::string& series, const std::string& formats,
               const std::string& days, const std::string& overlay_region) {
  ReportSpec spec;
  spec.scenarios = split(scenarios);
  spec.series = split(series);
  spec.formats.clear();
  for (const auto& f : split(formats)) spec.formats.insert(parse_format(f));
  spec.day_range = parse_range(days);
  check_report_spec(spec);

  std::vector<ScenarioResult> results;
  for (const auto& r : runs) {
    const fs::path dir(r);
    if (fs::exists(dir / "scenario.json")) {
      results.push_back(load_result(dir));
      continue;
    }
    // A batch directory: every subdirectory holding a run, in name order.
    std::vector<fs::path> subs;
    if (fs::is_directory(dir)) {
      for (const auto& e : fs::directory_iterator(dir)) {
        if (fs::exists(e.path() / "scenario.json")) subs.push_back(e.path());
      }
    }
    if (subs.empty()) throw IoError(dir.string() + " holds no run results");
    std::sort(subs.begin(), subs.end());
    for (const auto& s : subs) results.push_back(load_result(s));
  }
  if (!spec.scenarios.empty()) {
    std::vector<ScenarioResult> picked;
    for (const auto& name : spec.scenarios) {
      const auto it = std::find_if(results.begin(), results.end(),
                                   [&](const ScenarioResult& r) { return r.name == name; });
      if (it == results.end()) throw ValidationError("no result for scenario " + name);
      picked.push_back(*it);
    }
    results = std::move(picked);
  }
  if (results.empty()) throw ValidationError("report needs at least one scenario");
  fs::create_directories(out);
  const auto table = render_table(results);
  auto write = [](const fs::path& f, const std::string& text) {
    std::ofstream o(f, std::ios::binary);
    if (!o) throw IoError("cannot write " + f.string());
    o << text;
  };
  if (spec.formats.count(Format::Txt)) write(out / "report.txt", table.text);
  if (spec.formats.count(Format::Csv)) write(out / "metrics.csv", table.csv);
  for (const auto& r : results) render_series(r, spec, out);
  if (!overlay_region.empty()) {
    for (const auto& s : spec.series) {
      const auto t = overlay(results, s, overlay_region, spec.day_range);
      if (spec.formats.count(Format::Csv)) write(out / ("overlay_" + t.name + ".csv"), series_csv(t));
      if (spec.formats.count(Format::Svg)) {
        write(out / ("overlay_" + t.name + ".svg"), series_svg(t, s + " in " + overlay_region));
      }
    }
  }
  std::cout << table.text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dispatch simulator with aggregated demand response"};
  app.require_subcommand(1);

  std::string scenario, days, price_mode, run_dir, region, pickup, scenarios, series, formats = "csv,txt",
                                                                                   overlay_region;
  std::string out;
  std::size_t parallel = 1;
  bool dump_lp = false;
  double step = 0;
  std::vector<std::string> runs;

  auto* run = app.add_subcommand("run", "Run one scenario or a batch over the selected days");
  run->add_option("--scenario", scenario, "scenario or batch file")->required();
  run->add_option("--out", out, "output directory")->required();
  run->add_option("--days", days, "inclusive day range a..b");
  run->add_option("--parallel", parallel, "worker threads")->check(CLI::PositiveNumber);
  run->add_flag("--dump-lp", dump_lp, "write each day's LP in MPS format");
  run->add_option("--price-mode", price_mode, "price signal for takers")
      ->check(CLI::IsMember({"nodal", "system"}));

  auto* cal = app.add_subcommand("calibrate", "Calibrate charge caps only");
  cal->add_option("--scenario", scenario, "scenario or batch file")->required();
  cal->add_option("--out", out, "output directory")->required();

  auto* load = app.add_subcommand("loadability", "Rerun the loadability sweep on a finished run");
  load->add_option("--run", run_dir, "run directory")->required();
  load->add_option("--region", region, "region whose load is raised");
  load->add_option("--step", step, "step size in MW");
  load->add_option("--pickup", pickup, "region whose generators pick up the load");

  auto* rep = app.add_subcommand("report", "Tables and series from finished runs");
  rep->add_option("--runs", runs, "run or batch directories")->required();
  rep->add_option("--out", out, "output directory")->required();
  rep->add_option("--scenarios", scenarios, "comma separated scenario names");
  rep->add_option("--series", series, "comma separated series names");
  rep->add_option("--format", formats, "comma separated: csv, txt, svg");
  rep->add_option("--days", days, "inclusive day range a..b");
  rep->add_option("--overlay", overlay_region, "overlay the series of all scenarios for this region");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*run) return cmd_run(scenario, out, days, parallel, dump_lp, price_mode);
    if (*cal) return cmd_calibrate(scenario, out);
    if (*load) return cmd_loadability(run_dir, region, step, pickup);
    if (*rep) return cmd_report(runs, out, scenarios, series, formats, days, overlay_region);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
