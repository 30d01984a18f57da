#include "drsim/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "drsim/errors.hpp"

namespace drsim {

namespace fs = std::filesystem;

namespace {

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_file(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << text;
  if (!out.flush()) throw IoError("write failed for " + file.string());
}

bool in_range(std::size_t day, const std::optional<std::pair<std::size_t, std::size_t>>& days) {
  return !days || (day >= days->first && day <= days->second);
}

const std::vector<double>& pick(const RegionDay& r, const std::string& series) {
  if (series == "inflexible") return r.inflexible;
  if (series == "responsive") return r.responsive;
  if (series == "flexible_demand") return r.flexible;
  if (series == "pv") return r.pv;
  if (series == "battery_power") return r.battery;
  if (series == "soc") return r.soc;
  return r.price;
}

std::string unit_of(const std::string& series) {
  if (series == "soc") return "MWh";
  if (series == "price") return "$/MWh";
  return "MW";
}

void check_series(const std::string& series) {
  const auto& names = series_names();
  if (std::find(names.begin(), names.end(), series) == names.end()) {
    std::string all;
    for (const auto& n : names) all += (all.empty() ? "" : ", ") + n;
    throw ValidationError("unknown series '" + series + "' (expected one of " + all + ")");
  }
}

}  // namespace

TableOutput render_table(const std::vector<ScenarioResult>& results) {
  static const std::vector<std::string> header = {"scenario",      "spilled_energy",
                                                  "spilled_hours_pct", "unserved_hours",
                                                  "backup_energy", "avg_loadability"};
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : results) {
    const auto& m = r.metrics;
    rows.push_back({r.name, r.has_renewables ? fixed2(m.spilled_energy / 1e6) : "-",
                    r.has_renewables ? fixed2(m.spilled_hours_pct) : "-",
                    fixed2(static_cast<double>(m.unserved_hours)), fixed2(m.backup_energy / 1e6),
                    fixed2(r.loadability.average / 1e3)});
  }
  TableOutput out;
  for (std::size_t c = 0; c < header.size(); ++c) out.csv += (c ? "," : "") + header[c];
  out.csv += "\n";
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out.csv += (c ? "," : "") + row[c];
    out.csv += "\n";
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : rows) width[c] = std::max(width[c], row[c].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string pad(width[c] - cells[c].size(), ' ');
      // Names left aligned, numbers right aligned.
      s += c == 0 ? cells[c] + pad : "  " + pad + cells[c];
    }
    return s + "\n";
  };
  out.text += line(header);
  std::size_t total = 0;
  for (auto w : width) total += w + 2;
  out.text += std::string(total - 2, '-') + "\n";
  for (const auto& row : rows) out.text += line(row);
  out.text += "units: energy TWh, loadability GW\n";
  return out;
}

Format parse_format(const std::string& text) {
  if (text == "csv") return Format::Csv;
  if (text == "txt") return Format::Txt;
  if (text == "svg") return Format::Svg;
  throw ValidationError("unknown format '" + text + "' (expected csv, txt or svg)");
}

void check_report_spec(const ReportSpec& spec) {
  if (spec.formats.empty()) throw ValidationError("report needs at least one output format");
  for (const auto& s : spec.series) check_series(s);
}

const std::vector<std::string>& series_names() {
  static const std::vector<std::string> names = {"demand",        "inflexible", "responsive",
                                                 "flexible_demand", "pv",       "battery_power",
                                                 "soc",           "price",      "loadability"};
  return names;
}

SeriesTable extract_series(const ScenarioResult& result, const std::string& series,
                           const std::optional<std::pair<std::size_t, std::size_t>>& days) {
  check_series(series);
  SeriesTable t;
  t.name = series;
  t.unit = unit_of(series);
  if (series == "loadability") {
    t.columns = {result.loadability.target_region};
  } else if (!result.days.empty()) {
    for (const auto& r : result.days.front().regions) t.columns.push_back(r.region);
  }
  for (const auto& d : result.days) {
    if (!in_range(d.day, days)) continue;
    const std::size_t H = series == "loadability" ? d.loadability.size()
                                                  : (d.regions.empty() ? 0 : d.regions[0].inflexible.size());
    for (std::size_t h = 0; h < H; ++h) {
      std::vector<double> row;
      if (series == "loadability") {
        row.push_back(d.loadability[h]);
      } else {
        for (const auto& r : d.regions) {
          row.push_back(series == "demand" ? r.inflexible[h] + r.flexible[h] : pick(r, series)[h]);
        }
      }
      t.index.emplace_back(d.day, h);
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

SeriesTable overlay(const std::vector<ScenarioResult>& results, const std::string& series,
                    const std::string& region,
                    const std::optional<std::pair<std::size_t, std::size_t>>& days) {
  SeriesTable out;
  out.name = series + "_" + region;
  out.unit = unit_of(series);
  for (std::size_t k = 0; k < results.size(); ++k) {
    const auto t = extract_series(results[k], series, days);
    const auto col = std::find(t.columns.begin(), t.columns.end(), region);
    if (col == t.columns.end()) {
      throw ValidationError("result " + results[k].name + " has no region " + region);
    }
    const std::size_t c = col - t.columns.begin();
    out.columns.push_back(results[k].name);
    if (k == 0) {
      out.index = t.index;
      out.rows.assign(t.rows.size(), {});
    } else if (t.index != out.index) {
      throw ValidationError("results " + results[0].name + " and " + results[k].name +
                            " cover different days");
    }
    for (std::size_t i = 0; i < t.rows.size(); ++i) out.rows[i].push_back(t.rows[i][c]);
  }
  return out;
}

std::string series_csv(const SeriesTable& t) {
  std::string s = "day,step";
  for (const auto& c : t.columns) s += "," + c;
  s += "\n";
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    s += std::to_string(t.index[i].first) + "," + std::to_string(t.index[i].second);
    for (double v : t.rows[i]) s += "," + full(v);
    s += "\n";
  }
  return s;
}

std::string series_svg(const SeriesTable& t, const std::string& title) {
  const double W = 900, H = 420, left = 80, right = 160, top = 40, bottom = 60;
  const double pw = W - left - right, ph = H - top - bottom;
  double lo = 0, hi = 1;
  bool first = true;
  for (const auto& row : t.rows) {
    for (double v : row) {
      if (first) lo = hi = v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      first = false;
    }
  }
  if (hi - lo < 1e-9) {
    hi = lo + 1;
    lo -= 1;
  }
  const std::size_t n = t.rows.size();
  auto x = [&](std::size_t i) { return left + (n > 1 ? pw * i / (n - 1.0) : pw / 2); };
  auto y = [&](double v) { return top + ph * (hi - v) / (hi - lo); };
  static const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  char buf[256];
  std::ostringstream s;
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                "font-family=\"sans-serif\" font-size=\"12\">\n",
                W, H);
  s << buf;
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"24\" font-size=\"15\">", left);
  s << buf << title << "</text>\n";
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n"
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                left, top, left, top + ph, left, top + ph, left + pw, top + ph);
  s << buf;
  for (int k = 0; k <= 5; ++k) {
    const double v = lo + (hi - lo) * k / 5.0;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>"
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.4g</text>\n",
                  left, y(v), left + pw, y(v), left - 6, y(v) + 4, v);
    s << buf;
  }
  const std::size_t every = n > 24 * 8 ? 24 * ((n / 24 + 7) / 8) : (n > 24 ? 24 : 6);
  for (std::size_t i = 0; i < n; i += every) {
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%zu</text>\n",
                  x(i), top + ph + 18, i);
    s << buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">time (h)</text>\n"
                "<text x=\"16\" y=\"%.1f\" text-anchor=\"middle\" transform=\"rotate(-90 16 %.1f)\">",
                left + pw / 2, H - 16, top + ph / 2, top + ph / 2);
  s << buf << t.name << " (" << t.unit << ")</text>\n";
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    const char* colour = colours[c % 8];
    s << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < n; ++i) {
      std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", i ? " " : "", x(i), y(t.rows[i][c]));
      s << buf;
    }
    s << "\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\" stroke-width=\"3\"/>"
                  "<text x=\"%.1f\" y=\"%.1f\">",
                  left + pw + 12, top + 10 + 18.0 * c, left + pw + 32, top + 10 + 18.0 * c, colour,
                  left + pw + 38, top + 14 + 18.0 * c);
    s << buf << t.columns[c] << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::vector<fs::path> render_series(const ScenarioResult& result, const ReportSpec& spec,
                                    const fs::path& dir) {
  check_report_spec(spec);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<fs::path> written;
  std::vector<SeriesTable> tables;
  for (const auto& name : spec.series) {
    tables.push_back(extract_series(result, name, spec.day_range));
    const auto& t = tables.back();
    if (spec.formats.count(Format::Csv)) {
      written.push_back(dir / (result.name + "_" + name + ".csv"));
      write_file(written.back(), series_csv(t));
    }
    if (spec.formats.count(Format::Svg)) {
      written.push_back(dir / (result.name + "_" + name + ".svg"));
      write_file(written.back(), series_svg(t, result.name + ": " + name));
    }
  }
  if (spec.formats.count(Format::Csv)) {
    std::string s = "day,step";
    for (const auto& t : tables) {
      for (const auto& c : t.columns) s += "," + t.name + "_" + c;
    }
    s += "\n";
    if (!tables.empty()) {
      for (std::size_t i = 0; i < tables[0].rows.size(); ++i) {
        s += std::to_string(tables[0].index[i].first) + "," + std::to_string(tables[0].index[i].second);
        for (const auto& t : tables) {
          for (double v : t.rows[i]) s += "," + full(v);
        }
        s += "\n";
      }
    }
    written.push_back(dir / (result.name + "_series.csv"));
    write_file(written.back(), s);
  }
  return written;
}

namespace {

std::string run_report(const ScenarioResult& r) {
  std::ostringstream s;
  s << render_table({r}).text << "\n";
  char buf[256];
  double unserved = 0, res = 0, demand = 0, cost = 0, anticipator = 0;
  BalanceResiduals worst;
  double soc_excess = 0;
  std::size_t soc_days = 0;
  for (const auto& d : r.days) {
    unserved += d.metrics.unserved_energy;
    res += d.renewable_energy;
    demand += d.demand_energy;
    cost += d.objective;
    anticipator += d.anticipator_objective;
    worst.nodal_balance = std::max(worst.nodal_balance, d.residuals.nodal_balance);
    worst.flow_consistency = std::max(worst.flow_consistency, d.residuals.flow_consistency);
    worst.energy_neutrality = std::max(worst.energy_neutrality, d.residuals.energy_neutrality);
    soc_excess = std::max(soc_excess, d.soc_excess);
    soc_days += d.soc_excess > 1e-6;
  }
  std::snprintf(buf, sizeof buf, "dr_mode: %s\ndays: %zu\n", to_string(r.dr_mode), r.days.size());
  s << buf;
  std::snprintf(buf, sizeof buf, "dispatch cost ($): %.2f\n", cost);
  s << buf;
  if (r.dr_mode == DrMode::Taker) {
    std::snprintf(buf, sizeof buf, "anticipator cost on the same days ($): %.2f\n", anticipator);
    s << buf;
  }
  std::snprintf(buf, sizeof buf, "unserved energy (MWh): %.3f\nrenewable share of demand (%%): %.2f\n",
                unserved, demand > 0 ? 100 * res / demand : 0.0);
  s << buf;
  std::snprintf(buf, sizeof buf,
                "max residuals: nodal balance %.3g MW, flow %.3g MW, energy neutrality %.3g MWh\n",
                worst.nodal_balance, worst.flow_consistency, worst.energy_neutrality);
  s << buf;
  std::snprintf(buf, sizeof buf, "days with SOC outside limits: %zu (worst %.3f MWh)\n", soc_days,
                soc_excess);
  s << buf;
  for (const auto& a : r.calibration) {
    std::snprintf(buf, sizeof buf, "charge cap %s: %.3f MW (%s, %zu steps)\n", a.region.c_str(),
                  a.charge_cap, to_string(a.status), a.iterations);
    s << buf;
  }
  return s.str();
}

}  // namespace

void write_run_outputs(const ScenarioResult& r, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "profiles", ec);
  if (ec) throw IoError("cannot create " + (dir / "profiles").string() + ": " + ec.message());
  write_file(dir / "metrics.csv", render_table({r}).csv);
  write_file(dir / "report.txt", run_report(r));

  std::string load = "day,step,loadability_mw\n";
  for (const auto& d : r.days) {
    for (std::size_t h = 0; h < d.loadability.size(); ++h) {
      load += std::to_string(d.day) + "," + std::to_string(h) + "," + full(d.loadability[h]) + "\n";
    }
  }
  write_file(dir / "loadability.csv", load);

  if (!r.days.empty()) {
    for (std::size_t k = 0; k < r.days.front().regions.size(); ++k) {
      const std::string region = r.days.front().regions[k].region;
      std::string s = "day,step,inflexible,responsive,flexible,pv,battery,soc,price\n";
      for (const auto& d : r.days) {
        const auto& x = d.regions.at(k);
        for (std::size_t h = 0; h < x.inflexible.size(); ++h) {
          s += std::to_string(d.day) + "," + std::to_string(h);
          for (double v : {x.inflexible[h], x.responsive[h], x.flexible[h], x.pv[h], x.battery[h],
                           x.soc[h], x.price[h]}) {
            s += "," + full(v);
          }
          s += "\n";
        }
      }
      write_file(dir / "profiles" / (region + ".csv"), s);
    }
  }

  StorageCalibration cal;
  cal.aggregators = r.calibration;
  std::ostringstream c;
  write_calibration_csv(c, cal);
  write_file(dir / "calibration.csv", c.str());
}

void write_batch_outputs(const std::vector<ScenarioResult>& results, const fs::path& dir) {
  const auto table = render_table(results);
  write_file(dir / "metrics.csv", table.csv);
  write_file(dir / "report.txt", table.text);
}

}  // namespace drsim
