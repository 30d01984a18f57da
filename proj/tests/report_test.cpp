#include "drsim/report.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "drsim/errors.hpp"
#include "support/mini_fixture.hpp"

namespace drsim {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;
using testing::read_text;

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string l;
  while (std::getline(ss, l)) out.push_back(l);
  return out;
}

RegionDay region_day(const std::string& id, double scale) {
  RegionDay r;
  r.region = id;
  for (std::size_t h = 0; h < 24; ++h) {
    r.inflexible.push_back(scale * 100);
    r.responsive.push_back(scale * 50);
    r.flexible.push_back(scale * 50);
    r.pv.push_back(0.0);
    r.battery.push_back(0.0);
    r.soc.push_back(0.0);
    r.price.push_back(20.0 + h);
  }
  return r;
}

ScenarioResult fake(const std::string& name, bool renewables, std::size_t days = 2) {
  ScenarioResult r;
  r.name = name;
  r.has_renewables = renewables;
  r.metrics.spilled_energy = 1.234e6;
  r.metrics.spilled_hours_pct = 12.345;
  r.metrics.unserved_hours = 3;
  r.metrics.backup_energy = 18.73e6;
  r.loadability.target_region = "A";
  r.loadability.average = 27130.0;
  for (std::size_t d = 0; d < days; ++d) {
    DaySummary s;
    s.day = d;
    s.regions = {region_day("A", 1.0), region_day("B", 2.0)};
    s.loadability.assign(24, 1000.0 + d);
    r.days.push_back(s);
  }
  return r;
}

TEST(Table, BauHasDashesForSpill) {
  const auto t = render_table({fake("BAU", false)});
  const auto csv = lines(t.csv);
  ASSERT_EQ(csv.size(), 2u);
  EXPECT_EQ(csv[0], "scenario,spilled_energy,spilled_hours_pct,unserved_hours,backup_energy,avg_loadability");
  EXPECT_EQ(csv[1], "BAU,-,-,3.00,18.73,27.13");
  EXPECT_NE(t.text.find("BAU"), std::string::npos);
}

TEST(Table, TwoDecimalsAndInputOrder) {
  std::vector<ScenarioResult> rs;
  for (const char* n : {"BAU", "CL", "PADR1", "PADR2", "PADR3", "PTDR1", "PTDR2", "PTDR3"}) {
    rs.push_back(fake(n, std::string(n) != "BAU"));
  }
  const auto t = render_table(rs);
  const auto csv = lines(t.csv);
  ASSERT_EQ(csv.size(), 9u);
  for (std::size_t i = 0; i < rs.size(); ++i) EXPECT_EQ(csv[i + 1].substr(0, rs[i].name.size() + 1), rs[i].name + ",");
  EXPECT_EQ(csv[2], "CL,1.23,12.35,3.00,18.73,27.13");
  // Text table: header, rule, 8 rows, units line. Columns line up.
  const auto txt = lines(t.text);
  ASSERT_EQ(txt.size(), 11u);
  for (std::size_t i = 2; i < 10; ++i) EXPECT_EQ(txt[i].size(), txt[0].size()) << txt[i];
}

TEST(Series, EmptySelectionGivesHeaderOnlyCsv) {
  TempDir dir("rep");
  ReportSpec spec;
  const auto files = render_series(fake("X", true), spec, dir.path);
  ASSERT_EQ(files.size(), 1u);
  EXPECT_EQ(read_text(files[0]), "day,step\n");
}

TEST(Series, ZeroBatteryGivesFlatSoc) {
  const auto t = extract_series(fake("X", true), "soc");
  ASSERT_EQ(t.rows.size(), 48u);
  EXPECT_EQ(t.unit, "MWh");
  for (const auto& row : t.rows) {
    for (double v : row) EXPECT_EQ(v, t.rows[0][0]);
  }
  const auto svg = series_svg(t, "soc");
  EXPECT_NE(svg.find("soc (MWh)"), std::string::npos);
  EXPECT_NE(svg.find("time (h)"), std::string::npos);
}

TEST(Series, DemandIsInflexiblePlusFlexible) {
  const auto t = extract_series(fake("X", true), "demand", std::pair<std::size_t, std::size_t>{1, 1});
  ASSERT_EQ(t.rows.size(), 24u);
  EXPECT_EQ(t.index.front(), (std::pair<std::size_t, std::size_t>{1, 0}));
  EXPECT_EQ(t.columns, (std::vector<std::string>{"A", "B"}));
  EXPECT_DOUBLE_EQ(t.rows[0][1], 300.0);
}

TEST(Series, FilesPerSeriesAndDeterministic) {
  TempDir dir("rep");
  ReportSpec spec;
  spec.series = {"price", "loadability"};
  spec.formats = {Format::Csv, Format::Svg};
  const auto a = render_series(fake("X", true), spec, dir.path / "a");
  const auto b = render_series(fake("X", true), spec, dir.path / "b");
  ASSERT_EQ(a.size(), 5u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].filename(), b[i].filename());
    EXPECT_EQ(read_text(a[i]), read_text(b[i]));
  }
  const auto combined = lines(read_text(dir.path / "a" / "X_series.csv"));
  EXPECT_EQ(combined[0], "day,step,price_A,price_B,loadability_A");
  EXPECT_EQ(combined.size(), 49u);
}

TEST(Series, UnknownNamesAndFormatsAreRejected) {
  ReportSpec spec;
  spec.series = {"voltage"};
  EXPECT_THROW(check_report_spec(spec), ValidationError);
  spec.series.clear();
  spec.formats.clear();
  EXPECT_THROW(check_report_spec(spec), ValidationError);
  EXPECT_THROW(parse_format("pdf"), ValidationError);
  EXPECT_THROW(extract_series(fake("X", true), "voltage"), ValidationError);
}

TEST(Overlay, TwoScenariosOneColumnEach) {
  auto ant = fake("PADR3", true);
  auto tak = fake("PTDR3", true);
  for (auto& d : tak.days) d.regions[0].flexible[5] = 999.0;
  const auto t = overlay({ant, tak}, "demand", "A");
  EXPECT_EQ(t.columns, (std::vector<std::string>{"PADR3", "PTDR3"}));
  EXPECT_EQ(t.rows.size(), 48u);
  EXPECT_DOUBLE_EQ(t.rows[5][0], 150.0);
  EXPECT_DOUBLE_EQ(t.rows[5][1], 1099.0);
  const auto svg = series_svg(t, "demand in A");
  std::size_t polylines = 0;
  for (const auto& l : lines(svg)) polylines += l.rfind("<polyline", 0) == 0;
  EXPECT_EQ(polylines, 2u);
  EXPECT_THROW(overlay({ant}, "demand", "Z"), ValidationError);
  EXPECT_THROW(overlay({ant, fake("short", true, 1)}, "demand", "A"), ValidationError);
}

// On an anticipator day the flexible demand sits above the unshifted
// consumption where prices are low and below it where they are high.
TEST(Series, FlexibleDemandFollowsPrice) {
  TempDir dir("fig");
  auto doc = testing::write_mini_fixture(dir.path);
  doc["name"] = "PADR";
  doc["dr_mode"] = "anticipator";
  doc["uptake"] = "high";
  doc["days"] = {0};
  const auto r = run_scenario(parse_scenario(doc.dump(), dir.path));
  for (const auto& x : r.days.at(0).regions) {
    std::vector<std::size_t> order(24);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x.price[a] < x.price[b]; });
    double cheap = 0, dear = 0;
    for (std::size_t i = 0; i < 6; ++i) {
      cheap += x.battery[order[i]];
      dear += x.battery[order[23 - i]];
    }
    EXPECT_GE(cheap, dear) << x.region;
    for (std::size_t h = 0; h < 24; ++h) {
      EXPECT_NEAR(x.battery[h], x.flexible[h] - x.responsive[h] + x.pv[h], 1e-9);
    }
  }
}

TEST(RunOutputs, WritesTheListedFiles) {
  TempDir dir("out");
  write_run_outputs(fake("X", true), dir.path);
  for (const char* f : {"metrics.csv", "loadability.csv", "report.txt", "calibration.csv", "profiles/A.csv",
                        "profiles/B.csv"}) {
    EXPECT_TRUE(fs::exists(dir.path / f)) << f;
  }
  const auto prof = lines(read_text(dir.path / "profiles/B.csv"));
  EXPECT_EQ(prof.size(), 49u);
  EXPECT_EQ(prof[1], "0,0,200,100,100,0,0,0,20");
  EXPECT_EQ(lines(read_text(dir.path / "loadability.csv"))[25], "1,0,1001");
}

}  // namespace
}  // namespace drsim
