#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "rivercast/errors.hpp"
#include "rivercast/ingest.hpp"

using namespace rivercast;
namespace fs = std::filesystem;

namespace {

const double kNaN = std::nan("");
const Timestamp t0 = parse_iso8601("2022-06-01T00:00:00Z");

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("rivercast_ingest_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(path / name) << text;
    return path / name;
  }
};

std::string row(Timestamp t, const std::string& id, const std::string& var, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return format_iso8601(t) + "," + id + "," + var + "," + buf + "\n";
}

// Gapless frame of one station with stage = hour index.
HourlyFrame ramp_frame(std::size_t n, std::size_t stations = 1) {
  HourlyFrame f;
  f.start = t0;
  for (std::size_t s = 0; s < stations; ++s) {
    f.stations.push_back("s" + std::to_string(s));
    f.stage.emplace_back();
    f.reported.emplace_back();
    f.measured.emplace_back();
    for (std::size_t i = 0; i < n; ++i) {
      f.stage[s].push_back(1.0 + static_cast<double>(i) + static_cast<double>(s));
      f.reported[s].push_back(10.0 * static_cast<double>(i + 1));
    }
  }
  for (std::size_t i = 0; i < n; ++i) f.rainfall.push_back(static_cast<double>(i % 3));
  return f;
}

std::size_t count_windows_directly(const HourlyFrame& f, int T, int h) {
  std::size_t c = 0;
  for (std::size_t o = static_cast<std::size_t>(T) - 1; o + static_cast<std::size_t>(h) < f.hours();
       ++o) {
    bool ok = true;
    for (std::size_t k = o + 1 - static_cast<std::size_t>(T); k <= o; ++k) {
      ok = ok && !std::isnan(f.rainfall[k]);
      for (const auto& s : f.stage) ok = ok && !std::isnan(s[k]);
    }
    const std::size_t t = o + static_cast<std::size_t>(h);
    ok = ok && !std::isnan(f.stage[0][t]) && !std::isnan(f.reported[0][t]);
    c += ok ? 1 : 0;
  }
  return c;
}

}  // namespace

TEST_CASE("top-of-hour and nearest-sample rules") {
  TempDir dir;
  std::string csv = "timestamp,station_id,variable,value\n";
  for (int q = 0; q <= 12; ++q) {
    const Timestamp t = t0 + std::chrono::minutes(15 * q);
    if (q == 4) continue;  // 01:00 missing
    csv += row(t, "a", "stage_ft", 100.0 + q);
  }
  csv += row(t0 + std::chrono::minutes(70), "a", "stage_ft", 555.0);  // replaced below
  csv += row(t0, "watershed", "rainfall_mm", 0.0);
  csv += row(t0 + Hours(3), "watershed", "rainfall_mm", 0.0);
  auto path = dir.write("a.csv", csv);
  std::vector<fs::path> paths = {path};
  HourlyFrame f = load_and_resample(paths, {"a"});
  REQUIRE(f.hours() == 4);
  CHECK(f.stage[0][0] == 100.0);
  CHECK(f.stage[0][1] == 555.0);  // 01:00 missing; the 01:10 sample is the nearest
  CHECK(f.stage[0][2] == 108.0);
  CHECK(f.stage[0][3] == 112.0);
}

TEST_CASE("ties prefer the earlier sample and far samples are missing") {
  std::vector<Observation> obs = {
      {t0, "a", Variable::stage_ft, 1.0},
      {t0 + std::chrono::minutes(30), "a", Variable::stage_ft, 2.0},
      {t0 + std::chrono::minutes(90), "a", Variable::stage_ft, 3.0},
      {t0 + Hours(3) + std::chrono::minutes(31), "a", Variable::stage_ft, 4.0},
      {t0 + Hours(4), "a", Variable::stage_ft, 5.0},
      {t0, "w", Variable::rainfall_mm, 0.0},
      {t0 + Hours(4), "w", Variable::rainfall_mm, 0.0},
  };
  HourlyFrame f = resample_hourly(obs, {"a"}, "w");
  REQUIRE(f.hours() == 5);
  CHECK(f.stage[0][1] == 2.0);
  CHECK(f.stage[0][2] == 3.0);
  CHECK(std::isnan(f.stage[0][3]));
  CHECK(f.stage[0][4] == 5.0);
}

TEST_CASE("rainfall is summed into the hour it ends in") {
  std::vector<Observation> obs;
  for (int q = 0; q <= 8; ++q)
    obs.push_back({t0 + std::chrono::minutes(15 * q), "w", Variable::rainfall_mm, 1.0});
  obs.push_back({t0, "a", Variable::stage_ft, 1.0});
  obs.push_back({t0 + Hours(2), "a", Variable::stage_ft, 1.0});
  HourlyFrame f = resample_hourly(obs, {"a"}, "w");
  REQUIRE(f.hours() == 3);
  CHECK(f.rainfall[0] == 1.0);
  CHECK(f.rainfall[1] == 4.0);
  CHECK(f.rainfall[2] == 4.0);
}

TEST_CASE("three-hour outage drops every covering window") {
  HourlyFrame f = ramp_frame(80, 2);
  for (std::size_t i = 40; i < 43; ++i) f.stage[1][i] = kNaN;
  std::size_t missing = 0;
  for (std::size_t i = 0; i < f.hours(); ++i) missing += f.dense_missing(i) ? 1 : 0;
  CHECK(missing == 3);
  for (int h : {1, 3, 6}) {
    auto w = make_windows(f, 0, 24, h);
    CHECK(w.size() == count_windows_directly(f, 24, h));
    for (const auto& ref : w) {
      const bool covers = ref.origin >= 40 && ref.origin - 23 <= 42;
      CHECK_FALSE(covers);
    }
  }
}

TEST_CASE("window counts on gapless frames") {
  CHECK(make_windows(ramp_frame(30), 0, 24, 1).size() == 6);
  for (std::size_t n : {25u, 40u, 100u})
    for (int T : {1, 5, 24})
      for (int h = 1; h <= 6; ++h) {
        const long expect = static_cast<long>(n) - T - h + 1;
        CHECK(make_windows(ramp_frame(n), 0, T, h).size() ==
              static_cast<std::size_t>(std::max(0L, expect)));
      }
  auto last = make_windows(ramp_frame(50), 0, 24, 6).back();
  CHECK(last.target_hour == 49);
  CHECK(last.target_stage == 50.0);
  CHECK(last.target_reported == 500.0);
}

TEST_CASE("a single missing hour removes the windows that cover it") {
  HourlyFrame f = ramp_frame(60);
  f.rainfall[12] = kNaN;
  auto w = make_windows(f, 0, 5, 1);
  for (const auto& ref : w) CHECK_FALSE((ref.origin >= 12 && ref.origin <= 16));
  CHECK(w.size() == 60 - 5 - 1 + 1 - 5);
}

TEST_CASE("window contents and measured targets") {
  HourlyFrame f = ramp_frame(40, 2);
  f.measured[0].push_back({f.time(30) + std::chrono::minutes(20), 77.0});
  auto w = make_windows(f, 0, 24, 2);
  for (const auto& ref : w) {
    CHECK(ref.target_measured.has_value() == (ref.target_hour == 30));
    if (ref.target_hour == 30) CHECK(*ref.target_measured == 77.0);
  }
  auto fw = extract_window(f, w.front(), 24, 2);
  CHECK(fw.stage_series(0, 0) == 1.0);
  CHECK(fw.stage_series(23, 1) == 25.0);
  CHECK(fw.origin == f.time(23));
}

TEST_CASE("chronological split") {
  HourlyFrame f = ramp_frame(1000);
  const double pct[] = {60, 15, 25};
  auto s = split(f, pct, 24);
  CHECK(s.train.begin == 0);
  CHECK(s.train.size() == 600);
  CHECK(s.val.begin == 600);
  CHECK(s.val.size() == 150);
  CHECK(s.test.size() == 250);
  CHECK(s.test.end == 1000);
  CHECK_THROWS_AS(split(ramp_frame(10), pct, 24), InsufficientDataError);
  const double all[] = {100, 0, 0};
  auto whole = split(f, all, 24);
  CHECK(whole.train.size() == 1000);
  CHECK(whole.val.size() == 0);
  CHECK(whole.test.size() == 0);
  const double bad[] = {50, 20, 20};
  CHECK_THROWS_AS(split(f, bad, 24), ContractError);

  for (const auto& ref : make_windows(f, 0, 24, 3)) {
    const auto name = assign_split(s, ref);
    const HourRange& r = name == SplitName::train ? s.train : name == SplitName::val ? s.val : s.test;
    CHECK(r.contains(ref.target_hour));
  }
}

TEST_CASE("parse errors carry line numbers") {
  TempDir dir;
  const std::string header = "timestamp,station_id,variable,value\n";
  auto bad_var = dir.write("v.csv", header + row(t0, "a", "stage_ft", 1.0) +
                                        "2022-06-01T01:00:00Z,a,depth,2\n");
  try {
    read_observations(bad_var);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  auto bad_time = dir.write("t.csv", header + "yesterday,a,stage_ft,1\n");
  try {
    read_observations(bad_time);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(read_observations(dir.write("h.csv", "time,station,var,value\n")), ParseError);
  auto fields = dir.write("f.csv", header + row(t0, "a", "stage_ft", 1.0) + row(t0, "a", "stage_ft", 1.0) +
                                       "2022-06-01T01:00:00Z,a,stage_ft\n");
  try {
    read_observations(fields);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
  }
}

TEST_CASE("unknown stations are configuration errors") {
  std::vector<Observation> obs = {{t0, "zzz", Variable::stage_ft, 1.0},
                                  {t0, "w", Variable::rainfall_mm, 0.0}};
  CHECK_THROWS_AS(resample_hourly(obs, {"a"}, "w"), ConfigError);
  CHECK_THROWS_AS(ramp_frame(5).station_index("nope"), ConfigError);
}

TEST_CASE("csv round trip is bit exact") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  HourlyFrame f = ramp_frame(72, 3);
  for (auto& s : f.stage)
    for (double& v : s) v = 2.0 + 10.0 * u(rng);
  for (auto& s : f.reported)
    for (double& v : s) v = 1e3 * u(rng);
  for (double& v : f.rainfall) v = u(rng) < 0.7 ? 0.0 : 30.0 * u(rng);
  f.stage[2][10] = kNaN;
  f.reported[1][20] = kNaN;
  f.measured[0] = {{f.time(5) + std::chrono::minutes(7), 123.456789012345678},
                   {f.time(40), 1.0 / 3.0}};
  TempDir dir;
  write_frame_csv(f, dir.path / "frame.csv");
  std::vector<fs::path> paths = {dir.path / "frame.csv"};
  HourlyFrame back = load_and_resample(paths, f.stations, f.rainfall_id);
  CHECK(back == f);
}

TEST_CASE("normalization statistics") {
  HourlyFrame f = ramp_frame(100, 2);
  const double targets[] = {1.0, 3.0};
  auto st = fit_norm_stats(f, HourRange{0, 50}, targets);
  CHECK(st.stage_mean[0] == doctest::Approx(25.5));
  CHECK(st.stage_std[0] == doctest::Approx(std::sqrt((50.0 * 50.0 - 1.0) / 12.0)));
  CHECK(st.target_mean == 2.0);
  CHECK(st.target_std == 1.0);
  auto seq = normalize(f, st);
  CHECK(seq.stage(0, 0) == doctest::Approx((1.0 - 25.5) / st.stage_std[0]));

  HourlyFrame flat = f;
  std::fill(flat.stage[1].begin(), flat.stage[1].end(), 4.0);
  CHECK_THROWS_AS(fit_norm_stats(flat, HourRange{0, 50}, targets), ContractError);
}
