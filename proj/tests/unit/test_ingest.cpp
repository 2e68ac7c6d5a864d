#include "doctest.h"

#include <sstream>

#include "methanet/error.hpp"
#include "methanet/ingest.hpp"

using namespace methanet;
using namespace methanet::ingest;

namespace {

RawObservation obs(const std::string& ts, double dir, double ch4) {
  RawObservation o;
  o.timestamp = parse_timestamp(ts);
  o.wind_direction = dir;
  o.wind_speed = 2.0;
  o.temperature = 1.0;
  o.solar = 100.0;
  o.ch4 = ch4;
  return o;
}

DailySeries one_channel(const std::vector<std::optional<double>>& values, Date start = parse_date("2020-03-01")) {
  DailySeries s;
  s.channels = {"x"};
  for (std::size_t i = 0; i < values.size(); ++i) {
    s.days.push_back({start + std::chrono::days{i}, {values[i]}, {false}});
  }
  return s;
}

mech::MechanisticTrajectory flat_trajectory(DateRange r) {
  mech::MechanisticTrajectory t;
  t.species = {"a"};
  double m = 1.0;
  for (Date d = r.first; d <= r.last; d += std::chrono::days{1}) t.days.push_back({d, {m += 0.1}, {}, 0.5 * m});
  return t;
}

DailySeries full_weather(DateRange r) {
  DailySeries s;
  s.channels = {kWindDirection, kWindSpeed, kTemperature, kSolar, kMethane};
  double k = 0.0;
  for (Date d = r.first; d <= r.last; d += std::chrono::days{1}) {
    k += 1.0;
    s.days.push_back({d, {std::fmod(k * 7.0, 360.0), 2.0 + std::sin(k), k * 0.01, 100.0, 1.9 + 0.001 * k},
                      std::vector<bool>(5, false)});
  }
  return s;
}

}  // namespace

TEST_CASE("station CSV: 24 valid hourly rows") {
  std::stringstream in;
  in << "timestamp,wind_dir_deg,wind_speed_ms,temp_c,solar_wm2,ch4_ppm\n";
  for (int h = 0; h < 24; ++h) in << "2021-05-04T" << (h < 10 ? "0" : "") << h << ":00:00,180,2,10,50,2.0\n";
  const auto data = parse_station_csv(in);
  CHECK(data.rows.size() == 24);
  CHECK(data.dropped == 0);
}

TEST_CASE("station CSV fixture with malformed rows") {
  const auto data = parse_station_csv(std::filesystem::path(METHANET_FIXTURES) / "station_100.csv");
  CHECK(data.rows.size() == 97);
  CHECK(data.dropped == 3);
  // 360 degrees wraps to north
  CHECK(data.rows[5].wind_direction == 0.0);
}

TEST_CASE("station CSV errors") {
  std::stringstream empty;
  CHECK_THROWS_AS(parse_station_csv(empty), ValidationError);
  std::stringstream headerless("2021-01-01T00:00,10,1,1,1,2\n");
  CHECK_THROWS_AS(parse_station_csv(headerless), FormatError);
  CHECK_THROWS_AS(parse_station_csv(std::filesystem::path("/nonexistent/station.csv")), IoError);
}

TEST_CASE("station CSV round-trip keeps missing values") {
  StationData d;
  d.rows.push_back(obs("2021-01-01T00:00:00", 12.5, 2.0));
  d.rows.push_back(obs("2021-01-01T01:00:00", 350.0, 2.1));
  d.rows[1].solar.reset();
  std::stringstream s;
  write_station_csv(s, d);
  const auto back = parse_station_csv(s);
  REQUIRE(back.rows.size() == 2);
  CHECK_FALSE(back.rows[1].solar.has_value());
  CHECK(*back.rows[1].ch4 == 2.1);
  CHECK(back.rows[0].wind_direction == 12.5);
}

TEST_CASE("direction normalization") {
  CHECK(normalize_direction(360.0) == 0.0);
  CHECK(normalize_direction(-10.0) == doctest::Approx(350.0));
  CHECK(normalize_direction(725.0) == doctest::Approx(5.0));
}

TEST_CASE("wind sector filter") {
  const WindSector mannix{300.0, 320.0};
  CHECK(mannix.contains(310.0));
  CHECK_FALSE(mannix.contains(100.0));
  CHECK(mannix.contains(300.0));
  CHECK_FALSE(mannix.contains(320.0));
  const WindSector wrap{350.0, 20.0};
  CHECK(wrap.contains(10.0));
  CHECK(wrap.contains(355.0));
  CHECK_FALSE(wrap.contains(20.0));
  CHECK_FALSE(wrap.contains(180.0));

  StationData d;
  d.rows = {obs("2021-01-01T00:00:00", 310, 2.0), obs("2021-01-01T01:00:00", 100, 9.0)};
  const auto kept = filter_by_wind_sector(d, mannix);
  REQUIRE(kept.rows.size() == 1);
  CHECK(kept.rows[0].wind_direction == 310.0);
}

TEST_CASE("daily aggregation") {
  StationData d;
  for (int h = 0; h < 24; ++h) {
    d.rows.push_back(obs("2021-01-01T" + std::string(h < 10 ? "0" : "") + std::to_string(h) + ":00:00", 10, 2.0));
  }
  d.rows.push_back(obs("2021-01-03T00:00:00", 350, 1.0));
  d.rows.push_back(obs("2021-01-03T05:00:00", 30, 3.0));
  const auto s = daily_aggregate(d);
  REQUIRE(s.days.size() == 3);
  const auto ch4 = *s.channel(kMethane);
  const auto dir = *s.channel(kWindDirection);
  CHECK(*s.days[0].values[ch4] == doctest::Approx(2.0));
  // day with no rows is present but missing
  CHECK_FALSE(s.days[1].values[ch4].has_value());
  CHECK(*s.days[2].values[ch4] == doctest::Approx(2.0));
  // circular mean of 350 and 30
  CHECK(*s.days[2].values[dir] == doctest::Approx(10.0));
}

TEST_CASE("gap interpolation") {
  const DateRange three{parse_date("2020-03-01"), parse_date("2020-03-03")};
  auto s = interpolate_gaps(one_channel({1.0, std::nullopt, 3.0}), three);
  CHECK(*s.days[1].values[0] == doctest::Approx(2.0));
  CHECK(s.days[1].filled[0]);
  CHECK_FALSE(s.days[0].filled[0]);

  s = interpolate_gaps(one_channel({1.0, 5.0, 3.0}), three);
  CHECK(*s.days[1].values[0] == 5.0);
  for (const auto& d : s.days) CHECK_FALSE(d.filled[0]);

  const DateRange five{parse_date("2020-03-01"), parse_date("2020-03-05")};
  s = interpolate_gaps(one_channel({0.0, std::nullopt, std::nullopt, std::nullopt, 4.0}), five);
  CHECK(*s.days[1].values[0] == doctest::Approx(1.0));
  CHECK(*s.days[2].values[0] == doctest::Approx(2.0));
  CHECK(*s.days[3].values[0] == doctest::Approx(3.0));

  // edges copy the nearest known value; missing days are inserted
  const DateRange wide{parse_date("2020-02-28"), parse_date("2020-03-04")};
  s = interpolate_gaps(one_channel({1.0, std::nullopt, 3.0}), wide);
  REQUIRE(s.days.size() == 6);
  CHECK(*s.days[0].values[0] == 1.0);
  CHECK(*s.days[5].values[0] == 3.0);

  CHECK_THROWS_AS(interpolate_gaps(one_channel({std::nullopt, 2.0, std::nullopt}), three), ValidationError);
}

TEST_CASE("direction interpolates along the short arc") {
  DailySeries s;
  s.channels = {kWindDirection};
  const Date d0 = parse_date("2020-01-01");
  s.days = {{d0, {350.0}, {false}}, {d0 + std::chrono::days{1}, {std::nullopt}, {false}},
            {d0 + std::chrono::days{2}, {10.0}, {false}}};
  const auto out = interpolate_gaps(s, {d0, d0 + std::chrono::days{2}});
  CHECK(*out.days[1].values[0] == doctest::Approx(0.0));
}

TEST_CASE("min-max scaling") {
  Eigen::MatrixXd cols(3, 2);
  cols << 2, 5, 4, 5, 6, 5;
  const auto sc = minmax_scale({"a", "b"}, cols);
  CHECK(sc.values(0, 0) == 0.0);
  CHECK(sc.values(1, 0) == doctest::Approx(0.5));
  CHECK(sc.values(2, 0) == 1.0);
  CHECK(sc.values.col(1).isZero(0.0));
  CHECK(sc.scaler.constant(1));
  CHECK_FALSE(sc.scaler.constant(0));
  CHECK(sc.scaler.inverse(0, 0.5) == doctest::Approx(4.0));

  std::stringstream s;
  sc.scaler.write_csv(s);
  const auto back = Scaler::read_csv(s);
  CHECK(back.names() == sc.scaler.names());
  CHECK(back.max(0) == 6.0);
}

TEST_CASE("dataset assembly over three years") {
  const DateRange r{parse_date("2020-01-01"), parse_date("2022-12-31")};
  const auto ds = assemble_dataset(full_weather(r), flat_trajectory(r), r);
  CHECK(ds.rows() == 1096);
  CHECK(ds.dil_count == 1);
  CHECK(ds.atm_count == 4);
  CHECK(ds.feature_names.back() == "t");
  CHECK(ds.features(0, static_cast<Eigen::Index>(ds.time_index())) == 0.0);
  CHECK(ds.features(1095, static_cast<Eigen::Index>(ds.time_index())) == 1.0);
  CHECK(ds.features(1, static_cast<Eigen::Index>(ds.time_index())) == doctest::Approx(1.0 / 1095.0));
  CHECK(ds.concentration.minCoeff() == 0.0);
  CHECK(ds.concentration.maxCoeff() == 1.0);
  CHECK(ds.emission_tonnes()(10) == doctest::Approx(flat_trajectory(r).days[10].emission));

  const auto [train, val] = chronological_split(ds, 0.8);
  CHECK(train.rows() == 876);
  CHECK(val.rows() == 220);
  CHECK(val.dates.front() == ds.dates[876]);

  // atm channel selection
  AssembleOptions opt;
  opt.atm_channels = {kWindSpeed};
  const auto narrow = assemble_dataset(full_weather(r), flat_trajectory(r), r, opt);
  CHECK(narrow.feature_names == std::vector<std::string>{"C_1", kWindSpeed, "t"});
}

TEST_CASE("dataset assembly edge cases") {
  const DateRange one{parse_date("2021-07-01"), parse_date("2021-07-01")};
  const auto ds = assemble_dataset(full_weather(one), flat_trajectory(one), one);
  CHECK(ds.rows() == 1);
  CHECK(ds.features(0, static_cast<Eigen::Index>(ds.time_index())) == 0.0);

  const DateRange r{parse_date("2020-05-01"), parse_date("2020-06-30")};
  auto traj = flat_trajectory(r);
  traj.days.erase(traj.days.begin() + 31);  // 2020-06-01
  try {
    assemble_dataset(full_weather(r), traj, r);
    FAIL("expected an alignment error");
  } catch (const AlignmentError& e) {
    CHECK(std::string(e.what()).find("2020-06-01") != std::string::npos);
  }

  const DateRange ten{parse_date("2020-01-01"), parse_date("2020-01-10")};
  const auto [a, b] = chronological_split(assemble_dataset(full_weather(ten), flat_trajectory(ten), ten));
  CHECK(a.rows() == 8);
  CHECK(b.rows() == 2);
}

TEST_CASE("interpolation flags reach the dataset") {
  const DateRange r{parse_date("2020-01-01"), parse_date("2020-01-05")};
  auto w = full_weather(r);
  w.days[2].values[4].reset();
  const auto filled = interpolate_gaps(w, r);
  const auto ds = assemble_dataset(filled, flat_trajectory(r), r);
  CHECK(ds.filled[2] == kMethane);
  CHECK(ds.filled[1].empty());
}

TEST_CASE("dataset CSV round-trip") {
  const DateRange r{parse_date("2020-01-01"), parse_date("2020-02-10")};
  const auto ds = assemble_dataset(full_weather(r), flat_trajectory(r), r);
  std::stringstream d, s;
  write_dataset_csv(d, ds);
  ds.scaler.write_csv(s);
  const auto back = read_dataset_csv(d, s);
  CHECK(back.rows() == ds.rows());
  CHECK(back.feature_names == ds.feature_names);
  CHECK(back.features == ds.features);
  CHECK(back.concentration == ds.concentration);
  CHECK(back.dil_count == 1);
}
