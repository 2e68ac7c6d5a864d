#include "doctest.h"

#include <cmath>
#include <set>
#include <sstream>

#include "methanet/analysis.hpp"
#include "methanet/error.hpp"
#include "methanet/synthgen.hpp"
#include "support.hpp"

using namespace methanet;
using namespace methanet::synth;

namespace {

const DateRange kMonth{parse_date("2021-03-01"), parse_date("2021-03-31")};

mech::MechanisticTrajectory constant_q(DateRange r, double q) {
  mech::MechanisticTrajectory t;
  t.species = {"a"};
  for (Date d = r.first; d <= r.last; d += std::chrono::days{1}) t.days.push_back({d, {1.0}, {}, q});
  return t;
}

}  // namespace

TEST_CASE("affine law: constant wind from the source without noise") {
  SynthConfig c;
  c.range = kMonth;
  c.emission = constant_q(kMonth, 4.0);
  c.noise = 0.0;
  c.source_day_fraction = 1.0;
  c.direction_jitter = 0.0;
  c.wind_speed_variability = 0.0;
  c.modulation = Modulation::None;
  const auto out = generate(c);
  CHECK(out.station.rows.size() == 31 * 24);
  for (const auto& r : out.station.rows) CHECK(*r.ch4 == doctest::Approx(1.8 + 0.5 * 4.0).epsilon(1e-14));

  // with the default modulation the plume scales with 1/(1 + ws)
  c.modulation = Modulation::InverseWindSpeed;
  for (const auto& r : generate(c).station.rows) {
    CHECK(*r.ch4 == doctest::Approx(1.8 + 0.5 * 4.0 / (1.0 + *r.wind_speed)).epsilon(1e-14));
  }
}

TEST_CASE("zero emission leaves the background") {
  SynthConfig c;
  c.range = kMonth;
  c.emission = constant_q(kMonth, 0.0);
  c.noise = 0.0;
  for (const auto& r : generate(c).station.rows) CHECK(*r.ch4 == 1.8);
}

TEST_CASE("seeded generation is reproducible") {
  auto c = testing::synth_config(kMonth, 17);
  std::stringstream a, b, other;
  ingest::write_station_csv(a, generate(c).station);
  ingest::write_station_csv(b, generate(c).station);
  c.seed = 18;
  ingest::write_station_csv(other, generate(c).station);
  CHECK(a.str() == b.str());
  CHECK(a.str() != other.str());
}

TEST_CASE("wind regime") {
  const DateRange year{parse_date("2021-01-01"), parse_date("2021-12-31")};
  const auto out = generate(testing::synth_config(year, 3));
  const auto dirs = testing::daily_directions(out.station, year);
  std::set<std::size_t> sectors;
  std::size_t source_days = 0;
  for (double d : dirs) {
    sectors.insert(analysis::sector_of(d));
    source_days += analysis::sector_of(d) == 15;
  }
  CHECK(sectors.size() == 18);
  // about 35% from the source plus the uniform share of the rest
  const double share = static_cast<double>(source_days) / static_cast<double>(dirs.size());
  CHECK(share > 0.3);
  CHECK(share < 0.45);
}

TEST_CASE("truth and yearly files") {
  auto c = testing::synth_config(kMonth, 0);
  const auto out = generate(c);
  REQUIRE(out.truth.size() == 31);
  std::stringstream s;
  write_truth_csv(s, out.truth);
  CHECK(read_truth_csv(s) == out.truth);

  const auto y = yearly_totals({{parse_date("2020-12-31"), 1.0}, {parse_date("2021-01-01"), 2.0},
                                {parse_date("2021-06-01"), 3.0}});
  CHECK(y.at(2020) == 1.0);
  CHECK(y.at(2021) == 5.0);
}

TEST_CASE("oracle comparison") {
  std::vector<std::pair<Date, double>> truth;
  std::vector<Date> dates;
  Eigen::VectorXd est(20);
  for (int i = 0; i < 20; ++i) {
    const Date d = parse_date("2021-12-22") + std::chrono::days{i};
    truth.emplace_back(d, 1.0 + i);
    dates.push_back(d);
    est(i) = 1.0 + i;
  }
  auto r = oracle_check(dates, est, truth);
  CHECK(r.relative_error == 0.0);
  CHECK(r.max_gap_pct() == 0.0);

  r = oracle_check(dates, 1.1 * est, truth);
  CHECK(r.relative_error == doctest::Approx(0.1));
  CHECK(r.yearly_gap_pct.at(2021) == doctest::Approx(10.0));
  CHECK(r.yearly_gap_pct.at(2022) == doctest::Approx(10.0));

  dates.pop_back();
  CHECK_THROWS_AS(oracle_check(dates, est, truth), AlignmentError);
}

TEST_CASE("config validation") {
  SynthConfig c;
  c.range = kMonth;
  c.emission = constant_q({kMonth.first, parse_date("2021-03-20")}, 1.0);
  CHECK_THROWS_AS(c.validate(), AlignmentError);
  c.emission = constant_q(kMonth, 1.0);
  c.noise = -1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  CHECK_THROWS_AS(parse_modulation("gaussian"), ValidationError);
}
