#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "methanet/error.hpp"
#include "methanet/mechanistic.hpp"

using namespace methanet;
using namespace methanet::mech;

namespace {

KineticsParams first_order(double k, double mu = 0.3) {
  KineticsParams p = KineticsParams::demo({"naphtha"});
  p.decay_rate = {k};
  p.methane_factor = {mu};
  return p;
}

InflowSchedule constant_schedule(std::size_t days, double inflow, Date start = parse_date("2020-01-01")) {
  InflowSchedule s{{"naphtha"}, {}};
  for (std::size_t d = 0; d < days; ++d) s.days.push_back({start + std::chrono::days{d}, {inflow}});
  return s;
}

}  // namespace

TEST_CASE("inflow schedule spreads monthly totals evenly") {
  const auto s = build_inflow_schedule({"a"}, {{2020, 1, {31.0}}, {2020, 2, {29.0}}}, 1.0);
  REQUIRE(s.days.size() == 60);
  CHECK(s.days.front().inflow[0] == doctest::Approx(1.0));
  CHECK(s.days[30].inflow[0] == doctest::Approx(1.0));
  CHECK(s.days[31].inflow[0] == doctest::Approx(1.0));

  const auto half = build_inflow_schedule({"a"}, {{2020, 2, {29.0}}}, 0.5);
  CHECK(half.days.size() == 29);
  CHECK(half.days.back().inflow[0] == doctest::Approx(0.5));

  const auto apr = build_inflow_schedule({"a"}, {{2021, 4, {60.0}}}, 0.25);
  CHECK(apr.days.size() == 30);
  CHECK(apr.days[7].inflow[0] == doctest::Approx(60.0 * 0.25 / 30.0));

  CHECK_THROWS_AS(build_inflow_schedule({"a"}, {{2020, 1, {1.0}}, {2020, 3, {1.0}}}, 1.0), ValidationError);
  CHECK_THROWS_AS(build_inflow_schedule({"a"}, {{2020, 1, {-1.0}}}, 1.0), ValidationError);
}

TEST_CASE("one first-order step matches the exponential") {
  const auto p = first_order(0.1);
  const auto r = step({{1.0}, {}}, {0.0}, p, 1.0);
  CHECK(std::abs(r.state.mass[0] - std::exp(-0.1)) / std::exp(-0.1) < 1e-5);
  // methane released = mu * mass degraded
  CHECK(r.methane == doctest::Approx(0.3 * (1.0 - r.state.mass[0])).epsilon(1e-12));
}

TEST_CASE("zero state is a fixed point") {
  for (auto kind : {KineticsKind::FirstOrder, KineticsKind::Monod}) {
    KineticsParams p = first_order(0.2);
    p.kind = kind;
    p.max_uptake = {0.4};
    p.half_saturation = {2.0};
    p.biomass_yield = 0.1;
    p.biomass_death = 0.01;
    const auto r = step(zero_state(p), {0.0}, p);
    CHECK(r.state.mass[0] == 0.0);
    CHECK(r.methane == 0.0);
    for (double y : r.state.aux) CHECK(y == 0.0);
  }
}

TEST_CASE("monod with large half-saturation follows the linearized solution") {
  KineticsParams p = first_order(0.0);
  p.kind = KineticsKind::Monod;
  p.max_uptake = {2.0};
  p.half_saturation = {1000.0};
  p.biomass_yield = 0.0;
  p.biomass_death = 0.0;
  PondState s{{1.0}, {5.0}};
  // dC/dt ~ -(vmax/Ks) B C
  const double rate = 2.0 / 1000.0 * 5.0;
  for (int d = 1; d <= 10; ++d) {
    s = step(s, {0.0}, p).state;
    const double lin = std::exp(-rate * d);
    CHECK(std::abs(s.mass[0] - lin) / lin < 0.01);
  }
}

TEST_CASE("simulate: zero inflow and zero mass stays zero") {
  const auto traj = simulate(first_order(0.1), constant_schedule(50, 0.0), zero_state(first_order(0.1)));
  REQUIRE(traj.days.size() == 50);
  for (const auto& d : traj.days) {
    CHECK(d.mass[0] == 0.0);
    CHECK(d.emission == 0.0);
  }
}

TEST_CASE("simulate: constant inflow reaches the linear steady state") {
  for (double k : {0.05, 0.2, 0.5}) {
    const double inflow = 3.0;
    const auto n = static_cast<std::size_t>(std::ceil(10.0 / k));
    const auto traj = simulate(first_order(k), constant_schedule(n, inflow), zero_state(first_order(k)));
    const double c = traj.days.back().mass[0];
    CHECK(std::abs(c - inflow / k) / (inflow / k) < 0.01);
  }
}

TEST_CASE("simulate: four demo years give 1461 records") {
  const auto report = demo_diluent_report({"naphtha", "paraffinic"}, 2020, 2023);
  const auto sched = build_inflow_schedule(report.species, report.months, 1.0);
  const auto params = KineticsParams::demo(report.species);
  const auto traj = simulate(params, sched, zero_state(params));
  CHECK(traj.days.size() == 1461);
  CHECK(format_date(traj.days.front().date) == "2020-01-01");
  CHECK(format_date(traj.days.back().date) == "2023-12-31");
  CHECK(traj.find(parse_date("2022-06-15")) != nullptr);
  CHECK(traj.find(parse_date("2024-01-01")) == nullptr);
}

TEST_CASE("non-finite state names the species") {
  auto p = first_order(0.1);
  try {
    step({{std::nan("")}, {}}, {0.0}, p);
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("naphtha") != std::string::npos);
  }
}

TEST_CASE("kinetics validation") {
  auto p = first_order(0.1);
  p.decay_rate = {-1.0};
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = first_order(0.1);
  p.methane_factor = {};
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = first_order(0.1);
  p.kind = KineticsKind::Monod;
  p.half_saturation = {0.0};
  CHECK_THROWS_AS(p.validate(), ValidationError);
}

TEST_CASE("sanitize replaces unrealistic days") {
  auto traj = simulate(first_order(0.1), constant_schedule(10, 1.0), zero_state(first_order(0.1)));
  auto clean = sanitize(traj);
  CHECK(clean.replaced == 0);
  CHECK(clean.trajectory.days[9].emission == traj.days[9].emission);

  traj.days[5].emission = -0.2;
  clean = sanitize(traj);
  CHECK(clean.replaced == 1);
  CHECK(clean.trajectory.days[5].emission == traj.days[4].emission);
  CHECK(clean.trajectory.days[5].mass == traj.days[4].mass);
  CHECK(clean.trajectory.days[5].date == traj.days[5].date);

  traj.days[0].emission = -1.0;
  CHECK_THROWS_AS(sanitize(traj), ValidationError);
}

TEST_CASE("sanitize removes injected negatives") {
  const auto params = first_order(0.05);
  auto traj = simulate(params, constant_schedule(1000, 2.0), zero_state(params));
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> pick(1, traj.days.size() - 1);
  std::size_t injected = 0;
  while (injected < 10) {
    auto& d = traj.days[pick(rng)];
    if (d.emission < 0.0) continue;
    d.emission = -0.5;
    ++injected;
  }
  const auto clean = sanitize(traj);
  CHECK(clean.replaced == injected);
  CHECK(clean.replaced_fraction() == doctest::Approx(0.01));
  for (const auto& d : clean.trajectory.days) CHECK(d.emission >= 0.0);
}

TEST_CASE("trajectory and diluent CSV round-trip") {
  const auto report = demo_diluent_report({"a", "b"}, 2021, 2021);
  std::stringstream ds;
  write_diluent_csv(ds, report);
  const auto back = read_diluent_csv(ds);
  CHECK(back.species == report.species);
  REQUIRE(back.months.size() == 12);
  CHECK(back.months[3].tonnes == report.months[3].tonnes);

  const auto params = KineticsParams::demo(report.species);
  const auto traj = simulate(params, build_inflow_schedule(report.species, report.months, 0.5), zero_state(params));
  std::stringstream ts;
  write_trajectory_csv(ts, traj);
  const auto t2 = read_trajectory_csv(ts);
  REQUIRE(t2.days.size() == traj.days.size());
  CHECK(t2.days[100].emission == traj.days[100].emission);
  CHECK(t2.days[100].mass == traj.days[100].mass);

  std::stringstream bad("year,month,tonnes\n2020,1,3\n");
  CHECK_THROWS_AS(read_diluent_csv(bad), FormatError);
}
