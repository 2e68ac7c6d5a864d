#include "doctest.h"

#include <complex>
#include <sstream>

#include "methanet/analysis.hpp"
#include "methanet/training.hpp"
#include "support.hpp"

using namespace methanet;
using namespace methanet::train;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

const DateRange kYear{parse_date("2021-01-01"), parse_date("2021-12-31")};

struct SynthYear {
  synth::SynthConfig cfg;
  synth::SynthOutput gen;
  ingest::Dataset data;
};

SynthYear synth_year(std::uint64_t seed) {
  SynthYear s;
  s.cfg = testing::synth_config(kYear, seed);
  s.gen = synth::generate(s.cfg);
  s.data = testing::prepare(s.gen.station, s.cfg.emission, kYear);
  return s;
}

TrainConfig small_config(std::size_t iterations) {
  TrainConfig c;
  c.iterations = iterations;
  c.learning_rates = {1e-2};
  c.seeds = {0};
  c.arch.u_width = 8;
  c.arch.phi_width = 8;
  c.arch.nn_width = 8;
  return c;
}

}  // namespace

TEST_CASE("penalty loss") {
  CHECK(penalty_loss(vec({1, 2}), vec({1, 2}), vec({0, 0}), 3.0) == 0.0);
  CHECK(penalty_loss(vec({2, 3}), vec({1, 2}), vec({0, 0}), 7.0) == doctest::Approx(1.0));
  CHECK(penalty_loss(vec({1, 0}), vec({0, 0}), vec({2, 0}), 0.5) == doctest::Approx(1.5));
  CHECK_THROWS_AS(penalty_loss(vec({1, 0}), vec({0}), vec({2, 0}), 0.5), ShapeError);
  CHECK_THROWS_AS(penalty_loss(vec({1}), vec({0}), vec({2}), -1.0), ValidationError);
}

TEST_CASE("sgd step basics") {
  Vector p = vec({0.3, -1.0});
  SgdState st;
  sgd_step(p, Vector::Zero(2), st, {0.1, 0.9, 0.0});
  CHECK(p == vec({0.3, -1.0}));

  Vector w = vec({1.0});
  SgdState s2;
  sgd_step(w, vec({2.0}), s2, {0.1, 0.0, 0.0});
  CHECK(w(0) == doctest::Approx(0.8));

  Vector bad = vec({1.0});
  try {
    sgd_step(bad, vec({std::nan("")}), s2, {}, 42);
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("42") != std::string::npos);
  }
}

TEST_CASE("momentum on a quadratic bowl follows the closed-form recurrence") {
  // f(w) = w^2: w_{k+1} = (1 + m - 2 lr) w_k - m w_{k-1}, w_0 = 1, w_1 = 1 - 2 lr.
  const double lr = 0.01, m = 0.9;
  const double b = 1.0 + m - 2.0 * lr;
  const std::complex<double> disc = std::sqrt(std::complex<double>(b * b - 4.0 * m));
  const std::complex<double> r1 = (b + disc) / 2.0, r2 = (b - disc) / 2.0;
  const double w1 = 1.0 - 2.0 * lr;
  const std::complex<double> A = (w1 - r2) / (r1 - r2), B = 1.0 - A;

  Vector w = vec({1.0});
  SgdState st;
  for (int k = 1; k <= 200; ++k) {
    sgd_step(w, 2.0 * w, st, {lr, m, 0.0});
    const double oracle = (A * std::pow(r1, k) + B * std::pow(r2, k)).real();
    CHECK(w(0) == doctest::Approx(oracle).epsilon(1e-9).scale(1.0));
  }
  CHECK(std::abs(w(0)) < 1e-3);
}

TEST_CASE("pure weight decay is geometric") {
  Vector p = vec({2.0, -3.0, 0.5});
  const Vector p0 = p;
  SgdState st;
  const SgdConfig cfg{0.1, 0.0, 0.05};
  for (int k = 1; k <= 50; ++k) {
    sgd_step(p, Vector::Zero(3), st, cfg);
    CHECK(p.norm() == doctest::Approx(std::pow(1.0 - 0.1 * 0.05, k) * p0.norm()).epsilon(1e-12));
  }
}

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.lambda = -1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.learning_rates.clear();
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.threshold = 0.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("training is deterministic and makes progress") {
  const auto s = synth_year(1);
  const auto [tr, va] = ingest::chronological_split(s.data);
  const auto cfg = small_config(300);
  const auto a = train::train(model::ModelKind::Forward, tr, va, cfg, 3, 1e-2);
  const auto b = train::train(model::ModelKind::Forward, tr, va, cfg, 3, 1e-2);
  REQUIRE(a.report.history.size() == 300);
  bool same = a.artifact.params.flatten() == b.artifact.params.flatten();
  for (std::size_t i = 0; i < a.report.history.size(); ++i) {
    same = same && a.report.history[i].total_loss == b.report.history[i].total_loss;
  }
  CHECK(same);
  CHECK(a.report.val_re_q == b.report.val_re_q);
  CHECK(a.report.history.back().total_loss <= a.report.history.front().total_loss);

  std::stringstream ra, rb;
  write_report_csv(ra, a.report);
  write_report_csv(rb, b.report);
  CHECK(ra.str() == rb.str());
  CHECK(ra.str().rfind("epoch,data_loss,constraint_residual,total_loss\n", 0) == 0);

  // mini-batches are seeded too
  auto mb = cfg;
  mb.batch_size = 64;
  mb.iterations = 50;
  CHECK(train::train(model::ModelKind::Reverse, tr, va, mb, 2, 1e-2).artifact.params.flatten() ==
        train::train(model::ModelKind::Reverse, tr, va, mb, 2, 1e-2).artifact.params.flatten());
}

TEST_CASE("lambda = 0 fits concentration only") {
  const auto s = synth_year(2);
  auto cfg = small_config(1500);
  cfg.lambda = 0.0;
  const auto m = train::train(model::ModelKind::Reverse, s.data, {}, cfg, 0, 1e-2);
  const auto& h = m.report.history;
  CHECK(h.back().data_loss < 0.5 * h.front().data_loss);
  CHECK(h.back().total_loss == h.back().data_loss);
}

TEST_CASE("synthetic data: concentration fit reaches RE below 0.1") {
  const auto s = synth_year(3);
  const auto [tr, va] = ingest::chronological_split(s.data);
  auto cfg = small_config(3000);
  cfg.arch.u_width = 16;
  cfg.arch.phi_width = 16;
  const auto m = train::train(model::ModelKind::Reverse, tr, va, cfg, 0, 1e-2);
  CHECK(m.report.train_re_u < 0.1);
}

TEST_CASE("sparse training leaves no coefficient below the threshold") {
  const auto s = synth_year(4);
  auto cfg = small_config(400);
  cfg.sparse = true;
  const auto m = train::train(model::ModelKind::Poly, s.data, {}, cfg, 0, 1e-2);
  std::size_t survivors = 0;
  for (double c : m.artifact.params.poly_coeffs) {
    CHECK((c == 0.0 || std::abs(c) >= 1e-4));
    survivors += c != 0.0;
  }
  CHECK(survivors > 0);
}

TEST_CASE("divergence is reported with the last finite epoch") {
  const auto s = synth_year(5);
  auto cfg = small_config(200);
  try {
    train::train(model::ModelKind::Reverse, s.data, {}, cfg, 0, 1e4);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.last_finite().has_value());
    CHECK(e.epoch() > 0);
  }

  cfg.seeds = {0, 1};
  cfg.learning_rates = {1e4};
  const auto outcomes = train_seeds(model::ModelKind::Reverse, s.data, {}, cfg);
  REQUIRE(outcomes.size() == 2);
  for (const auto& o : outcomes) {
    CHECK_FALSE(o.model.has_value());
    CHECK_FALSE(o.failure.empty());
  }
}

TEST_CASE("learning-rate grid keeps the best validation loss") {
  const auto s = synth_year(6);
  const auto [tr, va] = ingest::chronological_split(s.data);
  auto cfg = small_config(200);
  cfg.learning_rates = {1e-2, 1e-3};
  const auto best = train_lr_grid(model::ModelKind::Reverse, tr, va, cfg, 0);
  double lowest = 1e300;
  for (double lr : cfg.learning_rates) {
    lowest = std::min(lowest, train::train(model::ModelKind::Reverse, tr, va, cfg, 0, lr).report.val_data_loss);
  }
  CHECK(best.report.val_data_loss == lowest);
}

TEST_CASE("argmin with lowest-seed ties") {
  std::vector<SelectionScore> s{{0, 12.0, {}}, {1, 3.5, {}}, {2, 9.1, {}}};
  CHECK(argmin_score(s) == 1);
  s = {{5, 2.0, {}}, {3, 2.0, {}}, {4, 7.0, {}}};
  CHECK(argmin_score(s) == 1);
  CHECK_THROWS_AS(argmin_score({}), ValidationError);
}

TEST_CASE("selection basics") {
  const auto s = synth_year(7);
  const auto m = train::train(model::ModelKind::Reverse, s.data, {}, small_config(50), 0, 1e-2);
  const auto sel = select_model({&m}, s.data, {{2021, 1e9}});
  CHECK(sel.index == 0);
  REQUIRE(sel.scores.size() == 1);
  CHECK(sel.scores[0].yearly_estimate.count(2021) == 1);
  CHECK_THROWS_AS(select_model({}, s.data, {{2021, 1.0}}), ValidationError);
  CHECK_THROWS_AS(select_model({&m}, s.data, {{1999, 1.0}}), ValidationError);
}

TEST_CASE("selection prefers the model of the true process") {
  // Candidates trained on emissions from the true kinetics and from two wrong
  // decay rates; scored against the true yearly total.
  const auto wrong_emission = [](double k) {
    auto p = synth::default_kinetics();
    p.decay_rate.assign(p.decay_rate.size(), k);
    const auto r = synth::default_diluent(kYear);
    return mech::simulate(p, mech::build_inflow_schedule(r.species, r.months, 1.0), mech::zero_state(p));
  };
  const auto slow = wrong_emission(0.01), fast = wrong_emission(0.2);
  int wins = 0;
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    const auto s = synth_year(100 + trial);
    auto traj_with = [&](const mech::MechanisticTrajectory& alt) {
      auto t = s.cfg.emission;
      for (std::size_t i = 0; i < t.days.size(); ++i) t.days[i].emission = alt.days[i].emission;
      return t;
    };
    auto cfg = small_config(400);
    std::vector<TrainedModel> models;
    models.push_back(train::train(model::ModelKind::Reverse, s.data, {}, cfg, trial, 1e-2));
    for (const auto* alt : {&slow, &fast}) {
      const auto data = testing::prepare(s.gen.station, traj_with(*alt), kYear);
      auto m = train::train(model::ModelKind::Reverse, data, {}, cfg, trial, 1e-2);
      models.push_back(std::move(m));
    }
    const auto truth = synth::yearly_totals(s.gen.truth);
    const auto sel = select_model({&models[0], &models[1], &models[2]}, s.data, truth);
    wins += sel.index == 0;
  }
  CHECK(wins >= 8);
}

TEST_CASE("reported emissions file") {
  std::stringstream in("year,tonnes\n2020,1200.5\n2021,980\n");
  const auto r = read_reported_emissions(in);
  CHECK(r.size() == 2);
  CHECK(r.at(2020) == 1200.5);
  std::stringstream bad("year,tonnes\n2020,lots\n");
  CHECK_THROWS(read_reported_emissions(bad));
}

TEST_CASE("summary JSON carries the final metrics") {
  TrainReport r;
  r.val_re_q = 0.125;
  r.history.push_back({1.0, 2.0, 3.0});
  std::stringstream s;
  write_summary_json(s, r);
  CHECK(s.str().find("0.125") != std::string::npos);
}
