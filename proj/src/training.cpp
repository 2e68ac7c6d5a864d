#include "methanet/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>

#include "methanet/csv.hpp"

namespace methanet::train {

using model::Matrix;
using model::ModelKind;

void TrainConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be >= 0");
  if (learning_rates.empty()) throw ValidationError("learning-rate grid is empty");
  for (double lr : learning_rates) {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("learning rates must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight decay must be >= 0");
  if (iterations < 1) throw ValidationError("iterations must be >= 1");
  if (seeds.empty()) throw ValidationError("seed list is empty");
  if (!(threshold > 0.0)) throw ValidationError("threshold must be > 0");
  if (arch.u_width == 0 || arch.phi_width == 0 || arch.nn_width == 0) throw ValidationError("layer widths must be >= 1");
}

double penalty_loss(const Vector& u_pred, const Vector& u_obs, const Vector& residual, double lambda) {
  if (u_pred.size() != u_obs.size() || residual.size() != u_obs.size()) {
    throw ShapeError("penalty_loss: u_pred, u_obs and residual lengths differ (" + std::to_string(u_pred.size()) +
                     ", " + std::to_string(u_obs.size()) + ", " + std::to_string(residual.size()) + ")");
  }
  if (!(lambda >= 0.0)) throw ValidationError("penalty_loss: lambda must be >= 0");
  if (u_obs.size() == 0) throw ValidationError("penalty_loss: empty input");
  const double n = static_cast<double>(u_obs.size());
  return (u_pred - u_obs).squaredNorm() / n + lambda * residual.squaredNorm() / n;
}

void sgd_step(Vector& params, const Vector& grads, SgdState& state, const SgdConfig& cfg, std::size_t epoch) {
  if (grads.size() != params.size()) throw ShapeError("sgd_step: gradient and parameter lengths differ");
  if (state.velocity.size() == 0) state.velocity = Vector::Zero(params.size());
  if (state.velocity.size() != params.size()) throw ShapeError("sgd_step: velocity and parameter lengths differ");
  if (!grads.allFinite()) throw NumericalError("divergence: non-finite gradient at epoch " + std::to_string(epoch));
  state.velocity = cfg.momentum * state.velocity + grads + cfg.weight_decay * params;
  params -= cfg.learning_rate * state.velocity;
}

namespace {

// The NN baseline has no constraint residual; its second output is fit like the first.
double effective_lambda(ModelKind kind, double lambda) { return kind == ModelKind::NnBaseline ? 1.0 : lambda; }

EpochRecord record_of(const model::JointOutput& out, const Vector& u_obs, const Vector& q_obs, double lambda) {
  const double n = static_cast<double>(u_obs.size());
  EpochRecord r;
  r.data_loss = (out.u_hat - u_obs).squaredNorm() / n;
  r.constraint_residual = (out.q_hat - q_obs).squaredNorm() / n;
  r.total_loss = r.data_loss + lambda * r.constraint_residual;
  return r;
}

bool finite(const EpochRecord& r) {
  return std::isfinite(r.data_loss) && std::isfinite(r.constraint_residual) && std::isfinite(r.total_loss);
}

double relative_error(const Vector& truth, const Vector& pred) {
  const double denom = truth.norm();
  if (denom == 0.0) return (truth - pred).norm() == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return (truth - pred).norm() / denom;
}

// RE in physical units (ppm, tonnes/day).
std::pair<double, double> physical_re(const model::ModelParams& params, const ingest::Dataset& data) {
  if (data.dates.empty()) return {0.0, 0.0};
  const auto out = model::evaluate(params, model::inputs_of(data));
  const auto iu = data.scaler.index(ingest::kMethane);
  const auto iq = data.scaler.index(ingest::kEmissionColumn);
  if (!iu || !iq) throw ValidationError("dataset scaler lacks the concentration or emission column");
  auto inv = [&](std::size_t c, const Vector& v) {
    Vector r(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) r(i) = data.scaler.inverse(c, v(i));
    return r;
  };
  return {relative_error(data.concentration_ppm(), inv(*iu, out.u_hat)),
          relative_error(data.emission_tonnes(), inv(*iq, out.q_hat))};
}

model::InputLayout layout_of(const ingest::Dataset& d) { return {d.dil_count, d.atm_count}; }

}  // namespace

EpochRecord evaluate_loss(const model::ModelParams& params, const Matrix& inputs, const Vector& u_obs,
                          const Vector& q_obs, double lambda) {
  if (u_obs.size() != inputs.cols() || q_obs.size() != inputs.cols()) throw ShapeError("targets must match batch size");
  return record_of(model::evaluate(params, inputs), u_obs, q_obs, effective_lambda(params.kind, lambda));
}

TrainedModel train(ModelKind kind, const ingest::Dataset& training, const ingest::Dataset& validation,
                   const TrainConfig& cfg, std::uint64_t seed, double learning_rate) {
  cfg.validate();
  if (training.dates.empty()) throw ValidationError("training split is empty");
  if (!validation.dates.empty() && (validation.dil_count != training.dil_count ||
                                    validation.atm_count != training.atm_count)) {
    throw ShapeError("training and validation feature layouts differ");
  }

  model::ModelParams params = model::ModelParams::init(kind, layout_of(training), cfg.arch, seed);
  const double lambda = effective_lambda(kind, cfg.lambda);
  const Matrix x_all = model::inputs_of(training);
  const Vector& u_all = training.concentration;
  const Vector& q_all = training.emission;
  const auto n_all = x_all.cols();

  const bool minibatch = cfg.batch_size > 0 && static_cast<Eigen::Index>(cfg.batch_size) < n_all;
  std::mt19937_64 shuffle_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n_all));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::size_t cursor = order.size();

  Vector flat = params.flatten();
  SgdState state;
  const SgdConfig sgd{learning_rate, cfg.momentum, cfg.weight_decay};
  const std::size_t theta_hat = params.constraint_parameter_count();
  const bool threshold = cfg.sparse && theta_hat > 0;

  TrainReport report;
  report.kind = kind;
  report.seed = seed;
  report.learning_rate = learning_rate;
  report.lambda = cfg.lambda;
  report.history.reserve(cfg.iterations);

  Matrix xb;
  Vector ub, qb;
  for (std::size_t epoch = 0; epoch < cfg.iterations; ++epoch) {
    const Matrix* x = &x_all;
    const Vector* u = &u_all;
    const Vector* q = &q_all;
    if (minibatch) {
      const auto b = static_cast<Eigen::Index>(cfg.batch_size);
      if (cursor + cfg.batch_size > order.size()) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        cursor = 0;
      }
      xb.resize(x_all.rows(), b);
      ub.resize(b);
      qb.resize(b);
      for (Eigen::Index j = 0; j < b; ++j) {
        const auto i = order[cursor + static_cast<std::size_t>(j)];
        xb.col(j) = x_all.col(i);
        ub(j) = u_all(i);
        qb(j) = q_all(i);
      }
      cursor += cfg.batch_size;
      x = &xb, u = &ub, q = &qb;
    }

    const double n = static_cast<double>(x->cols());
    EpochRecord rec;
    auto vg = model::value_and_gradient(params, *x, [&](const model::JointOutput& out) {
      rec = record_of(out, *u, *q, lambda);
      return model::Upstream{(2.0 / n) * (out.u_hat - *u), (2.0 * lambda / n) * (out.q_hat - *q)};
    });
    if (!finite(rec)) {
      std::optional<EpochRecord> last;
      if (!report.history.empty()) last = report.history.back();
      throw DivergenceError("divergence: non-finite loss at epoch " + std::to_string(epoch) + " (seed " +
                                std::to_string(seed) + ")",
                            last, epoch);
    }
    report.history.push_back(rec);
    try {
      sgd_step(flat, vg.gradient, state, sgd, epoch);
    } catch (const NumericalError& e) {
      throw DivergenceError(e.what(), rec, epoch);
    }
    if (threshold) {
      std::span<double> tail(flat.data() + (flat.size() - static_cast<Eigen::Index>(theta_hat)), theta_hat);
      report.zeroed_last_epoch = net::hard_threshold(tail, cfg.threshold);
    }
    params.assign(flat);
  }

  std::tie(report.train_re_u, report.train_re_q) = physical_re(params, training);
  if (!validation.dates.empty()) {
    std::tie(report.val_re_u, report.val_re_q) = physical_re(params, validation);
    report.val_data_loss = evaluate_loss(params, model::inputs_of(validation), validation.concentration,
                                         validation.emission, cfg.lambda)
                               .data_loss;
  } else {
    report.val_data_loss = evaluate_loss(params, x_all, u_all, q_all, cfg.lambda).data_loss;
  }
  if (!std::isfinite(report.val_data_loss)) {
    throw DivergenceError("divergence: non-finite final loss (seed " + std::to_string(seed) + ")",
                          report.history.empty() ? std::nullopt : std::optional(report.history.back()),
                          cfg.iterations);
  }

  TrainedModel out;
  out.artifact.params = std::move(params);
  out.artifact.scaler = training.scaler;
  out.artifact.feature_names = training.feature_names;
  out.artifact.seed = seed;
  out.report = std::move(report);
  return out;
}

TrainedModel train_lr_grid(ModelKind kind, const ingest::Dataset& training, const ingest::Dataset& validation,
                           const TrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::optional<TrainedModel> best;
  std::string failure;
  for (double lr : cfg.learning_rates) {
    try {
      TrainedModel m = train(kind, training, validation, cfg, seed, lr);
      // strict < keeps the earlier grid point on ties
      if (!best || m.report.val_data_loss < best->report.val_data_loss) best = std::move(m);
    } catch (const DivergenceError& e) {
      failure = e.what();
    }
  }
  if (!best) throw NumericalError(failure.empty() ? "every learning rate diverged" : failure);
  return std::move(*best);
}

std::vector<SeedOutcome> train_seeds(ModelKind kind, const ingest::Dataset& training,
                                     const ingest::Dataset& validation, const TrainConfig& cfg) {
  cfg.validate();
  std::vector<SeedOutcome> out(cfg.seeds.size());
  auto run = [&](std::size_t i) {
    out[i].seed = cfg.seeds[i];
    try {
      out[i].model = train_lr_grid(kind, training, validation, cfg, cfg.seeds[i]);
    } catch (const NumericalError& e) {
      out[i].failure = e.what();
    }
  };
  const std::size_t workers = std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), out.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < out.size(); ++i) run(i);
    return out;
  }
  // Seeds are independent; each slot is written by exactly one worker, so the result
  // does not depend on scheduling.
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i; (i = next.fetch_add(1)) < out.size();) run(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::size_t argmin_score(const std::vector<SelectionScore>& scores) {
  if (scores.empty()) throw ValidationError("empty input: no candidates to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    const auto& a = scores[i];
    const auto& b = scores[best];
    if (a.score < b.score || (a.score == b.score && a.seed < b.seed)) best = i;
  }
  return best;
}

Selection select_model(const std::vector<const TrainedModel*>& candidates, const ingest::Dataset& data,
                       const std::map<int, double>& reported_yearly) {
  if (candidates.empty()) throw ValidationError("empty input: no candidates to select from");
  if (reported_yearly.empty()) throw ValidationError("reported emissions cover no years");
  std::map<int, std::vector<std::size_t>> rows_by_year;
  for (std::size_t i = 0; i < data.dates.size(); ++i) rows_by_year[year_of(data.dates[i])].push_back(i);
  for (const auto& [year, _] : reported_yearly) {
    if (!rows_by_year.count(year)) throw ValidationError("no measured days for reported year " + std::to_string(year));
  }

  Selection sel;
  for (const TrainedModel* c : candidates) {
    if (!c) throw ValidationError("null candidate");
    const Vector daily = model::estimate_emissions_measured(c->artifact, data);
    SelectionScore s;
    s.seed = c->artifact.seed;
    for (const auto& [year, reported] : reported_yearly) {
      double total = 0.0;
      for (std::size_t i : rows_by_year[year]) total += daily(static_cast<Eigen::Index>(i));
      s.yearly_estimate[year] = total;
      s.score += std::abs(total - reported);
    }
    if (!std::isfinite(s.score)) s.score = std::numeric_limits<double>::infinity();
    sel.scores.push_back(std::move(s));
  }
  sel.index = argmin_score(sel.scores);
  return sel;
}

std::map<int, double> read_reported_emissions(std::istream& in) {
  std::string line;
  if (!csv::next_line(in, line)) throw ValidationError("reported emissions: empty file");
  const auto header = csv::split(line);
  const auto iy_ = csv::column(header, "year");
  const auto it_ = csv::column(header, "tonnes");
  if (!iy_ || !it_) throw FormatError("reported emissions: header must contain year,tonnes");
  const std::size_t iy = *iy_, it = *it_;
  std::map<int, double> out;
  std::size_t lineno = 1;
  while (csv::next_line(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != header.size()) throw FormatError("reported emissions line " + std::to_string(lineno) + ": field count");
    const auto yv = csv::parse_number(f[iy]);
    const auto tv = csv::parse_number(f[it]);
    if (!yv || !tv || !std::isfinite(*tv)) throw FormatError("reported emissions line " + std::to_string(lineno) + ": not numeric");
    const double y = *yv, t = *tv;
    if (y != std::floor(y)) throw FormatError("reported emissions line " + std::to_string(lineno) + ": bad year");
    if (t < 0.0) throw ValidationError("reported emissions line " + std::to_string(lineno) + ": negative tonnes");
    if (!out.emplace(static_cast<int>(y), t).second) {
      throw ValidationError("reported emissions: duplicate year " + f[iy]);
    }
  }
  return out;
}

std::map<int, double> read_reported_emissions(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  try {
    return read_reported_emissions(in);
  } catch (const Error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_report_csv(std::ostream& out, const TrainReport& report) {
  out << "epoch,data_loss,constraint_residual,total_loss\n";
  for (std::size_t i = 0; i < report.history.size(); ++i) {
    const auto& r = report.history[i];
    out << i + 1 << ',' << csv::format_number(r.data_loss) << ',' << csv::format_number(r.constraint_residual) << ','
        << csv::format_number(r.total_loss) << '\n';
  }
}

void write_summary_json(std::ostream& out, const TrainReport& report) {
  nlohmann::ordered_json j;
  j["kind"] = model::to_string(report.kind);
  j["seed"] = report.seed;
  j["learning_rate"] = report.learning_rate;
  j["lambda"] = report.lambda;
  j["epochs"] = report.history.size();
  if (!report.history.empty()) {
    j["final_data_loss"] = report.history.back().data_loss;
    j["final_constraint_residual"] = report.history.back().constraint_residual;
    j["final_total_loss"] = report.history.back().total_loss;
  }
  j["train_re_u"] = report.train_re_u;
  j["train_re_q"] = report.train_re_q;
  j["val_re_u"] = report.val_re_u;
  j["val_re_q"] = report.val_re_q;
  j["val_data_loss"] = report.val_data_loss;
  j["zeroed_last_epoch"] = report.zeroed_last_epoch;
  out << j.dump(2) << '\n';
}

}  // namespace methanet::train
