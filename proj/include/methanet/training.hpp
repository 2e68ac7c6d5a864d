#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <vector>

#include "methanet/formulations.hpp"
#include "methanet/error.hpp"
#include "methanet/ingest.hpp"

namespace methanet::train {

using model::Vector;

struct TrainConfig {
  double lambda = 1.0;
  std::vector<double> learning_rates{1e-2, 1e-3};
  double momentum = 0.9;
  double weight_decay = 1e-3;
  std::size_t iterations = 10000;
  std::size_t batch_size = 0;  // 0 = full batch
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  bool sparse = false;
  double threshold = 1e-4;
  model::Architecture arch;

  void validate() const;
};

/// Mean squared data misfit plus lambda times mean squared constraint residual.
double penalty_loss(const Vector& u_pred, const Vector& u_obs, const Vector& residual, double lambda);

struct SgdConfig {
  double learning_rate = 1e-2;
  double momentum = 0.9;
  double weight_decay = 1e-3;
};

struct SgdState {
  Vector velocity;
};

/// v <- momentum*v + grad + decay*param; param <- param - lr*v.
/// Throws NumericalError naming `epoch` when the gradient is not finite.
void sgd_step(Vector& params, const Vector& grads, SgdState& state, const SgdConfig& cfg, std::size_t epoch = 0);

struct EpochRecord {
  double data_loss = 0.0;
  double constraint_residual = 0.0;  // mean squared
  double total_loss = 0.0;
};

struct TrainReport {
  model::ModelKind kind = model::ModelKind::Reverse;
  std::uint64_t seed = 0;
  double learning_rate = 0.0;
  double lambda = 0.0;
  std::vector<EpochRecord> history;
  double train_re_u = 0.0, val_re_u = 0.0;
  double train_re_q = 0.0, val_re_q = 0.0;
  double val_data_loss = 0.0;
  std::size_t zeroed_last_epoch = 0;
};

struct TrainedModel {
  model::ModelArtifact artifact;
  TrainReport report;
};

/// Thrown when a seed's loss stops being finite; carries the last finite epoch.
class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, std::optional<EpochRecord> last, std::size_t epoch)
      : NumericalError(what), last_(last), epoch_(epoch) {}
  const std::optional<EpochRecord>& last_finite() const { return last_; }
  std::size_t epoch() const { return epoch_; }

 private:
  std::optional<EpochRecord> last_;
  std::size_t epoch_;
};

/// Loss terms for the current parameters over a dataset.
EpochRecord evaluate_loss(const model::ModelParams& params, const model::Matrix& inputs, const Vector& u_obs,
                          const Vector& q_obs, double lambda);

/// One training run at a fixed learning rate. `validation` may be empty.
TrainedModel train(model::ModelKind kind, const ingest::Dataset& training, const ingest::Dataset& validation,
                   const TrainConfig& cfg, std::uint64_t seed, double learning_rate);

/// Trains once per learning rate in cfg.learning_rates and keeps the run with
/// the lowest validation data loss (training data loss when validation is empty).
TrainedModel train_lr_grid(model::ModelKind kind, const ingest::Dataset& training, const ingest::Dataset& validation,
                           const TrainConfig& cfg, std::uint64_t seed);

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::optional<TrainedModel> model;  // empty when the seed diverged
  std::string failure;
};

/// Trains every seed in cfg.seeds (threads when the hardware has several cores).
std::vector<SeedOutcome> train_seeds(model::ModelKind kind, const ingest::Dataset& training,
                                     const ingest::Dataset& validation, const TrainConfig& cfg);

struct SelectionScore {
  std::uint64_t seed = 0;
  double score = 0.0;
  std::map<int, double> yearly_estimate;  // tonnes per year
};

struct Selection {
  std::size_t index = 0;  // into the candidate list
  std::vector<SelectionScore> scores;
};

/// Per-candidate score: sum over reported years of |estimated yearly total -
/// reported|, where estimates substitute the measured concentrations in `data`.
/// Ties go to the lowest seed.
Selection select_model(const std::vector<const TrainedModel*>& candidates, const ingest::Dataset& data,
                       const std::map<int, double>& reported_yearly);

/// Pure argmin with lowest-seed tie-break; exposed for testing.
std::size_t argmin_score(const std::vector<SelectionScore>& scores);

/// `year,tonnes`.
std::map<int, double> read_reported_emissions(std::istream& in);
std::map<int, double> read_reported_emissions(const std::filesystem::path& path);

/// `epoch,data_loss,constraint_residual,total_loss`.
void write_report_csv(std::ostream& out, const TrainReport& report);
/// JSON summary of final metrics.
void write_summary_json(std::ostream& out, const TrainReport& report);

}  // namespace methanet::train
