#pragma once

// Metrics, per-wind-sector yearly emission attribution and target-concentration
// scenarios.

#include <Eigen/Dense>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "methanet/calendar.hpp"
#include "methanet/formulations.hpp"
#include "methanet/ingest.hpp"

namespace methanet::analysis {

/// ||y_true - y_pred|| / ||y_true||. Throws ValidationError on a zero-norm truth.
double relative_error(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred);

inline constexpr double kSectorWidth = 20.0;

/// floor(direction / width) for direction in [0, 360).
std::size_t sector_of(double direction, double width = kSectorWidth);
std::size_t sector_count(double width = kSectorWidth);

struct DailyEmission {
  Date date;
  double direction = 0.0;  // degrees
  double tonnes = 0.0;     // tonnes/day, may be negative before aggregation
};

struct SectorEmissionSummary {
  int year = 0;
  std::size_t sector = 0;
  double start_deg = 0.0;
  double end_deg = 0.0;
  double tonnes = 0.0;  // cumulative tonnes over the year's days in this sector
  std::size_t days = 0;
  std::size_t clamped_days = 0;
};

struct SectorTable {
  std::vector<SectorEmissionSummary> rows;  // every sector of every year present, (year, sector) order
  std::size_t clamped = 0;                  // negative daily estimates set to zero
  std::size_t skipped = 0;                  // days without a finite direction
};

/// Sums daily tonnes per (year, sector); negatives are clamped to 0 and counted.
SectorTable yearly_sector_emissions(const std::vector<DailyEmission>& daily, double width = kSectorWidth);

/// input - (mean(input) - target).
Eigen::VectorXd shift_to_target_mean(const Eigen::VectorXd& concentrations, double target = 1.75);

struct ScenarioRow {
  int year = 0;
  std::size_t sector = 0;
  double start_deg = 0.0;
  double end_deg = 0.0;
  double current_tonnes = 0.0;
  double target_tonnes = 0.0;
  std::optional<double> reduction_pct;  // nullopt when current == 0
};

struct TargetScenario {
  double target_ppm = 1.75;
  std::vector<ScenarioRow> rows;
  /// 100 (sum current - sum target) / sum current over sectors with a defined reduction.
  std::optional<double> aggregate_reduction_pct;
};

/// Pairs current and target summaries by (year, sector). Positive percentages are
/// reductions, negative ones allowable increases.
TargetScenario reduction_table(const std::vector<SectorEmissionSummary>& current,
                               const std::vector<SectorEmissionSummary>& target, double target_ppm = 1.75);

/// Daily emissions from a trained model replayed over `data` (assembled with the
/// model's scaler) with measured concentrations substituted. `measured_u` overrides
/// the dataset's scaled concentration column when given.
std::vector<DailyEmission> track_emissions(const model::ModelArtifact& artifact, const ingest::Dataset& data,
                                           const std::vector<double>& directions,
                                           const std::optional<Eigen::VectorXd>& measured_u = std::nullopt);

/// `year,sector_start_deg,sector_end_deg,tonnes,days,clamped_days`.
void write_sector_csv(std::ostream& out, const std::vector<SectorEmissionSummary>& rows);
/// Sector columns plus `target_tonnes,reduction_pct` (`NA` when undefined).
void write_scenario_csv(std::ostream& out, const TargetScenario& scenario);

/// Radial bar chart of one year's sector totals.
void write_radial_svg(std::ostream& out, const std::vector<SectorEmissionSummary>& year_rows, int year);

}  // namespace methanet::analysis
