#pragma once

// Synthetic station data from a known affine dispersion law:
//   ch4 = u_bg + g * q(t) * m(ws) + noise   when the wind blows from the source,
//   ch4 = u_bg + noise                      otherwise,
// with m(ws) = 1/(1 + ws) by default. Used as the ground-truth oracle for the
// whole pipeline.

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "methanet/calendar.hpp"
#include "methanet/ingest.hpp"
#include "methanet/mechanistic.hpp"

namespace methanet::synth {

enum class Modulation { InverseWindSpeed, None };
Modulation parse_modulation(std::string_view name);  // "inverse-wind" | "none"

struct SynthConfig {
  std::uint64_t seed = 0;
  DateRange range{parse_date("2020-01-01"), parse_date("2022-12-31")};
  mech::MechanisticTrajectory emission;  // true q(t); must cover `range`

  double source_bearing = 310.0;  // degrees the source lies in, seen from the station
  double source_half_width = 10.0;
  double gain = 0.5;   // ppm per (tonnes/day)
  double background = 1.8;  // u_bg, ppm
  double noise = 0.02;      // ppm std, hourly
  Modulation modulation = Modulation::InverseWindSpeed;

  // Wind regime: each day has one prevailing direction; a fraction of days
  // blow from the source, the rest are uniform over the circle.
  double source_day_fraction = 0.35;
  double direction_jitter = 2.0;  // hourly degrees around the daily direction
  double wind_speed_mean = 3.0;
  double wind_speed_variability = 1.0;  // 0 = constant wind speed

  // Smooth atmospheric drivers.
  double temperature_mean = 2.0;
  double temperature_amplitude = 18.0;
  double solar_mean = 150.0;
  double solar_amplitude = 110.0;

  void validate() const;
};

/// Demo first-order trajectory (two diluent species, demo monthly report) covering `range`.
mech::MechanisticTrajectory default_emission(DateRange range);
/// The diluent report default_emission() was simulated from, over whole years of `range`.
mech::DiluentReport default_diluent(DateRange range);
/// Kinetics used by default_emission().
mech::KineticsParams default_kinetics();
inline constexpr double kDefaultFftFraction = 1.0;

struct SynthOutput {
  ingest::StationData station;            // hourly
  std::vector<std::pair<Date, double>> truth;  // q, tonnes/day
};

SynthOutput generate(const SynthConfig& cfg);

/// `date,q_tonnes_per_day`.
void write_truth_csv(std::ostream& out, const std::vector<std::pair<Date, double>>& truth);
std::vector<std::pair<Date, double>> read_truth_csv(std::istream& in);
std::vector<std::pair<Date, double>> read_truth_csv(const std::filesystem::path& path);

/// Yearly sums of the truth, `year,tonnes` in read_reported_emissions format.
std::map<int, double> yearly_totals(const std::vector<std::pair<Date, double>>& daily);
void write_yearly_csv(std::ostream& out, const std::map<int, double>& yearly);

struct OracleReport {
  double relative_error = 0.0;
  std::map<int, double> yearly_gap_pct;  // 100 |sum est - sum true| / sum true
  double max_gap_pct() const;
};

/// Dates must match one-to-one; throws AlignmentError otherwise.
OracleReport oracle_check(const std::vector<Date>& dates, const Eigen::VectorXd& estimated,
                          const std::vector<std::pair<Date, double>>& truth);

}  // namespace methanet::synth
