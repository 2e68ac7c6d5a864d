#pragma once

// Weather-station ingestion: hourly CSV parsing, wind-sector filtering, daily
// averaging, linear gap filling, min-max scaling and dataset assembly.

#include <Eigen/Dense>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "methanet/calendar.hpp"
#include "methanet/mechanistic.hpp"

namespace methanet::ingest {

// Fixed station channels, in daily-series order. Extra CSV columns follow.
inline constexpr const char* kWindDirection = "wind_dir_deg";
inline constexpr const char* kWindSpeed = "wind_speed_ms";
inline constexpr const char* kTemperature = "temp_c";
inline constexpr const char* kSolar = "solar_wm2";
inline constexpr const char* kMethane = "ch4_ppm";

struct RawObservation {
  TimePoint timestamp;
  double wind_direction = 0.0;  // degrees, [0, 360)
  std::optional<double> wind_speed;
  std::optional<double> temperature;
  std::optional<double> solar;
  std::optional<double> ch4;
  std::vector<std::optional<double>> extra;
};

struct StationData {
  std::vector<std::string> extra_channels;
  std::vector<RawObservation> rows;
  std::size_t dropped = 0;

  /// Channel names in daily-series order: the five fixed channels, then extras.
  std::vector<std::string> channels() const;
};

/// Wraps any finite angle into [0, 360).
double normalize_direction(double degrees);

/// Header `timestamp,wind_dir_deg,wind_speed_ms,temp_c,solar_wm2,ch4_ppm` plus
/// optional extra numeric columns. Rows with an unparseable timestamp or wind
/// direction, a non-numeric value, or a non-increasing timestamp are dropped.
StationData parse_station_csv(std::istream& in);
StationData parse_station_csv(const std::filesystem::path& path);
void write_station_csv(std::ostream& out, const StationData& data);

/// Half-open sector [lo, hi); lo > hi wraps through north.
struct WindSector {
  double lo = 0.0;
  double hi = 360.0;

  bool contains(double direction) const;
  static WindSector full_circle() { return {0.0, 360.0}; }
};

StationData filter_by_wind_sector(const StationData& data, WindSector sector);

struct DailyRecord {
  Date date;
  std::vector<std::optional<double>> values;  // per channel, nullopt = missing
  std::vector<bool> filled;                   // per channel, true when interpolated
};

struct DailySeries {
  std::vector<std::string> channels;
  std::vector<DailyRecord> days;

  std::optional<std::size_t> channel(std::string_view name) const;
};

/// Per-day mean of every channel over the surviving observations. Wind
/// direction uses the vector (circular) mean. Days between the first and last
/// observation with no data are emitted with all channels missing.
DailySeries daily_aggregate(const StationData& data);

/// Restricts to `range` (inserting missing days) and fills every gap linearly
/// between known neighbours; leading and trailing gaps copy the nearest value.
DailySeries interpolate_gaps(const DailySeries& series, DateRange range);

/// Per-column min-max scaler. Constant columns (max == min) map to 0.
class Scaler {
 public:
  Scaler() = default;
  Scaler(std::vector<std::string> names, std::vector<double> min, std::vector<double> max);

  static Scaler fit(const std::vector<std::string>& names, const Eigen::MatrixXd& columns);

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  std::optional<std::size_t> index(std::string_view name) const;
  double min(std::size_t c) const { return min_[c]; }
  double max(std::size_t c) const { return max_[c]; }
  bool constant(std::size_t c) const { return !(max_[c] > min_[c]); }

  double scale(std::size_t c, double x) const;
  double inverse(std::size_t c, double x) const;

  void write_csv(std::ostream& out) const;
  static Scaler read_csv(std::istream& in);

 private:
  std::vector<std::string> names_;
  std::vector<double> min_;
  std::vector<double> max_;
};

struct ScaledColumns {
  Eigen::MatrixXd values;
  Scaler scaler;
};

/// Scales each column of `columns` (rows = samples) to [0, 1].
ScaledColumns minmax_scale(const std::vector<std::string>& names, const Eigen::MatrixXd& columns);

inline constexpr const char* kTimeColumn = "t";
inline constexpr const char* kEmissionColumn = "q_tonnes_per_day";

/// Scaled design matrix [x_dil | x_atm | t] with aligned targets.
struct Dataset {
  std::vector<Date> dates;
  std::vector<std::string> feature_names;
  std::size_t dil_count = 0;
  std::size_t atm_count = 0;
  Eigen::MatrixXd features;       // rows = days
  Eigen::VectorXd concentration;  // scaled ch4 (u)
  Eigen::VectorXd emission;       // scaled q (constraint target)
  std::vector<std::string> filled;  // per day, ';'-joined names of interpolated channels
  Scaler scaler;                  // columns: features, ch4_ppm, q_tonnes_per_day

  std::size_t rows() const { return dates.size(); }
  std::size_t feature_count() const { return feature_names.size(); }
  std::size_t time_index() const { return feature_names.size() - 1; }

  /// Physical-unit ch4 (ppm) and q (tonnes/day).
  Eigen::VectorXd concentration_ppm() const;
  Eigen::VectorXd emission_tonnes() const;

  Dataset slice(std::size_t first, std::size_t count) const;
};

struct AssembleOptions {
  /// Daily channels used as x_atm. Empty = every channel except ch4.
  std::vector<std::string> atm_channels;
  /// Reuse a fitted scaler (inference on new data) instead of fitting one.
  const Scaler* fixed_scaler = nullptr;
};

/// Aligns gap-free weather days with the mechanistic trajectory over `range`.
/// The time feature is the absolute day number, so a fitted scaler maps it to
/// index/(N-1).
Dataset assemble_dataset(const DailySeries& weather, const mech::MechanisticTrajectory& traj,
                         DateRange range, const AssembleOptions& options = {});

/// First floor(train_fraction * N) rows train, the remainder validates.
std::pair<Dataset, Dataset> chronological_split(const Dataset& data, double train_fraction = 0.8);

/// `date,<features...>,ch4_ppm,q_tonnes_per_day,filled` with scaled values, plus a
/// sidecar scaler file `name,min,max`.
void write_dataset_csv(std::ostream& out, const Dataset& data);
Dataset read_dataset_csv(std::istream& data_in, std::istream& scaler_in);
void save_dataset(const Dataset& data, const std::filesystem::path& csv_path,
                  const std::filesystem::path& scaler_path);
Dataset load_dataset(const std::filesystem::path& csv_path, const std::filesystem::path& scaler_path);

}  // namespace methanet::ingest
