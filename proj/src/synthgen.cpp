#include "methanet/synthgen.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>
#include <random>

#include "methanet/csv.hpp"
#include "methanet/error.hpp"

namespace methanet::synth {

namespace {

const std::vector<std::string> kDemoSpecies{"naphtha", "paraffinic"};

int first_year(DateRange r) { return year_of(r.first); }
int last_year(DateRange r) { return year_of(r.last); }

double angular_distance(double a, double b) {
  const double d = std::fmod(std::abs(a - b), 360.0);
  return d > 180.0 ? 360.0 - d : d;
}

}  // namespace

Modulation parse_modulation(std::string_view name) {
  if (name == "inverse-wind") return Modulation::InverseWindSpeed;
  if (name == "none") return Modulation::None;
  throw ValidationError("unknown modulation '" + std::string(name) + "' (inverse-wind|none)");
}

void SynthConfig::validate() const {
  if (range.size() == 0) throw ValidationError("synth: empty date range");
  if (!(gain > 0.0)) throw ValidationError("synth: gain must be > 0");
  if (!(noise >= 0.0)) throw ValidationError("synth: noise must be >= 0");
  if (!(source_half_width > 0.0 && source_half_width <= 180.0)) {
    throw ValidationError("synth: source half width must lie in (0, 180]");
  }
  if (!(direction_jitter >= 0.0 && direction_jitter < source_half_width)) {
    throw ValidationError("synth: direction jitter must be >= 0 and below the source half width");
  }
  if (!(source_day_fraction >= 0.0 && source_day_fraction <= 1.0)) {
    throw ValidationError("synth: source day fraction must lie in [0, 1]");
  }
  if (!(wind_speed_mean >= 0.0) || !(wind_speed_variability >= 0.0)) {
    throw ValidationError("synth: wind speed parameters must be >= 0");
  }
  if (!std::isfinite(source_bearing) || !std::isfinite(background)) throw ValidationError("synth: non-finite parameter");
  for (Date d = range.first; d <= range.last; d += std::chrono::days{1}) {
    if (!emission.find(d)) throw AlignmentError("synth: emission trajectory does not cover " + format_date(d));
  }
}

mech::KineticsParams default_kinetics() { return mech::KineticsParams::demo(kDemoSpecies); }

mech::DiluentReport default_diluent(DateRange range) {
  return mech::demo_diluent_report(kDemoSpecies, first_year(range), last_year(range));
}

mech::MechanisticTrajectory default_emission(DateRange range) {
  const auto params = default_kinetics();
  const auto report = default_diluent(range);
  const auto schedule = mech::build_inflow_schedule(report.species, report.months, kDefaultFftFraction);
  return mech::sanitize(mech::simulate(params, schedule, mech::zero_state(params))).trajectory;
}

SynthOutput generate(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;

  SynthOutput out;
  double ws_state = 0.0, temp_state = 0.0, solar_state = 0.0;  // AR(1) anomalies
  for (Date d = cfg.range.first; d <= cfg.range.last; d += std::chrono::days{1}) {
    const double q = cfg.emission.find(d)->emission;
    out.truth.emplace_back(d, q);

    const auto ymd = std::chrono::year_month_day{d};
    const auto jan1 = std::chrono::sys_days{ymd.year() / std::chrono::January / 1};
    const double doy = static_cast<double>((d - jan1).count());
    const double season = std::sin(two_pi * (doy - 110.0) / 365.25);

    // Draw order is fixed per day so every channel is reproducible from the seed.
    const bool from_source = unit(rng) < cfg.source_day_fraction;
    const double spread = cfg.source_half_width - cfg.direction_jitter;
    const double prevailing = from_source ? cfg.source_bearing + spread * (2.0 * unit(rng) - 1.0) * 0.95
                                          : 360.0 * unit(rng);
    ws_state = 0.7 * ws_state + 0.7 * gauss(rng);
    temp_state = 0.8 * temp_state + 1.5 * gauss(rng);
    solar_state = 0.6 * solar_state + 20.0 * gauss(rng);
    const double ws_day =
        std::max(0.3, cfg.wind_speed_mean + cfg.wind_speed_variability * (0.5 * season + ws_state));
    const double temp_day = cfg.temperature_mean + cfg.temperature_amplitude * season + temp_state;
    const double solar_day = std::max(0.0, cfg.solar_mean + cfg.solar_amplitude * season + solar_state);

    for (int h = 0; h < 24; ++h) {
      ingest::RawObservation o;
      o.timestamp = TimePoint{std::chrono::duration_cast<std::chrono::seconds>(d.time_since_epoch()) +
                              std::chrono::hours{h}};
      o.wind_direction =
          ingest::normalize_direction(prevailing + cfg.direction_jitter * (2.0 * unit(rng) - 1.0));
      const double ws =
          std::max(0.1, ws_day + 0.3 * cfg.wind_speed_variability * gauss(rng));
      o.wind_speed = ws;
      o.temperature = temp_day + 0.2 * gauss(rng);
      o.solar = std::max(0.0, solar_day + 5.0 * gauss(rng));
      double ch4 = cfg.background + cfg.noise * gauss(rng);
      if (angular_distance(o.wind_direction, cfg.source_bearing) < cfg.source_half_width) {
        const double m = cfg.modulation == Modulation::InverseWindSpeed ? 1.0 / (1.0 + ws) : 1.0;
        ch4 += cfg.gain * q * m;
      }
      o.ch4 = ch4;
      out.station.rows.push_back(std::move(o));
    }
  }
  return out;
}

void write_truth_csv(std::ostream& out, const std::vector<std::pair<Date, double>>& truth) {
  out << "date," << ingest::kEmissionColumn << '\n';
  for (const auto& [d, q] : truth) out << format_date(d) << ',' << csv::format_number(q) << '\n';
}

std::vector<std::pair<Date, double>> read_truth_csv(std::istream& in) {
  std::string line;
  if (!csv::next_line(in, line)) throw ValidationError("truth file is empty");
  const auto header = csv::split(line);
  if (header.size() != 2 || header[0] != "date" || header[1] != ingest::kEmissionColumn) {
    throw FormatError("truth header must be date," + std::string(ingest::kEmissionColumn));
  }
  std::vector<std::pair<Date, double>> out;
  std::size_t lineno = 1;
  while (csv::next_line(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = csv::split(line);
    const auto q = f.size() == 2 ? csv::parse_number(f[1]) : std::nullopt;
    if (!q) throw FormatError("truth line " + std::to_string(lineno) + ": expected date,number");
    out.emplace_back(parse_date(f[0]), *q);
  }
  return out;
}

std::vector<std::pair<Date, double>> read_truth_csv(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  return read_truth_csv(in);
}

std::map<int, double> yearly_totals(const std::vector<std::pair<Date, double>>& daily) {
  std::map<int, double> out;
  for (const auto& [d, q] : daily) out[year_of(d)] += q;
  return out;
}

void write_yearly_csv(std::ostream& out, const std::map<int, double>& yearly) {
  out << "year,tonnes\n";
  for (const auto& [y, t] : yearly) out << y << ',' << csv::format_number(t) << '\n';
}

double OracleReport::max_gap_pct() const {
  double m = 0.0;
  for (const auto& [_, g] : yearly_gap_pct) m = std::max(m, g);
  return m;
}

OracleReport oracle_check(const std::vector<Date>& dates, const Eigen::VectorXd& estimated,
                          const std::vector<std::pair<Date, double>>& truth) {
  if (static_cast<Eigen::Index>(dates.size()) != estimated.size()) {
    throw AlignmentError("oracle: " + std::to_string(dates.size()) + " dates for " +
                         std::to_string(estimated.size()) + " estimates");
  }
  std::map<Date, double> by_date(truth.begin(), truth.end());
  Eigen::VectorXd t(estimated.size());
  std::map<int, std::pair<double, double>> sums;  // year -> (estimated, true)
  for (std::size_t i = 0; i < dates.size(); ++i) {
    const auto it = by_date.find(dates[i]);
    if (it == by_date.end()) throw AlignmentError("oracle: no truth for " + format_date(dates[i]));
    t(static_cast<Eigen::Index>(i)) = it->second;
    auto& s = sums[year_of(dates[i])];
    s.first += estimated(static_cast<Eigen::Index>(i));
    s.second += it->second;
  }
  OracleReport r;
  const double denom = t.norm();
  r.relative_error = denom > 0.0 ? (t - estimated).norm() / denom : (estimated.norm() == 0.0 ? 0.0 : INFINITY);
  for (const auto& [y, s] : sums) {
    r.yearly_gap_pct[y] = s.second > 0.0 ? 100.0 * std::abs(s.first - s.second) / s.second
                                         : (s.first == 0.0 ? 0.0 : INFINITY);
  }
  return r;
}

}  // namespace methanet::synth
