#pragma once

// Methanogenesis in a tailings pond: hydrocarbon masses degrade under either
// first-order or Monod-with-biomass kinetics, driven by a daily diluent
// inflow, and release methane in proportion to the degraded mass.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "methanet/calendar.hpp"

namespace methanet::mech {

enum class KineticsKind { FirstOrder, Monod };

KineticsKind parse_kinetics_kind(std::string_view name);
std::string to_string(KineticsKind kind);

/// Rate constants. Per-species vectors all have one entry per hydrocarbon.
struct KineticsParams {
  KineticsKind kind = KineticsKind::FirstOrder;
  std::vector<std::string> species;
  std::vector<double> decay_rate;       // k_i, 1/day (first-order)
  std::vector<double> max_uptake;       // v_max_i, mass/(biomass*day) (monod)
  std::vector<double> half_saturation;  // K_s_i, tonnes (monod)
  std::vector<double> methane_factor;   // mu_i, tonnes CH4 per tonne hydrocarbon
  double biomass_yield = 0.0;           // Y
  double biomass_death = 0.0;           // k_d, 1/day

  std::size_t species_count() const { return species.size(); }
  /// Number of auxiliary state variables (biomass for Monod).
  std::size_t aux_count() const { return kind == KineticsKind::Monod ? 1 : 0; }

  /// Throws ValidationError when an invariant is broken.
  void validate() const;

  /// Non-physical placeholder constants for synthetic runs (k = 0.05/day, mu = 0.3).
  static KineticsParams demo(std::vector<std::string> species);
};

struct PondState {
  std::vector<double> mass;  // C_i, tonnes
  std::vector<double> aux;   // y_j, tonnes (biomass)
};

PondState zero_state(const KineticsParams& params);

struct StepResult {
  PondState state;
  double methane = 0.0;  // tonnes CH4 released during the step
};

struct MonthlyTotal {
  int year = 0;
  unsigned month = 0;
  std::vector<double> tonnes;  // per species
};

struct InflowDay {
  Date date;
  std::vector<double> inflow;  // tonnes/day per species
};

struct InflowSchedule {
  std::vector<std::string> species;
  std::vector<InflowDay> days;
};

struct DayRecord {
  Date date;
  std::vector<double> mass;
  std::vector<double> aux;
  double emission = 0.0;  // q, tonnes CH4/day
};

struct MechanisticTrajectory {
  std::vector<std::string> species;
  std::size_t aux_count = 0;
  std::vector<DayRecord> days;

  const DayRecord* find(Date d) const;
};

/// Every day of each month carries fft_fraction * total / days_in_month.
InflowSchedule build_inflow_schedule(const std::vector<std::string>& species,
                                     const std::vector<MonthlyTotal>& totals, double fft_fraction);

/// Instantaneous CH4 release rate (tonnes/day) for a state.
double emission_rate(const KineticsParams& params, const PondState& state);

/// One classical RK4 step of length dt (days). Inflow is held constant over the step.
StepResult step(const PondState& state, const std::vector<double>& inflow,
                const KineticsParams& params, double dt = 1.0);

/// Integrates one day per schedule entry; each record holds the end-of-day state
/// and the CH4 released during that day.
MechanisticTrajectory simulate(const KineticsParams& params, const InflowSchedule& schedule,
                               const PondState& initial);

struct SanitizeResult {
  MechanisticTrajectory trajectory;
  std::size_t replaced = 0;
  double replaced_fraction() const {
    return trajectory.days.empty() ? 0.0
                                   : static_cast<double>(replaced) / trajectory.days.size();
  }
};

/// Days with a negative or non-finite field are replaced by the previous day's record.
SanitizeResult sanitize(const MechanisticTrajectory& trajectory);

// File formats

/// `year,month,hydrocarbon,tonnes`, long format. Species are ordered by first appearance.
struct DiluentReport {
  std::vector<std::string> species;
  std::vector<MonthlyTotal> months;
};
DiluentReport read_diluent_csv(std::istream& in);
DiluentReport read_diluent_csv(const std::filesystem::path& path);
void write_diluent_csv(std::ostream& out, const DiluentReport& report);

/// Deterministic seasonal placeholder report covering [first_year, last_year].
DiluentReport demo_diluent_report(const std::vector<std::string>& species, int first_year,
                                  int last_year);

/// `date,C_1..C_n,y_1..y_k,q_tonnes_per_day`.
void write_trajectory_csv(std::ostream& out, const MechanisticTrajectory& trajectory);
MechanisticTrajectory read_trajectory_csv(std::istream& in);
MechanisticTrajectory read_trajectory_csv(const std::filesystem::path& path);

}  // namespace methanet::mech
