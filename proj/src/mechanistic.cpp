#include "methanet/mechanistic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <ostream>

#include "methanet/csv.hpp"
#include "methanet/error.hpp"

namespace methanet::mech {

KineticsKind parse_kinetics_kind(std::string_view name) {
  if (name == "first-order" || name == "first_order") return KineticsKind::FirstOrder;
  if (name == "monod") return KineticsKind::Monod;
  throw ValidationError("unknown kinetics '" + std::string(name) + "' (first-order|monod)");
}

std::string to_string(KineticsKind kind) {
  return kind == KineticsKind::FirstOrder ? "first-order" : "monod";
}

void KineticsParams::validate() const {
  const std::size_t n = species.size();
  if (n == 0) throw ValidationError("kinetics: at least one hydrocarbon species is required");
  auto check = [n](const std::vector<double>& v, const char* name) {
    if (v.size() != n) {
      throw ValidationError(std::string("kinetics: ") + name + " needs " + std::to_string(n) +
                            " entries, got " + std::to_string(v.size()));
    }
    for (double x : v) {
      if (!std::isfinite(x) || x < 0.0) {
        throw ValidationError(std::string("kinetics: ") + name + " must be finite and >= 0");
      }
    }
  };
  check(methane_factor, "methane_factor");
  if (kind == KineticsKind::FirstOrder) {
    check(decay_rate, "decay_rate");
  } else {
    check(max_uptake, "max_uptake");
    check(half_saturation, "half_saturation");
    for (double ks : half_saturation) {
      if (ks <= 0.0) throw ValidationError("kinetics: half_saturation must be > 0 for monod");
    }
    if (!(biomass_yield >= 0.0) || !(biomass_death >= 0.0)) {
      throw ValidationError("kinetics: biomass_yield and biomass_death must be >= 0");
    }
  }
}

KineticsParams KineticsParams::demo(std::vector<std::string> names) {
  KineticsParams p;
  p.kind = KineticsKind::FirstOrder;
  const std::size_t n = names.size();
  p.species = std::move(names);
  p.decay_rate.assign(n, 0.05);
  p.methane_factor.assign(n, 0.3);
  p.max_uptake.assign(n, 0.0);
  p.half_saturation.assign(n, 1.0);
  return p;
}

PondState zero_state(const KineticsParams& params) {
  return PondState{std::vector<double>(params.species_count(), 0.0),
                   std::vector<double>(params.aux_count(), 0.0)};
}

const DayRecord* MechanisticTrajectory::find(Date d) const {
  auto it = std::lower_bound(days.begin(), days.end(), d,
                             [](const DayRecord& r, Date key) { return r.date < key; });
  return (it != days.end() && it->date == d) ? &*it : nullptr;
}

InflowSchedule build_inflow_schedule(const std::vector<std::string>& species,
                                     const std::vector<MonthlyTotal>& totals, double fft_fraction) {
  if (!(fft_fraction >= 0.0 && fft_fraction <= 1.0)) {
    throw ValidationError("fft_fraction must lie in [0, 1]");
  }
  std::vector<MonthlyTotal> sorted = totals;
  std::sort(sorted.begin(), sorted.end(), [](const MonthlyTotal& a, const MonthlyTotal& b) {
    return std::tie(a.year, a.month) < std::tie(b.year, b.month);
  });

  InflowSchedule schedule;
  schedule.species = species;
  for (std::size_t m = 0; m < sorted.size(); ++m) {
    const MonthlyTotal& mt = sorted[m];
    if (mt.month < 1 || mt.month > 12) throw ValidationError("month out of range");
    if (mt.tonnes.size() != species.size()) {
      throw ValidationError("monthly total has wrong species count");
    }
    for (double t : mt.tonnes) {
      if (!std::isfinite(t) || t < 0.0) {
        throw ValidationError("negative or non-finite monthly total in " + std::to_string(mt.year) +
                              "-" + std::to_string(mt.month));
      }
    }
    if (m > 0) {
      const MonthlyTotal& prev = sorted[m - 1];
      const int expect_year = prev.month == 12 ? prev.year + 1 : prev.year;
      const unsigned expect_month = prev.month == 12 ? 1 : prev.month + 1;
      if (mt.year != expect_year || mt.month != expect_month) {
        throw ValidationError("schedule gap: month " + std::to_string(mt.year) + "-" +
                              std::to_string(mt.month) + " does not follow " +
                              std::to_string(prev.year) + "-" + std::to_string(prev.month));
      }
    }
    const unsigned ndays = days_in_month(mt.year, mt.month);
    std::vector<double> daily(species.size());
    for (std::size_t i = 0; i < species.size(); ++i) daily[i] = fft_fraction * mt.tonnes[i] / ndays;
    const Date first = std::chrono::sys_days{std::chrono::year{mt.year} / std::chrono::month{mt.month} /
                                             std::chrono::day{1}};
    for (unsigned d = 0; d < ndays; ++d) {
      schedule.days.push_back(InflowDay{first + std::chrono::days{d}, daily});
    }
  }
  return schedule;
}

namespace {

// Augmented state layout: [C_1..C_n, y_1..y_k, cumulative CH4].
struct Rates {
  const KineticsParams& p;
  const std::vector<double>& inflow;

  double uptake(std::size_t i, const std::vector<double>& s) const {
    const std::size_t n = p.species_count();
    if (p.kind == KineticsKind::FirstOrder) return p.decay_rate[i] * s[i];
    const double biomass = s[n];
    return p.max_uptake[i] * s[i] * biomass / (p.half_saturation[i] + s[i]);
  }

  void operator()(const std::vector<double>& s, std::vector<double>& ds) const {
    const std::size_t n = p.species_count();
    double total_uptake = 0.0;
    double methane = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double u = uptake(i, s);
      ds[i] = -u + inflow[i];
      total_uptake += u;
      methane += p.methane_factor[i] * u;
    }
    if (p.kind == KineticsKind::Monod) {
      ds[n] = p.biomass_yield * total_uptake - p.biomass_death * s[n];
    }
    ds.back() = methane;
  }
};

void require_finite(const PondState& s, const KineticsParams& p, const char* when) {
  for (std::size_t i = 0; i < s.mass.size(); ++i) {
    if (!std::isfinite(s.mass[i])) {
      throw NumericalError(std::string("numerical blow-up ") + when + ": species '" +
                           p.species[i] + "' is not finite");
    }
  }
  for (std::size_t j = 0; j < s.aux.size(); ++j) {
    if (!std::isfinite(s.aux[j])) {
      throw NumericalError(std::string("numerical blow-up ") + when + ": auxiliary state y_" +
                           std::to_string(j + 1) + " is not finite");
    }
  }
}

}  // namespace

double emission_rate(const KineticsParams& params, const PondState& state) {
  std::vector<double> s(state.mass);
  s.insert(s.end(), state.aux.begin(), state.aux.end());
  s.push_back(0.0);
  const std::vector<double> no_inflow(params.species_count(), 0.0);
  std::vector<double> ds(s.size());
  Rates{params, no_inflow}(s, ds);
  return ds.back();
}

StepResult step(const PondState& state, const std::vector<double>& inflow,
                const KineticsParams& params, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("step: dt must be > 0");
  const std::size_t n = params.species_count();
  if (state.mass.size() != n || state.aux.size() != params.aux_count() || inflow.size() != n) {
    throw ShapeError("step: state/inflow size does not match kinetics");
  }
  require_finite(state, params, "in input state");

  std::vector<double> s(state.mass);
  s.insert(s.end(), state.aux.begin(), state.aux.end());
  s.push_back(0.0);
  const std::size_t m = s.size();

  const Rates rates{params, inflow};
  std::vector<double> k1(m), k2(m), k3(m), k4(m), tmp(m);
  rates(s, k1);
  for (std::size_t i = 0; i < m; ++i) tmp[i] = s[i] + 0.5 * dt * k1[i];
  rates(tmp, k2);
  for (std::size_t i = 0; i < m; ++i) tmp[i] = s[i] + 0.5 * dt * k2[i];
  rates(tmp, k3);
  for (std::size_t i = 0; i < m; ++i) tmp[i] = s[i] + dt * k3[i];
  rates(tmp, k4);
  for (std::size_t i = 0; i < m; ++i) s[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);

  StepResult out;
  out.state.mass.assign(s.begin(), s.begin() + n);
  out.state.aux.assign(s.begin() + n, s.end() - 1);
  out.methane = s.back();
  require_finite(out.state, params, "after RK4 step");
  if (!std::isfinite(out.methane)) throw NumericalError("numerical blow-up: methane output not finite");
  return out;
}

MechanisticTrajectory simulate(const KineticsParams& params, const InflowSchedule& schedule,
                               const PondState& initial) {
  params.validate();
  if (schedule.days.empty()) throw ValidationError("simulate: empty inflow schedule");
  MechanisticTrajectory traj;
  traj.species = params.species;
  traj.aux_count = params.aux_count();
  traj.days.reserve(schedule.days.size());
  PondState state = initial;
  for (const InflowDay& day : schedule.days) {
    StepResult r;
    try {
      r = step(state, day.inflow, params, 1.0);
    } catch (const Error& e) {
      throw Error(e.kind(), format_date(day.date) + ": " + e.what());
    }
    state = r.state;
    traj.days.push_back(DayRecord{day.date, state.mass, state.aux, r.methane});
  }
  return traj;
}

namespace {

bool realistic(const DayRecord& r) {
  auto ok = [](double v) { return std::isfinite(v) && v >= 0.0; };
  return std::all_of(r.mass.begin(), r.mass.end(), ok) && std::all_of(r.aux.begin(), r.aux.end(), ok) &&
         ok(r.emission);
}

}  // namespace

SanitizeResult sanitize(const MechanisticTrajectory& trajectory) {
  if (trajectory.days.empty()) throw ValidationError("sanitize: empty trajectory");
  if (!realistic(trajectory.days.front())) {
    throw ValidationError("sanitize: first day " + format_date(trajectory.days.front().date) +
                          " is unrealistic and has no predecessor (unsanitizable)");
  }
  SanitizeResult out{trajectory, 0};
  auto& days = out.trajectory.days;
  for (std::size_t i = 1; i < days.size(); ++i) {
    if (!realistic(days[i])) {
      const Date d = days[i].date;
      days[i] = days[i - 1];
      days[i].date = d;
      ++out.replaced;
    }
  }
  return out;
}

DiluentReport read_diluent_csv(std::istream& in) {
  std::string line;
  if (!csv::next_line(in, line)) throw FormatError("diluent report is empty");
  const auto header = csv::split(line);
  const auto cy = csv::column(header, "year");
  const auto cm = csv::column(header, "month");
  const auto ch = csv::column(header, "hydrocarbon");
  const auto ct = csv::column(header, "tonnes");
  if (!cy || !cm || !ch || !ct) {
    throw FormatError("diluent report header must be year,month,hydrocarbon,tonnes");
  }
  DiluentReport report;
  std::map<std::pair<int, unsigned>, std::map<std::size_t, double>> cells;
  std::size_t line_no = 1;
  while (csv::next_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = csv::split(line);
    const std::size_t need = std::max({*cy, *cm, *ch, *ct});
    const auto year = f.size() > need ? csv::parse_number(f[*cy]) : std::nullopt;
    const auto month = f.size() > need ? csv::parse_number(f[*cm]) : std::nullopt;
    const auto tonnes = f.size() > need ? csv::parse_number(f[*ct]) : std::nullopt;
    if (!year || !month || !tonnes) {
      throw FormatError("diluent report line " + std::to_string(line_no) + " is malformed");
    }
    const std::string& name = f[*ch];
    auto it = std::find(report.species.begin(), report.species.end(), name);
    const std::size_t idx = static_cast<std::size_t>(it - report.species.begin());
    if (it == report.species.end()) report.species.push_back(name);
    cells[{static_cast<int>(*year), static_cast<unsigned>(*month)}][idx] += *tonnes;
  }
  for (const auto& [key, per_species] : cells) {
    MonthlyTotal mt{key.first, key.second, std::vector<double>(report.species.size(), 0.0)};
    for (const auto& [idx, t] : per_species) mt.tonnes[idx] = t;
    report.months.push_back(std::move(mt));
  }
  return report;
}

DiluentReport read_diluent_csv(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  return read_diluent_csv(in);
}

void write_diluent_csv(std::ostream& out, const DiluentReport& report) {
  out << "year,month,hydrocarbon,tonnes\n";
  for (const auto& m : report.months) {
    for (std::size_t i = 0; i < report.species.size(); ++i) {
      out << m.year << ',' << m.month << ',' << report.species[i] << ','
          << csv::format_number(m.tonnes[i]) << '\n';
    }
  }
}

DiluentReport demo_diluent_report(const std::vector<std::string>& species, int first_year,
                                  int last_year) {
  DiluentReport report;
  report.species = species;
  for (int y = first_year; y <= last_year; ++y) {
    for (unsigned m = 1; m <= 12; ++m) {
      MonthlyTotal mt{y, m, {}};
      const double season = 1.0 + 0.3 * std::sin(2.0 * std::numbers::pi * (m - 1) / 12.0);
      const double trend = 1.0 + 0.05 * (y - first_year);
      for (std::size_t i = 0; i < species.size(); ++i) {
        mt.tonnes.push_back(150.0 * season * trend * (1.0 + 0.25 * static_cast<double>(i)));
      }
      report.months.push_back(std::move(mt));
    }
  }
  return report;
}

void write_trajectory_csv(std::ostream& out, const MechanisticTrajectory& traj) {
  out << "date";
  for (std::size_t i = 0; i < traj.species.size(); ++i) out << ",C_" << i + 1;
  for (std::size_t j = 0; j < traj.aux_count; ++j) out << ",y_" << j + 1;
  out << ",q_tonnes_per_day\n";
  for (const auto& d : traj.days) {
    out << format_date(d.date);
    for (double c : d.mass) out << ',' << csv::format_number(c);
    for (double y : d.aux) out << ',' << csv::format_number(y);
    out << ',' << csv::format_number(d.emission) << '\n';
  }
}

MechanisticTrajectory read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!csv::next_line(in, line)) throw FormatError("trajectory file is empty");
  const auto header = csv::split(line);
  if (header.size() < 3 || header.front() != "date" || header.back() != "q_tonnes_per_day") {
    throw FormatError("trajectory header must be date,C_1..C_n,y_1..y_k,q_tonnes_per_day");
  }
  MechanisticTrajectory traj;
  for (std::size_t c = 1; c + 1 < header.size(); ++c) {
    if (header[c].rfind("C_", 0) == 0) {
      traj.species.push_back(header[c]);
    } else if (header[c].rfind("y_", 0) == 0) {
      ++traj.aux_count;
    } else {
      throw FormatError("unexpected trajectory column '" + header[c] + "'");
    }
  }
  const std::size_t n = traj.species.size();
  std::size_t line_no = 1;
  while (csv::next_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != header.size()) {
      throw FormatError("trajectory line " + std::to_string(line_no) + " has wrong field count");
    }
    DayRecord r;
    r.date = parse_date(f[0]);
    for (std::size_t c = 1; c + 1 < f.size(); ++c) {
      const auto v = csv::parse_number(f[c]);
      if (!v) throw FormatError("trajectory line " + std::to_string(line_no) + " is malformed");
      (c <= n ? r.mass : r.aux).push_back(*v);
    }
    const auto q = csv::parse_number(f.back());
    if (!q) throw FormatError("trajectory line " + std::to_string(line_no) + " is malformed");
    r.emission = *q;
    if (!traj.days.empty() && r.date != traj.days.back().date + std::chrono::days{1}) {
      throw FormatError("trajectory line " + std::to_string(line_no) + ": dates must be consecutive");
    }
    traj.days.push_back(std::move(r));
  }
  return traj;
}

MechanisticTrajectory read_trajectory_csv(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  return read_trajectory_csv(in);
}

}  // namespace methanet::mech
