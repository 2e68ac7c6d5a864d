#include "methanet/analysis.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <ostream>

#include "methanet/csv.hpp"
#include "methanet/error.hpp"

namespace methanet::analysis {

double relative_error(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred) {
  if (y_true.size() != y_pred.size()) throw ShapeError("relative_error: lengths differ");
  if (y_true.size() == 0) throw ValidationError("relative_error: empty input");
  const double denom = y_true.norm();
  if (!(denom > 0.0)) throw ValidationError("relative_error: undefined metric, truth has zero norm");
  return (y_true - y_pred).norm() / denom;
}

std::size_t sector_count(double width) {
  if (!(width > 0.0) || width > 360.0) throw ValidationError("sector width must lie in (0, 360]");
  return static_cast<std::size_t>(std::ceil(360.0 / width - 1e-9));
}

std::size_t sector_of(double direction, double width) {
  const std::size_t n = sector_count(width);
  const double d = ingest::normalize_direction(direction);
  // normalize_direction can round 359.99999... up to exactly 360 for tiny negatives
  return std::min(static_cast<std::size_t>(std::floor(d / width)), n - 1);
}

SectorTable yearly_sector_emissions(const std::vector<DailyEmission>& daily, double width) {
  const std::size_t n = sector_count(width);
  std::map<int, std::vector<SectorEmissionSummary>> years;
  SectorTable table;
  for (const auto& d : daily) {
    const int year = year_of(d.date);
    auto [it, fresh] = years.try_emplace(year);
    if (fresh) {
      it->second.resize(n);
      for (std::size_t s = 0; s < n; ++s) {
        it->second[s] = {year, s, static_cast<double>(s) * width, std::min(360.0, static_cast<double>(s + 1) * width),
                         0.0, 0, 0};
      }
    }
    if (!std::isfinite(d.direction) || !std::isfinite(d.tonnes)) {
      ++table.skipped;
      continue;
    }
    auto& row = it->second[sector_of(d.direction, width)];
    ++row.days;
    if (d.tonnes < 0.0) {
      ++row.clamped_days;
      ++table.clamped;
    } else {
      row.tonnes += d.tonnes;
    }
  }
  for (auto& [_, rows] : years) table.rows.insert(table.rows.end(), rows.begin(), rows.end());
  return table;
}

Eigen::VectorXd shift_to_target_mean(const Eigen::VectorXd& concentrations, double target) {
  if (concentrations.size() == 0) throw ValidationError("shift_to_target_mean: empty series");
  if (!std::isfinite(target)) throw ValidationError("target concentration must be finite");
  Eigen::VectorXd out = concentrations.array() - (concentrations.mean() - target);
  // One correction pass absorbs the rounding left by the subtraction.
  out.array() -= out.mean() - target;
  return out;
}

TargetScenario reduction_table(const std::vector<SectorEmissionSummary>& current,
                               const std::vector<SectorEmissionSummary>& target, double target_ppm) {
  if (current.size() != target.size()) {
    throw AlignmentError("scenario: " + std::to_string(current.size()) + " current rows vs " +
                         std::to_string(target.size()) + " target rows");
  }
  std::map<std::pair<int, std::size_t>, const SectorEmissionSummary*> by_key;
  for (const auto& t : target) by_key[{t.year, t.sector}] = &t;

  TargetScenario sc;
  sc.target_ppm = target_ppm;
  double sum_cur = 0.0, sum_tgt = 0.0;
  for (const auto& c : current) {
    const auto it = by_key.find({c.year, c.sector});
    if (it == by_key.end()) {
      throw AlignmentError("scenario: no target row for year " + std::to_string(c.year) + " sector " +
                           std::to_string(c.sector));
    }
    ScenarioRow r{c.year, c.sector, c.start_deg, c.end_deg, c.tonnes, it->second->tonnes, std::nullopt};
    if (c.tonnes > 0.0) {
      r.reduction_pct = 100.0 * (c.tonnes - r.target_tonnes) / c.tonnes;
      sum_cur += c.tonnes;
      sum_tgt += r.target_tonnes;
    }
    sc.rows.push_back(r);
  }
  if (sum_cur > 0.0) sc.aggregate_reduction_pct = 100.0 * (sum_cur - sum_tgt) / sum_cur;
  return sc;
}

std::vector<DailyEmission> track_emissions(const model::ModelArtifact& artifact, const ingest::Dataset& data,
                                           const std::vector<double>& directions,
                                           const std::optional<Eigen::VectorXd>& measured_u) {
  if (directions.size() != data.rows()) {
    throw AlignmentError("tracking: " + std::to_string(directions.size()) + " directions for " +
                         std::to_string(data.rows()) + " days");
  }
  const Eigen::VectorXd q = measured_u ? model::estimate_emissions_measured(artifact, data, *measured_u)
                                       : model::estimate_emissions_measured(artifact, data);
  std::vector<DailyEmission> out(data.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {data.dates[i], directions[i], q(static_cast<Eigen::Index>(i))};
  return out;
}

namespace {

void write_sector_fields(std::ostream& out, int year, double lo, double hi) {
  out << year << ',' << csv::format_number(lo) << ',' << csv::format_number(hi) << ',';
}

}  // namespace

void write_sector_csv(std::ostream& out, const std::vector<SectorEmissionSummary>& rows) {
  out << "year,sector_start_deg,sector_end_deg,tonnes,days,clamped_days\n";
  for (const auto& r : rows) {
    write_sector_fields(out, r.year, r.start_deg, r.end_deg);
    out << csv::format_number(r.tonnes) << ',' << r.days << ',' << r.clamped_days << '\n';
  }
}

void write_scenario_csv(std::ostream& out, const TargetScenario& scenario) {
  out << "year,sector_start_deg,sector_end_deg,tonnes,target_tonnes,reduction_pct\n";
  for (const auto& r : scenario.rows) {
    write_sector_fields(out, r.year, r.start_deg, r.end_deg);
    out << csv::format_number(r.current_tonnes) << ',' << csv::format_number(r.target_tonnes) << ','
        << (r.reduction_pct ? csv::format_number(*r.reduction_pct) : std::string("NA")) << '\n';
  }
}

void write_radial_svg(std::ostream& out, const std::vector<SectorEmissionSummary>& year_rows, int year) {
  constexpr double size = 420.0, cx = size / 2, cy = size / 2, r_max = 170.0;
  double peak = 0.0;
  for (const auto& r : year_rows) {
    if (r.year == year) peak = std::max(peak, r.tonnes);
  }
  const double pi = std::acos(-1.0);
  // compass bearing: 0 deg at north, clockwise
  auto pt = [&](double deg, double radius) {
    const double a = deg * pi / 180.0;
    return std::pair{cx + radius * std::sin(a), cy - radius * std::cos(a)};
  };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\">\n";
  out << "<title>" << year << " emissions by wind sector (tonnes)</title>\n";
  out << "<circle cx=\"" << cx << "\" cy=\"" << cy << "\" r=\"" << r_max << "\" fill=\"none\" stroke=\"#bbb\"/>\n";
  for (const auto& r : year_rows) {
    if (r.year != year || peak <= 0.0 || r.tonnes <= 0.0) continue;
    const double radius = r_max * r.tonnes / peak;
    const auto [x0, y0] = pt(r.start_deg, radius);
    const auto [x1, y1] = pt(r.end_deg, radius);
    out << "<path d=\"M" << cx << ',' << cy << " L" << x0 << ',' << y0 << " A" << radius << ',' << radius
        << " 0 0 1 " << x1 << ',' << y1 << " Z\" fill=\"#c0504d\" fill-opacity=\"0.7\" stroke=\"#333\">"
        << "<title>" << r.start_deg << "-" << r.end_deg << ": " << csv::format_number(r.tonnes) << " t</title></path>\n";
  }
  for (int d = 0; d < 360; d += 90) {
    const auto [x, y] = pt(d, r_max + 14);
    out << "<text x=\"" << x << "\" y=\"" << y << "\" text-anchor=\"middle\" font-size=\"12\">" << d << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace methanet::analysis
