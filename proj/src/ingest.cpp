#include "methanet/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>

#include "methanet/csv.hpp"
#include "methanet/error.hpp"

namespace methanet::ingest {

namespace {

constexpr const char* kFixedChannels[] = {kWindDirection, kWindSpeed, kTemperature, kSolar, kMethane};
constexpr std::size_t kFixedCount = 5;

double radians(double deg) { return deg * std::numbers::pi / 180.0; }

bool is_dil_name(const std::string& name) {
  return name.rfind("C_", 0) == 0 || name.rfind("y_", 0) == 0;
}

}  // namespace

std::vector<std::string> StationData::channels() const {
  std::vector<std::string> names(std::begin(kFixedChannels), std::end(kFixedChannels));
  names.insert(names.end(), extra_channels.begin(), extra_channels.end());
  return names;
}

double normalize_direction(double degrees) {
  double d = std::fmod(degrees, 360.0);
  if (d < 0.0) d += 360.0;
  if (d >= 360.0) d = 0.0;  // fmod of tiny negatives can round up to 360
  return d;
}

StationData parse_station_csv(std::istream& in) {
  std::string line;
  bool any = false;
  while (csv::next_line(in, line)) {
    if (!line.empty()) {
      any = true;
      break;
    }
  }
  if (!any) throw ValidationError("station file is empty");
  const auto header = csv::split(line);
  const auto c_time = csv::column(header, "timestamp");
  const auto c_dir = csv::column(header, kWindDirection);
  if (!c_time || !c_dir) {
    throw FormatError("station header must start with timestamp,wind_dir_deg,... (got '" + line + "')");
  }
  const auto c_speed = csv::column(header, kWindSpeed);
  const auto c_temp = csv::column(header, kTemperature);
  const auto c_solar = csv::column(header, kSolar);
  const auto c_ch4 = csv::column(header, kMethane);

  StationData data;
  std::vector<std::size_t> extra_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& h = header[c];
    if (h == "timestamp" || std::find(std::begin(kFixedChannels), std::end(kFixedChannels), h) !=
                                std::end(kFixedChannels)) {
      continue;
    }
    data.extra_channels.push_back(h);
    extra_cols.push_back(c);
  }

  while (csv::next_line(in, line)) {
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != header.size()) {
      ++data.dropped;
      continue;
    }
    RawObservation obs;
    bool ok = true;
    try {
      obs.timestamp = parse_timestamp(f[*c_time]);
    } catch (const FormatError&) {
      ok = false;
    }
    const auto dir = csv::parse_number(f[*c_dir]);
    ok = ok && dir && std::isfinite(*dir);
    auto optional_field = [&](std::optional<std::size_t> col) -> std::optional<double> {
      if (!col || f[*col].empty()) return std::nullopt;
      const auto v = csv::parse_number(f[*col]);
      if (!v) {
        ok = false;
        return std::nullopt;
      }
      if (!std::isfinite(*v)) return std::nullopt;
      return v;
    };
    obs.wind_speed = optional_field(c_speed);
    obs.temperature = optional_field(c_temp);
    obs.solar = optional_field(c_solar);
    obs.ch4 = optional_field(c_ch4);
    for (std::size_t c : extra_cols) obs.extra.push_back(optional_field(c));
    if (ok && !data.rows.empty() && obs.timestamp <= data.rows.back().timestamp) ok = false;
    if (!ok) {
      ++data.dropped;
      continue;
    }
    obs.wind_direction = normalize_direction(*dir);
    data.rows.push_back(std::move(obs));
  }
  return data;
}

StationData parse_station_csv(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  return parse_station_csv(in);
}

void write_station_csv(std::ostream& out, const StationData& data) {
  out << "timestamp," << kWindDirection << ',' << kWindSpeed << ',' << kTemperature << ',' << kSolar
      << ',' << kMethane;
  for (const auto& e : data.extra_channels) out << ',' << e;
  out << '\n';
  auto opt = [](const std::optional<double>& v) { return v ? csv::format_number(*v) : std::string(); };
  for (const auto& r : data.rows) {
    out << format_timestamp(r.timestamp) << ',' << csv::format_number(r.wind_direction) << ','
        << opt(r.wind_speed) << ',' << opt(r.temperature) << ',' << opt(r.solar) << ',' << opt(r.ch4);
    for (const auto& e : r.extra) out << ',' << opt(e);
    out << '\n';
  }
}

bool WindSector::contains(double direction) const {
  const double d = normalize_direction(direction);
  if (lo <= hi) return d >= lo && d < hi;
  return d >= lo || d < hi;
}

StationData filter_by_wind_sector(const StationData& data, WindSector sector) {
  StationData out;
  out.extra_channels = data.extra_channels;
  out.dropped = data.dropped;
  std::copy_if(data.rows.begin(), data.rows.end(), std::back_inserter(out.rows),
               [&](const RawObservation& r) { return sector.contains(r.wind_direction); });
  return out;
}

std::optional<std::size_t> DailySeries::channel(std::string_view name) const {
  return csv::column(channels, name);
}

DailySeries daily_aggregate(const StationData& data) {
  DailySeries series;
  series.channels = data.channels();
  const std::size_t nch = series.channels.size();
  if (data.rows.empty()) return series;

  struct Acc {
    std::vector<double> sum;
    std::vector<std::size_t> count;
    double sin_sum = 0.0, cos_sum = 0.0;
    std::size_t dir_count = 0;
  };
  std::map<Date, Acc> by_day;
  for (const auto& r : data.rows) {
    Acc& acc = by_day[day_of(r.timestamp)];
    if (acc.sum.empty()) {
      acc.sum.assign(nch, 0.0);
      acc.count.assign(nch, 0);
    }
    acc.sin_sum += std::sin(radians(r.wind_direction));
    acc.cos_sum += std::cos(radians(r.wind_direction));
    ++acc.dir_count;
    const std::optional<double>* fixed[] = {nullptr, &r.wind_speed, &r.temperature, &r.solar, &r.ch4};
    for (std::size_t c = 1; c < kFixedCount; ++c) {
      if (*fixed[c]) {
        acc.sum[c] += **fixed[c];
        ++acc.count[c];
      }
    }
    for (std::size_t e = 0; e < r.extra.size(); ++e) {
      if (r.extra[e]) {
        acc.sum[kFixedCount + e] += *r.extra[e];
        ++acc.count[kFixedCount + e];
      }
    }
  }

  const Date first = by_day.begin()->first;
  const Date last = by_day.rbegin()->first;
  for (Date d = first; d <= last; d += std::chrono::days{1}) {
    DailyRecord rec{d, std::vector<std::optional<double>>(nch), std::vector<bool>(nch, false)};
    auto it = by_day.find(d);
    if (it != by_day.end()) {
      const Acc& acc = it->second;
      if (acc.dir_count > 0) {
        rec.values[0] = normalize_direction(std::atan2(acc.sin_sum, acc.cos_sum) * 180.0 / std::numbers::pi);
      }
      for (std::size_t c = 1; c < nch; ++c) {
        if (acc.count[c] > 0) rec.values[c] = acc.sum[c] / static_cast<double>(acc.count[c]);
      }
    }
    series.days.push_back(std::move(rec));
  }
  return series;
}

DailySeries interpolate_gaps(const DailySeries& series, DateRange range) {
  DailySeries out;
  out.channels = series.channels;
  const std::size_t nch = series.channels.size();
  const std::size_t n = range.size();
  if (n == 0) return out;

  for (std::size_t i = 0; i < n; ++i) {
    out.days.push_back(DailyRecord{range.first + std::chrono::days{static_cast<int>(i)},
                                   std::vector<std::optional<double>>(nch),
                                   std::vector<bool>(nch, false)});
  }
  for (const auto& rec : series.days) {
    if (!range.contains(rec.date)) continue;
    const auto i = static_cast<std::size_t>((rec.date - range.first).count());
    out.days[i].values = rec.values;
    out.days[i].filled = rec.filled;
  }

  const auto dir_channel = out.channel(kWindDirection);
  for (std::size_t c = 0; c < nch; ++c) {
    std::vector<std::size_t> known;
    for (std::size_t i = 0; i < n; ++i) {
      if (out.days[i].values[c]) known.push_back(i);
    }
    if (known.size() == n) continue;
    if (known.size() < 2) {
      throw ValidationError("uninterpolatable channel '" + out.channels[c] + "': " +
                            std::to_string(known.size()) + " known value(s) in " +
                            format_date(range.first) + ".." + format_date(range.last));
    }
    const bool angular = dir_channel && *dir_channel == c;
    auto value = [&](std::size_t i) { return *out.days[i].values[c]; };
    auto fill = [&](std::size_t i, double v) {
      out.days[i].values[c] = angular ? normalize_direction(v) : v;
      out.days[i].filled[c] = true;
    };
    for (std::size_t i = 0; i < known.front(); ++i) fill(i, value(known.front()));
    for (std::size_t i = known.back() + 1; i < n; ++i) fill(i, value(known.back()));
    for (std::size_t k = 0; k + 1 < known.size(); ++k) {
      const std::size_t a = known[k], b = known[k + 1];
      if (b == a + 1) continue;
      const double va = value(a);
      double delta = value(b) - va;
      if (angular) delta = std::fmod(delta + 540.0, 360.0) - 180.0;
      for (std::size_t i = a + 1; i < b; ++i) {
        fill(i, va + delta * static_cast<double>(i - a) / static_cast<double>(b - a));
      }
    }
  }
  return out;
}

Scaler::Scaler(std::vector<std::string> names, std::vector<double> min, std::vector<double> max)
    : names_(std::move(names)), min_(std::move(min)), max_(std::move(max)) {
  if (min_.size() != names_.size() || max_.size() != names_.size()) {
    throw ShapeError("scaler: names/min/max lengths differ");
  }
  for (std::size_t c = 0; c < names_.size(); ++c) {
    if (!(max_[c] >= min_[c])) throw ValidationError("scaler: max < min for column '" + names_[c] + "'");
  }
}

Scaler Scaler::fit(const std::vector<std::string>& names, const Eigen::MatrixXd& columns) {
  if (static_cast<std::size_t>(columns.cols()) != names.size()) {
    throw ShapeError("scaler: " + std::to_string(names.size()) + " names for " +
                     std::to_string(columns.cols()) + " columns");
  }
  if (columns.rows() == 0) throw ValidationError("scaler: no rows to fit");
  std::vector<double> lo(names.size()), hi(names.size());
  for (std::size_t c = 0; c < names.size(); ++c) {
    lo[c] = columns.col(static_cast<Eigen::Index>(c)).minCoeff();
    hi[c] = columns.col(static_cast<Eigen::Index>(c)).maxCoeff();
  }
  return Scaler(names, std::move(lo), std::move(hi));
}

std::optional<std::size_t> Scaler::index(std::string_view name) const { return csv::column(names_, name); }

double Scaler::scale(std::size_t c, double x) const {
  if (constant(c)) return 0.0;
  return (x - min_[c]) / (max_[c] - min_[c]);
}

double Scaler::inverse(std::size_t c, double x) const {
  if (constant(c)) return min_[c];
  return min_[c] + x * (max_[c] - min_[c]);
}

void Scaler::write_csv(std::ostream& out) const {
  out << "name,min,max\n";
  for (std::size_t c = 0; c < names_.size(); ++c) {
    out << names_[c] << ',' << csv::format_number(min_[c]) << ',' << csv::format_number(max_[c]) << '\n';
  }
}

Scaler Scaler::read_csv(std::istream& in) {
  std::string line;
  if (!csv::next_line(in, line) || csv::split(line) != std::vector<std::string>{"name", "min", "max"}) {
    throw FormatError("scaler file must start with header name,min,max");
  }
  std::vector<std::string> names;
  std::vector<double> lo, hi;
  while (csv::next_line(in, line)) {
    if (line.empty()) continue;
    const auto f = csv::split(line);
    const auto a = f.size() == 3 ? csv::parse_number(f[1]) : std::nullopt;
    const auto b = f.size() == 3 ? csv::parse_number(f[2]) : std::nullopt;
    if (!a || !b) throw FormatError("malformed scaler line '" + line + "'");
    names.push_back(f[0]);
    lo.push_back(*a);
    hi.push_back(*b);
  }
  return Scaler(std::move(names), std::move(lo), std::move(hi));
}

ScaledColumns minmax_scale(const std::vector<std::string>& names, const Eigen::MatrixXd& columns) {
  ScaledColumns out{Eigen::MatrixXd(columns.rows(), columns.cols()), Scaler::fit(names, columns)};
  for (Eigen::Index c = 0; c < columns.cols(); ++c) {
    for (Eigen::Index r = 0; r < columns.rows(); ++r) {
      out.values(r, c) = out.scaler.scale(static_cast<std::size_t>(c), columns(r, c));
    }
  }
  return out;
}

Eigen::VectorXd Dataset::concentration_ppm() const {
  const std::size_t c = *scaler.index(kMethane);
  return concentration.unaryExpr([&](double v) { return scaler.inverse(c, v); });
}

Eigen::VectorXd Dataset::emission_tonnes() const {
  const std::size_t c = *scaler.index(kEmissionColumn);
  return emission.unaryExpr([&](double v) { return scaler.inverse(c, v); });
}

Dataset Dataset::slice(std::size_t first, std::size_t count) const {
  Dataset out;
  out.dates.assign(dates.begin() + static_cast<std::ptrdiff_t>(first),
                   dates.begin() + static_cast<std::ptrdiff_t>(first + count));
  out.feature_names = feature_names;
  out.dil_count = dil_count;
  out.atm_count = atm_count;
  const auto f = static_cast<Eigen::Index>(first), n = static_cast<Eigen::Index>(count);
  out.features = features.middleRows(f, n);
  out.concentration = concentration.segment(f, n);
  out.emission = emission.segment(f, n);
  out.filled.assign(filled.begin() + f, filled.begin() + f + n);
  out.scaler = scaler;
  return out;
}

Dataset assemble_dataset(const DailySeries& weather, const mech::MechanisticTrajectory& traj,
                         DateRange range, const AssembleOptions& options) {
  const std::size_t n = range.size();
  if (n == 0) throw ValidationError("assemble: empty date range");

  std::vector<std::string> atm = options.atm_channels;
  if (atm.empty()) {
    for (const auto& ch : weather.channels) {
      if (ch != kMethane) atm.push_back(ch);
    }
  }
  std::vector<std::size_t> atm_idx;
  for (const auto& name : atm) {
    const auto c = weather.channel(name);
    if (!c) throw ValidationError("assemble: weather series has no channel '" + name + "'");
    atm_idx.push_back(*c);
  }
  const auto ch4_idx = weather.channel(kMethane);
  if (!ch4_idx) throw ValidationError("assemble: weather series has no ch4_ppm channel");

  std::map<Date, const DailyRecord*> wx;
  for (const auto& d : weather.days) wx[d.date] = &d;

  std::vector<std::string> missing;
  for (std::size_t i = 0; i < n; ++i) {
    const Date d = range.first + std::chrono::days{static_cast<int>(i)};
    auto it = wx.find(d);
    bool ok = it != wx.end() && it->second->values[*ch4_idx].has_value();
    if (ok) {
      for (std::size_t c : atm_idx) ok = ok && it->second->values[c].has_value();
    }
    if (!ok) missing.push_back("weather " + format_date(d));
    if (!traj.find(d)) missing.push_back("trajectory " + format_date(d));
  }
  if (!missing.empty()) {
    std::string msg = std::to_string(missing.size()) + " missing date(s):";
    for (std::size_t k = 0; k < missing.size() && k < 10; ++k) msg += " " + missing[k];
    if (missing.size() > 10) msg += " ...";
    throw AlignmentError(msg);
  }

  Dataset ds;
  const std::size_t nspecies = traj.species.size();
  for (std::size_t k = 0; k < nspecies; ++k) ds.feature_names.push_back("C_" + std::to_string(k + 1));
  for (std::size_t j = 0; j < traj.aux_count; ++j) ds.feature_names.push_back("y_" + std::to_string(j + 1));
  ds.dil_count = ds.feature_names.size();
  ds.feature_names.insert(ds.feature_names.end(), atm.begin(), atm.end());
  ds.atm_count = atm.size();
  ds.feature_names.push_back(kTimeColumn);

  const std::size_t nf = ds.feature_names.size();
  Eigen::MatrixXd raw(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nf + 2));
  for (std::size_t i = 0; i < n; ++i) {
    const Date d = range.first + std::chrono::days{static_cast<int>(i)};
    const DailyRecord& w = *wx.at(d);
    const mech::DayRecord& t = *traj.find(d);
    const auto r = static_cast<Eigen::Index>(i);
    Eigen::Index c = 0;
    for (std::size_t k = 0; k < nspecies; ++k) raw(r, c++) = t.mass[k];
    for (double y : t.aux) raw(r, c++) = y;
    for (std::size_t a : atm_idx) raw(r, c++) = *w.values[a];
    raw(r, c++) = static_cast<double>(d.time_since_epoch().count());
    raw(r, c++) = *w.values[*ch4_idx];
    raw(r, c++) = t.emission;

    std::string flags;
    auto flag = [&](std::size_t ch) {
      if (w.filled[ch]) flags += (flags.empty() ? "" : ";") + weather.channels[ch];
    };
    for (std::size_t a : atm_idx) flag(a);
    flag(*ch4_idx);
    ds.dates.push_back(d);
    ds.filled.push_back(std::move(flags));
  }

  std::vector<std::string> all_names = ds.feature_names;
  all_names.push_back(kMethane);
  all_names.push_back(kEmissionColumn);
  if (options.fixed_scaler) {
    std::vector<double> lo, hi;
    for (const auto& name : all_names) {
      const auto c = options.fixed_scaler->index(name);
      if (!c) throw ValidationError("assemble: fixed scaler has no column '" + name + "'");
      lo.push_back(options.fixed_scaler->min(*c));
      hi.push_back(options.fixed_scaler->max(*c));
    }
    ds.scaler = Scaler(all_names, std::move(lo), std::move(hi));
  } else {
    ds.scaler = Scaler::fit(all_names, raw);
  }

  Eigen::MatrixXd scaled(raw.rows(), raw.cols());
  for (Eigen::Index c = 0; c < raw.cols(); ++c) {
    for (Eigen::Index r = 0; r < raw.rows(); ++r) {
      scaled(r, c) = ds.scaler.scale(static_cast<std::size_t>(c), raw(r, c));
    }
  }
  const auto nfi = static_cast<Eigen::Index>(nf);
  ds.features = scaled.leftCols(nfi);
  ds.concentration = scaled.col(nfi);
  ds.emission = scaled.col(nfi + 1);
  return ds;
}

std::pair<Dataset, Dataset> chronological_split(const Dataset& data, double train_fraction) {
  const std::size_t n = data.rows();
  if (n < 5) throw ValidationError("split: need at least 5 rows, have " + std::to_string(n));
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ValidationError("split: train_fraction must lie in (0, 1)");
  }
  // The epsilon keeps exact products such as 0.8 * 10 from flooring to 7.
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 1e-9));
  return {data.slice(0, n_train), data.slice(n_train, n - n_train)};
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  out << "date";
  for (const auto& f : data.feature_names) out << ',' << f;
  out << ',' << kMethane << ',' << kEmissionColumn << ",filled\n";
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out << format_date(data.dates[i]);
    for (Eigen::Index c = 0; c < data.features.cols(); ++c) out << ',' << csv::format_number(data.features(r, c));
    out << ',' << csv::format_number(data.concentration(r)) << ',' << csv::format_number(data.emission(r))
        << ',' << data.filled[i] << '\n';
  }
}

Dataset read_dataset_csv(std::istream& data_in, std::istream& scaler_in) {
  Dataset ds;
  ds.scaler = Scaler::read_csv(scaler_in);
  std::string line;
  if (!csv::next_line(data_in, line)) throw FormatError("dataset file is empty");
  const auto header = csv::split(line);
  if (header.size() < 5 || header.front() != "date" || header.back() != "filled" ||
      header[header.size() - 3] != kMethane || header[header.size() - 2] != kEmissionColumn ||
      header[header.size() - 4] != kTimeColumn) {
    throw FormatError("dataset header must be date,<features>,t,ch4_ppm,q_tonnes_per_day,filled");
  }
  ds.feature_names.assign(header.begin() + 1, header.end() - 3);
  for (const auto& f : ds.feature_names) {
    if (is_dil_name(f)) {
      if (ds.atm_count > 0) throw FormatError("dataset: x_dil columns must precede x_atm columns");
      ++ds.dil_count;
    } else if (f != kTimeColumn) {
      ++ds.atm_count;
    }
  }
  std::vector<std::string> expect = ds.feature_names;
  expect.push_back(kMethane);
  expect.push_back(kEmissionColumn);
  if (expect != ds.scaler.names()) throw FormatError("dataset and scaler columns disagree");

  const std::size_t nf = ds.feature_names.size();
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (csv::next_line(data_in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != header.size()) {
      throw FormatError("dataset line " + std::to_string(line_no) + " has wrong field count");
    }
    ds.dates.push_back(parse_date(f[0]));
    std::vector<double> row;
    for (std::size_t c = 1; c <= nf + 2; ++c) {
      const auto v = csv::parse_number(f[c]);
      if (!v) throw FormatError("dataset line " + std::to_string(line_no) + " is malformed");
      row.push_back(*v);
    }
    rows.push_back(std::move(row));
    ds.filled.push_back(f.back());
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  ds.features.resize(n, static_cast<Eigen::Index>(nf));
  ds.concentration.resize(n);
  ds.emission.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < nf; ++c) ds.features(r, static_cast<Eigen::Index>(c)) = rows[r][c];
    ds.concentration(r) = rows[r][nf];
    ds.emission(r) = rows[r][nf + 1];
  }
  return ds;
}

void save_dataset(const Dataset& data, const std::filesystem::path& csv_path,
                  const std::filesystem::path& scaler_path) {
  auto out = csv::open_output(csv_path);
  write_dataset_csv(out, data);
  auto sout = csv::open_output(scaler_path);
  data.scaler.write_csv(sout);
}

Dataset load_dataset(const std::filesystem::path& csv_path, const std::filesystem::path& scaler_path) {
  auto in = csv::open_input(csv_path);
  auto sin = csv::open_input(scaler_path);
  return read_dataset_csv(in, sin);
}

}  // namespace methanet::ingest
