#include "methanet/cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "methanet/analysis.hpp"
#include "methanet/csv.hpp"
#include "methanet/error.hpp"
#include "methanet/formulations.hpp"
#include "methanet/ingest.hpp"
#include "methanet/mechanistic.hpp"
#include "methanet/synthgen.hpp"
#include "methanet/training.hpp"

namespace methanet::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw NumericalError("sha256: digest failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for hashing");
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

namespace {

// Every key is a root option so a flat `key = value` config file can set any of
// them; subcommands fall through to the root.
struct RunConfig {
  std::string out = "run";
  std::string station, diluent, trajectory, dataset, scaler, model, reported, truth;
  std::string start = "2020-01-01";
  std::string end = "2022-12-31";

  // simulate
  bool demo = false;
  std::string kinetics = "first-order";
  std::vector<std::string> species{"naphtha", "paraffinic"};
  std::vector<double> decay_rate{0.05};
  std::vector<double> max_uptake{0.3};
  std::vector<double> half_saturation{1.0};
  std::vector<double> methane_factor{0.3};
  double biomass_yield = 0.1;
  double biomass_death = 0.01;
  double initial_biomass = 1.0;
  double fft_fraction = 1.0;

  // prepare
  double sector_lo = 0.0;
  double sector_hi = 360.0;
  std::vector<std::string> atm_channels;
  double train_fraction = 0.8;

  // train
  std::string model_kind = "reverse";
  std::vector<double> lambdas{1.0};
  std::vector<double> learning_rates{1e-2, 1e-3};
  double momentum = 0.9;
  double weight_decay = 1e-3;
  std::size_t iterations = 10000;
  std::size_t batch_size = 0;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  bool sparse = false;
  double threshold = 1e-4;
  std::size_t u_width = 500;
  std::size_t phi_width = 200;
  std::size_t nn_width = 500;
  std::string activation = "tanh";

  // track / target
  double sector_width = analysis::kSectorWidth;
  bool plot = false;
  double target_ppm = 1.75;

  // synth
  std::uint64_t seed = 0;
  double bearing = 310.0;
  double gain = 0.5;
  double background = 1.8;
  double noise = 0.02;
  double source_fraction = 0.35;
  double wind_speed_mean = 3.0;
  std::string modulation = "inverse-wind";
};

void register_options(CLI::App& app, RunConfig& c) {
  app.option_defaults()->always_capture_default();
  // Captured vector defaults read "[a,b]" / "{}"; store them as plain "a,b" so
  // the serialized config parses back to the same values.
  auto list = [](CLI::Option* o) {
    std::string d = o->get_default_str();
    if (d == "{}") d.clear();
    if (d.size() >= 2 && d.front() == '[' && d.back() == ']') d = d.substr(1, d.size() - 2);
    return o->delimiter(',')->default_str(d);
  };

  app.add_option("--out", c.out, "Output directory")->group("Paths");
  app.add_option("--station", c.station, "Hourly station CSV")->group("Paths");
  app.add_option("--diluent", c.diluent, "Monthly diluent report CSV (year,month,hydrocarbon,tonnes)")->group("Paths");
  app.add_option("--trajectory", c.trajectory, "Mechanistic trajectory CSV (or simulate from --diluent / --demo)")->group("Paths");
  app.add_option("--dataset", c.dataset, "Prepared dataset CSV")->group("Paths");
  app.add_option("--scaler", c.scaler, "Scaler CSV (default: scaler.csv next to the dataset)")->group("Paths");
  app.add_option("--model", c.model, "Model artifact JSON")->group("Paths");
  app.add_option("--reported", c.reported, "Reported yearly emissions CSV (year,tonnes) for seed selection")
      ->group("Paths");
  app.add_option("--truth", c.truth, "Ground-truth daily emissions CSV (date,q_tonnes_per_day)")->group("Paths");
  app.add_option("--start", c.start, "First date YYYY-MM-DD")->group("Paths");
  app.add_option("--end", c.end, "Last date YYYY-MM-DD (inclusive)")->group("Paths");

  app.add_flag("--demo", c.demo, "simulate: use the built-in seasonal diluent report")->group("Mechanistic");
  app.add_option("--kinetics", c.kinetics, "first-order | monod")->group("Mechanistic");
  list(app.add_option("--species", c.species, "Hydrocarbon names (demo report)"))->group("Mechanistic");
  list(app.add_option("--decay-rate", c.decay_rate, "k_i, 1/day (one value broadcasts)"))->group("Mechanistic");
  list(app.add_option("--max-uptake", c.max_uptake, "v_max_i (monod)"))->group("Mechanistic");
  list(app.add_option("--half-saturation", c.half_saturation, "K_s_i, tonnes (monod)"))->group("Mechanistic");
  list(app.add_option("--methane-factor", c.methane_factor, "mu_i, tonnes CH4 per tonne"))->group("Mechanistic");
  app.add_option("--biomass-yield", c.biomass_yield, "Y (monod)")->group("Mechanistic");
  app.add_option("--biomass-death", c.biomass_death, "k_d, 1/day (monod)")->group("Mechanistic");
  app.add_option("--initial-biomass", c.initial_biomass, "Initial biomass, tonnes (monod)")->group("Mechanistic");
  app.add_option("--fft-fraction", c.fft_fraction, "Share of company diluent assigned to this pond")
      ->group("Mechanistic");

  app.add_option("--sector-lo", c.sector_lo, "Station wind sector start, degrees")->group("Prepare");
  app.add_option("--sector-hi", c.sector_hi, "Station wind sector end, degrees (exclusive)")->group("Prepare");
  list(app.add_option("--atm-channels", c.atm_channels, "x_atm channels (default: all except ch4_ppm)"))
      ->group("Prepare");
  app.add_option("--train-fraction", c.train_fraction, "Chronological training share")->group("Prepare");

  app.add_option("--model-kind", c.model_kind, "forward | reverse | poly | rnn_mod | nn")->group("Train");
  list(app.add_option("--lambda", c.lambdas, "Penalty weight(s); several values run a sweep"))->group("Train");
  list(app.add_option("--lr", c.learning_rates, "Learning-rate grid"))->group("Train");
  app.add_option("--momentum", c.momentum)->group("Train");
  app.add_option("--weight-decay", c.weight_decay)->group("Train");
  app.add_option("--iterations", c.iterations, "Full-batch epochs")->group("Train");
  app.add_option("--batch-size", c.batch_size, "0 = full batch")->group("Train");
  list(app.add_option("--seeds", c.seeds, "Seed list"))->group("Train");
  app.add_flag("--sparse", c.sparse, "Hard-threshold the constraint parameters each epoch")->group("Train");
  app.add_option("--threshold", c.threshold)->group("Train");
  app.add_option("--u-width", c.u_width, "Concentration-network hidden width")->group("Train");
  app.add_option("--phi-width", c.phi_width, "Constraint-network hidden width")->group("Train");
  app.add_option("--nn-width", c.nn_width, "NN baseline hidden width")->group("Train");
  app.add_option("--activation", c.activation, "tanh | sigmoid | softplus")->group("Train");

  app.add_option("--sector-width", c.sector_width, "Tracking sector width, degrees")->group("Track");
  app.add_flag("--plot", c.plot, "Also write a radial SVG per year")->group("Track");
  app.add_option("--target-ppm", c.target_ppm, "Scenario mean concentration")->group("Track");

  app.add_option("--seed", c.seed, "synth: RNG seed")->group("Synth");
  app.add_option("--bearing", c.bearing, "synth: source bearing, degrees")->group("Synth");
  app.add_option("--gain", c.gain, "synth: ppm per (tonnes/day)")->group("Synth");
  app.add_option("--background", c.background, "synth: background ppm")->group("Synth");
  app.add_option("--noise", c.noise, "synth: hourly noise std, ppm")->group("Synth");
  app.add_option("--source-fraction", c.source_fraction, "synth: share of days blowing from the source")
      ->group("Synth");
  app.add_option("--wind-speed-mean", c.wind_speed_mean, "synth: mean wind speed, m/s")->group("Synth");
  app.add_option("--modulation", c.modulation, "synth: inverse-wind (g q / (1 + ws)) | none (g q)")->group("Synth");
}

// ---- run-directory bookkeeping ----

class RunDir {
 public:
  RunDir(fs::path root, std::string command, std::ostream& log)
      : root_(std::move(root)), command_(std::move(command)), log_(log) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) throw IoError("cannot create output directory '" + root_.string() + "': " + ec.message());
  }

  const fs::path& root() const { return root_; }
  std::ostream& log() { return log_; }

  void input(const std::string& key, const std::string& path) {
    if (!path.empty()) inputs_[key] = {path, sha256_file(path)};
  }

  /// Writes `body` to root/name, creating subdirectories as needed.
  template <class Fn>
  void write(const std::string& name, Fn&& body) {
    const fs::path p = root_ / name;
    auto out = csv::open_output(p);
    body(out);
    out.flush();
    if (!out) throw IoError("write failed: " + p.string());
    outputs_.push_back(name);
  }

  void manifest(const std::string& config_text) {
    // the resolved configuration, reusable as --config
    {
      auto f = csv::open_output(root_ / "config.ini");
      f << config_text;
      if (!f) throw IoError("write failed: " + (root_ / "config.ini").string());
    }
    ordered_json j;
    j["tool"] = "methanet";
    j["version"] = kToolVersion;
    j["command"] = command_;
    j["config"] = "config.ini";
    j["config_sha256"] = sha256_hex(config_text);
    ordered_json in = ordered_json::object();
    for (const auto& [k, v] : inputs_) in[k] = {{"path", v.first}, {"sha256", v.second}};
    j["inputs"] = in;
    auto outs = outputs_;
    std::sort(outs.begin(), outs.end());
    j["outputs"] = outs;
    auto f = csv::open_output(root_ / "manifest.json");
    f << j.dump(2) << '\n';
    if (!f) throw IoError("write failed: " + (root_ / "manifest.json").string());
  }

 private:
  fs::path root_;
  std::string command_;
  std::ostream& log_;
  std::map<std::string, std::pair<std::string, std::string>> inputs_;
  std::vector<std::string> outputs_;
};

void require(const std::string& value, const char* option, const char* command) {
  if (value.empty()) throw ValidationError(std::string(command) + " requires " + option);
}

DateRange date_range(const RunConfig& c) {
  DateRange r{parse_date(c.start), parse_date(c.end)};
  if (r.last < r.first) throw ValidationError("--end precedes --start");
  return r;
}

std::vector<double> broadcast(const std::vector<double>& v, std::size_t n, const char* name) {
  if (v.size() == n) return v;
  if (v.size() == 1) return std::vector<double>(n, v.front());
  throw ValidationError(std::string(name) + " needs 1 or " + std::to_string(n) + " values, got " +
                        std::to_string(v.size()));
}

template <class Fn>
auto with_path(const std::string& path, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

std::string fmt(double v) { return csv::format_number(v); }

// ---- commands ----

/// Diluent report -> kinetics -> sanitized daily trajectory.
mech::SanitizeResult simulate_trajectory(const RunConfig& c, RunDir& run, const char* command) {
  mech::DiluentReport report;
  if (!c.diluent.empty()) {
    run.input("diluent", c.diluent);
    report = with_path(c.diluent, [&] { return mech::read_diluent_csv(fs::path(c.diluent)); });
  } else if (c.demo) {
    const DateRange r = date_range(c);
    report = mech::demo_diluent_report(c.species, year_of(r.first), year_of(r.last));
  } else {
    throw ValidationError(std::string(command) + " requires --diluent or --demo");
  }
  const std::size_t n = report.species.size();
  mech::KineticsParams p;
  p.kind = mech::parse_kinetics_kind(c.kinetics);
  p.species = report.species;
  p.decay_rate = broadcast(c.decay_rate, n, "--decay-rate");
  p.max_uptake = broadcast(c.max_uptake, n, "--max-uptake");
  p.half_saturation = broadcast(c.half_saturation, n, "--half-saturation");
  p.methane_factor = broadcast(c.methane_factor, n, "--methane-factor");
  p.biomass_yield = c.biomass_yield;
  p.biomass_death = c.biomass_death;
  p.validate();

  const auto schedule = mech::build_inflow_schedule(report.species, report.months, c.fft_fraction);
  mech::PondState init = mech::zero_state(p);
  if (p.kind == mech::KineticsKind::Monod) init.aux.assign(p.aux_count(), c.initial_biomass);
  auto clean = mech::sanitize(mech::simulate(p, schedule, init));
  if (clean.replaced) {
    run.log() << command << ": replaced " << clean.replaced << " unrealistic day(s) ("
              << std::setprecision(3) << 100.0 * clean.replaced_fraction() << "%)\n";
  }
  return clean;
}

void cmd_simulate(const RunConfig& c, RunDir& run) {
  const auto clean = simulate_trajectory(c, run, "simulate");
  run.write("trajectory.csv", [&](std::ostream& o) { mech::write_trajectory_csv(o, clean.trajectory); });
  run.write("schedule_summary.json", [&](std::ostream& o) {
    ordered_json j;
    j["days"] = clean.trajectory.days.size();
    j["first"] = format_date(clean.trajectory.days.front().date);
    j["last"] = format_date(clean.trajectory.days.back().date);
    j["replaced_days"] = clean.replaced;
    o << j.dump(2) << '\n';
  });
}

ingest::StationData load_station(const RunConfig& c, RunDir& run, const char* command) {
  require(c.station, "--station", command);
  run.input("station", c.station);
  auto st = with_path(c.station, [&] { return ingest::parse_station_csv(fs::path(c.station)); });
  if (st.dropped) run.log() << command << ": dropped " << st.dropped << " malformed row(s) from " << c.station << '\n';
  return st;
}

mech::MechanisticTrajectory load_trajectory(const RunConfig& c, RunDir& run, const char* command) {
  if (c.trajectory.empty() && (!c.diluent.empty() || c.demo)) return simulate_trajectory(c, run, command).trajectory;
  require(c.trajectory, "--trajectory", command);
  run.input("trajectory", c.trajectory);
  return with_path(c.trajectory, [&] { return mech::read_trajectory_csv(fs::path(c.trajectory)); });
}

void cmd_prepare(const RunConfig& c, RunDir& run) {
  const auto station = load_station(c, run, "prepare");
  const auto traj = load_trajectory(c, run, "prepare");
  const DateRange range = date_range(c);
  const auto filtered = ingest::filter_by_wind_sector(station, {c.sector_lo, c.sector_hi});
  const auto daily = ingest::interpolate_gaps(ingest::daily_aggregate(filtered), range);
  ingest::AssembleOptions opt;
  opt.atm_channels = c.atm_channels;
  const auto data = ingest::assemble_dataset(daily, traj, range, opt);
  const auto [train, validation] = ingest::chronological_split(data, c.train_fraction);

  std::size_t filled_days = 0;
  for (const auto& f : data.filled) filled_days += f.empty() ? 0 : 1;
  run.write("dataset.csv", [&](std::ostream& o) { ingest::write_dataset_csv(o, data); });
  run.write("scaler.csv", [&](std::ostream& o) { data.scaler.write_csv(o); });
  run.write("prepare_summary.json", [&](std::ostream& o) {
    ordered_json j;
    j["rows"] = data.rows();
    j["train_rows"] = train.rows();
    j["validation_rows"] = validation.rows();
    j["station_rows"] = station.rows.size();
    j["sector_rows"] = filtered.rows.size();
    j["dropped_rows"] = station.dropped;
    j["filled_days"] = filled_days;
    j["features"] = data.feature_names;
    j["scaler_fit"] = "all rows";
    o << j.dump(2) << '\n';
  });
}

ingest::Dataset load_dataset(const RunConfig& c, RunDir& run, const char* command) {
  require(c.dataset, "--dataset", command);
  const std::string scaler = c.scaler.empty() ? (fs::path(c.dataset).parent_path() / "scaler.csv").string() : c.scaler;
  run.input("dataset", c.dataset);
  run.input("scaler", scaler);
  return with_path(c.dataset, [&] { return ingest::load_dataset(c.dataset, scaler); });
}

train::TrainConfig train_config(const RunConfig& c, double lambda) {
  train::TrainConfig t;
  t.lambda = lambda;
  t.learning_rates = c.learning_rates;
  t.momentum = c.momentum;
  t.weight_decay = c.weight_decay;
  t.iterations = c.iterations;
  t.batch_size = c.batch_size;
  t.seeds = c.seeds;
  t.sparse = c.sparse;
  t.threshold = c.threshold;
  t.arch.u_width = c.u_width;
  t.arch.phi_width = c.phi_width;
  t.arch.nn_width = c.nn_width;
  t.arch.activation = net::parse_activation(c.activation);
  t.validate();
  return t;
}

struct TrainResult {
  train::TrainedModel model;
  std::optional<double> score;
};

TrainResult train_and_select(const RunConfig& c, RunDir& run, const std::string& prefix, model::ModelKind kind,
                             const ingest::Dataset& data, const train::TrainConfig& cfg,
                             const std::optional<std::map<int, double>>& reported) {
  const auto [training, validation] = ingest::chronological_split(data, c.train_fraction);
  const auto outcomes = train::train_seeds(kind, training, validation, cfg);

  std::vector<const train::TrainedModel*> ok;
  for (const auto& o : outcomes) {
    if (o.model) ok.push_back(&*o.model);
    else run.log() << "train: seed " << o.seed << " excluded: " << o.failure << '\n';
  }
  if (ok.empty()) throw NumericalError("train: every seed diverged");

  std::size_t pick = 0;
  std::map<std::uint64_t, double> scores;
  if (reported) {
    if (kind == model::ModelKind::NnBaseline) {
      throw ValidationError("--reported selection needs a constraint branch; the nn baseline has none");
    }
    const auto sel = train::select_model(ok, data, *reported);
    pick = sel.index;
    for (const auto& s : sel.scores) scores[s.seed] = s.score;
  } else {
    std::vector<train::SelectionScore> by_loss;
    for (const auto* m : ok) by_loss.push_back({m->artifact.seed, m->report.val_data_loss, {}});
    pick = train::argmin_score(by_loss);
  }
  const train::TrainedModel& best = *ok[pick];

  run.write(prefix + "selection.csv", [&](std::ostream& o) {
    o << "seed,status,learning_rate,val_data_loss,score,selected\n";
    for (const auto& oc : outcomes) {
      o << oc.seed << ',';
      if (!oc.model) {
        o << "diverged,NA,NA,NA,0\n";
        continue;
      }
      const auto it = scores.find(oc.seed);
      o << "ok," << fmt(oc.model->report.learning_rate) << ',' << fmt(oc.model->report.val_data_loss) << ','
        << (it == scores.end() ? std::string("NA") : fmt(it->second)) << ','
        << (oc.seed == best.artifact.seed ? 1 : 0) << '\n';
    }
  });
  run.write(prefix + "model.json", [&](std::ostream& o) { model::save_artifact(o, best.artifact); });
  run.write(prefix + "report.csv", [&](std::ostream& o) { train::write_report_csv(o, best.report); });
  run.write(prefix + "summary.json", [&](std::ostream& o) {
    std::ostringstream s;
    train::write_summary_json(s, best.report);
    auto j = ordered_json::parse(s.str());
    j["selected_seed"] = best.artifact.seed;
    j["selection"] = reported ? "reported_emissions" : "validation_data_loss";
    o << j.dump(2) << '\n';
  });
  TrainResult r{best, std::nullopt};
  if (auto it = scores.find(best.artifact.seed); it != scores.end()) r.score = it->second;
  return r;
}

void cmd_train(const RunConfig& c, RunDir& run) {
  const auto data = load_dataset(c, run, "train");
  const auto kind = model::parse_model_kind(c.model_kind);
  std::optional<std::map<int, double>> reported;
  if (!c.reported.empty()) {
    run.input("reported", c.reported);
    reported = train::read_reported_emissions(fs::path(c.reported));
  }
  if (c.lambdas.empty()) throw ValidationError("--lambda needs at least one value");
  if (c.lambdas.size() == 1) {
    train_and_select(c, run, "", kind, data, train_config(c, c.lambdas.front()), reported);
    return;
  }
  std::vector<std::pair<double, train::TrainedModel>> sweep;
  for (std::size_t i = 0; i < c.lambdas.size(); ++i) {
    const std::string prefix = "lambda_" + std::to_string(i) + "/";
    sweep.emplace_back(c.lambdas[i],
                       train_and_select(c, run, prefix, kind, data, train_config(c, c.lambdas[i]), reported).model);
  }
  run.write("lambda_sweep.csv", [&](std::ostream& o) {
    o << "lambda,data_loss,constraint_residual,total_loss,val_data_loss,selected_seed\n";
    for (const auto& [l, m] : sweep) {
      const auto& last = m.report.history.back();
      o << fmt(l) << ',' << fmt(last.data_loss) << ',' << fmt(last.constraint_residual) << ','
        << fmt(last.total_loss) << ',' << fmt(m.report.val_data_loss) << ',' << m.artifact.seed << '\n';
    }
  });
}

model::ModelArtifact load_model(const RunConfig& c, RunDir& run, const char* command) {
  require(c.model, "--model", command);
  run.input("model", c.model);
  return with_path(c.model, [&] { return model::load_artifact(fs::path(c.model)); });
}

struct Replay {
  ingest::Dataset data;
  std::vector<double> directions;
};

// Unfiltered daily data over the run range, assembled with the model's scaler.
std::optional<Replay> replay_data(const RunConfig& c, RunDir& run, const model::ModelArtifact& art,
                                  const char* command) {
  const auto station = load_station(c, run, command);
  const auto traj = load_trajectory(c, run, command);
  const DateRange range = date_range(c);
  const auto daily = ingest::daily_aggregate(station);
  const auto dir_channel = daily.channel(ingest::kWindDirection);
  std::size_t observed = 0;
  for (const auto& d : daily.days) {
    if (range.contains(d.date) && d.values[*dir_channel]) ++observed;
  }
  if (observed == 0) return std::nullopt;

  const auto filled = ingest::interpolate_gaps(daily, range);
  ingest::AssembleOptions opt;
  const auto& p = art.params;
  opt.atm_channels.assign(art.feature_names.begin() + static_cast<std::ptrdiff_t>(p.layout.dil_count),
                          art.feature_names.begin() + static_cast<std::ptrdiff_t>(p.layout.dil_count + p.layout.atm_count));
  opt.fixed_scaler = &art.scaler;
  Replay r;
  r.data = ingest::assemble_dataset(filled, traj, range, opt);
  const std::size_t ci = *filled.channel(ingest::kWindDirection);
  for (const auto& d : filled.days) r.directions.push_back(*d.values[ci]);
  return r;
}

void write_sector_outputs(RunDir& run, const analysis::SectorTable& table, bool plot) {
  run.write("sectors.csv", [&](std::ostream& o) { analysis::write_sector_csv(o, table.rows); });
  std::map<int, std::vector<analysis::SectorEmissionSummary>> by_year;
  for (const auto& r : table.rows) by_year[r.year].push_back(r);
  for (const auto& [year, rows] : by_year) {
    run.write("sectors_" + std::to_string(year) + ".csv", [&](std::ostream& o) { analysis::write_sector_csv(o, rows); });
    if (plot) {
      run.write("radial_" + std::to_string(year) + ".svg",
                [&](std::ostream& o) { analysis::write_radial_svg(o, rows, year); });
    }
  }
}

void cmd_track(const RunConfig& c, RunDir& run) {
  const auto art = load_model(c, run, "track");
  const auto replay = replay_data(c, run, art, "track");
  if (!replay) {
    run.log() << "track: warning: no wind observations between " << c.start << " and " << c.end
              << "; writing an empty summary\n";
    write_sector_outputs(run, {}, false);
    return;
  }
  const auto daily = analysis::track_emissions(art, replay->data, replay->directions);
  const auto table = analysis::yearly_sector_emissions(daily, c.sector_width);
  if (table.clamped) run.log() << "track: clamped " << table.clamped << " negative daily estimate(s) to zero\n";
  run.write("daily_emissions.csv", [&](std::ostream& o) {
    o << "date,wind_dir_deg,q_tonnes_per_day\n";
    for (const auto& d : daily) o << format_date(d.date) << ',' << fmt(d.direction) << ',' << fmt(d.tonnes) << '\n';
  });
  write_sector_outputs(run, table, c.plot);
}

void cmd_target(const RunConfig& c, RunDir& run) {
  const auto art = load_model(c, run, "target");
  const auto replay = replay_data(c, run, art, "target");
  if (!replay) throw ValidationError("target: no wind observations between " + c.start + " and " + c.end);
  const auto& data = replay->data;

  const Eigen::VectorXd ppm = data.concentration_ppm();
  const Eigen::VectorXd shifted = analysis::shift_to_target_mean(ppm, c.target_ppm);
  const std::size_t uc = *art.scaler.index(ingest::kMethane);
  const Eigen::VectorXd shifted_scaled = shifted.unaryExpr([&](double v) { return art.scaler.scale(uc, v); });

  const auto current = analysis::yearly_sector_emissions(analysis::track_emissions(art, data, replay->directions),
                                                         c.sector_width);
  const auto target = analysis::yearly_sector_emissions(
      analysis::track_emissions(art, data, replay->directions, shifted_scaled), c.sector_width);
  const auto scenario = analysis::reduction_table(current.rows, target.rows, c.target_ppm);

  run.write("scenario.csv", [&](std::ostream& o) { analysis::write_scenario_csv(o, scenario); });
  run.write("scenario_summary.json", [&](std::ostream& o) {
    ordered_json j;
    j["current_mean_ppm"] = ppm.mean();
    j["target_ppm"] = c.target_ppm;
    j["shift_ppm"] = ppm.mean() - c.target_ppm;
    j["aggregate_reduction_pct"] = scenario.aggregate_reduction_pct ? ordered_json(*scenario.aggregate_reduction_pct)
                                                                    : ordered_json(nullptr);
    j["clamped_current"] = current.clamped;
    j["clamped_target"] = target.clamped;
    o << j.dump(2) << '\n';
  });
}

void cmd_synth(const RunConfig& c, RunDir& run) {
  synth::SynthConfig s;
  s.seed = c.seed;
  s.range = date_range(c);
  s.emission = synth::default_emission(s.range);
  s.source_bearing = c.bearing;
  s.gain = c.gain;
  s.background = c.background;
  s.noise = c.noise;
  s.source_day_fraction = c.source_fraction;
  s.wind_speed_mean = c.wind_speed_mean;
  s.modulation = synth::parse_modulation(c.modulation);
  const auto gen = synth::generate(s);
  run.write("station.csv", [&](std::ostream& o) { ingest::write_station_csv(o, gen.station); });
  run.write("truth_q.csv", [&](std::ostream& o) { synth::write_truth_csv(o, gen.truth); });
  run.write("diluent.csv", [&](std::ostream& o) { mech::write_diluent_csv(o, synth::default_diluent(s.range)); });
  run.write("reported_emissions.csv",
            [&](std::ostream& o) { synth::write_yearly_csv(o, synth::yearly_totals(gen.truth)); });
}

void cmd_eval(const RunConfig& c, RunDir& run) {
  const auto art = load_model(c, run, "eval");
  const auto data = load_dataset(c, run, "eval");
  if (data.feature_names != art.feature_names) throw ValidationError("eval: dataset features differ from the model's");
  const auto out = model::evaluate(art.params, model::inputs_of(data));
  const std::size_t uc = *art.scaler.index(ingest::kMethane);
  const std::size_t qc = *art.scaler.index(ingest::kEmissionColumn);
  const Eigen::VectorXd u = out.u_hat.unaryExpr([&](double v) { return art.scaler.inverse(uc, v); });
  const Eigen::VectorXd q = out.q_hat.unaryExpr([&](double v) { return art.scaler.inverse(qc, v); });

  ordered_json j;
  j["rows"] = data.rows();
  j["re_u"] = analysis::relative_error(data.concentration_ppm(), u);
  j["re_q"] = analysis::relative_error(data.emission_tonnes(), q);
  if (art.params.kind != model::ModelKind::NnBaseline) {
    const Eigen::VectorXd est = model::estimate_emissions_measured(art, data);
    j["re_q_measured"] = analysis::relative_error(data.emission_tonnes(), est);
    run.write("estimates.csv", [&](std::ostream& o) {
      o << "date,q_tonnes_per_day\n";
      const Eigen::VectorXd ref = data.emission_tonnes();
      for (std::size_t i = 0; i < data.rows(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        o << format_date(data.dates[i]) << ',' << fmt(est(k)) << '\n';
      }
    });
    if (!c.truth.empty()) {
      run.input("truth", c.truth);
      const auto rep = synth::oracle_check(data.dates, est, synth::read_truth_csv(fs::path(c.truth)));
      j["oracle_relative_error"] = rep.relative_error;
      ordered_json gaps = ordered_json::object();
      for (const auto& [y, g] : rep.yearly_gap_pct) gaps[std::to_string(y)] = g;
      j["oracle_yearly_gap_pct"] = gaps;
    }
  }
  run.write("metrics.json", [&](std::ostream& o) { o << j.dump(2) << '\n'; });
}

// Canonical config text for hashing: every option value except where outputs go.
std::string config_text(const CLI::App& app, const std::string& command) {
  std::istringstream all(app.config_to_str(true, false));
  std::string line, text = "# methanet " + command + "\n";
  while (std::getline(all, line)) {
    if (line.rfind("out=", 0) == 0 || line.rfind("config=", 0) == 0) continue;
    if (line.size() >= 3 && line.compare(line.size() - 3, 3, "=\"\"") == 0) continue;  // unset
    // list defaults come out as "a,b"; given lists as [a, b]. Use the latter for both.
    const auto eq = line.find('=');
    if (eq != std::string::npos && line.size() > eq + 2 && line[eq + 1] == '"' && line.back() == '"' &&
        line.find(',', eq) != std::string::npos) {
      std::string items;
      for (const auto& item : csv::split(line.substr(eq + 2, line.size() - eq - 3))) {
        if (!items.empty()) items += ", ";
        items += csv::parse_number(item) ? item : '"' + item + '"';
      }
      line = line.substr(0, eq + 1) + "[" + items + "]";
    }
    text += line + "\n";
  }
  return text;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"methanet: physics-constrained joint methane emission/concentration models"};
  app.set_config("--config", "", "Flat key = value config file (command-line values take precedence)");
  app.require_subcommand(1, 1);
  RunConfig c;
  register_options(app, c);

  using Command = void (*)(const RunConfig&, RunDir&);
  const std::vector<std::tuple<const char*, const char*, Command>> commands{
      {"simulate", "Mechanistic model: diluent report -> daily trajectory.csv", cmd_simulate},
      {"prepare", "Station CSV + trajectory -> dataset.csv, scaler.csv", cmd_prepare},
      {"train", "Train one model kind over the seed list and select one", cmd_train},
      {"track", "Per-year, per-wind-sector emission totals from a trained model", cmd_track},
      {"target", "Sector emissions needed for a target mean concentration", cmd_target},
      {"synth", "Synthetic station data from a known dispersion law", cmd_synth},
      {"eval", "Relative errors of a model on a dataset", cmd_eval},
  };
  std::map<const CLI::App*, Command> dispatch;
  for (const auto& [name, help, fn] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->fallthrough();
    dispatch[sub] = fn;
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kValidation;
  }

  const CLI::App* sub = app.get_subcommands().front();
  try {
    RunDir run(c.out, sub->get_name(), err);
    dispatch.at(sub)(c, run);
    run.manifest(config_text(app, sub->get_name()));
    return kOk;
  } catch (const Error& e) {
    err << sub->get_name() << ": error: " << e.what() << '\n';
    switch (e.kind()) {
      case ErrorKind::Validation: return kValidation;
      case ErrorKind::Numerical: return kNumerical;
      case ErrorKind::Io: return kIo;
    }
    return kValidation;
  } catch (const fs::filesystem_error& e) {
    err << sub->get_name() << ": error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    err << sub->get_name() << ": error: " << e.what() << '\n';
    return 1;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace methanet::cli
