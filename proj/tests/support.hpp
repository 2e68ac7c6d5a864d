#pragma once

// Shared test helpers: an independent loop-based network evaluator and a
// central finite-difference gradient checker.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "methanet/netcore.hpp"

namespace methanet::testing {

inline double naive_activation(net::Activation act, double z) {
  switch (act) {
    case net::Activation::Tanh: return std::tanh(z);
    case net::Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-z));
    case net::Activation::Softplus: return std::log(1.0 + std::exp(z));
  }
  return z;
}

/// Plain nested loops, one sample at a time.
inline std::vector<double> naive_forward(const net::DenseNet& n, std::vector<double> x) {
  const auto& layers = n.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& W = layers[l].weight;
    std::vector<double> y(static_cast<std::size_t>(W.rows()));
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      double acc = layers[l].bias(r);
      for (Eigen::Index c = 0; c < W.cols(); ++c) acc += W(r, c) * x[static_cast<std::size_t>(c)];
      y[static_cast<std::size_t>(r)] = l + 1 < layers.size() ? naive_activation(n.activation(), acc) : acc;
    }
    x = std::move(y);
  }
  return x;
}

/// Random net with 1..4 layers of widths 1..8 and a random activation.
inline net::DenseNet random_net(std::mt19937_64& rng, std::size_t max_layers = 4, std::size_t max_width = 8) {
  std::uniform_int_distribution<std::size_t> nl(1, max_layers), w(1, max_width), a(0, 2);
  std::vector<std::size_t> widths{w(rng)};
  const std::size_t layers = nl(rng);
  for (std::size_t i = 0; i < layers; ++i) widths.push_back(w(rng));
  const auto act = static_cast<net::Activation>(a(rng));
  auto n = net::DenseNet::glorot(widths, act, rng);
  std::normal_distribution<double> g(0.0, 0.3);
  for (auto& l : n.layers()) l.bias = l.bias.unaryExpr([&](double) { return g(rng); });  // nonzero biases
  return n;
}

inline net::Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return net::Matrix::NullaryExpr(rows, cols, [&]() { return u(rng); });
}

/// |a - f| / max(|a|, |f|, floor); the floor only guards exact zeros.
inline constexpr double kGradFloor = 1e-8;
inline double grad_rel_error(double analytic, double numeric, double floor = kGradFloor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central difference of f at every coordinate of `x` (modified in place and restored).
template <class F>
net::Vector central_difference(F&& f, net::Vector& x, double h = 1e-5) {
  net::Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x(i);
    x(i) = keep + h;
    const double fp = f(x);
    x(i) = keep - h;
    const double fm = f(x);
    x(i) = keep;
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

struct GradCheck {
  double params = 0.0;   // worst parameter error, output loss
  double tangent = 0.0;  // worst parameter error, tangent loss
  double inputs = 0.0;   // worst input error
  double grad_t = 0.0;   // worst grad_t error
  double worst() const { return std::max({params, tangent, inputs, grad_t}); }
};

/// Checks backward() against central differences for L = sum(W .* out) and
/// L = sum(W .* out) + sum(V .* d out / d x_t) on a small batch.
inline GradCheck check_network(const net::DenseNet& n, std::mt19937_64& rng, Eigen::Index batch = 3) {
  const auto in = static_cast<Eigen::Index>(n.input_dim());
  const auto out = static_cast<Eigen::Index>(n.output_dim());
  const net::Matrix X = random_matrix(rng, in, batch);
  const net::Matrix W = random_matrix(rng, out, batch);
  const net::Matrix V = random_matrix(rng, out, batch);
  const std::size_t t = std::uniform_int_distribution<std::size_t>(0, n.input_dim() - 1)(rng);
  GradCheck r;

  net::Vector p(static_cast<Eigen::Index>(n.parameter_count()));
  n.copy_parameters_to({p.data(), static_cast<std::size_t>(p.size())});
  net::DenseNet probe = n;
  auto with = [&](const net::Vector& q) {
    probe.copy_parameters_from({q.data(), static_cast<std::size_t>(q.size())});
    return &probe;
  };
  auto flat = [&](const std::vector<net::Layer>& layers) {
    net::Vector g(p.size());
    net::copy_layers_to(layers, {g.data(), static_cast<std::size_t>(g.size())});
    return g;
  };
  auto worst = [](const net::Vector& a, const net::Vector& f) {
    double e = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) e = std::max(e, grad_rel_error(a(i), f(i)));
    return e;
  };

  {  // plain output
    const auto cache = net::forward(n, X);
    const auto g = net::backward(n, cache, W);
    net::Vector pp = p;
    const net::Vector fd = central_difference(
        [&](const net::Vector& q) { return (net::forward(*with(q), X).output().array() * W.array()).sum(); }, pp);
    r.params = worst(flat(g.layers), fd);

    net::Vector xv = Eigen::Map<const net::Vector>(X.data(), X.size());
    const net::Vector fdx = central_difference(
        [&](const net::Vector& xs) {
          const net::Matrix Xs = Eigen::Map<const net::Matrix>(xs.data(), in, batch);
          return (net::forward(n, Xs).output().array() * W.array()).sum();
        },
        xv);
    r.inputs = worst(Eigen::Map<const net::Vector>(g.inputs.data(), g.inputs.size()), fdx);
  }
  {  // output plus tangent
    const auto cache = net::forward_with_tangent(n, X, t);
    const auto g = net::backward(n, cache, W, &V);
    net::Vector pp = p;
    const net::Vector fd = central_difference(
        [&](const net::Vector& q) {
          const auto c = net::forward_with_tangent(*with(q), X, t);
          return (c.output().array() * W.array()).sum() + (c.tangent().array() * V.array()).sum();
        },
        pp);
    r.tangent = worst(flat(g.layers), fd);
  }
  {  // grad_t against a difference in x_t
    net::Vector x = X.col(0);
    const double a = net::grad_t(n, x, t);
    net::Vector xt(1);
    xt(0) = x(static_cast<Eigen::Index>(t));
    const net::Vector f = central_difference(
        [&](const net::Vector& s) {
          net::Vector y = x;
          y(static_cast<Eigen::Index>(t)) = s(0);
          return net::forward(n, y)(0);
        },
        xt);
    r.grad_t = grad_rel_error(a, f(0));
  }
  return r;
}

}  // namespace methanet::testing

// ---------------------------------------------------------------------------
// Synthetic pipeline fixtures

#include "methanet/ingest.hpp"
#include "methanet/synthgen.hpp"

namespace methanet::testing {

/// Station sector and weather channels used when training on synthetic data.
inline const ingest::WindSector kSourceSector{300.0, 320.0};
inline const std::vector<std::string> kAtmChannels{ingest::kWindSpeed, ingest::kTemperature, ingest::kSolar};

inline synth::SynthConfig synth_config(DateRange range, std::uint64_t seed = 0) {
  synth::SynthConfig c;
  c.seed = seed;
  c.range = range;
  c.emission = synth::default_emission(range);
  return c;
}

/// Sector filter -> daily means -> gap fill -> dataset.
inline ingest::Dataset prepare(const ingest::StationData& station, const mech::MechanisticTrajectory& traj,
                               DateRange range, std::optional<ingest::WindSector> sector = kSourceSector,
                               const ingest::Scaler* scaler = nullptr) {
  const auto kept = sector ? ingest::filter_by_wind_sector(station, *sector) : station;
  const auto daily = ingest::interpolate_gaps(ingest::daily_aggregate(kept), range);
  ingest::AssembleOptions opt;
  opt.atm_channels = kAtmChannels;
  opt.fixed_scaler = scaler;
  return ingest::assemble_dataset(daily, traj, range, opt);
}

/// Per-day circular-mean wind direction over the whole (unfiltered) record.
inline std::vector<double> daily_directions(const ingest::StationData& station, DateRange range) {
  const auto daily = ingest::interpolate_gaps(ingest::daily_aggregate(station), range);
  const auto c = *daily.channel(ingest::kWindDirection);
  std::vector<double> out;
  for (const auto& d : daily.days) out.push_back(*d.values[c]);
  return out;
}

}  // namespace methanet::testing
