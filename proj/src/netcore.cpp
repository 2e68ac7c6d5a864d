#include "methanet/netcore.hpp"

#include <cmath>

#include "methanet/error.hpp"

namespace methanet::net {

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "softplus") return Activation::Softplus;
  throw ValidationError("unknown activation '" + std::string(name) + "' (tanh|sigmoid|softplus)");
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Softplus: return "softplus";
  }
  return "tanh";
}

namespace {

Matrix activate(Activation act, const Matrix& z) {
  switch (act) {
    case Activation::Tanh: {
      // Eigen only vectorizes tanh for float; exp is vectorized for double.
      const Eigen::ArrayXXd e = (-2.0 * z.array().abs()).exp();
      return ((1.0 - e) / (1.0 + e) * z.array().sign()).matrix();
    }
    case Activation::Sigmoid: return (1.0 / (1.0 + (-z.array()).exp())).matrix();
    case Activation::Softplus:
      // log(1 + e^z) evaluated without overflow
      return z.unaryExpr([](double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); });
  }
  return z;
}

// First derivative from the pre-activation z and activation a = act(z).
Matrix derivative(Activation act, const Matrix& z, const Matrix& a) {
  switch (act) {
    case Activation::Tanh: return (1.0 - a.array().square()).matrix();
    case Activation::Sigmoid: return (a.array() * (1.0 - a.array())).matrix();
    case Activation::Softplus: return (1.0 / (1.0 + (-z.array()).exp())).matrix();
  }
  return z;
}

Matrix second_derivative(Activation act, const Matrix& z, const Matrix& a) {
  switch (act) {
    case Activation::Tanh: return (-2.0 * a.array() * (1.0 - a.array().square())).matrix();
    case Activation::Sigmoid: return (a.array() * (1.0 - a.array()) * (1.0 - 2.0 * a.array())).matrix();
    case Activation::Softplus: {
      const Eigen::ArrayXXd s = 1.0 / (1.0 + (-z.array()).exp());
      return (s * (1.0 - s)).matrix();
    }
  }
  return z;
}

void check_input(const DenseNet& net, const Matrix& inputs) {
  if (net.empty()) throw ShapeError("forward on an empty network");
  if (static_cast<std::size_t>(inputs.rows()) != net.input_dim()) {
    throw ShapeError("network expects " + std::to_string(net.input_dim()) + " inputs, got " +
                     std::to_string(inputs.rows()));
  }
}

ForwardCache run_forward(const DenseNet& net, const Matrix& inputs, const std::size_t* tangent_index) {
  check_input(net, inputs);
  const auto& layers = net.layers();
  const std::size_t depth = layers.size();
  ForwardCache cache;
  cache.inputs.reserve(depth);
  cache.pre.reserve(depth);
  cache.inputs.push_back(inputs);
  if (tangent_index) {
    cache.d_inputs.push_back(Matrix::Zero(inputs.rows(), inputs.cols()));
    cache.d_inputs.back().row(static_cast<Eigen::Index>(*tangent_index)).setOnes();
  }
  for (std::size_t l = 0; l < depth; ++l) {
    const Layer& layer = layers[l];
    Matrix z = layer.weight * cache.inputs[l];
    z.colwise() += layer.bias;
    if (tangent_index) {
      // The input tangent is a constant one-hot, so the first layer reduces to a column copy.
      if (l == 0) {
        cache.d_pre.push_back(layer.weight.col(static_cast<Eigen::Index>(*tangent_index)).replicate(1, inputs.cols()));
      } else {
        cache.d_pre.push_back(layer.weight * cache.d_inputs[l]);
      }
    }
    if (l + 1 < depth) {
      Matrix a = activate(net.activation(), z);
      if (tangent_index) {
        cache.d_inputs.push_back(derivative(net.activation(), z, a).cwiseProduct(cache.d_pre[l]));
      }
      cache.inputs.push_back(std::move(a));
    }
    cache.pre.push_back(std::move(z));
  }
  return cache;
}

}  // namespace

DenseNet::DenseNet(std::vector<Layer> layers, Activation activation)
    : layers_(std::move(layers)), activation_(activation) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].weight.rows() != layers_[l].bias.size()) {
      throw ShapeError("layer " + std::to_string(l) + ": bias length differs from weight rows");
    }
    if (l > 0 && layers_[l].weight.cols() != layers_[l - 1].weight.rows()) {
      throw ShapeError("layer " + std::to_string(l) + ": input width differs from previous output");
    }
  }
}

DenseNet DenseNet::glorot(const std::vector<std::size_t>& widths, Activation activation, std::mt19937_64& rng) {
  if (widths.size() < 2) throw ShapeError("network needs at least input and output widths");
  std::vector<Layer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const auto fan_in = static_cast<Eigen::Index>(widths[l]);
    const auto fan_out = static_cast<Eigen::Index>(widths[l + 1]);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Layer layer{Matrix(fan_out, fan_in), Vector::Zero(fan_out)};
    for (Eigen::Index c = 0; c < fan_in; ++c) {
      for (Eigen::Index r = 0; r < fan_out; ++r) layer.weight(r, c) = dist(rng);
    }
    layers.push_back(std::move(layer));
  }
  return DenseNet(std::move(layers), activation);
}

DenseNet DenseNet::zeros(const std::vector<std::size_t>& widths, Activation activation) {
  if (widths.size() < 2) throw ShapeError("network needs at least input and output widths");
  std::vector<Layer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(widths[l]);
    const auto out = static_cast<Eigen::Index>(widths[l + 1]);
    layers.push_back(Layer{Matrix::Zero(out, in), Vector::Zero(out)});
  }
  return DenseNet(std::move(layers), activation);
}

std::size_t DenseNet::input_dim() const {
  return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.cols());
}

std::size_t DenseNet::output_dim() const {
  return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weight.rows());
}

std::size_t DenseNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

void copy_layers_to(const std::vector<Layer>& layers, std::span<double> out) {
  std::size_t k = 0;
  for (const auto& l : layers) {
    const auto nw = static_cast<std::size_t>(l.weight.size());
    const auto nb = static_cast<std::size_t>(l.bias.size());
    if (k + nw + nb > out.size()) throw ShapeError("parameter buffer too small");
    std::copy(l.weight.data(), l.weight.data() + nw, out.begin() + static_cast<std::ptrdiff_t>(k));
    k += nw;
    std::copy(l.bias.data(), l.bias.data() + nb, out.begin() + static_cast<std::ptrdiff_t>(k));
    k += nb;
  }
}

void DenseNet::copy_parameters_to(std::span<double> out) const { copy_layers_to(layers_, out); }

void DenseNet::copy_parameters_from(std::span<const double> in) {
  if (in.size() != parameter_count()) throw ShapeError("parameter buffer has wrong length");
  std::size_t k = 0;
  for (auto& l : layers_) {
    const auto nw = static_cast<std::size_t>(l.weight.size());
    const auto nb = static_cast<std::size_t>(l.bias.size());
    std::copy(in.begin() + static_cast<std::ptrdiff_t>(k), in.begin() + static_cast<std::ptrdiff_t>(k + nw),
              l.weight.data());
    k += nw;
    std::copy(in.begin() + static_cast<std::ptrdiff_t>(k), in.begin() + static_cast<std::ptrdiff_t>(k + nb),
              l.bias.data());
    k += nb;
  }
}

ForwardCache forward(const DenseNet& net, const Matrix& inputs) { return run_forward(net, inputs, nullptr); }

ForwardCache forward_with_tangent(const DenseNet& net, const Matrix& inputs, std::size_t tangent_index) {
  if (tangent_index >= net.input_dim()) {
    throw ShapeError("tangent index " + std::to_string(tangent_index) + " out of range for " +
                     std::to_string(net.input_dim()) + " inputs");
  }
  return run_forward(net, inputs, &tangent_index);
}

Vector forward(const DenseNet& net, const Vector& x) {
  const Matrix in = x;
  return forward(net, in).output().col(0);
}

Gradients backward(const DenseNet& net, const ForwardCache& cache, const Matrix& upstream,
                   const Matrix* tangent_upstream) {
  const auto& layers = net.layers();
  const std::size_t depth = layers.size();
  if (cache.pre.size() != depth) throw ShapeError("forward cache does not match network");
  if (upstream.rows() != cache.output().rows() || upstream.cols() != cache.output().cols()) {
    throw ShapeError("upstream gradient shape differs from network output");
  }
  const bool tangent = tangent_upstream != nullptr;
  if (tangent && !cache.has_tangent()) throw ShapeError("tangent upstream given without tangent cache");

  Gradients g;
  g.layers.resize(depth);
  Matrix gz = upstream;
  Matrix gdz;
  if (tangent) gdz = *tangent_upstream;

  for (std::size_t l = depth; l-- > 0;) {
    const Layer& layer = layers[l];
    Layer& out = g.layers[l];
    out.weight.noalias() = gz * cache.inputs[l].transpose();
    if (tangent) out.weight.noalias() += gdz * cache.d_inputs[l].transpose();
    out.bias = gz.rowwise().sum();

    Matrix ga = layer.weight.transpose() * gz;
    if (l == 0) {
      // The input tangent does not depend on the inputs, so only the primal path contributes.
      g.inputs = std::move(ga);
      break;
    }
    const Matrix& z = cache.pre[l - 1];
    const Matrix& a = cache.inputs[l];
    const Matrix d1 = derivative(net.activation(), z, a);
    if (tangent) {
      const Matrix gda = layer.weight.transpose() * gdz;
      const Matrix d2 = second_derivative(net.activation(), z, a);
      gz = ga.cwiseProduct(d1) + gda.cwiseProduct(d2).cwiseProduct(cache.d_pre[l - 1]);
      gdz = gda.cwiseProduct(d1);
    } else {
      gz = ga.cwiseProduct(d1);
    }
  }
  return g;
}

double grad_t(const DenseNet& net, const Vector& x, std::size_t t_index) {
  if (t_index >= net.input_dim()) {
    throw ShapeError("t index " + std::to_string(t_index) + " out of range for " +
                     std::to_string(net.input_dim()) + " inputs");
  }
  const Matrix in = x;
  const ForwardCache cache = forward(net, in);
  Matrix up = Matrix::Zero(cache.output().rows(), 1);
  up(0, 0) = 1.0;
  return backward(net, cache, up).inputs(static_cast<Eigen::Index>(t_index), 0);
}

std::size_t poly_feature_count(std::size_t n) { return (n + 1) * (n + 2) / 2; }

Vector poly_features(std::span<const double> z) {
  const std::size_t n = z.size();
  if (n == 0) throw ShapeError("polynomial dictionary needs at least one variable");
  Vector p(static_cast<Eigen::Index>(poly_feature_count(n)));
  Eigen::Index k = 0;
  p(k++) = 1.0;
  for (std::size_t i = 0; i < n; ++i) p(k++) = z[i];
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) p(k++) = z[a] * z[b];
  }
  for (std::size_t i = 0; i < n; ++i) p(k++) = z[i] * z[i];
  return p;
}

Vector poly_gradient(const Vector& coeffs, std::span<const double> z) {
  const std::size_t n = z.size();
  if (static_cast<std::size_t>(coeffs.size()) != poly_feature_count(n)) {
    throw ShapeError("polynomial coefficients have length " + std::to_string(coeffs.size()) + ", expected " +
                     std::to_string(poly_feature_count(n)));
  }
  Vector g(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) g(static_cast<Eigen::Index>(i)) = coeffs(static_cast<Eigen::Index>(1 + i));
  Eigen::Index k = static_cast<Eigen::Index>(1 + n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b, ++k) {
      g(static_cast<Eigen::Index>(a)) += coeffs(k) * z[b];
      g(static_cast<Eigen::Index>(b)) += coeffs(k) * z[a];
    }
  }
  for (std::size_t i = 0; i < n; ++i, ++k) g(static_cast<Eigen::Index>(i)) += 2.0 * coeffs(k) * z[i];
  return g;
}

std::size_t hard_threshold(std::span<double> coeffs, double tol) {
  if (!(tol > 0.0)) throw ValidationError("hard_threshold: tol must be > 0");
  std::size_t zeroed = 0;
  for (double& c : coeffs) {
    if (c != 0.0 && std::abs(c) < tol) {
      c = 0.0;
      ++zeroed;
    }
  }
  return zeroed;
}

}  // namespace methanet::net
