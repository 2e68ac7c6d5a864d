#pragma once

// Dense feed-forward networks with exact reverse-mode gradients, including the
// gradient of a time-derivative (input tangent) output. Samples are stored as
// matrix columns throughout: inputs are (input_dim x batch).

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace methanet::net {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { Tanh, Sigmoid, Softplus };

Activation parse_activation(std::string_view name);
std::string to_string(Activation act);

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

/// Smooth activation on hidden layers, identity on the output layer.
class DenseNet {
 public:
  DenseNet() = default;
  DenseNet(std::vector<Layer> layers, Activation activation);

  /// widths = {input, hidden..., output}. Glorot-uniform weights, zero biases.
  static DenseNet glorot(const std::vector<std::size_t>& widths, Activation activation,
                         std::mt19937_64& rng);
  static DenseNet zeros(const std::vector<std::size_t>& widths, Activation activation);

  bool empty() const { return layers_.empty(); }
  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t depth() const { return layers_.size(); }
  Activation activation() const { return activation_; }

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  std::size_t parameter_count() const;
  /// Layer-major: weight (column-major) then bias, for each layer in order.
  void copy_parameters_to(std::span<double> out) const;
  void copy_parameters_from(std::span<const double> in);

 private:
  std::vector<Layer> layers_;
  Activation activation_ = Activation::Tanh;
};

/// Activations recorded by a forward pass. `inputs[l]` feeds layer l and
/// `pre[l]` is its affine output; the network output is `pre.back()`.
/// With a tangent, `d_inputs`/`d_pre` carry the directional derivative along
/// one input coordinate.
struct ForwardCache {
  std::vector<Matrix> inputs;
  std::vector<Matrix> pre;
  std::vector<Matrix> d_inputs;
  std::vector<Matrix> d_pre;

  const Matrix& output() const { return pre.back(); }
  bool has_tangent() const { return !d_pre.empty(); }
  const Matrix& tangent() const { return d_pre.back(); }
};

ForwardCache forward(const DenseNet& net, const Matrix& inputs);
/// Forward pass that also propagates d/d(input[tangent_index]).
ForwardCache forward_with_tangent(const DenseNet& net, const Matrix& inputs, std::size_t tangent_index);

/// Single-sample convenience.
Vector forward(const DenseNet& net, const Vector& x);

struct Gradients {
  std::vector<Layer> layers;  // same shapes as the network
  Matrix inputs;              // dL/d(inputs), input_dim x batch
};

/// Reverse pass. `upstream` is dL/d(output); `tangent_upstream`, when given,
/// is dL/d(tangent output) and requires a cache from forward_with_tangent.
Gradients backward(const DenseNet& net, const ForwardCache& cache, const Matrix& upstream,
                   const Matrix* tangent_upstream = nullptr);

/// Exact d(output 0)/d(x[t_index]) via reverse-mode input differentiation.
double grad_t(const DenseNet& net, const Vector& x, std::size_t t_index);

/// Flattens layer-shaped gradients in the same order as copy_parameters_to.
void copy_layers_to(const std::vector<Layer>& layers, std::span<double> out);

// Degree-2 polynomial dictionary [1 | z | z_a z_b (a<b, lexicographic) | z_i^2].

std::size_t poly_feature_count(std::size_t n);
Vector poly_features(std::span<const double> z);
/// Gradient of coeffs . poly_features(z) with respect to z.
Vector poly_gradient(const Vector& coeffs, std::span<const double> z);

/// Zeroes every nonzero entry with |c| < tol. Returns the number zeroed.
std::size_t hard_threshold(std::span<double> coeffs, double tol = 1e-4);

}  // namespace methanet::net
