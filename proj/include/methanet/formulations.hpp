#pragma once

// Joint concentration/emission models built from DenseNet. Every model maps
// inputs x = [x_dil | x_atm | t] to a concentration estimate u_hat and an
// emission estimate q_hat, all in scaled units.
//
//   Forward : u = unet(x),  q = du/dt + phi([u, x_atm])
//   Reverse : u = unet(x),  q = phi([u, x_atm])          (unet one layer shallower)
//   Poly    : u = unet(x),  q = du/dt + c . P([u, x_atm])
//   RnnMod  : u = unet(x),  q = phi(u)
//   NN      : [u, q] = net(x), no constraint coupling

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>

#include "methanet/ingest.hpp"
#include "methanet/netcore.hpp"

namespace methanet::model {

using net::Matrix;
using net::Vector;

enum class ModelKind { Forward, Reverse, Poly, RnnMod, NnBaseline };

ModelKind parse_model_kind(std::string_view name);
std::string to_string(ModelKind kind);
inline constexpr ModelKind kAllKinds[] = {ModelKind::Forward, ModelKind::Reverse, ModelKind::Poly,
                                          ModelKind::RnnMod, ModelKind::NnBaseline};

struct Architecture {
  std::size_t u_width = 500;
  std::size_t phi_width = 200;
  std::size_t nn_width = 500;
  net::Activation activation = net::Activation::Tanh;
};

/// Hidden-layer count of the concentration network for each kind.
std::size_t u_hidden_layers(ModelKind kind);
inline constexpr std::size_t kPhiHiddenLayers = 2;
inline constexpr std::size_t kNnHiddenLayers = 4;

/// Column layout of the input matrix.
struct InputLayout {
  std::size_t dil_count = 0;
  std::size_t atm_count = 0;

  std::size_t input_dim() const { return dil_count + atm_count + 1; }
  std::size_t time_index() const { return dil_count + atm_count; }
};

struct ModelParams {
  ModelKind kind = ModelKind::Reverse;
  InputLayout layout;
  net::DenseNet u_net;    // the joint 2-output network for NnBaseline
  net::DenseNet phi_net;  // empty for Poly and NnBaseline
  Vector poly_coeffs;     // Poly only

  static ModelParams init(ModelKind kind, InputLayout layout, const Architecture& arch, std::uint64_t seed);

  std::size_t parameter_count() const;
  /// Size of the trailing constraint-parameter block (phi net or dictionary).
  std::size_t constraint_parameter_count() const;
  /// Concentration parameters first, constraint parameters last.
  Vector flatten() const;
  void assign(const Vector& flat);
};

struct JointOutput {
  Vector u_hat;
  Vector q_hat;
  std::optional<Vector> grad_t_u;  // Forward and Poly
};

/// Extracts the x_atm rows of an input matrix (features x batch).
Matrix atm_rows(const ModelParams& params, const Matrix& inputs);

JointOutput eval_forward(const ModelParams& params, const Matrix& inputs, const Matrix& atm);
JointOutput eval_reverse(const ModelParams& params, const Matrix& inputs, const Matrix& atm);
JointOutput eval_poly(const ModelParams& params, const Matrix& inputs, const Matrix& atm);
JointOutput eval_rnn_mod(const ModelParams& params, const Matrix& inputs);
JointOutput eval_nn_baseline(const ModelParams& params, const Matrix& inputs);

/// Dispatches on params.kind; inputs are (features x batch).
JointOutput evaluate(const ModelParams& params, const Matrix& inputs);

/// Gradient of a scalar loss L with respect to all parameters, given
/// dL/du_hat and dL/dq_hat per sample. Returned in flatten() order.
Vector backprop(const ModelParams& params, const Matrix& inputs, const Vector& d_u, const Vector& d_q);

struct Upstream {
  Vector d_u;
  Vector d_q;
};

struct ValueAndGradient {
  JointOutput output;
  Vector gradient;  // flatten() order
};

/// One forward pass, then `loss_grad(output)` supplies dL/du_hat and dL/dq_hat
/// for the reverse pass.
ValueAndGradient value_and_gradient(const ModelParams& params, const Matrix& inputs,
                                    const std::function<Upstream(const JointOutput&)>& loss_grad);

/// Scaled emission estimate with the measured concentration substituted for
/// u_hat in the constraint branch. Forward and Poly keep the model's du/dt.
Vector emissions_with_measured(const ModelParams& params, const Matrix& inputs, const Vector& measured_u);

/// A trained model plus the scaler of the dataset it was trained on.
struct ModelArtifact {
  ModelParams params;
  ingest::Scaler scaler;
  std::vector<std::string> feature_names;
  std::uint64_t seed = 0;
};

/// Physical-unit (tonnes/day) daily emissions from measured concentrations.
/// `data` must carry the artifact's scaler.
Vector estimate_emissions_measured(const ModelArtifact& artifact, const ingest::Dataset& data);

/// Same, with the concentration column replaced by `measured_u` (scaled).
Vector estimate_emissions_measured(const ModelArtifact& artifact, const ingest::Dataset& data,
                                   const Vector& measured_u);

/// Dataset features as a (features x rows) input matrix.
Matrix inputs_of(const ingest::Dataset& data);

// JSON artifact: kind tag, layer shapes, activation, parameters, scaler.
void save_artifact(std::ostream& out, const ModelArtifact& artifact);
ModelArtifact load_artifact(std::istream& in);
void save_artifact(const std::filesystem::path& path, const ModelArtifact& artifact);
ModelArtifact load_artifact(const std::filesystem::path& path);

}  // namespace methanet::model
