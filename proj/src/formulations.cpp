#include "methanet/formulations.hpp"

#include <fstream>
#include <istream>
#include <json.hpp>
#include <ostream>

#include "methanet/csv.hpp"
#include "methanet/error.hpp"

namespace methanet::model {

ModelKind parse_model_kind(std::string_view name) {
  if (name == "forward") return ModelKind::Forward;
  if (name == "reverse") return ModelKind::Reverse;
  if (name == "poly") return ModelKind::Poly;
  if (name == "rnn_mod" || name == "rnn-mod") return ModelKind::RnnMod;
  if (name == "nn") return ModelKind::NnBaseline;
  throw ValidationError("unknown model kind '" + std::string(name) + "' (forward|reverse|poly|rnn_mod|nn)");
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Forward: return "forward";
    case ModelKind::Reverse: return "reverse";
    case ModelKind::Poly: return "poly";
    case ModelKind::RnnMod: return "rnn_mod";
    case ModelKind::NnBaseline: return "nn";
  }
  return "reverse";
}

std::size_t u_hidden_layers(ModelKind kind) {
  switch (kind) {
    case ModelKind::Reverse: return 2;
    case ModelKind::NnBaseline: return kNnHiddenLayers;
    default: return 3;
  }
}

namespace {

std::vector<std::size_t> widths(std::size_t in, std::size_t hidden, std::size_t width, std::size_t out) {
  std::vector<std::size_t> w{in};
  w.insert(w.end(), hidden, width);
  w.push_back(out);
  return w;
}

bool has_time_derivative(ModelKind kind) { return kind == ModelKind::Forward || kind == ModelKind::Poly; }

std::size_t phi_input_dim(const ModelParams& p) {
  return p.kind == ModelKind::RnnMod ? 1 : 1 + p.layout.atm_count;
}

void check_inputs(const ModelParams& p, const Matrix& inputs) {
  if (static_cast<std::size_t>(inputs.rows()) != p.layout.input_dim()) {
    throw ShapeError("model expects " + std::to_string(p.layout.input_dim()) + " input features, got " +
                     std::to_string(inputs.rows()));
  }
}

void check_atm(const ModelParams& p, const Matrix& inputs, const Matrix& atm) {
  check_inputs(p, inputs);
  if (atm.cols() != inputs.cols()) throw ShapeError("x_atm batch size differs from inputs");
  if (p.kind == ModelKind::Poly) {
    const std::size_t n = 1 + static_cast<std::size_t>(atm.rows());
    if (static_cast<std::size_t>(p.poly_coeffs.size()) != net::poly_feature_count(n)) {
      throw ShapeError("dictionary has " + std::to_string(p.poly_coeffs.size()) + " coefficients, [u, x_atm] needs " +
                       std::to_string(net::poly_feature_count(n)));
    }
  } else if (static_cast<std::size_t>(atm.rows()) + 1 != p.phi_net.input_dim()) {
    throw ShapeError("constraint network expects " + std::to_string(p.phi_net.input_dim()) +
                     " inputs, [u, x_atm] has " + std::to_string(atm.rows() + 1));
  }
}

Matrix stack_u_atm(const Vector& u, const Matrix& atm) {
  Matrix y(atm.rows() + 1, u.size());
  y.row(0) = u.transpose();
  y.bottomRows(atm.rows()) = atm;
  return y;
}

Vector poly_eval(const Vector& coeffs, const Matrix& z) {
  Vector out(z.cols());
  std::vector<double> col(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index b = 0; b < z.cols(); ++b) {
    for (Eigen::Index r = 0; r < z.rows(); ++r) col[static_cast<std::size_t>(r)] = z(r, b);
    out(b) = coeffs.dot(net::poly_features(col));
  }
  return out;
}

}  // namespace

ModelParams ModelParams::init(ModelKind kind, InputLayout layout, const Architecture& arch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.kind = kind;
  p.layout = layout;
  const std::size_t in = layout.input_dim();
  switch (kind) {
    case ModelKind::NnBaseline:
      p.u_net = net::DenseNet::glorot(widths(in, kNnHiddenLayers, arch.nn_width, 2), arch.activation, rng);
      break;
    case ModelKind::Poly:
      p.u_net = net::DenseNet::glorot(widths(in, u_hidden_layers(kind), arch.u_width, 1), arch.activation, rng);
      p.poly_coeffs = Vector::Zero(static_cast<Eigen::Index>(net::poly_feature_count(1 + layout.atm_count)));
      break;
    default:
      p.u_net = net::DenseNet::glorot(widths(in, u_hidden_layers(kind), arch.u_width, 1), arch.activation, rng);
      p.phi_net = net::DenseNet::glorot(widths(phi_input_dim(p), kPhiHiddenLayers, arch.phi_width, 1),
                                        arch.activation, rng);
  }
  return p;
}

std::size_t ModelParams::constraint_parameter_count() const {
  return phi_net.parameter_count() + static_cast<std::size_t>(poly_coeffs.size());
}

std::size_t ModelParams::parameter_count() const { return u_net.parameter_count() + constraint_parameter_count(); }

Vector ModelParams::flatten() const {
  Vector flat(static_cast<Eigen::Index>(parameter_count()));
  std::span<double> all(flat.data(), static_cast<std::size_t>(flat.size()));
  const std::size_t nu = u_net.parameter_count();
  u_net.copy_parameters_to(all.subspan(0, nu));
  const std::size_t np = phi_net.parameter_count();
  if (np) phi_net.copy_parameters_to(all.subspan(nu, np));
  std::copy(poly_coeffs.data(), poly_coeffs.data() + poly_coeffs.size(), all.begin() + static_cast<std::ptrdiff_t>(nu + np));
  return flat;
}

void ModelParams::assign(const Vector& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count()) throw ShapeError("flat parameter vector has wrong length");
  std::span<const double> all(flat.data(), static_cast<std::size_t>(flat.size()));
  const std::size_t nu = u_net.parameter_count();
  u_net.copy_parameters_from(all.subspan(0, nu));
  const std::size_t np = phi_net.parameter_count();
  if (np) phi_net.copy_parameters_from(all.subspan(nu, np));
  std::copy(all.begin() + static_cast<std::ptrdiff_t>(nu + np), all.end(), poly_coeffs.data());
}

Matrix atm_rows(const ModelParams& params, const Matrix& inputs) {
  check_inputs(params, inputs);
  return inputs.middleRows(static_cast<Eigen::Index>(params.layout.dil_count),
                           static_cast<Eigen::Index>(params.layout.atm_count));
}

JointOutput eval_forward(const ModelParams& params, const Matrix& inputs, const Matrix& atm) {
  check_atm(params, inputs, atm);
  const auto cache = net::forward_with_tangent(params.u_net, inputs, params.layout.time_index());
  JointOutput out;
  out.u_hat = cache.output().row(0).transpose();
  out.grad_t_u = cache.tangent().row(0).transpose();
  const Vector phi = net::forward(params.phi_net, stack_u_atm(out.u_hat, atm)).output().row(0).transpose();
  out.q_hat = *out.grad_t_u + phi;
  return out;
}

JointOutput eval_reverse(const ModelParams& params, const Matrix& inputs, const Matrix& atm) {
  check_atm(params, inputs, atm);
  JointOutput out;
  out.u_hat = net::forward(params.u_net, inputs).output().row(0).transpose();
  out.q_hat = net::forward(params.phi_net, stack_u_atm(out.u_hat, atm)).output().row(0).transpose();
  return out;
}

JointOutput eval_poly(const ModelParams& params, const Matrix& inputs, const Matrix& atm) {
  check_atm(params, inputs, atm);
  const auto cache = net::forward_with_tangent(params.u_net, inputs, params.layout.time_index());
  JointOutput out;
  out.u_hat = cache.output().row(0).transpose();
  out.grad_t_u = cache.tangent().row(0).transpose();
  out.q_hat = *out.grad_t_u + poly_eval(params.poly_coeffs, stack_u_atm(out.u_hat, atm));
  return out;
}

JointOutput eval_rnn_mod(const ModelParams& params, const Matrix& inputs) {
  check_inputs(params, inputs);
  if (params.phi_net.input_dim() != 1) throw ShapeError("RNN_mod constraint network must take exactly one input");
  JointOutput out;
  out.u_hat = net::forward(params.u_net, inputs).output().row(0).transpose();
  out.q_hat = net::forward(params.phi_net, Matrix(out.u_hat.transpose())).output().row(0).transpose();
  return out;
}

JointOutput eval_nn_baseline(const ModelParams& params, const Matrix& inputs) {
  check_inputs(params, inputs);
  if (params.u_net.output_dim() != 2) {
    throw ShapeError("NN baseline must have 2 outputs, has " + std::to_string(params.u_net.output_dim()));
  }
  const Matrix y = net::forward(params.u_net, inputs).output();
  return JointOutput{y.row(0).transpose(), y.row(1).transpose(), std::nullopt};
}

JointOutput evaluate(const ModelParams& params, const Matrix& inputs) {
  switch (params.kind) {
    case ModelKind::Forward: return eval_forward(params, inputs, atm_rows(params, inputs));
    case ModelKind::Reverse: return eval_reverse(params, inputs, atm_rows(params, inputs));
    case ModelKind::Poly: return eval_poly(params, inputs, atm_rows(params, inputs));
    case ModelKind::RnnMod: return eval_rnn_mod(params, inputs);
    case ModelKind::NnBaseline: return eval_nn_baseline(params, inputs);
  }
  throw ValidationError("unknown model kind");
}

ValueAndGradient value_and_gradient(const ModelParams& params, const Matrix& inputs,
                                    const std::function<Upstream(const JointOutput&)>& loss_grad) {
  check_inputs(params, inputs);
  const Eigen::Index batch = inputs.cols();
  ValueAndGradient vg;
  vg.gradient.resize(static_cast<Eigen::Index>(params.parameter_count()));
  std::span<double> all(vg.gradient.data(), static_cast<std::size_t>(vg.gradient.size()));
  const std::size_t nu = params.u_net.parameter_count();
  auto upstream = [&](const JointOutput& out) {
    Upstream up = loss_grad(out);
    if (up.d_u.size() != batch || up.d_q.size() != batch) throw ShapeError("upstream gradients must match batch size");
    return up;
  };

  if (params.kind == ModelKind::NnBaseline) {
    if (params.u_net.output_dim() != 2) throw ShapeError("NN baseline must have 2 outputs");
    const auto cache = net::forward(params.u_net, inputs);
    vg.output = JointOutput{cache.output().row(0).transpose(), cache.output().row(1).transpose(), std::nullopt};
    const Upstream up = upstream(vg.output);
    Matrix g(2, batch);
    g.row(0) = up.d_u.transpose();
    g.row(1) = up.d_q.transpose();
    net::copy_layers_to(net::backward(params.u_net, cache, g).layers, all);
    return vg;
  }

  const bool tangent = has_time_derivative(params.kind);
  const auto ucache = tangent ? net::forward_with_tangent(params.u_net, inputs, params.layout.time_index())
                              : net::forward(params.u_net, inputs);
  vg.output.u_hat = ucache.output().row(0).transpose();
  if (tangent) vg.output.grad_t_u = ucache.tangent().row(0).transpose();
  const Vector& u = vg.output.u_hat;

  if (params.kind == ModelKind::Poly) {
    const Matrix atm = atm_rows(params, inputs);
    check_atm(params, inputs, atm);
    const Matrix z = stack_u_atm(u, atm);
    vg.output.q_hat = *vg.output.grad_t_u + poly_eval(params.poly_coeffs, z);
    const Upstream up = upstream(vg.output);
    Matrix g_u = up.d_u.transpose();
    Vector g_coeffs = Vector::Zero(params.poly_coeffs.size());
    std::vector<double> col(static_cast<std::size_t>(z.rows()));
    for (Eigen::Index b = 0; b < batch; ++b) {
      for (Eigen::Index r = 0; r < z.rows(); ++r) col[static_cast<std::size_t>(r)] = z(r, b);
      g_coeffs += up.d_q(b) * net::poly_features(col);
      g_u(0, b) += up.d_q(b) * net::poly_gradient(params.poly_coeffs, col)(0);
    }
    std::copy(g_coeffs.data(), g_coeffs.data() + g_coeffs.size(), all.begin() + static_cast<std::ptrdiff_t>(nu));
    const Matrix g_dt = up.d_q.transpose();
    net::copy_layers_to(net::backward(params.u_net, ucache, g_u, &g_dt).layers, all.subspan(0, nu));
    return vg;
  }

  Matrix y;
  if (params.kind == ModelKind::RnnMod) {
    if (params.phi_net.input_dim() != 1) throw ShapeError("RNN_mod constraint network must take exactly one input");
    y = u.transpose();
  } else {
    const Matrix atm = atm_rows(params, inputs);
    check_atm(params, inputs, atm);
    y = stack_u_atm(u, atm);
  }
  const auto pcache = net::forward(params.phi_net, y);
  vg.output.q_hat = pcache.output().row(0).transpose();
  if (tangent) vg.output.q_hat += *vg.output.grad_t_u;
  const Upstream up = upstream(vg.output);
  const net::Gradients pg = net::backward(params.phi_net, pcache, Matrix(up.d_q.transpose()));
  net::copy_layers_to(pg.layers, all.subspan(nu, params.phi_net.parameter_count()));
  // The constraint branch reads u_hat, so its input gradient flows back into the u network.
  const Matrix g_u = up.d_u.transpose() + pg.inputs.row(0);
  if (tangent) {
    const Matrix g_dt = up.d_q.transpose();
    net::copy_layers_to(net::backward(params.u_net, ucache, g_u, &g_dt).layers, all.subspan(0, nu));
  } else {
    net::copy_layers_to(net::backward(params.u_net, ucache, g_u).layers, all.subspan(0, nu));
  }
  return vg;
}

Vector backprop(const ModelParams& params, const Matrix& inputs, const Vector& d_u, const Vector& d_q) {
  return value_and_gradient(params, inputs, [&](const JointOutput&) { return Upstream{d_u, d_q}; }).gradient;
}

Vector emissions_with_measured(const ModelParams& params, const Matrix& inputs, const Vector& measured_u) {
  check_inputs(params, inputs);
  if (measured_u.size() != inputs.cols()) throw ShapeError("measured series length differs from input rows");
  switch (params.kind) {
    case ModelKind::Reverse:
      return net::forward(params.phi_net, stack_u_atm(measured_u, atm_rows(params, inputs))).output().row(0).transpose();
    case ModelKind::RnnMod:
      return net::forward(params.phi_net, Matrix(measured_u.transpose())).output().row(0).transpose();
    case ModelKind::Forward: {
      const Vector dt = net::forward_with_tangent(params.u_net, inputs, params.layout.time_index()).tangent().row(0).transpose();
      return dt + net::forward(params.phi_net, stack_u_atm(measured_u, atm_rows(params, inputs))).output().row(0).transpose();
    }
    case ModelKind::Poly: {
      const Vector dt = net::forward_with_tangent(params.u_net, inputs, params.layout.time_index()).tangent().row(0).transpose();
      return dt + poly_eval(params.poly_coeffs, stack_u_atm(measured_u, atm_rows(params, inputs)));
    }
    case ModelKind::NnBaseline:
      throw ValidationError("the NN baseline has no constraint branch to substitute measured concentrations into");
  }
  throw ValidationError("unknown model kind");
}

Matrix inputs_of(const ingest::Dataset& data) { return data.features.transpose(); }

Vector estimate_emissions_measured(const ModelArtifact& artifact, const ingest::Dataset& data,
                                   const Vector& measured_u) {
  const auto qc = artifact.scaler.index(ingest::kEmissionColumn);
  if (!qc) throw ValidationError("model artifact has no emission scaler column (scaler missing)");
  if (data.feature_names != artifact.feature_names) {
    throw ValidationError("dataset features do not match the model's training features");
  }
  const Vector q = emissions_with_measured(artifact.params, inputs_of(data), measured_u);
  return q.unaryExpr([&](double v) { return artifact.scaler.inverse(*qc, v); });
}

Vector estimate_emissions_measured(const ModelArtifact& artifact, const ingest::Dataset& data) {
  return estimate_emissions_measured(artifact, data, data.concentration);
}

namespace {

using nlohmann::json;

json net_to_json(const net::DenseNet& n) {
  json layers = json::array();
  for (const auto& l : n.layers()) {
    layers.push_back({{"rows", l.weight.rows()},
                      {"cols", l.weight.cols()},
                      {"weight", std::vector<double>(l.weight.data(), l.weight.data() + l.weight.size())},
                      {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  return layers;
}

net::DenseNet net_from_json(const json& j, net::Activation act) {
  std::vector<net::Layer> layers;
  for (const auto& l : j) {
    const auto rows = l.at("rows").get<Eigen::Index>();
    const auto cols = l.at("cols").get<Eigen::Index>();
    const auto w = l.at("weight").get<std::vector<double>>();
    const auto b = l.at("bias").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != rows * cols || static_cast<Eigen::Index>(b.size()) != rows) {
      throw FormatError("model artifact layer has inconsistent shape");
    }
    layers.push_back(net::Layer{Eigen::Map<const Matrix>(w.data(), rows, cols),
                                Eigen::Map<const Vector>(b.data(), rows)});
  }
  return net::DenseNet(std::move(layers), act);
}

}  // namespace

void save_artifact(std::ostream& out, const ModelArtifact& a) {
  json scaler = json::array();
  for (std::size_t c = 0; c < a.scaler.size(); ++c) {
    scaler.push_back({{"name", a.scaler.names()[c]}, {"min", a.scaler.min(c)}, {"max", a.scaler.max(c)}});
  }
  const json j = {
      {"format", "methanet-model"},
      {"version", 1},
      {"kind", to_string(a.params.kind)},
      {"activation", net::to_string(a.params.u_net.activation())},
      {"layout", {{"dil", a.params.layout.dil_count}, {"atm", a.params.layout.atm_count}}},
      {"seed", a.seed},
      {"feature_names", a.feature_names},
      {"u_net", net_to_json(a.params.u_net)},
      {"phi_net", net_to_json(a.params.phi_net)},
      {"poly_coeffs", std::vector<double>(a.params.poly_coeffs.data(), a.params.poly_coeffs.data() + a.params.poly_coeffs.size())},
      {"scaler", scaler},
  };
  out << j.dump(1) << '\n';
}

ModelArtifact load_artifact(std::istream& in) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(std::string("model artifact is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format") != "methanet-model") throw FormatError("not a methanet model artifact");
    if (j.at("version") != 1) throw FormatError("unsupported model artifact version");
    ModelArtifact a;
    const auto act = net::parse_activation(j.at("activation").get<std::string>());
    a.params.kind = parse_model_kind(j.at("kind").get<std::string>());
    a.params.layout = InputLayout{j.at("layout").at("dil").get<std::size_t>(), j.at("layout").at("atm").get<std::size_t>()};
    a.seed = j.at("seed").get<std::uint64_t>();
    a.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    a.params.u_net = net_from_json(j.at("u_net"), act);
    a.params.phi_net = net_from_json(j.at("phi_net"), act);
    const auto coeffs = j.at("poly_coeffs").get<std::vector<double>>();
    a.params.poly_coeffs = Eigen::Map<const Vector>(coeffs.data(), static_cast<Eigen::Index>(coeffs.size()));
    std::vector<std::string> names;
    std::vector<double> lo, hi;
    for (const auto& s : j.at("scaler")) {
      names.push_back(s.at("name").get<std::string>());
      lo.push_back(s.at("min").get<double>());
      hi.push_back(s.at("max").get<double>());
    }
    a.scaler = ingest::Scaler(std::move(names), std::move(lo), std::move(hi));
    return a;
  } catch (const json::exception& e) {
    throw FormatError(std::string("model artifact is missing fields: ") + e.what());
  }
}

void save_artifact(const std::filesystem::path& path, const ModelArtifact& artifact) {
  auto out = csv::open_output(path);
  save_artifact(out, artifact);
}

ModelArtifact load_artifact(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  return load_artifact(in);
}

}  // namespace methanet::model
