#include "root_opt/noise_model.hpp"

#include <cmath>
#include <string>

#include "root_opt/error.hpp"

namespace root_opt {

void write_input_column(Eigen::Ref<Eigen::VectorXd> column, const Eigen::VectorXd& xt, double t_norm,
                        const std::optional<Condition>& condition) {
  const InputLayout layout{static_cast<int>(xt.size())};
  if (column.size() != layout.width()) {
    throw Error(ErrorCode::kShapeMismatch, "input column has the wrong width");
  }
  column.head(xt.size()) = xt;
  if (condition) {
    column[layout.source_row()] = condition->source_score;
    column[layout.target_row()] = condition->target_score;
    column[layout.null_mask_row()] = 0.0;
  } else {
    column[layout.source_row()] = 0.0;
    column[layout.target_row()] = 0.0;
    column[layout.null_mask_row()] = 1.0;
  }
  column[layout.time_row()] = t_norm;
}

Eigen::VectorXd make_input(const Eigen::VectorXd& xt, double t_norm,
                           const std::optional<Condition>& condition) {
  Eigen::VectorXd column(xt.size() + kConditionWidth);
  write_input_column(column, xt, t_norm, condition);
  return column;
}

NetworkParameters NetworkParameters::zeros_like() const {
  NetworkParameters out;
  out.layers.reserve(layers.size());
  for (const auto& l : layers) {
    out.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                          Eigen::VectorXd::Zero(l.bias.size())});
  }
  return out;
}

bool NetworkParameters::same_shape(const NetworkParameters& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].weight.rows() != other.layers[i].weight.rows() ||
        layers[i].weight.cols() != other.layers[i].weight.cols() ||
        layers[i].bias.size() != other.layers[i].bias.size()) {
      return false;
    }
  }
  return true;
}

double NetworkParameters::squared_norm() const {
  double s = 0.0;
  for (const auto& l : layers) s += l.weight.squaredNorm() + l.bias.squaredNorm();
  return s;
}

void NetworkParameters::scale(double factor) {
  for (auto& l : layers) {
    l.weight *= factor;
    l.bias *= factor;
  }
}

Eigen::Index NetworkParameters::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

double swish(double z) { return z / (1.0 + std::exp(-z)); }

double swish_derivative(double z) {
  const double s = 1.0 / (1.0 + std::exp(-z));
  return s * (1.0 + z * (1.0 - s));
}

namespace {

std::vector<int> layer_widths(int design_dim, int hidden_width) {
  return {design_dim + kConditionWidth, hidden_width, hidden_width, hidden_width, design_dim};
}

void check_dims(int design_dim, int hidden_width) {
  if (design_dim < 1 || hidden_width < 1) {
    throw Error(ErrorCode::kInvalidDimension, "network needs design_dim >= 1 and hidden_width >= 1");
  }
}

Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& z) { return 1.0 / (1.0 + (-z).exp()); }

}  // namespace

NoiseNetwork NoiseNetwork::initialize(int design_dim, int hidden_width, RngStream& rng) {
  check_dims(design_dim, hidden_width);
  const auto widths = layer_widths(design_dim, hidden_width);
  NetworkParameters params;
  for (int l = 0; l < kLayerCount; ++l) {
    const int fan_in = widths[l];
    const int fan_out = widths[l + 1];
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    if (l == kLayerCount - 1) bound *= 0.01;
    DenseLayer layer{Eigen::MatrixXd(fan_out, fan_in), Eigen::VectorXd::Zero(fan_out)};
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = rng.uniform(-bound, bound);
    }
    params.layers.push_back(std::move(layer));
  }
  return NoiseNetwork(design_dim, std::move(params));
}

NoiseNetwork NoiseNetwork::zeros(int design_dim, int hidden_width) {
  check_dims(design_dim, hidden_width);
  const auto widths = layer_widths(design_dim, hidden_width);
  NetworkParameters params;
  for (int l = 0; l < kLayerCount; ++l) {
    params.layers.push_back(
        {Eigen::MatrixXd::Zero(widths[l + 1], widths[l]), Eigen::VectorXd::Zero(widths[l + 1])});
  }
  return NoiseNetwork(design_dim, std::move(params));
}

NoiseNetwork NoiseNetwork::from_parameters(int design_dim, NetworkParameters parameters) {
  if (parameters.layers.size() != kLayerCount) {
    throw Error(ErrorCode::kShapeMismatch, "network needs exactly 4 dense layers");
  }
  const int hidden = static_cast<int>(parameters.layers.front().weight.rows());
  check_dims(design_dim, hidden);
  const auto widths = layer_widths(design_dim, hidden);
  for (int l = 0; l < kLayerCount; ++l) {
    const auto& layer = parameters.layers[static_cast<std::size_t>(l)];
    if (layer.weight.cols() != widths[l] || layer.weight.rows() != widths[l + 1] ||
        layer.bias.size() != widths[l + 1]) {
      throw Error(ErrorCode::kShapeMismatch, "layer " + std::to_string(l) + " has the wrong shape");
    }
  }
  return NoiseNetwork(design_dim, std::move(parameters));
}

Eigen::VectorXd NoiseNetwork::forward(const Eigen::VectorXd& xt, double t_norm,
                                      const std::optional<Condition>& condition) const {
  if (xt.size() != design_dim_) {
    throw Error(ErrorCode::kDimensionMismatch, "x_t has dimension " + std::to_string(xt.size()));
  }
  return predict(make_input(xt, t_norm, condition)).col(0);
}

Eigen::MatrixXd NoiseNetwork::predict(const Eigen::MatrixXd& inputs) const {
  if (inputs.rows() != layout().width()) {
    throw Error(ErrorCode::kDimensionMismatch, "network input has " + std::to_string(inputs.rows()) +
                                                   " rows, expected " + std::to_string(layout().width()));
  }
  if (!inputs.allFinite()) throw Error(ErrorCode::kNonFiniteInput, "network input is not finite");
  Eigen::MatrixXd h = inputs;
  for (std::size_t l = 0; l < params_.layers.size(); ++l) {
    const auto& layer = params_.layers[l];
    Eigen::MatrixXd z = layer.weight * h;
    z.colwise() += layer.bias;
    if (l + 1 < params_.layers.size()) {
      h = (z.array() * sigmoid(z.array())).matrix();
    } else {
      h = std::move(z);
    }
  }
  return h;
}

LossAndGradients loss_and_gradients(const NoiseNetwork& net, const Eigen::MatrixXd& inputs,
                                    const Eigen::MatrixXd& targets) {
  const auto& layers = net.parameters().layers;
  if (inputs.cols() == 0) throw Error(ErrorCode::kInvalidArgument, "empty training batch");
  if (inputs.rows() != net.layout().width() || targets.rows() != net.design_dim() ||
      targets.cols() != inputs.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "batch shapes do not match the network");
  }
  const std::size_t L = layers.size();
  const double batch = static_cast<double>(inputs.cols());

  // activations[l] feeds layer l; sigmoids[l] caches sigmoid(z_l) for hidden layers.
  std::vector<Eigen::MatrixXd> activations(L);
  std::vector<Eigen::ArrayXXd> pre(L - 1);
  std::vector<Eigen::ArrayXXd> sig(L - 1);
  activations[0] = inputs;
  Eigen::MatrixXd output;
  for (std::size_t l = 0; l < L; ++l) {
    Eigen::MatrixXd z = layers[l].weight * activations[l];
    z.colwise() += layers[l].bias;
    if (l + 1 < L) {
      pre[l] = z.array();
      sig[l] = sigmoid(pre[l]);
      activations[l + 1] = (pre[l] * sig[l]).matrix();
    } else {
      output = std::move(z);
    }
  }

  const Eigen::MatrixXd diff = output - targets;
  LossAndGradients result;
  result.loss = diff.squaredNorm() / batch;
  if (!std::isfinite(result.loss)) {
    throw Error(ErrorCode::kNonFiniteLoss, "training loss is not finite; reduce the learning rate");
  }

  result.gradients.layers.resize(L);
  Eigen::MatrixXd delta = (2.0 / batch) * diff;
  for (std::size_t i = L; i-- > 0;) {
    auto& g = result.gradients.layers[i];
    g.weight.noalias() = delta * activations[i].transpose();
    g.bias = delta.rowwise().sum();
    if (i == 0) break;
    Eigen::MatrixXd upstream = layers[i].weight.transpose() * delta;
    const auto& s = sig[i - 1];
    delta = (upstream.array() * (s * (1.0 + pre[i - 1] * (1.0 - s)))).matrix();
  }
  return result;
}

AdamState AdamState::for_network(const NoiseNetwork& net) {
  AdamState state;
  state.first_moment = net.parameters().zeros_like();
  state.second_moment = net.parameters().zeros_like();
  return state;
}

namespace {

void adam_update(double* param, double* m, double* v, const double* g, Eigen::Index n, double b1,
                 double b2, double step_size, double bias2_sqrt, double eps) {
  for (Eigen::Index i = 0; i < n; ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
    param[i] -= step_size * m[i] / (std::sqrt(v[i]) / bias2_sqrt + eps);
  }
}

}  // namespace

void adam_step(NoiseNetwork& net, AdamState& state, const NetworkParameters& gradients,
               double learning_rate) {
  auto& params = net.parameters();
  if (!params.same_shape(gradients) || !params.same_shape(state.first_moment) ||
      !params.same_shape(state.second_moment)) {
    throw Error(ErrorCode::kShapeMismatch, "gradient or optimizer state shape does not match network");
  }
  state.step += 1;
  const double bias1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  // lr * m_hat / (sqrt(v_hat) + eps) with m_hat = m / bias1, v_hat = v / bias2.
  const double step_size = learning_rate / bias1;
  const double bias2_sqrt = std::sqrt(bias2);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& p = params.layers[l];
    auto& m = state.first_moment.layers[l];
    auto& v = state.second_moment.layers[l];
    const auto& g = gradients.layers[l];
    adam_update(p.weight.data(), m.weight.data(), v.weight.data(), g.weight.data(), p.weight.size(),
                state.beta1, state.beta2, step_size, bias2_sqrt, state.epsilon);
    adam_update(p.bias.data(), m.bias.data(), v.bias.data(), g.bias.data(), p.bias.size(), state.beta1,
                state.beta2, step_size, bias2_sqrt, state.epsilon);
  }
}

}  // namespace root_opt
