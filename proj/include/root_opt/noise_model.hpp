#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "root_opt/rng.hpp"

namespace root_opt {

// Score conditioning (normalized units): the source score y_T and the target
// score y_0. std::nullopt is the null token.
struct Condition {
  double source_score = 0.0;
  double target_score = 0.0;
};

// Network input column layout: [x_t (d) | y_T | y_0 | null_mask | t / T].
inline constexpr int kConditionWidth = 4;

struct InputLayout {
  int design_dim = 0;
  int width() const { return design_dim + kConditionWidth; }
  int source_row() const { return design_dim; }
  int target_row() const { return design_dim + 1; }
  int null_mask_row() const { return design_dim + 2; }
  int time_row() const { return design_dim + 3; }
};

// Fills one input column. t_norm is t / T in [0, 1].
void write_input_column(Eigen::Ref<Eigen::VectorXd> column, const Eigen::VectorXd& xt, double t_norm,
                        const std::optional<Condition>& condition);

Eigen::VectorXd make_input(const Eigen::VectorXd& xt, double t_norm,
                           const std::optional<Condition>& condition);

// Anything that maps assembled input columns ((d + 4) x B) to noise estimates (d x B).
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  virtual int design_dim() const = 0;
  virtual Eigen::MatrixXd predict(const Eigen::MatrixXd& inputs) const = 0;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

// Weights, gradients and Adam moments all share this shape.
struct NetworkParameters {
  std::vector<DenseLayer> layers;

  NetworkParameters zeros_like() const;
  bool same_shape(const NetworkParameters& other) const;
  double squared_norm() const;
  void scale(double factor);
  Eigen::Index parameter_count() const;
};

double swish(double z);
double swish_derivative(double z);

// Four dense layers (d + 4) -> H -> H -> H -> d, Swish on the hidden layers.
class NoiseNetwork final : public NoisePredictor {
 public:
  static constexpr int kDefaultHiddenWidth = 1024;
  static constexpr int kLayerCount = 4;

  // Hidden layers U(-1/sqrt(fan_in), 1/sqrt(fan_in)); output layer scaled by
  // 0.01; biases zero.
  static NoiseNetwork initialize(int design_dim, int hidden_width, RngStream& rng);
  static NoiseNetwork zeros(int design_dim, int hidden_width);
  static NoiseNetwork from_parameters(int design_dim, NetworkParameters parameters);

  int design_dim() const override { return design_dim_; }
  int hidden_width() const { return static_cast<int>(params_.layers.front().weight.rows()); }
  InputLayout layout() const { return InputLayout{design_dim_}; }

  Eigen::VectorXd forward(const Eigen::VectorXd& xt, double t_norm,
                          const std::optional<Condition>& condition) const;
  Eigen::MatrixXd predict(const Eigen::MatrixXd& inputs) const override;

  const NetworkParameters& parameters() const { return params_; }
  NetworkParameters& parameters() { return params_; }

 private:
  NoiseNetwork(int design_dim, NetworkParameters params)
      : design_dim_(design_dim), params_(std::move(params)) {}

  int design_dim_ = 0;
  NetworkParameters params_;
};

struct LossAndGradients {
  double loss = 0.0;
  NetworkParameters gradients;
};

// loss = mean over columns of |target - net(input)|^2, with exact gradients.
// Throws NonFiniteLoss when the loss is not finite.
LossAndGradients loss_and_gradients(const NoiseNetwork& net, const Eigen::MatrixXd& inputs,
                                    const Eigen::MatrixXd& targets);

struct AdamState {
  NetworkParameters first_moment;
  NetworkParameters second_moment;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_network(const NoiseNetwork& net);
};

// Bias-corrected Adam update. Throws ShapeMismatch.
void adam_step(NoiseNetwork& net, AdamState& state, const NetworkParameters& gradients,
               double learning_rate);

}  // namespace root_opt
