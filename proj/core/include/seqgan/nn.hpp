#pragma once

#include "seqgan/container.hpp"
#include "seqgan/types.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace seqgan::nn {

enum class Mode { Train, Eval };
enum class Head { Identity, Sigmoid, Softmax };
enum class Loss { BinaryCrossEntropy, CategoricalCrossEntropy };

/// Probabilities are clamped to [kProbabilityClamp, 1 - kProbabilityClamp]
/// inside loss values so cross-entropy stays finite.
inline constexpr double kProbabilityClamp = 1e-7;

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out
  Matrix grad_weights;
  Vector grad_bias;
  Matrix input;  // cached by forward

  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out);
  std::size_t in_dim() const noexcept { return static_cast<std::size_t>(weights.cols()); }
  std::size_t out_dim() const noexcept { return static_cast<std::size_t>(weights.rows()); }
};

struct BatchNormLayer {
  Vector gamma;
  Vector beta;
  Vector running_mean;
  Vector running_var;
  double momentum = 0.9;
  double epsilon = 1e-5;
  Vector grad_gamma;
  Vector grad_beta;
  // forward cache
  Matrix normalized;
  Vector inv_std;
  Mode cached_mode = Mode::Train;

  BatchNormLayer() = default;
  explicit BatchNormLayer(std::size_t dim);
  std::size_t dim() const noexcept { return static_cast<std::size_t>(gamma.size()); }
};

struct ReluLayer {
  Matrix mask;  // 1 where the input was positive
};

using Layer = std::variant<DenseLayer, BatchNormLayer, ReluLayer>;

struct NetworkSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  std::size_t output_dim = 0;
  Head head = Head::Identity;
  /// Insert a batch-normalization layer after every hidden ReLU.
  bool batchnorm = true;
};

/// Trainable view of one parameter tensor and its gradient.
struct BackwardOptions {
  /// Compute parameter gradients (off for a frozen network).
  bool param_grads = true;
  /// Compute dL/d(input); an empty matrix is returned when off.
  bool input_grad = true;
};

struct ParamBlock {
  std::string name;
  std::span<double> value;
  std::span<double> grad;
};

/// Feed-forward stack of dense, ReLU and batch-norm layers with an output head.
class Network {
 public:
  Network() = default;
  Network(std::vector<Layer> layers, Head head);

  /// Dense -> ReLU [-> BatchNorm] per hidden width, then Dense -> head.
  /// Weights of ReLU layers ~ N(0, 2/fan_in), head weights ~ N(0, 1/fan_in),
  /// biases zero.
  static Network build(const NetworkSpec& spec, std::uint64_t seed);

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t output_dim() const noexcept { return output_dim_; }
  Head head() const noexcept { return head_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& layers() noexcept { return layers_; }

  /// Forward pass caching what backward needs. Train mode uses batch
  /// statistics in batch-norm layers and updates their running averages.
  Matrix forward(const Matrix& batch, Mode mode);

  /// Eval-mode forward without touching caches; safe to call concurrently.
  Matrix infer(const Matrix& batch) const;

  /// Backpropagates dL/d(head output) through the last forward pass.
  /// Overwrites every parameter gradient and returns dL/d(input).
  Matrix backward(const Matrix& grad_output, BackwardOptions options = {});

  /// As backward(), starting from dL/d(pre-head logits).
  Matrix backward_from_logits(const Matrix& grad_logits, BackwardOptions options = {});

  /// Loss of the last forward output against `targets`, with the fused
  /// head/loss gradient (p - y) / B backpropagated. Requires a Sigmoid head
  /// for binary CE and a Softmax head for categorical CE.
  double backward_loss(const Matrix& targets, Loss loss, Matrix* grad_input = nullptr);

  std::vector<ParamBlock> parameters();
  std::size_t parameter_count() const;

  /// Arrays are named "<prefix>L<i>.<tensor>"; batch-norm running
  /// statistics are included.
  void write_to(Container& container, const std::string& prefix = {}) const;
  static Network read_from(const Container& container, const std::string& prefix = {});

  bool operator==(const Network& other) const;

 private:
  void check_chain();

  std::vector<Layer> layers_;
  Head head_ = Head::Identity;
  std::size_t input_dim_ = 0;
  std::size_t output_dim_ = 0;
  Matrix output_;  // cached head output
};

/// Mean over the batch of the clamped cross-entropy.
double loss_value(const Matrix& probabilities, const Matrix& targets, Loss loss);

Matrix apply_head(const Matrix& logits, Head head);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// ADAM moments for one network's parameter list.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(const AdamConfig& config) : config_(config) {}

  const AdamConfig& config() const noexcept { return config_; }
  std::uint64_t steps() const noexcept { return t_; }
  const std::vector<std::vector<double>>& first_moments() const noexcept { return m_; }
  const std::vector<std::vector<double>>& second_moments() const noexcept { return v_; }

  /// One bias-corrected update of every block; moments are created on first use.
  void step(const std::vector<ParamBlock>& params);

  void write_to(Container& container, const std::string& prefix) const;
  static AdamState read_from(const Container& container, const std::string& prefix);

 private:
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::uint64_t t_ = 0;
};

/// Single-network checkpoint: network (+ optional optimizer) and free-form metadata.
void save_checkpoint(const std::filesystem::path& path, const Network& net, const AdamState* optimizer = nullptr,
                     const nlohmann::json& meta = nlohmann::json::object());
Network load_checkpoint(const std::filesystem::path& path, AdamState* optimizer = nullptr,
                        nlohmann::json* meta = nullptr);

}  // namespace seqgan::nn
