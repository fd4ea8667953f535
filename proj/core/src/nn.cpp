#include "seqgan/nn.hpp"

#include "seqgan/error.hpp"
#include "seqgan/random.hpp"

#include <algorithm>
#include <cmath>

namespace seqgan::nn {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string head_name(Head head) {
  switch (head) {
    case Head::Identity:
      return "identity";
    case Head::Sigmoid:
      return "sigmoid";
    case Head::Softmax:
      return "softmax";
  }
  return "identity";
}

Head head_from_name(const std::string& name) {
  if (name == "sigmoid") return Head::Sigmoid;
  if (name == "softmax") return Head::Softmax;
  if (name == "identity") return Head::Identity;
  throw IoError("checkpoint: unknown head '" + name + "'");
}

const char* layer_name(const Layer& layer) {
  return std::visit(overloaded{[](const DenseLayer&) { return "dense"; },
                               [](const BatchNormLayer&) { return "batchnorm"; },
                               [](const ReluLayer&) { return "relu"; }},
                    layer);
}

std::span<double> span_of(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<double> span_of(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

std::vector<double> copy_of(const Matrix& m) { return {m.data(), m.data() + m.size()}; }
std::vector<double> copy_of(const Vector& v) { return {v.data(), v.data() + v.size()}; }

void fill_from(Vector& v, const std::vector<double>& data) {
  if (static_cast<std::size_t>(v.size()) != data.size()) throw IoError("checkpoint: tensor size mismatch");
  std::copy(data.begin(), data.end(), v.data());
}

}  // namespace

DenseLayer::DenseLayer(std::size_t in, std::size_t out)
    : weights(Matrix::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in))),
      bias(Vector::Zero(static_cast<Eigen::Index>(out))),
      grad_weights(Matrix::Zero(weights.rows(), weights.cols())),
      grad_bias(Vector::Zero(bias.size())) {}

BatchNormLayer::BatchNormLayer(std::size_t dim)
    : gamma(Vector::Ones(static_cast<Eigen::Index>(dim))),
      beta(Vector::Zero(static_cast<Eigen::Index>(dim))),
      running_mean(Vector::Zero(static_cast<Eigen::Index>(dim))),
      running_var(Vector::Ones(static_cast<Eigen::Index>(dim))),
      grad_gamma(Vector::Zero(static_cast<Eigen::Index>(dim))),
      grad_beta(Vector::Zero(static_cast<Eigen::Index>(dim))) {}

Matrix apply_head(const Matrix& logits, Head head) {
  switch (head) {
    case Head::Identity:
      return logits;
    case Head::Sigmoid:
      // Split by sign so exp never overflows.
      return logits.unaryExpr([](double z) {
        if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
        const double e = std::exp(z);
        return e / (1.0 + e);
      });
    case Head::Softmax: {
      Matrix out(logits.rows(), logits.cols());
      for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double peak = logits.row(i).maxCoeff();
        out.row(i) = (logits.row(i).array() - peak).exp().matrix();
        out.row(i) /= out.row(i).sum();
      }
      return out;
    }
  }
  return logits;
}

Network::Network(std::vector<Layer> layers, Head head) : layers_(std::move(layers)), head_(head) { check_chain(); }

void Network::check_chain() {
  std::size_t width = 0;
  bool first = true;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto* dense = std::get_if<DenseLayer>(&layers_[i]);
    const auto* bn = std::get_if<BatchNormLayer>(&layers_[i]);
    if (dense) {
      if (!first && dense->in_dim() != width) {
        throw ShapeError("layer " + std::to_string(i) + ": dense input " + std::to_string(dense->in_dim()) +
                         " does not match previous width " + std::to_string(width));
      }
      if (first) input_dim_ = dense->in_dim();
      width = dense->out_dim();
      first = false;
    } else if (bn) {
      if (first) throw ShapeError("network must start with a dense layer");
      if (bn->dim() != width) throw ShapeError("layer " + std::to_string(i) + ": batch-norm width mismatch");
    } else if (first) {
      throw ShapeError("network must start with a dense layer");
    }
  }
  if (first) throw ShapeError("network has no dense layer");
  output_dim_ = width;
}

Network Network::build(const NetworkSpec& spec, std::uint64_t seed) {
  if (spec.input_dim == 0 || spec.output_dim == 0) throw ConfigError("network dimensions must be positive");
  Rng rng(derive_seed(seed, "nn.init"));
  std::vector<Layer> layers;
  std::size_t prev = spec.input_dim;

  auto init_dense = [&](std::size_t in, std::size_t out, double variance) {
    DenseLayer d(in, out);
    const double sd = std::sqrt(variance);
    for (Eigen::Index i = 0; i < d.weights.size(); ++i) d.weights.data()[i] = rng.normal(0.0, sd);
    return d;
  };

  for (auto width : spec.hidden) {
    if (width == 0) throw ConfigError("hidden width must be positive");
    layers.emplace_back(init_dense(prev, width, 2.0 / static_cast<double>(prev)));
    layers.emplace_back(ReluLayer{});
    if (spec.batchnorm) layers.emplace_back(BatchNormLayer(width));
    prev = width;
  }
  layers.emplace_back(init_dense(prev, spec.output_dim, 1.0 / static_cast<double>(prev)));
  return Network(std::move(layers), spec.head);
}

Matrix Network::forward(const Matrix& batch, Mode mode) {
  if (static_cast<std::size_t>(batch.cols()) != input_dim_) {
    throw ShapeError("network expects " + std::to_string(input_dim_) + " inputs, got " + std::to_string(batch.cols()));
  }
  if (!batch.allFinite()) throw NumericError("network input contains non-finite values");
  Matrix x = batch;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    std::visit(overloaded{
                   [&](DenseLayer& d) {
                     d.input = x;
                     x = x * d.weights.transpose();
                     x.rowwise() += d.bias.transpose();
                   },
                   [&](ReluLayer& r) {
                     r.mask = (x.array() > 0.0).cast<double>().matrix();
                     x = x.cwiseMax(0.0);
                   },
                   [&](BatchNormLayer& bn) {
                     bn.cached_mode = mode;
                     if (mode == Mode::Train) {
                       const double n = static_cast<double>(x.rows());
                       const Vector mean = x.colwise().mean().transpose();
                       Matrix centered = x.rowwise() - mean.transpose();
                       const Vector var = (centered.array().square().colwise().sum() / n).matrix().transpose();
                       bn.inv_std = (var.array() + bn.epsilon).rsqrt().matrix();
                       bn.normalized = centered * bn.inv_std.asDiagonal();
                       const Vector unbiased = x.rows() > 1 ? Vector(var * (n / (n - 1.0))) : var;
                       bn.running_mean = bn.momentum * bn.running_mean + (1.0 - bn.momentum) * mean;
                       bn.running_var = bn.momentum * bn.running_var + (1.0 - bn.momentum) * unbiased;
                     } else {
                       bn.inv_std = (bn.running_var.array() + bn.epsilon).rsqrt().matrix();
                       bn.normalized = (x.rowwise() - bn.running_mean.transpose()) * bn.inv_std.asDiagonal();
                     }
                     x = bn.normalized * bn.gamma.asDiagonal();
                     x.rowwise() += bn.beta.transpose();
                   }},
               layers_[i]);
    if (!x.allFinite()) {
      throw NumericError("layer " + std::to_string(i) + " (" + layer_name(layers_[i]) + ") produced non-finite values");
    }
  }
  output_ = apply_head(x, head_);
  return output_;
}

Matrix Network::infer(const Matrix& batch) const {
  if (static_cast<std::size_t>(batch.cols()) != input_dim_) {
    throw ShapeError("network expects " + std::to_string(input_dim_) + " inputs, got " + std::to_string(batch.cols()));
  }
  Matrix x = batch;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    std::visit(overloaded{[&](const DenseLayer& d) {
                            x = x * d.weights.transpose();
                            x.rowwise() += d.bias.transpose();
                          },
                          [&](const ReluLayer&) { x = x.cwiseMax(0.0); },
                          [&](const BatchNormLayer& bn) {
                            const Vector inv_std = (bn.running_var.array() + bn.epsilon).rsqrt().matrix();
                            x = (x.rowwise() - bn.running_mean.transpose()) * (inv_std.cwiseProduct(bn.gamma)).asDiagonal();
                            x.rowwise() += bn.beta.transpose();
                          }},
               layers_[i]);
    if (!x.allFinite()) {
      throw NumericError("layer " + std::to_string(i) + " (" + layer_name(layers_[i]) + ") produced non-finite values");
    }
  }
  return apply_head(x, head_);
}

Matrix Network::backward(const Matrix& grad_output, BackwardOptions options) {
  if (grad_output.rows() != output_.rows() || grad_output.cols() != output_.cols()) {
    throw ShapeError("backward: gradient shape does not match the last forward output");
  }
  Matrix g;
  switch (head_) {
    case Head::Identity:
      g = grad_output;
      break;
    case Head::Sigmoid:
      g = grad_output.cwiseProduct(output_.cwiseProduct((1.0 - output_.array()).matrix()));
      break;
    case Head::Softmax: {
      const Vector dot = grad_output.cwiseProduct(output_).rowwise().sum();
      g = output_.cwiseProduct((grad_output.colwise() - dot));
      break;
    }
  }
  return backward_from_logits(g, options);
}

Matrix Network::backward_from_logits(const Matrix& grad_logits, BackwardOptions options) {
  if (grad_logits.rows() != output_.rows() || grad_logits.cols() != output_.cols()) {
    throw ShapeError("backward: gradient shape does not match the last forward output");
  }
  Matrix g = grad_logits;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    std::visit(overloaded{[&](DenseLayer& d) {
                            if (options.param_grads) {
                              d.grad_weights.noalias() = g.transpose() * d.input;
                              d.grad_bias = g.colwise().sum().transpose();
                            }
                            if (i == 0 && !options.input_grad) {
                              g.resize(0, 0);
                            } else {
                              g = g * d.weights;
                            }
                          },
                          [&](ReluLayer& r) { g = g.cwiseProduct(r.mask); },
                          [&](BatchNormLayer& bn) {
                            if (options.param_grads) {
                              bn.grad_beta = g.colwise().sum().transpose();
                              bn.grad_gamma = g.cwiseProduct(bn.normalized).colwise().sum().transpose();
                            }
                            const Matrix dxhat = g * bn.gamma.asDiagonal();
                            if (bn.cached_mode == Mode::Train) {
                              const double n = static_cast<double>(g.rows());
                              const RowVector sum_dxhat = dxhat.colwise().sum();
                              const RowVector sum_dxhat_xhat = dxhat.cwiseProduct(bn.normalized).colwise().sum();
                              Matrix t = (dxhat * n).rowwise() - sum_dxhat;
                              t -= bn.normalized * sum_dxhat_xhat.asDiagonal();
                              g = t * (bn.inv_std / n).asDiagonal();
                            } else {
                              g = dxhat * bn.inv_std.asDiagonal();
                            }
                          }},
               layers_[i]);
  }
  return g;
}

double loss_value(const Matrix& probabilities, const Matrix& targets, Loss loss) {
  if (probabilities.rows() != targets.rows() || probabilities.cols() != targets.cols()) {
    throw ShapeError("loss: prediction and target shapes differ");
  }
  if (probabilities.rows() == 0) return 0.0;
  const auto p = probabilities.array().min(1.0 - kProbabilityClamp).max(kProbabilityClamp);
  const auto y = targets.array();
  double total = 0.0;
  if (loss == Loss::BinaryCrossEntropy) {
    total = -(y * p.log() + (1.0 - y) * (1.0 - p).log()).sum();
  } else {
    total = -(y * p.log()).sum();
  }
  return total / static_cast<double>(probabilities.rows());
}

double Network::backward_loss(const Matrix& targets, Loss loss, Matrix* grad_input) {
  if (loss == Loss::BinaryCrossEntropy && head_ != Head::Sigmoid) {
    throw ConfigError("binary cross-entropy requires a sigmoid head");
  }
  if (loss == Loss::CategoricalCrossEntropy && head_ != Head::Softmax) {
    throw ConfigError("categorical cross-entropy requires a softmax head");
  }
  const double value = loss_value(output_, targets, loss);
  // d(loss)/d(logits) = (p - y) / B for both pairings; bypass the head.
  Matrix gi = backward_from_logits((output_ - targets) / static_cast<double>(output_.rows()));
  if (grad_input) *grad_input = std::move(gi);
  return value;
}

std::vector<ParamBlock> Network::parameters() {
  std::vector<ParamBlock> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string p = "L" + std::to_string(i) + ".";
    std::visit(overloaded{[&](DenseLayer& d) {
                            out.push_back({p + "weights", span_of(d.weights), span_of(d.grad_weights)});
                            out.push_back({p + "bias", span_of(d.bias), span_of(d.grad_bias)});
                          },
                          [&](BatchNormLayer& bn) {
                            out.push_back({p + "gamma", span_of(bn.gamma), span_of(bn.grad_gamma)});
                            out.push_back({p + "beta", span_of(bn.beta), span_of(bn.grad_beta)});
                          },
                          [](ReluLayer&) {}},
               layers_[i]);
  }
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      n += static_cast<std::size_t>(d->weights.size() + d->bias.size());
    } else if (const auto* bn = std::get_if<BatchNormLayer>(&layer)) {
      n += 2 * bn->dim();
    }
  }
  return n;
}

void Network::write_to(Container& container, const std::string& prefix) const {
  auto specs = nlohmann::json::array();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string p = prefix + "L" + std::to_string(i) + ".";
    std::visit(overloaded{[&](const DenseLayer& d) {
                            specs.push_back({{"type", "dense"}, {"in", d.in_dim()}, {"out", d.out_dim()}});
                            container.add(p + "weights", {d.out_dim(), d.in_dim()}, copy_of(d.weights));
                            container.add(p + "bias", {d.out_dim()}, copy_of(d.bias));
                          },
                          [&](const BatchNormLayer& bn) {
                            specs.push_back({{"type", "batchnorm"},
                                             {"dim", bn.dim()},
                                             {"momentum", bn.momentum},
                                             {"epsilon", bn.epsilon}});
                            container.add(p + "gamma", {bn.dim()}, copy_of(bn.gamma));
                            container.add(p + "beta", {bn.dim()}, copy_of(bn.beta));
                            container.add(p + "running_mean", {bn.dim()}, copy_of(bn.running_mean));
                            container.add(p + "running_var", {bn.dim()}, copy_of(bn.running_var));
                          },
                          [&](const ReluLayer&) { specs.push_back({{"type", "relu"}}); }},
               layers_[i]);
  }
  container.meta()[prefix + "network"] = {{"head", head_name(head_)}, {"layers", specs}};
}

Network Network::read_from(const Container& container, const std::string& prefix) {
  const auto& spec = container.meta().at(prefix + "network");
  std::vector<Layer> layers;
  const auto& specs = spec.at("layers");
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const std::string p = prefix + "L" + std::to_string(i) + ".";
    const auto type = specs[i].at("type").get<std::string>();
    if (type == "dense") {
      DenseLayer d(specs[i].at("in").get<std::size_t>(), specs[i].at("out").get<std::size_t>());
      const auto& w = container.array(p + "weights").data;
      if (static_cast<std::size_t>(d.weights.size()) != w.size()) throw IoError("checkpoint: weight size mismatch");
      std::copy(w.begin(), w.end(), d.weights.data());
      fill_from(d.bias, container.array(p + "bias").data);
      layers.emplace_back(std::move(d));
    } else if (type == "batchnorm") {
      BatchNormLayer bn(specs[i].at("dim").get<std::size_t>());
      bn.momentum = specs[i].at("momentum").get<double>();
      bn.epsilon = specs[i].at("epsilon").get<double>();
      fill_from(bn.gamma, container.array(p + "gamma").data);
      fill_from(bn.beta, container.array(p + "beta").data);
      fill_from(bn.running_mean, container.array(p + "running_mean").data);
      fill_from(bn.running_var, container.array(p + "running_var").data);
      layers.emplace_back(std::move(bn));
    } else if (type == "relu") {
      layers.emplace_back(ReluLayer{});
    } else {
      throw IoError("checkpoint: unknown layer type '" + type + "'");
    }
  }
  return Network(std::move(layers), head_from_name(spec.at("head").get<std::string>()));
}

bool Network::operator==(const Network& other) const {
  if (head_ != other.head_ || layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].index() != other.layers_[i].index()) return false;
    if (const auto* a = std::get_if<DenseLayer>(&layers_[i])) {
      const auto& b = std::get<DenseLayer>(other.layers_[i]);
      if (a->weights != b.weights || a->bias != b.bias) return false;
    } else if (const auto* a = std::get_if<BatchNormLayer>(&layers_[i])) {
      const auto& b = std::get<BatchNormLayer>(other.layers_[i]);
      if (a->gamma != b.gamma || a->beta != b.beta || a->running_mean != b.running_mean ||
          a->running_var != b.running_var || a->momentum != b.momentum || a->epsilon != b.epsilon) {
        return false;
      }
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// ADAM

void AdamState::step(const std::vector<ParamBlock>& params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.size(), 0.0);
      v_.emplace_back(p.value.size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw ShapeError("adam: parameter list changed between steps");
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t j = 0; j < params.size(); ++j) {
    auto& m = m_[j];
    auto& v = v_[j];
    const auto& p = params[j];
    if (p.value.size() != m.size() || p.grad.size() != m.size()) throw ShapeError("adam: block " + p.name + " resized");
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double g = p.grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p.value[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

void AdamState::write_to(Container& container, const std::string& prefix) const {
  container.meta()[prefix + "adam"] = {{"lr", config_.lr},
                                       {"beta1", config_.beta1},
                                       {"beta2", config_.beta2},
                                       {"eps", config_.eps},
                                       {"t", t_},
                                       {"blocks", m_.size()}};
  for (std::size_t j = 0; j < m_.size(); ++j) {
    container.add(prefix + "adam.m" + std::to_string(j), m_[j]);
    container.add(prefix + "adam.v" + std::to_string(j), v_[j]);
  }
}

AdamState AdamState::read_from(const Container& container, const std::string& prefix) {
  const auto& meta = container.meta().at(prefix + "adam");
  AdamState s(AdamConfig{meta.at("lr").get<double>(), meta.at("beta1").get<double>(),
                         meta.at("beta2").get<double>(), meta.at("eps").get<double>()});
  s.t_ = meta.at("t").get<std::uint64_t>();
  const auto blocks = meta.at("blocks").get<std::size_t>();
  for (std::size_t j = 0; j < blocks; ++j) {
    s.m_.push_back(container.array(prefix + "adam.m" + std::to_string(j)).data);
    s.v_.push_back(container.array(prefix + "adam.v" + std::to_string(j)).data);
  }
  return s;
}

void save_checkpoint(const std::filesystem::path& path, const Network& net, const AdamState* optimizer,
                     const nlohmann::json& meta) {
  Container c("network");
  c.meta()["user"] = meta;
  net.write_to(c);
  if (optimizer) optimizer->write_to(c, "");
  c.save(path);
}

Network load_checkpoint(const std::filesystem::path& path, AdamState* optimizer, nlohmann::json* meta) {
  const auto c = Container::load(path, "network");
  if (optimizer) {
    *optimizer = c.meta().contains("adam") ? AdamState::read_from(c, "") : AdamState();
  }
  if (meta) *meta = c.meta().value("user", nlohmann::json::object());
  return Network::read_from(c);
}

}  // namespace seqgan::nn
