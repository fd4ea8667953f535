#include "seqgan/gan.hpp"

#include "seqgan/error.hpp"
#include "seqgan/parallel.hpp"
#include "seqgan/random.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace seqgan::gan {

void GanConfig::validate() const {
  if (batch_size == 0) throw ConfigError("GAN batch size must be positive");
  if (!(gan_fraction > 0.0 && gan_fraction <= 1.0)) throw ConfigError("GAN fraction must lie in (0, 1]");
  if (!(lr > 0.0)) throw ConfigError("GAN learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("ADAM betas must lie in [0, 1)");
  for (auto h : hidden) {
    if (h == 0) throw ConfigError("GAN hidden widths must be positive");
  }
}

nlohmann::json GanConfig::to_json() const {
  return {{"iterations", iterations}, {"batch_size", batch_size}, {"noise_dim", noise_dim},
          {"gan_fraction", gan_fraction}, {"lr", lr}, {"beta1", beta1},
          {"beta2", beta2}, {"hidden", hidden}, {"seed", seed}};
}

GanConfig GanConfig::from_json(const nlohmann::json& j) {
  GanConfig c;
  c.iterations = j.at("iterations").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.noise_dim = j.at("noise_dim").get<std::size_t>();
  c.gan_fraction = j.at("gan_fraction").get<double>();
  c.lr = j.at("lr").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

namespace {

Matrix uniform_noise(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix noise(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = rng.uniform();
  return noise;
}

std::uint64_t class_seed(std::uint64_t seed, Label label, std::string_view role) {
  return derive_seed(derive_seed(seed, role), "class" + std::to_string(label));
}

}  // namespace

GanModel make_gan(std::size_t dim, const GanConfig& config, Label class_label) {
  config.validate();
  if (dim == 0) throw ConfigError("GAN data dimension must be positive");
  GanModel model;
  model.class_label = class_label;
  model.config = config;
  model.noise_dim = config.noise_dim == 0 ? dim : config.noise_dim;

  const auto init_seed = class_seed(config.seed, class_label, "gan.init");
  model.generator = nn::Network::build({model.noise_dim, config.hidden, dim, nn::Head::Softmax, true},
                                       derive_seed(init_seed, "generator"));
  model.discriminator = nn::Network::build({dim, config.hidden, 1, nn::Head::Sigmoid, true},
                                           derive_seed(init_seed, "discriminator"));
  const nn::AdamConfig adam{config.lr, config.beta1, config.beta2, 1e-8};
  model.generator_opt = nn::AdamState(adam);
  model.discriminator_opt = nn::AdamState(adam);
  return model;
}

GanModel train_class_gan(const Matrix& real_rows, const GanConfig& config, Label class_label) {
  if (real_rows.rows() == 0) throw ValidationError("cannot train a GAN on an empty class");
  if (!real_rows.allFinite()) throw NumericError("GAN training rows contain non-finite values");
  const auto n_real = static_cast<std::size_t>(real_rows.rows());
  const auto batch = config.batch_size;
  if (n_real < batch) {
    spdlog::warn("class {} has {} rows, fewer than the GAN batch size {}; batches are drawn with replacement",
                 class_label, n_real, batch);
  }

  GanModel model = make_gan(static_cast<std::size_t>(real_rows.cols()), config, class_label);
  Rng rng(class_seed(config.seed, class_label, "gan.train"));
  auto& gen = model.generator;
  auto& dis = model.discriminator;
  const Matrix ones = Matrix::Ones(static_cast<Eigen::Index>(batch), 1);
  Matrix targets = Matrix::Zero(static_cast<Eigen::Index>(2 * batch), 1);
  targets.topRows(static_cast<Eigen::Index>(batch)).setOnes();
  Matrix real_batch(static_cast<Eigen::Index>(batch), real_rows.cols());

  model.trace.discriminator.reserve(config.iterations);
  model.trace.generator.reserve(config.iterations);

  for (std::size_t it = 0; it < config.iterations; ++it) {
    const Matrix noise = uniform_noise(rng, batch, model.noise_dim);
    const Matrix fake = gen.forward(noise, nn::Mode::Train);
    for (std::size_t b = 0; b < batch; ++b) {
      real_batch.row(static_cast<Eigen::Index>(b)) = real_rows.row(static_cast<Eigen::Index>(rng.index(n_real)));
    }

    // Both updates see one mixed real+fake batch, so batch-norm statistics
    // keep the difference between the two populations visible.
    Matrix mixed(static_cast<Eigen::Index>(2 * batch), real_rows.cols());
    mixed.topRows(static_cast<Eigen::Index>(batch)) = real_batch;
    mixed.bottomRows(static_cast<Eigen::Index>(batch)) = fake;

    // Discriminator: mean BCE over the 2B samples, one ADAM step.
    dis.forward(mixed, nn::Mode::Train);
    const double dis_loss = dis.backward_loss(targets, nn::Loss::BinaryCrossEntropy);
    model.discriminator_opt.step(dis.parameters());
    ++model.discriminator_updates;

    // Generator: non-saturating loss -log D(G(z)) averaged over the fake
    // half; the discriminator's gradients are computed but never applied.
    const Matrix verdict = dis.forward(mixed, nn::Mode::Train);
    const auto fake_p = verdict.bottomRows(static_cast<Eigen::Index>(batch));
    Matrix grad_logits = Matrix::Zero(verdict.rows(), 1);
    grad_logits.bottomRows(static_cast<Eigen::Index>(batch)) = (fake_p.array() - 1.0).matrix() / static_cast<double>(batch);
    const double gen_loss = nn::loss_value(fake_p, ones, nn::Loss::BinaryCrossEntropy);
    const Matrix grad_mixed = dis.backward_from_logits(grad_logits, {.param_grads = false, .input_grad = true});
    gen.backward(grad_mixed.bottomRows(static_cast<Eigen::Index>(batch)), {.param_grads = true, .input_grad = false});
    model.generator_opt.step(gen.parameters());
    ++model.generator_updates;

    model.trace.discriminator.push_back(dis_loss);
    model.trace.generator.push_back(gen_loss);
    ++model.trained_iterations;
  }
  return model;
}

std::size_t synthetic_count(double fraction, std::size_t class_count) {
  const double v = std::floor(fraction * static_cast<double>(class_count) + 0.5);
  return v > 0.0 ? static_cast<std::size_t>(v) : 0;
}

SyntheticBlock synthesize(const GanModel& model, std::size_t count, std::uint64_t seed, bool allow_untrained) {
  if (model.trained_iterations == 0 && !allow_untrained) {
    throw ConfigError("GAN for class " + std::to_string(model.class_label) + " has not been trained");
  }
  SyntheticBlock block;
  block.class_label = model.class_label;
  block.provenance = {{"config", model.config.to_json()},
                      {"seed", seed},
                      {"trained_iterations", model.trained_iterations}};
  if (count == 0) {
    block.rows.resize(0, static_cast<Eigen::Index>(model.dim()));
    return block;
  }
  Rng rng(class_seed(seed, model.class_label, "gan.synthesize"));
  block.rows = model.generator.infer(uniform_noise(rng, count, model.noise_dim));
  return block;
}

std::map<Label, GanModel> train_class_gans(const featurize::FeatureMatrix& train, const GanConfig& config,
                                           std::span<const std::size_t> test_origins) {
  config.validate();
  for (auto origin : train.origin) {
    if (origin == featurize::FeatureMatrix::kSynthetic) {
      throw ValidationError("GAN training set contains synthetic rows");
    }
    if (std::binary_search(test_origins.begin(), test_origins.end(), static_cast<std::size_t>(origin))) {
      throw ValidationError("GAN training set contains test-split row " + std::to_string(origin));
    }
  }

  std::vector<Label> present;
  const auto counts = train.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] > 0) present.push_back(static_cast<Label>(c));
  }

  std::vector<GanModel> trained(present.size());
  parallel_for(present.size(), [&](std::size_t i) {
    const Label label = present[i];
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < train.rows(); ++r) {
      if (train.labels[r] == label) rows.push_back(r);
    }
    Matrix real(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(train.dim()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      real.row(static_cast<Eigen::Index>(r)) = train.values.row(static_cast<Eigen::Index>(rows[r]));
    }
    trained[i] = train_class_gan(real, config, label);
  });

  std::map<Label, GanModel> models;
  for (std::size_t i = 0; i < present.size(); ++i) models.emplace(present[i], std::move(trained[i]));
  return models;
}

namespace {

void append_block(featurize::FeatureMatrix& out, const SyntheticBlock& block) {
  if (block.rows.rows() == 0) return;
  if (static_cast<std::size_t>(block.rows.cols()) != out.dim()) {
    throw ShapeError("synthetic rows have width " + std::to_string(block.rows.cols()) + ", expected " +
                     std::to_string(out.dim()));
  }
  const auto old_rows = out.values.rows();
  out.values.conservativeResize(old_rows + block.rows.rows(), Eigen::NoChange);
  out.values.bottomRows(block.rows.rows()) = block.rows;
  out.labels.insert(out.labels.end(), static_cast<std::size_t>(block.rows.rows()), block.class_label);
  out.origin.insert(out.origin.end(), static_cast<std::size_t>(block.rows.rows()), featurize::FeatureMatrix::kSynthetic);
}

const GanModel& model_for(const std::map<Label, GanModel>& models, Label label,
                          const std::vector<std::string>& class_names) {
  auto it = models.find(label);
  if (it == models.end()) {
    const auto name = static_cast<std::size_t>(label) < class_names.size() ? class_names[static_cast<std::size_t>(label)]
                                                                            : std::to_string(label);
    throw ConfigError("no GAN model for class '" + name + "'");
  }
  return it->second;
}

}  // namespace

featurize::FeatureMatrix augment_training_set(const featurize::FeatureMatrix& train,
                                              const std::map<Label, GanModel>& models, const GanConfig& config) {
  featurize::FeatureMatrix out = train;
  const auto counts = train.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) continue;
    const auto& model = model_for(models, static_cast<Label>(c), train.class_names);
    append_block(out, synthesize(model, synthetic_count(config.gan_fraction, counts[c]), config.seed));
  }
  return out;
}

featurize::FeatureMatrix only_gan_training_set(const std::map<Label, GanModel>& models,
                                               const std::vector<std::size_t>& class_counts,
                                               const GanConfig& config, const featurize::FeatureMatrix& like,
                                               double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("synthetic fraction must lie in (0, 1]");
  featurize::FeatureMatrix out = like.empty_like(like.dim());
  for (std::size_t c = 0; c < class_counts.size(); ++c) {
    if (class_counts[c] == 0) continue;
    const auto& model = model_for(models, static_cast<Label>(c), like.class_names);
    append_block(out, synthesize(model, synthetic_count(fraction, class_counts[c]), config.seed));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

void GanModel::save(const std::filesystem::path& directory, const std::string& stem) const {
  std::filesystem::create_directories(directory);
  const nlohmann::json tag = {{"class_label", class_label}, {"role", "generator"}};
  nn::save_checkpoint(directory / (stem + ".generator.ckpt"), generator, &generator_opt, tag);
  nn::save_checkpoint(directory / (stem + ".discriminator.ckpt"), discriminator, &discriminator_opt,
                      {{"class_label", class_label}, {"role", "discriminator"}});
  const nlohmann::json sidecar = {{"class_label", class_label},
                                  {"config", config.to_json()},
                                  {"noise_dim", noise_dim},
                                  {"trained_iterations", trained_iterations},
                                  {"discriminator_updates", discriminator_updates},
                                  {"generator_updates", generator_updates},
                                  {"loss_trace", {{"discriminator", trace.discriminator}, {"generator", trace.generator}}}};
  std::ofstream out(directory / (stem + ".json"));
  if (!out) throw IoError("cannot write GAN sidecar in '" + directory.string() + "'");
  out << sidecar.dump(2) << '\n';
}

GanModel GanModel::load(const std::filesystem::path& directory, const std::string& stem) {
  std::ifstream in(directory / (stem + ".json"));
  if (!in) throw IoError("cannot read GAN sidecar '" + (directory / (stem + ".json")).string() + "'");
  const auto sidecar = nlohmann::json::parse(in);
  GanModel m;
  m.class_label = sidecar.at("class_label").get<Label>();
  m.config = GanConfig::from_json(sidecar.at("config"));
  m.noise_dim = sidecar.at("noise_dim").get<std::size_t>();
  m.trained_iterations = sidecar.at("trained_iterations").get<std::size_t>();
  m.discriminator_updates = sidecar.at("discriminator_updates").get<std::size_t>();
  m.generator_updates = sidecar.at("generator_updates").get<std::size_t>();
  m.trace.discriminator = sidecar.at("loss_trace").at("discriminator").get<std::vector<double>>();
  m.trace.generator = sidecar.at("loss_trace").at("generator").get<std::vector<double>>();
  m.generator = nn::load_checkpoint(directory / (stem + ".generator.ckpt"), &m.generator_opt);
  m.discriminator = nn::load_checkpoint(directory / (stem + ".discriminator.ckpt"), &m.discriminator_opt);
  return m;
}

}  // namespace seqgan::gan
