#pragma once

#include "seqgan/featurize.hpp"
#include "seqgan/nn.hpp"
#include "seqgan/types.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

namespace seqgan::gan {

struct GanConfig {
  std::size_t iterations = 1000;
  std::size_t batch_size = 32;
  /// Generator input width; 0 means "same as the embedding dimension".
  std::size_t noise_dim = 0;
  /// Synthetic rows per class as a fraction of its real count.
  double gan_fraction = 0.10;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::vector<std::size_t> hidden = {128, 64};
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static GanConfig from_json(const nlohmann::json& j);
};

struct LossTrace {
  std::vector<double> discriminator;
  std::vector<double> generator;
};

/// Generator/discriminator pair trained on the rows of one class.
struct GanModel {
  nn::Network generator;      // noise_dim -> dim, softmax head
  nn::Network discriminator;  // dim -> 1, sigmoid head
  nn::AdamState generator_opt;
  nn::AdamState discriminator_opt;
  Label class_label = 0;
  std::size_t noise_dim = 0;
  std::size_t trained_iterations = 0;
  std::size_t discriminator_updates = 0;
  std::size_t generator_updates = 0;
  GanConfig config;
  LossTrace trace;

  std::size_t dim() const noexcept { return generator.output_dim(); }

  /// Writes <stem>.generator.ckpt, <stem>.discriminator.ckpt and <stem>.json.
  void save(const std::filesystem::path& directory, const std::string& stem) const;
  static GanModel load(const std::filesystem::path& directory, const std::string& stem);
};

/// Freshly initialized (untrained) model for rows of width `dim`.
GanModel make_gan(std::size_t dim, const GanConfig& config, Label class_label);

/// Adversarial training on one class's rows.
///
/// Each iteration draws a Uniform[0,1) noise batch, samples a real batch
/// uniformly with replacement, takes one discriminator ADAM step on binary
/// cross-entropy (real -> 1, fake -> 0) and then one generator ADAM step
/// that pushes the discriminator's verdict on the fakes toward 1 while the
/// discriminator's weights stay fixed.
GanModel train_class_gan(const Matrix& real_rows, const GanConfig& config, Label class_label);

struct SyntheticBlock {
  Matrix rows;
  Label class_label = 0;
  nlohmann::json provenance;
};

/// round-half-up(fraction * class_count).
std::size_t synthetic_count(double fraction, std::size_t class_count);

/// `count` generator samples in eval mode; deterministic in (model, seed).
SyntheticBlock synthesize(const GanModel& model, std::size_t count, std::uint64_t seed, bool allow_untrained = false);

/// One GAN per class present in `train`. When `test_origins` (sorted) is
/// given, any training row whose origin appears in it is rejected.
std::map<Label, GanModel> train_class_gans(const featurize::FeatureMatrix& train, const GanConfig& config,
                                           std::span<const std::size_t> test_origins = {});

/// Real rows followed by synthetic_count(gan_fraction, count) generated
/// rows per class, in class-id order. Synthetic rows carry origin kSynthetic.
featurize::FeatureMatrix augment_training_set(const featurize::FeatureMatrix& train,
                                              const std::map<Label, GanModel>& models, const GanConfig& config);

/// Synthetic rows only, synthetic_count(fraction, class_counts[c]) per class.
/// `like` supplies class names and method metadata.
featurize::FeatureMatrix only_gan_training_set(const std::map<Label, GanModel>& models,
                                               const std::vector<std::size_t>& class_counts,
                                               const GanConfig& config, const featurize::FeatureMatrix& like,
                                               double fraction);

}  // namespace seqgan::gan
