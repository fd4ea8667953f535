#pragma once

#include "seqgan/seqio.hpp"
#include "seqgan/types.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace seqgan::featurize {

enum class Method { Spike2Vec, PWM2Vec, Minimizer };

std::string_view to_string(Method method) noexcept;
/// Accepts "spike2vec", "pwm2vec", "minimizer" (case-insensitive).
Method method_from_string(std::string_view name);

struct KmerParams {
  std::size_t k = 3;
  std::size_t minimizer_k = 9;
  std::size_t minimizer_m = 3;

  /// Throws ConfigError unless k >= 1 and 1 <= minimizer_m < minimizer_k.
  void validate() const;
};

struct RffParams {
  std::size_t dim = 512;
  /// Kernel bandwidth of exp(-gamma * |x - y|^2); 0 selects 1 / input_dim.
  double gamma = 0.0;
  std::uint64_t seed = 0;
};

struct EmbeddingParams {
  Method method = Method::Spike2Vec;
  KmerParams kmer;
  /// PWM2Vec output length; 0 derives max(N) - k + 1 from the corpus.
  std::size_t pad_len = 0;
  /// Drop sequences shorter than the method's window instead of failing.
  bool skip_short = false;
};

/// Samples-by-features matrix with aligned labels and provenance.
struct FeatureMatrix {
  Matrix values;
  LabelVector labels;
  std::vector<std::string> class_names;
  Method method = Method::Spike2Vec;
  /// Method parameters as recorded at embedding time.
  nlohmann::json params = nlohmann::json::object();
  /// Source corpus index per row; kSynthetic for generated rows.
  std::vector<std::int64_t> origin;

  static constexpr std::int64_t kSynthetic = -1;

  std::size_t rows() const noexcept { return static_cast<std::size_t>(values.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(values.cols()); }
  std::size_t n_classes() const noexcept { return class_names.size(); }

  std::vector<std::size_t> class_counts() const;
  FeatureMatrix select(std::span<const std::size_t> rows) const;
  /// Same metadata, no rows.
  FeatureMatrix empty_like(std::size_t dim) const;

  /// Throws unless labels/origin align with rows, every label is a valid
  /// class id, and every value is finite.
  void validate() const;

  void save(const std::filesystem::path& path) const;
  static FeatureMatrix load(const std::filesystem::path& path);
  /// "label,f0,f1,..." header then one row per sample, 17 significant digits.
  void write_csv(std::ostream& out) const;
};

/// |alphabet|^k, throwing ConfigError if it would exceed 2^26 entries.
std::size_t spectrum_dim(const seqio::Alphabet& alphabet, std::size_t k);

/// The N - k + 1 windows of length k, in sequence order. `id` only labels errors.
std::vector<std::string_view> kmer_list(std::string_view sequence, std::size_t k, std::string_view id = {});

/// Base-|alphabet| positional index; first residue is the most significant digit.
std::size_t kmer_index(std::string_view kmer, const seqio::Alphabet& alphabet);

/// Raw k-mer counts over the |alphabet|^k index space.
std::vector<double> spike2vec_counts(std::string_view sequence, std::size_t k, const seqio::Alphabet& alphabet);

/// k-mer counts divided by N - k + 1 (a point on the simplex).
std::vector<double> spike2vec_spectrum(std::string_view sequence, std::size_t k, const seqio::Alphabet& alphabet);

/// Per-sequence log2-odds PWM (pseudocount 1, uniform background), |alphabet| x k, row-major.
std::vector<double> sequence_pwm(std::string_view sequence, std::size_t k, const seqio::Alphabet& alphabet);

/// Score of each k-mer against the sequence's own PWM, zero-padded to pad_len.
std::vector<double> pwm2vec_embed(std::string_view sequence, std::size_t k, const seqio::Alphabet& alphabet,
                                  std::size_t pad_len);

/// Lexicographically smallest length-m window of `kmer`, each window also
/// compared in reverse.
std::string minimizer_of_kmer(std::string_view kmer, std::size_t m);

/// Counts of per-k-mer minimizers over the |alphabet|^m space, L1-normalized.
std::vector<double> minimizer_spectrum(std::string_view sequence, const KmerParams& params,
                                       const seqio::Alphabet& alphabet);

/// Random Fourier feature map z(x) = sqrt(2/D) cos(W x + b) approximating
/// the Gaussian kernel exp(-gamma |x - y|^2).
class RffProjector {
 public:
  RffProjector(std::size_t input_dim, const RffParams& params);

  std::size_t input_dim() const noexcept { return static_cast<std::size_t>(weights_.cols()); }
  std::size_t output_dim() const noexcept { return static_cast<std::size_t>(weights_.rows()); }
  double gamma() const noexcept { return gamma_; }

  Matrix project(const Matrix& rows) const;

 private:
  Matrix weights_;  // D x input_dim
  Vector offsets_;  // D
  double gamma_;
};

/// Projects the rows of `matrix`; labels and provenance carry over.
FeatureMatrix rff_project(const FeatureMatrix& matrix, const RffParams& params);

struct EmbedStats {
  std::size_t skipped = 0;
  std::vector<std::string> skipped_ids;
};

/// Embeds every record; row order follows corpus order.
FeatureMatrix embed_corpus(const seqio::LabeledCorpus& corpus, const EmbeddingParams& params,
                           const seqio::Alphabet& alphabet, EmbedStats* stats = nullptr);

}  // namespace seqgan::featurize
