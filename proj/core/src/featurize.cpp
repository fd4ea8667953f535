#include "seqgan/featurize.hpp"

#include "seqgan/container.hpp"
#include "seqgan/error.hpp"
#include "seqgan/parallel.hpp"
#include "seqgan/random.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

namespace seqgan::featurize {

std::string_view to_string(Method method) noexcept {
  switch (method) {
    case Method::Spike2Vec:
      return "spike2vec";
    case Method::PWM2Vec:
      return "pwm2vec";
    case Method::Minimizer:
      return "minimizer";
  }
  return "unknown";
}

Method method_from_string(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "spike2vec") return Method::Spike2Vec;
  if (lower == "pwm2vec") return Method::PWM2Vec;
  if (lower == "minimizer") return Method::Minimizer;
  throw ConfigError("unknown embedding method '" + std::string(name) + "'");
}

void KmerParams::validate() const {
  if (k == 0) throw ConfigError("k must be positive");
  if (minimizer_m == 0) throw ConfigError("minimizer m must be positive");
  if (minimizer_m >= minimizer_k) throw ConfigError("minimizer m must be smaller than minimizer k");
}

// ---------------------------------------------------------------------------
// FeatureMatrix

std::vector<std::size_t> FeatureMatrix::class_counts() const {
  std::vector<std::size_t> counts(class_names.size(), 0);
  for (auto l : labels) ++counts.at(static_cast<std::size_t>(l));
  return counts;
}

FeatureMatrix FeatureMatrix::empty_like(std::size_t d) const {
  FeatureMatrix out;
  out.values.resize(0, static_cast<Eigen::Index>(d));
  out.class_names = class_names;
  out.method = method;
  out.params = params;
  return out;
}

FeatureMatrix FeatureMatrix::select(std::span<const std::size_t> rows) const {
  FeatureMatrix out = empty_like(dim());
  out.values.resize(static_cast<Eigen::Index>(rows.size()), values.cols());
  out.labels.reserve(rows.size());
  out.origin.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = rows[i];
    if (r >= this->rows()) throw ShapeError("row index out of range");
    out.values.row(static_cast<Eigen::Index>(i)) = values.row(static_cast<Eigen::Index>(r));
    out.labels.push_back(labels[r]);
    out.origin.push_back(origin[r]);
  }
  return out;
}

void FeatureMatrix::validate() const {
  if (labels.size() != rows() || origin.size() != rows()) {
    throw ShapeError("feature matrix: labels/origin length differs from row count");
  }
  for (auto l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= class_names.size()) {
      throw ValidationError("feature matrix: label " + std::to_string(l) + " outside label table");
    }
  }
  if (!values.allFinite()) throw NumericError("feature matrix: non-finite value");
}

void FeatureMatrix::save(const std::filesystem::path& path) const {
  Container c("feature_matrix");
  c.meta() = {{"method", to_string(method)},
              {"params", params},
              {"n", rows()},
              {"dim", dim()},
              {"class_names", class_names},
              {"labels", labels},
              {"origin", origin}};
  c.add("values", {rows(), dim()}, std::vector<double>(values.data(), values.data() + values.size()));
  c.save(path);
}

FeatureMatrix FeatureMatrix::load(const std::filesystem::path& path) {
  const auto c = Container::load(path, "feature_matrix");
  const auto& meta = c.meta();
  FeatureMatrix out;
  out.method = method_from_string(meta.at("method").get<std::string>());
  out.params = meta.at("params");
  out.class_names = meta.at("class_names").get<std::vector<std::string>>();
  out.labels = meta.at("labels").get<LabelVector>();
  out.origin = meta.at("origin").get<std::vector<std::int64_t>>();
  const auto n = meta.at("n").get<Eigen::Index>();
  const auto d = meta.at("dim").get<Eigen::Index>();
  const auto& values = c.array("values").data;
  if (static_cast<std::size_t>(n * d) != values.size()) throw IoError("feature matrix: value count mismatch");
  out.values = Eigen::Map<const Matrix>(values.data(), n, d);
  out.validate();
  return out;
}

void FeatureMatrix::write_csv(std::ostream& out) const {
  out << "label";
  for (std::size_t j = 0; j < dim(); ++j) out << ",f" << j;
  out << '\n';
  std::ostringstream cell;
  cell << std::setprecision(17);
  for (std::size_t i = 0; i < rows(); ++i) {
    out << class_names.at(static_cast<std::size_t>(labels[i]));
    for (std::size_t j = 0; j < dim(); ++j) {
      cell.str({});
      cell << values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      out << ',' << cell.str();
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// k-mer spectra

std::size_t spectrum_dim(const seqio::Alphabet& alphabet, std::size_t k) {
  constexpr std::size_t kMaxDim = std::size_t{1} << 26;
  std::size_t d = 1;
  for (std::size_t i = 0; i < k; ++i) {
    if (d > kMaxDim / alphabet.size()) {
      throw ConfigError("spectrum dimension |alphabet|^" + std::to_string(k) + " is too large");
    }
    d *= alphabet.size();
  }
  return d;
}

std::vector<std::string_view> kmer_list(std::string_view sequence, std::size_t k, std::string_view id) {
  if (k == 0) throw ConfigError("k must be positive");
  if (sequence.size() < k) {
    throw ValidationError("sequence '" + std::string(id) + "' has length " + std::to_string(sequence.size()) +
                          ", shorter than k = " + std::to_string(k));
  }
  std::vector<std::string_view> out;
  out.reserve(sequence.size() - k + 1);
  for (std::size_t i = 0; i + k <= sequence.size(); ++i) out.push_back(sequence.substr(i, k));
  return out;
}

namespace {

int residue_index(const seqio::Alphabet& alphabet, char c) {
  const int idx = alphabet.index(c);
  if (idx < 0) throw ValidationError(std::string("residue '") + c + "' is not in the alphabet");
  return idx;
}

void check_length(std::string_view sequence, std::size_t k) {
  if (k == 0) throw ConfigError("k must be positive");
  if (sequence.size() < k) {
    throw ValidationError("sequence of length " + std::to_string(sequence.size()) + " is shorter than k = " +
                          std::to_string(k));
  }
}

void l1_normalize(std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  if (sum > 0.0) {
    for (double& x : v) x /= sum;
  }
}

}  // namespace

std::size_t kmer_index(std::string_view kmer, const seqio::Alphabet& alphabet) {
  std::size_t idx = 0;
  for (char c : kmer) idx = idx * alphabet.size() + static_cast<std::size_t>(residue_index(alphabet, c));
  return idx;
}

std::vector<double> spike2vec_counts(std::string_view sequence, std::size_t k, const seqio::Alphabet& alphabet) {
  check_length(sequence, k);
  const std::size_t dim = spectrum_dim(alphabet, k);
  std::vector<double> counts(dim, 0.0);
  // Rolling base-|alphabet| index: drop the leading digit, append the next.
  std::size_t idx = 0;
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    idx = (idx * alphabet.size() + static_cast<std::size_t>(residue_index(alphabet, sequence[i]))) % dim;
    if (i + 1 >= k) counts[idx] += 1.0;
  }
  return counts;
}

std::vector<double> spike2vec_spectrum(std::string_view sequence, std::size_t k, const seqio::Alphabet& alphabet) {
  auto v = spike2vec_counts(sequence, k, alphabet);
  l1_normalize(v);
  return v;
}

// ---------------------------------------------------------------------------
// PWM2Vec

std::vector<double> sequence_pwm(std::string_view sequence, std::size_t k, const seqio::Alphabet& alphabet) {
  check_length(sequence, k);
  const std::size_t a = alphabet.size();
  std::vector<double> pwm(a * k, 1.0);  // pseudocount
  const std::size_t windows = sequence.size() - k + 1;
  for (std::size_t i = 0; i < windows; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      pwm[static_cast<std::size_t>(residue_index(alphabet, sequence[i + p])) * k + p] += 1.0;
    }
  }
  const double column_total = static_cast<double>(windows + a);
  for (double& cell : pwm) cell = std::log2(cell / column_total * static_cast<double>(a));
  return pwm;
}

std::vector<double> pwm2vec_embed(std::string_view sequence, std::size_t k, const seqio::Alphabet& alphabet,
                                  std::size_t pad_len) {
  const auto pwm = sequence_pwm(sequence, k, alphabet);
  const std::size_t windows = sequence.size() - k + 1;
  if (pad_len < windows) {
    throw ConfigError("pad length " + std::to_string(pad_len) + " is below the " + std::to_string(windows) +
                      " k-mers of the sequence");
  }
  std::vector<double> out(pad_len, 0.0);
  for (std::size_t i = 0; i < windows; ++i) {
    double score = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      score += pwm[static_cast<std::size_t>(alphabet.index(sequence[i + p])) * k + p];
    }
    out[i] = score;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Minimizers

namespace {

/// Compares the window starting at `a` (forward or reversed) with `best`.
bool window_less(std::string_view kmer, std::size_t start, std::size_t m, bool reversed, std::string_view best) {
  for (std::size_t j = 0; j < m; ++j) {
    const char c = reversed ? kmer[start + m - 1 - j] : kmer[start + j];
    if (c != best[j]) return c < best[j];
  }
  return false;
}

}  // namespace

std::string minimizer_of_kmer(std::string_view kmer, std::size_t m) {
  if (m == 0 || m > kmer.size()) {
    throw ConfigError("minimizer length " + std::to_string(m) + " does not fit a k-mer of length " +
                      std::to_string(kmer.size()));
  }
  // Candidates in tie-break order: forward before reversed, leftmost first.
  // Only strictly smaller candidates replace the incumbent.
  std::string best(kmer.substr(0, m));
  for (std::size_t start = 0; start + m <= kmer.size(); ++start) {
    for (bool reversed : {false, true}) {
      if (window_less(kmer, start, m, reversed, best)) {
        for (std::size_t j = 0; j < m; ++j) best[j] = reversed ? kmer[start + m - 1 - j] : kmer[start + j];
      }
    }
  }
  return best;
}

std::vector<double> minimizer_spectrum(std::string_view sequence, const KmerParams& params,
                                       const seqio::Alphabet& alphabet) {
  params.validate();
  check_length(sequence, params.minimizer_k);
  std::vector<double> counts(spectrum_dim(alphabet, params.minimizer_m), 0.0);
  for (auto kmer : kmer_list(sequence, params.minimizer_k)) {
    counts[kmer_index(minimizer_of_kmer(kmer, params.minimizer_m), alphabet)] += 1.0;
  }
  l1_normalize(counts);
  return counts;
}

// ---------------------------------------------------------------------------
// Random Fourier features

RffProjector::RffProjector(std::size_t input_dim, const RffParams& params) {
  if (params.dim == 0) throw ConfigError("RFF dimension must be positive");
  if (input_dim == 0) throw ConfigError("RFF input dimension must be positive");
  if (params.gamma < 0.0 || !std::isfinite(params.gamma)) throw ConfigError("RFF gamma must be positive");
  gamma_ = params.gamma > 0.0 ? params.gamma : 1.0 / static_cast<double>(input_dim);

  // w ~ N(0, 2 gamma I), b ~ U[0, 2 pi)
  Rng rng(derive_seed(params.seed, "rff"));
  const double sd = std::sqrt(2.0 * gamma_);
  weights_.resize(static_cast<Eigen::Index>(params.dim), static_cast<Eigen::Index>(input_dim));
  for (Eigen::Index i = 0; i < weights_.size(); ++i) weights_.data()[i] = rng.normal(0.0, sd);
  offsets_.resize(static_cast<Eigen::Index>(params.dim));
  for (Eigen::Index j = 0; j < offsets_.size(); ++j) offsets_[j] = rng.uniform() * 2.0 * std::numbers::pi;
}

Matrix RffProjector::project(const Matrix& rows) const {
  if (static_cast<std::size_t>(rows.cols()) != input_dim()) {
    throw ShapeError("RFF: expected " + std::to_string(input_dim()) + " input features, got " +
                     std::to_string(rows.cols()));
  }
  if (!rows.allFinite()) throw NumericError("RFF: non-finite input");
  Matrix z = rows * weights_.transpose();
  z.rowwise() += offsets_.transpose();
  const double scale = std::sqrt(2.0 / static_cast<double>(output_dim()));
  return (z.array().cos() * scale).matrix();
}

FeatureMatrix rff_project(const FeatureMatrix& matrix, const RffParams& params) {
  const RffProjector projector(matrix.dim(), params);
  FeatureMatrix out = matrix.empty_like(projector.output_dim());
  out.values = projector.project(matrix.values);
  out.labels = matrix.labels;
  out.origin = matrix.origin;
  out.params["rff"] = {{"dim", params.dim}, {"gamma", projector.gamma()}, {"seed", params.seed}};
  return out;
}

// ---------------------------------------------------------------------------
// Corpus embedding

namespace {

std::size_t window_of(const EmbeddingParams& params) {
  return params.method == Method::Minimizer ? params.kmer.minimizer_k : params.kmer.k;
}

}  // namespace

FeatureMatrix embed_corpus(const seqio::LabeledCorpus& corpus, const EmbeddingParams& params,
                           const seqio::Alphabet& alphabet, EmbedStats* stats_out) {
  params.kmer.validate();
  const std::size_t window = window_of(params);

  EmbedStats stats;
  std::vector<std::size_t> kept;
  std::vector<std::string> problems;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& r = corpus[i];
    if (auto pos = alphabet.first_invalid(r.residues)) {
      problems.push_back("'" + r.id + "': residue '" + r.residues[*pos] + "' at position " +
                         std::to_string(*pos + 1) + " is not in the alphabet");
    } else if (r.residues.size() < window) {
      if (params.skip_short) {
        ++stats.skipped;
        stats.skipped_ids.push_back(r.id);
      } else {
        problems.push_back("'" + r.id + "': length " + std::to_string(r.residues.size()) + " < window " +
                           std::to_string(window));
      }
    } else {
      kept.push_back(i);
    }
  }
  if (!problems.empty()) {
    std::string message = std::to_string(problems.size()) + " sequence(s) cannot be embedded:";
    const std::size_t shown = std::min<std::size_t>(problems.size(), 10);
    for (std::size_t i = 0; i < shown; ++i) message += "\n  " + problems[i];
    if (shown < problems.size()) message += "\n  ...";
    throw ValidationError(message);
  }
  if (stats.skipped > 0) spdlog::warn("skipped {} sequence(s) shorter than {}", stats.skipped, window);

  std::size_t dim = 0;
  std::size_t pad_len = params.pad_len;
  switch (params.method) {
    case Method::Spike2Vec:
      dim = spectrum_dim(alphabet, params.kmer.k);
      break;
    case Method::Minimizer:
      dim = spectrum_dim(alphabet, params.kmer.minimizer_m);
      break;
    case Method::PWM2Vec: {
      std::size_t longest = 0;
      for (auto i : kept) longest = std::max(longest, corpus[i].residues.size());
      const std::size_t needed = longest >= params.kmer.k ? longest - params.kmer.k + 1 : 1;
      if (pad_len == 0) pad_len = needed;
      if (pad_len < needed) {
        throw ConfigError("pad length " + std::to_string(pad_len) + " is below the corpus maximum of " +
                          std::to_string(needed) + " k-mers");
      }
      dim = pad_len;
      break;
    }
  }

  FeatureMatrix out;
  out.method = params.method;
  out.class_names = corpus.class_names();
  out.params = {{"k", params.kmer.k},
                {"minimizer_k", params.kmer.minimizer_k},
                {"minimizer_m", params.kmer.minimizer_m},
                {"pad_len", params.method == Method::PWM2Vec ? pad_len : 0},
                {"alphabet", alphabet.symbols()}};
  out.values.resize(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(dim));
  out.labels.reserve(kept.size());
  out.origin.reserve(kept.size());
  for (auto i : kept) {
    out.labels.push_back(corpus.labels()[i]);
    out.origin.push_back(static_cast<std::int64_t>(i));
  }

  parallel_for(kept.size(), [&](std::size_t row) {
    const auto& residues = corpus[kept[row]].residues;
    std::vector<double> v;
    switch (params.method) {
      case Method::Spike2Vec:
        v = spike2vec_spectrum(residues, params.kmer.k, alphabet);
        break;
      case Method::PWM2Vec:
        v = pwm2vec_embed(residues, params.kmer.k, alphabet, pad_len);
        break;
      case Method::Minimizer:
        v = minimizer_spectrum(residues, params.kmer, alphabet);
        break;
    }
    out.values.row(static_cast<Eigen::Index>(row)) = Eigen::Map<const RowVector>(v.data(), static_cast<Eigen::Index>(v.size()));
  });

  if (stats_out) *stats_out = std::move(stats);
  return out;
}

}  // namespace seqgan::featurize
