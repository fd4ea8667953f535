#pragma once

#include "seqgan/classify.hpp"
#include "seqgan/evaluate.hpp"
#include "seqgan/featurize.hpp"
#include "seqgan/gan.hpp"
#include "seqgan/seqio.hpp"
#include "seqgan/tsne.hpp"

#include <nlohmann/json.hpp>

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace seqgan::pipeline {

enum class Arm { WithoutGans, WithGans, OnlyGans };

std::string_view to_string(Arm arm) noexcept;
/// "without_gans", "with_gans", "only_gans".
Arm arm_from_string(std::string_view name);
const std::vector<Arm>& all_arms();

enum class InputFormat { Fasta, Csv, Tsv };

std::string_view to_string(InputFormat format) noexcept;
InputFormat format_from_string(std::string_view name);
/// Guess from the file extension (.fa/.fasta/.faa, .csv, .tsv/.tab).
InputFormat format_from_path(const std::filesystem::path& path);

struct InputSpec {
  std::filesystem::path path;
  std::optional<InputFormat> format;  // unset: guessed from the extension
  seqio::Alphabet::Mode alphabet = seqio::Alphabet::Mode::Strict;
  bool skip_invalid = false;
  // FASTA
  char header_delimiter = '|';
  std::size_t id_field = 1;
  std::size_t label_field = 2;
  // CSV / TSV
  std::string seq_column = "sequence";
  std::string label_column = "label";
  std::optional<std::string> id_column;
  /// Dataset name in reports; defaults to the file stem.
  std::string dataset;

  std::string dataset_name() const;
};

/// Parses the file described by `spec`.
seqio::LabeledCorpus load_corpus(const InputSpec& spec, seqio::ParseStats* stats = nullptr);

/// Whether random Fourier features are applied to a method's embedding.
enum class RffMode { Auto, On, Off };

struct ExperimentConfig {
  InputSpec input;

  std::vector<featurize::Method> methods = {featurize::Method::Spike2Vec};
  featurize::KmerParams kmer;
  std::size_t pad_len = 0;
  bool skip_short = false;
  /// Auto applies RFF to Spike2Vec only.
  RffMode rff = RffMode::Auto;
  std::size_t rff_dim = 512;
  double rff_gamma = 0.0;

  std::vector<Arm> arms = all_arms();
  std::vector<classify::Family> classifiers = classify::all_families();
  classify::ClassifierConfig classifier;
  bool standardize = false;

  gan::GanConfig gan;
  /// GAN seed base; unset means the run seed.
  std::optional<std::uint64_t> gan_seed;
  /// Per-class synthetic fraction for the only-GANs training set.
  double only_gan_fraction = 0.10;

  std::size_t n_runs = 5;
  std::uint64_t base_seed = 0;
  double test_fraction = 0.30;

  std::filesystem::path output_dir = "seqgan-out";
  bool save_models = true;
  /// Also write t-SNE coordinates for each method's embedding.
  bool tsne = false;
  tsne::TsneConfig tsne_config;

  bool uses_rff(featurize::Method method) const noexcept;
  void validate() const;
  nlohmann::json to_json() const;

  /// Reads a TOML/INI-style file of `key = value` lines grouped under
  /// [input], [embedding], [experiment], [gan], [classifier] and [tsne].
  static ExperimentConfig from_file(const std::filesystem::path& path);
  static ExperimentConfig from_stream(std::istream& in, const std::filesystem::path& base_dir = {});
};

/// One (dataset, method, arm, classifier) cell of the report grid.
struct CellKey {
  std::string dataset;
  featurize::Method method = featurize::Method::Spike2Vec;
  Arm arm = Arm::WithoutGans;
  classify::Family classifier = classify::Family::NB;

  auto operator<=>(const CellKey&) const = default;
  std::string label() const;
};

struct Timing {
  double embed_s = 0.0;
  double gan_s = 0.0;
  double train_s = 0.0;
  double predict_s = 0.0;
};

struct RunRecord {
  CellKey cell;
  std::size_t run = 0;
  /// base_seed + run; role seeds are derived from it by tag.
  std::uint64_t seed = 0;
  std::optional<evaluate::MetricsReport> metrics;
  std::string error;
  Timing timing;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
  /// FNV-1a over the real test split (origins, labels, value bits) before
  /// any per-arm transform; equal across arms of one run.
  std::uint64_t test_digest = 0;

  bool ok() const noexcept { return metrics.has_value(); }
  nlohmann::json to_json() const;
};

struct CellSummary {
  CellKey cell;
  std::optional<evaluate::AggregateReport> aggregate;
  std::size_t n_failed = 0;
  std::string first_error;
};

struct ExperimentResult {
  std::vector<RunRecord> records;  // grid order, then run
  std::vector<CellSummary> cells;  // grid order
  nlohmann::json config;
  std::size_t corpus_size = 0;
  std::vector<std::string> class_names;
  std::vector<std::size_t> class_counts;
};

/// Runs the grid on `corpus`. Reports and models are written when
/// config.output_dir is non-empty.
ExperimentResult run_experiment(const ExperimentConfig& config, const seqio::LabeledCorpus& corpus);
/// Loads config.input and runs the grid.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Welch p-values of every arm against without_gans for the same method
/// and classifier, stored in each aggregate's p_values.
void attach_p_values(std::vector<CellSummary>& cells);

/// Aggregated rows: cell identity, runs, then mean and std of each metric in
/// table order, then p-values against without_gans and the first error.
/// Timings are left out so the file is a pure function of the inputs.
void write_report_csv(std::ostream& out, const ExperimentResult& result);
/// Config, corpus summary, aggregates and every run with timings.
nlohmann::json report_json(const ExperimentResult& result);
/// Writes report.csv, report.json and timings.csv into `directory`.
void emit_report(const ExperimentResult& result, const std::filesystem::path& directory);

struct SyntheticCorpusOptions {
  std::size_t min_length = 40;
  std::size_t max_length = 60;
  std::size_t motif_length = 6;
};

/// Class c (named "C00", "C01", ...) gets a random motif; every position of
/// its sequences takes the motif residue with probability motif_strength and
/// a uniform background residue otherwise.
seqio::LabeledCorpus generate_synthetic_corpus(const std::vector<std::size_t>& class_counts, double motif_strength,
                                               std::uint64_t seed, const SyntheticCorpusOptions& options = {});

}  // namespace seqgan::pipeline
