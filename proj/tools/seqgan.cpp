// seqgan command line: run experiment grids, generate synthetic corpora,
// embed corpora and compute t-SNE coordinates.

#include "seqgan/error.hpp"
#include "seqgan/featurize.hpp"
#include "seqgan/pipeline.hpp"
#include "seqgan/random.hpp"
#include "seqgan/tsne.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace seqgan;

/// Input flags shared by run, embed and tsne. Unset options leave the
/// config-file value alone.
struct InputFlags {
  std::optional<std::string> input;
  std::optional<std::string> format;
  std::optional<std::size_t> label_field;
  std::optional<std::string> alphabet;
  bool skip_invalid = false;
  std::optional<std::string> seq_column;
  std::optional<std::string> label_column;

  void add_to(CLI::App& app) {
    app.add_option("--input", input, "Sequence file (FASTA, CSV or TSV)");
    app.add_option("--format", format, "Input format")->check(CLI::IsMember({"fasta", "csv", "tsv"}));
    app.add_option("--label-field", label_field, "1-based FASTA header field holding the label");
    app.add_option("--alphabet", alphabet, "Residue alphabet")->check(CLI::IsMember({"strict", "extended"}));
    app.add_flag("--skip-invalid", skip_invalid, "Drop invalid records instead of failing");
    app.add_option("--seq-column", seq_column, "Sequence column of CSV/TSV input");
    app.add_option("--label-column", label_column, "Label column of CSV/TSV input");
  }

  void apply(pipeline::InputSpec& spec) const {
    if (input) spec.path = *input;
    if (format) spec.format = pipeline::format_from_string(*format);
    if (label_field) spec.label_field = *label_field;
    if (alphabet) {
      spec.alphabet = *alphabet == "strict" ? seqio::Alphabet::Mode::Strict : seqio::Alphabet::Mode::Extended;
    }
    if (skip_invalid) spec.skip_invalid = true;
    if (seq_column) spec.seq_column = *seq_column;
    if (label_column) spec.label_column = *label_column;
  }
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

pipeline::RffMode rff_mode(const std::string& s) {
  if (s == "on") return pipeline::RffMode::On;
  if (s == "off") return pipeline::RffMode::Off;
  return pipeline::RffMode::Auto;
}

featurize::FeatureMatrix embed_input(const pipeline::InputSpec& spec, featurize::Method method,
                                     const featurize::KmerParams& kmer, bool skip_short, pipeline::RffMode rff,
                                     const featurize::RffParams& rff_params) {
  seqio::ParseStats stats;
  const auto corpus = pipeline::load_corpus(spec, &stats);
  if (stats.skipped > 0) spdlog::warn("skipped {} invalid record(s)", stats.skipped);
  featurize::EmbeddingParams params;
  params.method = method;
  params.kmer = kmer;
  params.skip_short = skip_short;
  auto matrix = featurize::embed_corpus(corpus, params, seqio::Alphabet::of(spec.alphabet));
  const bool project = rff == pipeline::RffMode::On ||
                       (rff == pipeline::RffMode::Auto && method == featurize::Method::Spike2Vec);
  if (project) matrix = featurize::rff_project(matrix, rff_params);
  return matrix;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seqgan: sequence embeddings, per-class GAN oversampling and classifier evaluation"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  // --- run ---------------------------------------------------------------
  auto* run = app.add_subcommand("run", "Run an experiment grid and write reports");
  std::optional<std::string> config_path;
  InputFlags run_input;
  std::optional<std::string> methods, arms, classifiers, rff, output;
  std::optional<std::size_t> k, runs, gan_iterations, gan_batch;
  std::optional<double> gan_fraction, only_gan_fraction, test_fraction;
  std::optional<std::uint64_t> gan_seed, seed;
  bool standardize = false, skip_short = false, no_models = false, with_tsne = false;
  run->add_option("--config", config_path, "Experiment config (TOML/INI key = value)")->check(CLI::ExistingFile);
  run_input.add_to(*run);
  run->add_option("--methods", methods, "Comma list of spike2vec, pwm2vec, minimizer");
  run->add_option("--k", k, "k-mer length");
  run->add_flag("--skip-short", skip_short, "Skip sequences shorter than the k-mer window");
  run->add_option("--rff", rff, "Random Fourier features (default: on for Spike2Vec)")
      ->check(CLI::IsMember({"on", "off", "auto"}));
  run->add_option("--arms", arms, "Comma list of without_gans, with_gans, only_gans");
  run->add_option("--classifiers", classifiers, "Comma list of nb, mlp, knn, rf, lr, dt");
  run->add_flag("--standardize", standardize, "Z-score features using training statistics");
  run->add_option("--gan-fraction", gan_fraction, "Synthetic rows per class as a fraction of its count");
  run->add_option("--gan-iterations", gan_iterations, "GAN training iterations");
  run->add_option("--gan-batch", gan_batch, "GAN batch size");
  run->add_option("--gan-seed", gan_seed, "GAN seed base (default: run seed)");
  run->add_option("--only-gan-fraction", only_gan_fraction, "Synthetic fraction for the only-GANs arm");
  run->add_option("--runs", runs, "Number of runs");
  run->add_option("--seed", seed, "Base seed; run r uses seed + r");
  run->add_option("--test-fraction", test_fraction, "Stratified test fraction");
  run->add_option("--output", output, "Output directory");
  run->add_flag("--no-models", no_models, "Do not write model checkpoints");
  run->add_flag("--tsne", with_tsne, "Also write t-SNE coordinates per method");

  // --- synth-corpus -------------------------------------------------------
  auto* synth = app.add_subcommand("synth-corpus", "Write a synthetic labeled corpus");
  std::string counts_arg = "1000,50";
  double motif_strength = 0.7;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  std::string synth_format = "fasta";
  pipeline::SyntheticCorpusOptions synth_opts;
  synth->add_option("--counts", counts_arg, "Comma list of per-class counts")->capture_default_str();
  synth->add_option("--motif-strength", motif_strength, "Probability of a motif residue")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();
  synth->add_option("--min-length", synth_opts.min_length)->capture_default_str();
  synth->add_option("--max-length", synth_opts.max_length)->capture_default_str();
  synth->add_option("--motif-length", synth_opts.motif_length)->capture_default_str();
  synth->add_option("--format", synth_format)->check(CLI::IsMember({"fasta", "csv"}))->capture_default_str();
  synth->add_option("--out", synth_out, "Output file (stdout when omitted)");

  // --- embed --------------------------------------------------------------
  auto* embed = app.add_subcommand("embed", "Embed a corpus into a feature matrix");
  InputFlags embed_input_flags;
  std::string embed_method = "spike2vec";
  featurize::KmerParams embed_kmer;
  std::string embed_rff = "auto";
  featurize::RffParams embed_rff_params;
  bool embed_skip_short = false;
  std::string embed_out;
  std::optional<std::string> embed_csv;
  embed_input_flags.add_to(*embed);
  embed->add_option("--method", embed_method)->capture_default_str();
  embed->add_option("--k", embed_kmer.k)->capture_default_str();
  embed->add_option("--minimizer-k", embed_kmer.minimizer_k)->capture_default_str();
  embed->add_option("--minimizer-m", embed_kmer.minimizer_m)->capture_default_str();
  embed->add_option("--rff", embed_rff)->check(CLI::IsMember({"on", "off", "auto"}))->capture_default_str();
  embed->add_option("--rff-dim", embed_rff_params.dim)->capture_default_str();
  embed->add_option("--rff-gamma", embed_rff_params.gamma, "0 selects 1/input_dim")->capture_default_str();
  embed->add_option("--rff-seed", embed_rff_params.seed)->capture_default_str();
  embed->add_flag("--skip-short", embed_skip_short);
  embed->add_option("--out", embed_out, "Binary feature matrix output")->required();
  embed->add_option("--csv", embed_csv, "Also export as CSV");

  // --- tsne ---------------------------------------------------------------
  auto* tsne_cmd = app.add_subcommand("tsne", "t-SNE coordinates of a feature matrix or corpus");
  std::optional<std::string> tsne_matrix;
  InputFlags tsne_input_flags;
  std::string tsne_method = "spike2vec";
  std::size_t tsne_k = 3;
  std::string tsne_rff = "auto";
  tsne::TsneConfig tsne_cfg;
  std::string tsne_out;
  tsne_cmd->add_option("--matrix", tsne_matrix, "Feature matrix written by `seqgan embed`");
  tsne_input_flags.add_to(*tsne_cmd);
  tsne_cmd->add_option("--method", tsne_method)->capture_default_str();
  tsne_cmd->add_option("--k", tsne_k)->capture_default_str();
  tsne_cmd->add_option("--rff", tsne_rff)->check(CLI::IsMember({"on", "off", "auto"}))->capture_default_str();
  tsne_cmd->add_option("--perplexity", tsne_cfg.perplexity)->capture_default_str();
  tsne_cmd->add_option("--iterations", tsne_cfg.iterations)->capture_default_str();
  tsne_cmd->add_option("--learning-rate", tsne_cfg.learning_rate)->capture_default_str();
  tsne_cmd->add_option("--max-points", tsne_cfg.max_points)->capture_default_str();
  tsne_cmd->add_option("--seed", tsne_cfg.seed)->capture_default_str();
  tsne_cmd->add_option("--out", tsne_out, "Coordinates CSV; the KL trace goes to <out>.kl_trace.csv")->required();

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*run) {
      auto cfg = config_path ? pipeline::ExperimentConfig::from_file(*config_path) : pipeline::ExperimentConfig{};
      run_input.apply(cfg.input);
      if (methods) {
        cfg.methods.clear();
        for (const auto& m : split_list(*methods)) cfg.methods.push_back(featurize::method_from_string(m));
      }
      if (arms) {
        cfg.arms.clear();
        for (const auto& a : split_list(*arms)) cfg.arms.push_back(pipeline::arm_from_string(a));
      }
      if (classifiers) {
        cfg.classifiers.clear();
        for (const auto& f : split_list(*classifiers)) cfg.classifiers.push_back(classify::family_from_string(f));
      }
      if (k) cfg.kmer.k = *k;
      if (skip_short) cfg.skip_short = true;
      if (rff) cfg.rff = rff_mode(*rff);
      if (standardize) cfg.standardize = true;
      if (gan_fraction) cfg.gan.gan_fraction = *gan_fraction;
      if (gan_iterations) cfg.gan.iterations = *gan_iterations;
      if (gan_batch) cfg.gan.batch_size = *gan_batch;
      if (gan_seed) cfg.gan_seed = *gan_seed;
      if (only_gan_fraction) cfg.only_gan_fraction = *only_gan_fraction;
      if (runs) cfg.n_runs = *runs;
      if (seed) cfg.base_seed = *seed;
      if (test_fraction) cfg.test_fraction = *test_fraction;
      if (output) cfg.output_dir = *output;
      if (no_models) cfg.save_models = false;
      if (with_tsne) cfg.tsne = true;

      const auto result = pipeline::run_experiment(cfg);
      std::size_t failed = 0;
      for (const auto& cell : result.cells) failed += cell.aggregate ? 0 : 1;
      std::cout << "wrote " << result.cells.size() << " cells (" << failed << " failed) to "
                << cfg.output_dir.string() << "/report.csv\n";
      return failed == result.cells.size() ? 1 : 0;
    }

    if (*synth) {
      std::vector<std::size_t> counts;
      for (const auto& c : split_list(counts_arg)) counts.push_back(std::stoul(c));
      const auto corpus = pipeline::generate_synthetic_corpus(counts, motif_strength, synth_seed, synth_opts);
      std::ofstream file;
      if (!synth_out.empty()) {
        file.open(synth_out);
        if (!file) throw IoError("cannot write '" + synth_out + "'");
      }
      std::ostream& out = synth_out.empty() ? std::cout : file;
      if (synth_format == "fasta") {
        seqio::write_fasta(out, corpus);
      } else {
        out << "id,sequence,label\n";
        for (const auto& r : corpus.records()) out << r.id << ',' << r.residues << ',' << r.label << '\n';
      }
      return 0;
    }

    if (*embed) {
      pipeline::InputSpec spec;
      embed_input_flags.apply(spec);
      const auto matrix = embed_input(spec, featurize::method_from_string(embed_method), embed_kmer, embed_skip_short,
                                      rff_mode(embed_rff), embed_rff_params);
      matrix.save(embed_out);
      if (embed_csv) {
        std::ofstream csv(*embed_csv);
        matrix.write_csv(csv);
        if (!csv) throw IoError("cannot write '" + *embed_csv + "'");
      }
      std::cout << "embedded " << matrix.rows() << " x " << matrix.dim() << " -> " << embed_out << '\n';
      return 0;
    }

    if (*tsne_cmd) {
      featurize::FeatureMatrix matrix;
      if (tsne_matrix) {
        matrix = featurize::FeatureMatrix::load(*tsne_matrix);
      } else {
        pipeline::InputSpec spec;
        tsne_input_flags.apply(spec);
        featurize::KmerParams kmer;
        kmer.k = tsne_k;
        matrix = embed_input(spec, featurize::method_from_string(tsne_method), kmer, false, rff_mode(tsne_rff),
                             featurize::RffParams{512, 0.0, derive_seed(tsne_cfg.seed, "rff")});
      }
      const auto emb = tsne::fit_tsne(matrix, tsne_cfg);
      std::ofstream csv(tsne_out);
      emb.write_csv(csv, matrix.class_names);
      std::ofstream kl(tsne_out + ".kl_trace.csv");
      emb.write_kl_trace(kl);
      if (!csv || !kl) throw IoError("cannot write '" + tsne_out + "'");
      std::cout << "t-SNE of " << emb.coordinates.rows() << " points -> " << tsne_out << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}
