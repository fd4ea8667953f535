#include "seqgan/pipeline.hpp"

#include "seqgan/error.hpp"
#include "seqgan/parallel.hpp"
#include "seqgan/random.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace seqgan::pipeline {

namespace fs = std::filesystem;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

// ---------------------------------------------------------------------------
// Enumerations

std::string_view to_string(Arm arm) noexcept {
  switch (arm) {
    case Arm::WithoutGans: return "without_gans";
    case Arm::WithGans: return "with_gans";
    case Arm::OnlyGans: return "only_gans";
  }
  return "?";
}

Arm arm_from_string(std::string_view name) {
  const auto n = lower(name);
  for (Arm arm : all_arms()) {
    if (n == to_string(arm)) return arm;
  }
  throw ConfigError("unknown arm '" + std::string(name) + "' (expected without_gans, with_gans or only_gans)");
}

const std::vector<Arm>& all_arms() {
  static const std::vector<Arm> arms = {Arm::WithoutGans, Arm::WithGans, Arm::OnlyGans};
  return arms;
}

std::string_view to_string(InputFormat format) noexcept {
  switch (format) {
    case InputFormat::Fasta: return "fasta";
    case InputFormat::Csv: return "csv";
    case InputFormat::Tsv: return "tsv";
  }
  return "?";
}

InputFormat format_from_string(std::string_view name) {
  const auto n = lower(name);
  if (n == "fasta" || n == "fa") return InputFormat::Fasta;
  if (n == "csv") return InputFormat::Csv;
  if (n == "tsv") return InputFormat::Tsv;
  throw ConfigError("unknown input format '" + std::string(name) + "' (expected fasta, csv or tsv)");
}

InputFormat format_from_path(const fs::path& path) {
  const auto ext = lower(path.extension().string());
  if (ext == ".fa" || ext == ".fasta" || ext == ".faa" || ext == ".fas") return InputFormat::Fasta;
  if (ext == ".csv") return InputFormat::Csv;
  if (ext == ".tsv" || ext == ".tab") return InputFormat::Tsv;
  throw ConfigError("cannot infer the input format of '" + path.string() + "'; set it explicitly");
}

// ---------------------------------------------------------------------------
// Input

std::string InputSpec::dataset_name() const {
  if (!dataset.empty()) return dataset;
  if (!path.empty()) return path.stem().string();
  return "corpus";
}

seqio::LabeledCorpus load_corpus(const InputSpec& spec, seqio::ParseStats* stats) {
  if (spec.path.empty()) throw ConfigError("no input path given");
  std::ifstream in(spec.path, std::ios::binary);
  if (!in) throw IoError("cannot open input '" + spec.path.string() + "'");
  const auto format = spec.format.value_or(format_from_path(spec.path));
  const auto alphabet = seqio::Alphabet::of(spec.alphabet);
  if (format == InputFormat::Fasta) {
    seqio::FastaOptions opts;
    opts.alphabet = alphabet;
    opts.header_delimiter = spec.header_delimiter;
    opts.id_field = spec.id_field;
    opts.label_field = spec.label_field;
    opts.skip_invalid = spec.skip_invalid;
    return seqio::parse_fasta(in, opts, stats);
  }
  seqio::DelimitedOptions opts;
  opts.alphabet = alphabet;
  opts.seq_column = spec.seq_column;
  opts.label_column = spec.label_column;
  opts.id_column = spec.id_column;
  opts.delimiter = format == InputFormat::Csv ? ',' : '\t';
  opts.skip_invalid = spec.skip_invalid;
  return seqio::parse_delimited(in, opts, stats);
}

// ---------------------------------------------------------------------------
// Config

bool ExperimentConfig::uses_rff(featurize::Method method) const noexcept {
  switch (rff) {
    case RffMode::On: return true;
    case RffMode::Off: return false;
    case RffMode::Auto: return method == featurize::Method::Spike2Vec;
  }
  return false;
}

void ExperimentConfig::validate() const {
  if (methods.empty()) throw ConfigError("at least one embedding method is required");
  if (arms.empty()) throw ConfigError("at least one arm is required");
  if (classifiers.empty()) throw ConfigError("at least one classifier is required");
  if (n_runs < 1) throw ConfigError("runs must be at least 1");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
  if (!(only_gan_fraction > 0.0 && only_gan_fraction <= 1.0)) throw ConfigError("only_gan_fraction must lie in (0, 1]");
  if (rff_dim == 0) throw ConfigError("rff_dim must be positive");
  if (rff_gamma < 0.0) throw ConfigError("rff_gamma must be non-negative");
  kmer.validate();
  classifier.validate();
  gan.validate();
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["input"] = {{"path", input.path.string()},
                {"format", input.format ? std::string(to_string(*input.format)) : std::string("auto")},
                {"alphabet", input.alphabet == seqio::Alphabet::Mode::Strict ? "strict" : "extended"},
                {"skip_invalid", input.skip_invalid},
                {"label_field", input.label_field},
                {"dataset", input.dataset_name()}};
  std::vector<std::string> names;
  for (auto m : methods) names.emplace_back(featurize::to_string(m));
  j["embedding"] = {{"methods", names},
                    {"k", kmer.k},
                    {"minimizer_k", kmer.minimizer_k},
                    {"minimizer_m", kmer.minimizer_m},
                    {"pad_len", pad_len},
                    {"skip_short", skip_short},
                    {"rff", rff == RffMode::Auto ? "auto" : rff == RffMode::On ? "on" : "off"},
                    {"rff_dim", rff_dim},
                    {"rff_gamma", rff_gamma}};
  names.clear();
  for (auto a : arms) names.emplace_back(to_string(a));
  std::vector<std::string> families;
  for (auto f : classifiers) families.emplace_back(classify::to_string(f));
  j["experiment"] = {{"arms", names},           {"classifiers", families},
                     {"runs", n_runs},          {"seed", base_seed},
                     {"test_fraction", test_fraction}, {"standardize", standardize}};
  j["gan"] = gan.to_json();
  j["gan"]["only_fraction"] = only_gan_fraction;
  if (gan_seed) j["gan"]["seed"] = *gan_seed;
  j["classifier"] = {{"knn_k", classifier.knn_k},
                     {"rf_trees", classifier.rf_trees},
                     {"rf_max_features", classifier.rf_max_features},
                     {"rf_bootstrap", classifier.rf_bootstrap},
                     {"dt_max_depth", classifier.dt_max_depth ? nlohmann::json(*classifier.dt_max_depth) : nlohmann::json()},
                     {"mlp_hidden", classifier.mlp_hidden},
                     {"mlp_epochs", classifier.mlp_epochs},
                     {"mlp_batch", classifier.mlp_batch},
                     {"mlp_lr", classifier.mlp_lr},
                     {"lr_epochs", classifier.lr_epochs},
                     {"lr_rate", classifier.lr_rate},
                     {"nb_var_smoothing", classifier.nb_var_smoothing}};
  return j;
}

namespace {

std::string unquote(std::string_view raw) {
  auto v = trim(raw);
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) {
    return v.substr(1, v.size() - 2);
  }
  return v;
}

std::vector<std::string> parse_list(std::string_view raw) {
  auto v = trim(raw);
  if (!v.empty() && v.front() == '[') {
    if (v.back() != ']') throw ConfigError("unterminated list '" + v + "'");
    v = v.substr(1, v.size() - 2);
  }
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto cleaned = unquote(item);
    if (!cleaned.empty()) out.push_back(cleaned);
  }
  return out;
}

bool parse_bool(std::string_view raw) {
  const auto v = lower(unquote(raw));
  if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "off" || v == "no" || v == "0") return false;
  throw ConfigError("expected a boolean, got '" + std::string(raw) + "'");
}

std::uint64_t parse_uint(std::string_view raw) {
  const auto v = unquote(raw);
  std::uint64_t out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) {
    throw ConfigError("expected a non-negative integer, got '" + std::string(raw) + "'");
  }
  return out;
}

std::size_t parse_size(std::string_view raw) { return static_cast<std::size_t>(parse_uint(raw)); }

double parse_double(std::string_view raw) {
  const auto v = unquote(raw);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (v.empty() || used != v.size()) throw ConfigError("expected a number, got '" + std::string(raw) + "'");
  return out;
}

std::vector<std::size_t> parse_sizes(std::string_view raw) {
  std::vector<std::size_t> out;
  for (const auto& item : parse_list(raw)) out.push_back(parse_size(item));
  return out;
}

char parse_char(std::string_view raw) {
  const auto v = unquote(raw);
  if (v == "\\t") return '\t';
  if (v.size() != 1) throw ConfigError("expected a single character, got '" + std::string(raw) + "'");
  return v[0];
}

RffMode parse_rff(std::string_view raw) {
  const auto v = lower(unquote(raw));
  if (v == "auto") return RffMode::Auto;
  return parse_bool(v) ? RffMode::On : RffMode::Off;
}

/// Drops '#' comments outside quotes so TOML-style files read as INI.
std::string strip_comments(std::istream& in) {
  std::string out;
  std::string line;
  while (std::getline(in, line)) {
    char quote = 0;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (quote) {
        if (c == quote) quote = 0;
      } else if (c == '"' || c == '\'') {
        quote = c;
      } else if (c == '#') {
        line.resize(i);
        break;
      }
    }
    out += line;
    out += '\n';
  }
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_stream(std::istream& in, const fs::path& base_dir) {
  ExperimentConfig cfg;
  using Setter = std::function<void(const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"input.path",
       [&](const std::string& v) {
         fs::path p = unquote(v);
         cfg.input.path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
       }},
      {"input.format", [&](const std::string& v) { cfg.input.format = format_from_string(unquote(v)); }},
      {"input.alphabet",
       [&](const std::string& v) {
         const auto a = lower(unquote(v));
         if (a == "strict") {
           cfg.input.alphabet = seqio::Alphabet::Mode::Strict;
         } else if (a == "extended") {
           cfg.input.alphabet = seqio::Alphabet::Mode::Extended;
         } else {
           throw ConfigError("alphabet must be strict or extended");
         }
       }},
      {"input.skip_invalid", [&](const std::string& v) { cfg.input.skip_invalid = parse_bool(v); }},
      {"input.header_delimiter", [&](const std::string& v) { cfg.input.header_delimiter = parse_char(v); }},
      {"input.id_field", [&](const std::string& v) { cfg.input.id_field = parse_size(v); }},
      {"input.label_field", [&](const std::string& v) { cfg.input.label_field = parse_size(v); }},
      {"input.seq_column", [&](const std::string& v) { cfg.input.seq_column = unquote(v); }},
      {"input.label_column", [&](const std::string& v) { cfg.input.label_column = unquote(v); }},
      {"input.id_column", [&](const std::string& v) { cfg.input.id_column = unquote(v); }},
      {"input.dataset", [&](const std::string& v) { cfg.input.dataset = unquote(v); }},

      {"embedding.methods",
       [&](const std::string& v) {
         cfg.methods.clear();
         for (const auto& m : parse_list(v)) cfg.methods.push_back(featurize::method_from_string(m));
       }},
      {"embedding.k", [&](const std::string& v) { cfg.kmer.k = parse_size(v); }},
      {"embedding.minimizer_k", [&](const std::string& v) { cfg.kmer.minimizer_k = parse_size(v); }},
      {"embedding.minimizer_m", [&](const std::string& v) { cfg.kmer.minimizer_m = parse_size(v); }},
      {"embedding.pad_len", [&](const std::string& v) { cfg.pad_len = parse_size(v); }},
      {"embedding.skip_short", [&](const std::string& v) { cfg.skip_short = parse_bool(v); }},
      {"embedding.rff", [&](const std::string& v) { cfg.rff = parse_rff(v); }},
      {"embedding.rff_dim", [&](const std::string& v) { cfg.rff_dim = parse_size(v); }},
      {"embedding.rff_gamma", [&](const std::string& v) { cfg.rff_gamma = parse_double(v); }},

      {"experiment.arms",
       [&](const std::string& v) {
         cfg.arms.clear();
         for (const auto& a : parse_list(v)) cfg.arms.push_back(arm_from_string(a));
       }},
      {"experiment.classifiers",
       [&](const std::string& v) {
         cfg.classifiers.clear();
         for (const auto& f : parse_list(v)) cfg.classifiers.push_back(classify::family_from_string(f));
       }},
      {"experiment.runs", [&](const std::string& v) { cfg.n_runs = parse_size(v); }},
      {"experiment.seed", [&](const std::string& v) { cfg.base_seed = parse_uint(v); }},
      {"experiment.test_fraction", [&](const std::string& v) { cfg.test_fraction = parse_double(v); }},
      {"experiment.output",
       [&](const std::string& v) {
         fs::path p = unquote(v);
         cfg.output_dir = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
       }},
      {"experiment.save_models", [&](const std::string& v) { cfg.save_models = parse_bool(v); }},
      {"experiment.standardize", [&](const std::string& v) { cfg.standardize = parse_bool(v); }},
      {"experiment.tsne", [&](const std::string& v) { cfg.tsne = parse_bool(v); }},

      {"gan.iterations", [&](const std::string& v) { cfg.gan.iterations = parse_size(v); }},
      {"gan.batch", [&](const std::string& v) { cfg.gan.batch_size = parse_size(v); }},
      {"gan.noise_dim", [&](const std::string& v) { cfg.gan.noise_dim = parse_size(v); }},
      {"gan.fraction", [&](const std::string& v) { cfg.gan.gan_fraction = parse_double(v); }},
      {"gan.only_fraction", [&](const std::string& v) { cfg.only_gan_fraction = parse_double(v); }},
      {"gan.lr", [&](const std::string& v) { cfg.gan.lr = parse_double(v); }},
      {"gan.beta1", [&](const std::string& v) { cfg.gan.beta1 = parse_double(v); }},
      {"gan.beta2", [&](const std::string& v) { cfg.gan.beta2 = parse_double(v); }},
      {"gan.hidden", [&](const std::string& v) { cfg.gan.hidden = parse_sizes(v); }},
      {"gan.seed", [&](const std::string& v) { cfg.gan_seed = parse_uint(v); }},

      {"classifier.knn_k", [&](const std::string& v) { cfg.classifier.knn_k = parse_size(v); }},
      {"classifier.rf_trees", [&](const std::string& v) { cfg.classifier.rf_trees = parse_size(v); }},
      {"classifier.rf_max_features", [&](const std::string& v) { cfg.classifier.rf_max_features = parse_size(v); }},
      {"classifier.rf_bootstrap", [&](const std::string& v) { cfg.classifier.rf_bootstrap = parse_bool(v); }},
      {"classifier.dt_max_depth",
       [&](const std::string& v) {
         const auto s = lower(unquote(v));
         if (s == "none" || s == "unlimited" || s.empty()) {
           cfg.classifier.dt_max_depth.reset();
         } else {
           cfg.classifier.dt_max_depth = parse_size(s);
         }
       }},
      {"classifier.mlp_hidden", [&](const std::string& v) { cfg.classifier.mlp_hidden = parse_sizes(v); }},
      {"classifier.mlp_epochs", [&](const std::string& v) { cfg.classifier.mlp_epochs = parse_size(v); }},
      {"classifier.mlp_batch", [&](const std::string& v) { cfg.classifier.mlp_batch = parse_size(v); }},
      {"classifier.mlp_lr", [&](const std::string& v) { cfg.classifier.mlp_lr = parse_double(v); }},
      {"classifier.mlp_patience", [&](const std::string& v) { cfg.classifier.mlp_patience = parse_size(v); }},
      {"classifier.mlp_tol", [&](const std::string& v) { cfg.classifier.mlp_tol = parse_double(v); }},
      {"classifier.lr_epochs", [&](const std::string& v) { cfg.classifier.lr_epochs = parse_size(v); }},
      {"classifier.lr_rate", [&](const std::string& v) { cfg.classifier.lr_rate = parse_double(v); }},
      {"classifier.lr_tol", [&](const std::string& v) { cfg.classifier.lr_tol = parse_double(v); }},
      {"classifier.nb_var_smoothing", [&](const std::string& v) { cfg.classifier.nb_var_smoothing = parse_double(v); }},

      {"tsne.perplexity", [&](const std::string& v) { cfg.tsne_config.perplexity = parse_double(v); }},
      {"tsne.iterations", [&](const std::string& v) { cfg.tsne_config.iterations = parse_size(v); }},
      {"tsne.learning_rate", [&](const std::string& v) { cfg.tsne_config.learning_rate = parse_double(v); }},
      {"tsne.early_exaggeration", [&](const std::string& v) { cfg.tsne_config.early_exaggeration = parse_double(v); }},
      {"tsne.exaggeration_iterations",
       [&](const std::string& v) { cfg.tsne_config.exaggeration_iterations = parse_size(v); }},
      {"tsne.max_points", [&](const std::string& v) { cfg.tsne_config.max_points = parse_size(v); }},
      {"tsne.seed", [&](const std::string& v) { cfg.tsne_config.seed = parse_uint(v); }},
  };

  std::istringstream cleaned(strip_comments(in));
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(cleaned, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ParseError("config: " + e.message(), e.line());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config key '" + section + "' must sit inside a [section]");
    for (const auto& [key, value] : body) {
      const auto full = section + "." + key;
      const auto it = setters.find(full);
      if (it == setters.end()) throw ConfigError("unknown config key '" + full + "'");
      try {
        it->second(value.data());
      } catch (const ConfigError& e) {
        throw ConfigError(full + ": " + e.what());
      }
    }
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  return from_stream(in, path.parent_path());
}

// ---------------------------------------------------------------------------
// Records

std::string CellKey::label() const {
  return dataset + "/" + std::string(featurize::to_string(method)) + "/" + std::string(to_string(arm)) + "/" +
         std::string(classify::to_string(classifier));
}

nlohmann::json RunRecord::to_json() const {
  nlohmann::json j;
  j["dataset"] = cell.dataset;
  j["method"] = featurize::to_string(cell.method);
  j["arm"] = to_string(cell.arm);
  j["classifier"] = classify::to_string(cell.classifier);
  j["run"] = run;
  j["seed"] = seed;
  j["metrics"] = metrics ? metrics->to_json() : nlohmann::json();
  j["error"] = error.empty() ? nlohmann::json() : nlohmann::json(error);
  j["timing"] = {{"embed_s", timing.embed_s},
                 {"gan_s", timing.gan_s},
                 {"train_s", timing.train_s},
                 {"predict_s", timing.predict_s}};
  j["train_rows"] = train_rows;
  j["test_rows"] = test_rows;
  j["test_digest"] = test_digest;
  return j;
}

// ---------------------------------------------------------------------------
// Experiment grid

namespace {

std::uint64_t split_digest(const featurize::FeatureMatrix& test) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t word) {
    for (int b = 0; b < 8; ++b) {
      h ^= (word >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  for (std::size_t i = 0; i < test.rows(); ++i) {
    mix(static_cast<std::uint64_t>(test.origin[i]));
    mix(static_cast<std::uint64_t>(test.labels[i]));
    for (Eigen::Index j = 0; j < test.values.cols(); ++j) {
      mix(std::bit_cast<std::uint64_t>(test.values(static_cast<Eigen::Index>(i), j)));
    }
  }
  return h;
}

struct RunContext {
  const ExperimentConfig& config;
  fs::path model_dir;  // empty: do not persist
};

/// Rows of `train` that are real must never be test rows.
void check_isolation(const featurize::FeatureMatrix& train, const std::vector<std::size_t>& test_origins) {
  for (const auto origin : train.origin) {
    if (origin == featurize::FeatureMatrix::kSynthetic) continue;
    if (std::binary_search(test_origins.begin(), test_origins.end(), static_cast<std::size_t>(origin))) {
      throw std::logic_error("test row " + std::to_string(origin) + " reached a training set");
    }
  }
}

}  // namespace

void attach_p_values(std::vector<CellSummary>& cells) {
  std::map<std::tuple<std::string, featurize::Method, classify::Family>, const evaluate::AggregateReport*> baseline;
  for (const auto& c : cells) {
    if (c.cell.arm == Arm::WithoutGans && c.aggregate) {
      baseline[{c.cell.dataset, c.cell.method, c.cell.classifier}] = &*c.aggregate;
    }
  }
  for (auto& c : cells) {
    if (c.cell.arm == Arm::WithoutGans || !c.aggregate) continue;
    const auto it = baseline.find({c.cell.dataset, c.cell.method, c.cell.classifier});
    if (it == baseline.end() || it->second->n_runs < 2 || c.aggregate->n_runs < 2) continue;
    c.aggregate->p_values = evaluate::compare(*c.aggregate, *it->second);
  }
}

ExperimentResult run_experiment(const ExperimentConfig& config, const seqio::LabeledCorpus& corpus) {
  config.validate();
  if (corpus.size() == 0) throw ValidationError("empty corpus");

  const auto dataset = config.input.dataset_name();
  const auto alphabet = seqio::Alphabet::of(config.input.alphabet);

  ExperimentResult result;
  result.config = config.to_json();
  result.corpus_size = corpus.size();
  result.class_names = corpus.class_names();
  result.class_counts = corpus.class_counts();

  // Grid order: method, arm, classifier, run.
  const std::size_t per_method = config.arms.size() * config.classifiers.size();
  std::vector<CellKey> keys;
  for (auto method : config.methods) {
    for (auto arm : config.arms) {
      for (auto family : config.classifiers) keys.push_back({dataset, method, arm, family});
    }
  }
  result.records.resize(keys.size() * config.n_runs);
  auto record_at = [&](std::size_t cell, std::size_t run) -> RunRecord& {
    return result.records[cell * config.n_runs + run];
  };
  for (std::size_t c = 0; c < keys.size(); ++c) {
    for (std::size_t r = 0; r < config.n_runs; ++r) {
      auto& rec = record_at(c, r);
      rec.cell = keys[c];
      rec.run = r;
      rec.seed = config.base_seed + r;
    }
  }

  const bool persist = !config.output_dir.empty();
  if (persist) {
    std::error_code ec;
    fs::create_directories(config.output_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + config.output_dir.string() + "': " + ec.message());
  }

  for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
    const auto method = config.methods[mi];
    const std::size_t cell_base = mi * per_method;
    auto fail_cells = [&](std::size_t run_lo, std::size_t run_hi, std::optional<Arm> arm, const std::string& what) {
      for (std::size_t c = cell_base; c < cell_base + per_method; ++c) {
        if (arm && keys[c].arm != *arm) continue;
        for (std::size_t r = run_lo; r < run_hi; ++r) {
          auto& rec = record_at(c, r);
          if (rec.error.empty() && !rec.ok()) rec.error = what;
        }
      }
    };

    // The embedding itself does not depend on the run; compute it once.
    featurize::FeatureMatrix embedded;
    seqio::LabeledCorpus kept;
    double embed_s = 0.0;
    try {
      featurize::EmbeddingParams params;
      params.method = method;
      params.kmer = config.kmer;
      params.pad_len = config.pad_len;
      params.skip_short = config.skip_short;
      featurize::EmbedStats stats;
      const auto start = std::chrono::steady_clock::now();
      embedded = featurize::embed_corpus(corpus, params, alphabet, &stats);
      embed_s = seconds_since(start);
      if (stats.skipped == 0) {
        kept = corpus;
      } else {
        std::vector<seqio::SequenceRecord> records;
        for (auto origin : embedded.origin) records.push_back(corpus[static_cast<std::size_t>(origin)]);
        kept = seqio::LabeledCorpus(std::move(records));
      }
    } catch (const std::exception& e) {
      spdlog::error("{}: embedding failed: {}", featurize::to_string(method), e.what());
      fail_cells(0, config.n_runs, std::nullopt, std::string("embedding: ") + e.what());
      continue;
    }

    if (config.tsne && persist) {
      try {
        auto features = embedded;
        if (config.uses_rff(method)) {
          features = featurize::rff_project(embedded, {config.rff_dim, config.rff_gamma,
                                                       derive_seed(config.base_seed, "rff")});
        }
        auto tcfg = config.tsne_config;
        if (tcfg.seed == 0) tcfg.seed = derive_seed(config.base_seed, "tsne");
        const auto emb = tsne::fit_tsne(features, tcfg);
        const auto stem = config.output_dir / ("tsne_" + std::string(featurize::to_string(method)));
        std::ofstream csv(stem.string() + ".csv");
        emb.write_csv(csv, embedded.class_names);
        std::ofstream kl(stem.string() + ".kl_trace.csv");
        emb.write_kl_trace(kl);
        if (!csv || !kl) throw IoError("cannot write t-SNE output '" + stem.string() + "'");
      } catch (const std::exception& e) {
        spdlog::error("{}: t-SNE failed: {}", featurize::to_string(method), e.what());
      }
    }

    const bool needs_gans = std::any_of(config.arms.begin(), config.arms.end(),
                                        [](Arm a) { return a != Arm::WithoutGans; });

    for (std::size_t r = 0; r < config.n_runs; ++r) {
      const std::uint64_t seed = config.base_seed + r;
      const fs::path run_dir = persist && config.save_models
                                   ? config.output_dir / "models" / std::string(featurize::to_string(method)) /
                                         ("run" + std::to_string(r))
                                   : fs::path();
      if (!run_dir.empty()) fs::create_directories(run_dir);

      seqio::SplitIndices split;
      try {
        split = seqio::stratified_split(kept, config.test_fraction, derive_seed(seed, "split"));
      } catch (const std::exception& e) {
        fail_cells(r, r + 1, std::nullopt, std::string("split: ") + e.what());
        continue;
      }
      const auto train = embedded.select(split.train);
      const auto test = embedded.select(split.test);
      std::vector<std::size_t> test_origins;
      for (auto o : test.origin) {
        if (o == featurize::FeatureMatrix::kSynthetic) throw std::logic_error("synthetic row in a test split");
        test_origins.push_back(static_cast<std::size_t>(o));
      }
      std::sort(test_origins.begin(), test_origins.end());
      const std::uint64_t digest = split_digest(test);

      // GANs are trained once per (method, run) and shared by both GAN arms.
      std::map<Label, gan::GanModel> gans;
      gan::GanConfig gan_cfg = config.gan;
      gan_cfg.seed = derive_seed(config.gan_seed ? *config.gan_seed + r : seed, "gan");
      double gan_s = 0.0;
      if (needs_gans) {
        try {
          const auto start = std::chrono::steady_clock::now();
          gans = gan::train_class_gans(train, gan_cfg, test_origins);
          gan_s = seconds_since(start);
          if (!run_dir.empty()) {
            for (const auto& [label, model] : gans) model.save(run_dir / "gan", "class" + std::to_string(label));
          }
        } catch (const std::exception& e) {
          spdlog::error("{} run {}: GAN training failed: {}", featurize::to_string(method), r, e.what());
          for (Arm arm : {Arm::WithGans, Arm::OnlyGans}) fail_cells(r, r + 1, arm, std::string("gan: ") + e.what());
        }
      }

      std::optional<featurize::RffProjector> projector;
      if (config.uses_rff(method)) {
        projector.emplace(embedded.dim(), featurize::RffParams{config.rff_dim, config.rff_gamma, derive_seed(seed, "rff")});
      }

      struct ArmData {
        Arm arm;
        featurize::FeatureMatrix train;
        Matrix test_x;
        std::string error;
      };
      std::vector<ArmData> arm_data;
      for (Arm arm : config.arms) {
        ArmData data{arm, {}, {}, {}};
        try {
          if (arm != Arm::WithoutGans && gans.empty()) {
            arm_data.push_back(std::move(data));  // already failed above
            continue;
          }
          switch (arm) {
            case Arm::WithoutGans: data.train = train; break;
            case Arm::WithGans: data.train = gan::augment_training_set(train, gans, gan_cfg); break;
            case Arm::OnlyGans:
              data.train = gan::only_gan_training_set(gans, train.class_counts(), gan_cfg, train,
                                                      config.only_gan_fraction);
              break;
          }
          check_isolation(data.train, test_origins);
          data.test_x = test.values;
          if (projector) {
            data.train.values = projector->project(data.train.values);
            data.test_x = projector->project(data.test_x);
          }
          if (config.standardize) {
            const classify::Standardizer scaler(data.train.values);
            data.train.values = scaler.apply(data.train.values);
            data.test_x = scaler.apply(data.test_x);
          }
        } catch (const std::exception& e) {
          data.error = std::string(to_string(arm)) + " training set: " + e.what();
        }
        arm_data.push_back(std::move(data));
      }

      // Classifier cells for this (method, run) are independent jobs.
      parallel_for(per_method, [&](std::size_t j) {
        const std::size_t c = cell_base + j;
        auto& rec = record_at(c, r);
        rec.test_digest = digest;
        if (!rec.error.empty()) return;
        const auto arm_index = static_cast<std::size_t>(
            std::find(config.arms.begin(), config.arms.end(), keys[c].arm) - config.arms.begin());
        const auto& data = arm_data[arm_index];
        rec.timing.embed_s = embed_s;
        rec.timing.gan_s = keys[c].arm == Arm::WithoutGans ? 0.0 : gan_s;
        if (!data.error.empty()) {
          rec.error = data.error;
          return;
        }
        try {
          auto ccfg = config.classifier;
          ccfg.seed = derive_seed(seed, "classifier/" + std::string(classify::to_string(keys[c].classifier)));
          rec.train_rows = data.train.rows();
          rec.test_rows = static_cast<std::size_t>(data.test_x.rows());

          auto start = std::chrono::steady_clock::now();
          const auto model = classify::fit(keys[c].classifier, data.train, ccfg);
          rec.timing.train_s = seconds_since(start);

          start = std::chrono::steady_clock::now();
          const Matrix proba = model->predict_proba(data.test_x);
          rec.timing.predict_s = seconds_since(start);

          auto metrics = evaluate::compute_metrics(test.labels, classify::argmax_rows(proba), proba);
          metrics.train_time_s = rec.timing.train_s;
          metrics.predict_time_s = rec.timing.predict_s;
          metrics.run_seed = seed;
          rec.metrics = metrics;

          if (!run_dir.empty()) {
            model->save(run_dir / (std::string(to_string(keys[c].arm)) + "." +
                                   std::string(classify::to_string(keys[c].classifier)) + ".model"));
          }
        } catch (const std::exception& e) {
          rec.metrics.reset();
          rec.error = e.what();
        }
      });

      for (std::size_t j = 0; j < per_method; ++j) {
        const auto& rec = record_at(cell_base + j, r);
        if (!rec.error.empty()) spdlog::warn("{} run {}: {}", rec.cell.label(), r, rec.error);
      }
    }
  }

  for (std::size_t c = 0; c < keys.size(); ++c) {
    CellSummary summary;
    summary.cell = keys[c];
    std::vector<evaluate::MetricsReport> ok;
    for (std::size_t r = 0; r < config.n_runs; ++r) {
      const auto& rec = record_at(c, r);
      if (rec.ok()) {
        ok.push_back(*rec.metrics);
      } else {
        ++summary.n_failed;
        if (summary.first_error.empty()) summary.first_error = rec.error;
      }
    }
    if (!ok.empty()) summary.aggregate = evaluate::aggregate_runs(ok);
    result.cells.push_back(std::move(summary));
  }
  attach_p_values(result.cells);

  if (persist) emit_report(result, config.output_dir);
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  seqio::ParseStats stats;
  const auto corpus = load_corpus(config.input, &stats);
  if (stats.skipped > 0) spdlog::warn("skipped {} invalid record(s) in '{}'", stats.skipped, config.input.path.string());
  spdlog::info("loaded {} records in {} classes from '{}'", corpus.size(), corpus.n_classes(),
               config.input.path.string());
  return run_experiment(config, corpus);
}

// ---------------------------------------------------------------------------
// Reports

namespace {

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string general(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string csv_field(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void write_report_csv(std::ostream& out, const ExperimentResult& result) {
  out << "dataset,method,arm,classifier,n_runs,n_failed";
  for (auto name : evaluate::kMetricNames) out << ',' << name << "_mean," << name << "_std";
  for (auto name : evaluate::kMetricNames) out << ",p_" << name;
  out << ",error\n";
  for (const auto& c : result.cells) {
    out << csv_field(c.cell.dataset) << ',' << featurize::to_string(c.cell.method) << ',' << to_string(c.cell.arm)
        << ',' << classify::to_string(c.cell.classifier) << ',' << (c.aggregate ? c.aggregate->n_runs : 0) << ','
        << c.n_failed;
    for (std::size_t m = 0; m < evaluate::kMetricNames.size(); ++m) {
      if (c.aggregate) {
        out << ',' << fixed(c.aggregate->metrics[m].mean) << ',' << fixed(c.aggregate->metrics[m].std);
      } else {
        out << ",,";
      }
    }
    for (auto name : evaluate::kMetricNames) {
      out << ',';
      if (c.aggregate) {
        const auto it = c.aggregate->p_values.find(std::string(name));
        if (it != c.aggregate->p_values.end()) out << general(it->second);
      }
    }
    out << ',' << csv_field(c.first_error) << '\n';
  }
}

nlohmann::json report_json(const ExperimentResult& result) {
  nlohmann::json j;
  j["config"] = result.config;
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t i = 0; i < result.class_names.size(); ++i) {
    classes.push_back({{"id", i}, {"name", result.class_names[i]}, {"count", result.class_counts[i]}});
  }
  j["corpus"] = {{"size", result.corpus_size}, {"classes", classes}};
  j["cells"] = nlohmann::json::array();
  for (const auto& c : result.cells) {
    j["cells"].push_back({{"dataset", c.cell.dataset},
                          {"method", featurize::to_string(c.cell.method)},
                          {"arm", to_string(c.cell.arm)},
                          {"classifier", classify::to_string(c.cell.classifier)},
                          {"aggregate", c.aggregate ? c.aggregate->to_json() : nlohmann::json()},
                          {"n_failed", c.n_failed},
                          {"error", c.first_error.empty() ? nlohmann::json() : nlohmann::json(c.first_error)}});
  }
  j["runs"] = nlohmann::json::array();
  for (const auto& r : result.records) j["runs"].push_back(r.to_json());
  return j;
}

void emit_report(const ExperimentResult& result, const fs::path& directory) {
  if (result.cells.empty()) throw ValidationError("no report cells to write");
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec) throw IoError("cannot create report directory '" + directory.string() + "': " + ec.message());

  std::ofstream csv(directory / "report.csv", std::ios::binary);
  write_report_csv(csv, result);
  std::ofstream json(directory / "report.json", std::ios::binary);
  json << report_json(result).dump(2) << '\n';
  std::ofstream timings(directory / "timings.csv", std::ios::binary);
  timings << "dataset,method,arm,classifier,run,embed_s,gan_s,train_s,predict_s\n";
  for (const auto& r : result.records) {
    timings << csv_field(r.cell.dataset) << ',' << featurize::to_string(r.cell.method) << ',' << to_string(r.cell.arm)
            << ',' << classify::to_string(r.cell.classifier) << ',' << r.run << ',' << general(r.timing.embed_s) << ','
            << general(r.timing.gan_s) << ',' << general(r.timing.train_s) << ',' << general(r.timing.predict_s)
            << '\n';
  }
  if (!csv || !json || !timings) throw IoError("cannot write reports into '" + directory.string() + "'");
}

// ---------------------------------------------------------------------------
// Synthetic corpus

seqio::LabeledCorpus generate_synthetic_corpus(const std::vector<std::size_t>& class_counts, double motif_strength,
                                               std::uint64_t seed, const SyntheticCorpusOptions& options) {
  if (class_counts.empty()) throw ConfigError("synthetic corpus needs at least one class");
  if (!(motif_strength >= 0.0 && motif_strength <= 1.0)) throw ConfigError("motif_strength must lie in [0, 1]");
  if (options.min_length == 0 || options.min_length > options.max_length) {
    throw ConfigError("synthetic corpus needs 0 < min_length <= max_length");
  }
  if (options.motif_length == 0) throw ConfigError("motif_length must be positive");
  for (std::size_t c = 0; c < class_counts.size(); ++c) {
    if (class_counts[c] < 2) throw ValidationError("synthetic class " + std::to_string(c) + " needs at least 2 members");
  }

  const auto alphabet = seqio::Alphabet::strict();
  const std::size_t width = class_counts.size() > 100 ? 3 : 2;
  std::vector<seqio::SequenceRecord> records;
  std::size_t serial = 0;
  for (std::size_t c = 0; c < class_counts.size(); ++c) {
    std::string name = std::to_string(c);
    name = "C" + std::string(width - std::min(width, name.size()), '0') + name;
    Rng motif_rng(derive_seed(seed, "motif/" + std::to_string(c)));
    std::string motif(options.motif_length, ' ');
    for (auto& ch : motif) ch = alphabet.symbol(motif_rng.index(alphabet.size()));

    Rng rng(derive_seed(seed, "sequences/" + std::to_string(c)));
    for (std::size_t i = 0; i < class_counts[c]; ++i) {
      const std::size_t length = options.min_length + rng.index(options.max_length - options.min_length + 1);
      const std::size_t phase = rng.index(motif.size());
      std::string residues(length, ' ');
      for (std::size_t p = 0; p < length; ++p) {
        const double u = rng.uniform();
        const std::size_t background = rng.index(alphabet.size());
        residues[p] = u < motif_strength ? motif[(p + phase) % motif.size()] : alphabet.symbol(background);
      }
      records.push_back({"seq" + std::to_string(serial++), std::move(residues), name});
    }
  }
  return seqio::LabeledCorpus(std::move(records));
}

}  // namespace seqgan::pipeline
