#include "oracles.hpp"

#include "seqgan/error.hpp"
#include "seqgan/featurize.hpp"
#include "seqgan/random.hpp"

#include <doctest.h>

#include <numeric>
#include <sstream>

using namespace seqgan;
using namespace seqgan::featurize;

namespace {

const seqio::Alphabet kStrict = seqio::Alphabet::strict();
const std::string kSymbols = kStrict.symbols();

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

seqio::LabeledCorpus small_corpus() {
  return seqio::LabeledCorpus({{"a", "MKVLAAGH", "x"}, {"b", "ACDEFGHIK", "y"}, {"c", "MKVLWWWWAC", "x"}});
}

}  // namespace

TEST_CASE("kmer_list: spec examples") {
  CHECK(kmer_list("MKV", 3) == std::vector<std::string_view>{"MKV"});
  CHECK(kmer_list("MKVL", 3) == std::vector<std::string_view>{"MKV", "KVL"});
  std::mt19937_64 gen(68);
  const auto s = oracle::random_sequence(gen, kSymbols, 68);
  const auto got = kmer_list(s, 3);
  const auto expected = oracle::kmers(s, 3);
  REQUIRE(got.size() == 66);
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == expected[i]);
}

TEST_CASE("kmer_list: short sequence error carries the id") {
  try {
    (void)kmer_list("MK", 3, "seq42");
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("seq42") != std::string::npos);
  }
  CHECK_THROWS_AS(kmer_list("MK", 0), ConfigError);
}

TEST_CASE("kmer_index: base-|alphabet| positional encoding") {
  CHECK(kmer_index("AAA", kStrict) == 0);
  CHECK(kmer_index("AAC", kStrict) == 1);
  CHECK(kmer_index("CAA", kStrict) == 400);
  CHECK(kmer_index("YYY", kStrict) == 7999);
  CHECK_THROWS_AS(kmer_index("AXA", kStrict), ValidationError);
}

TEST_CASE("spike2vec_spectrum: spec examples") {
  const auto aaa = spike2vec_spectrum("AAA", 3, kStrict);
  REQUIRE(aaa.size() == 8000);
  CHECK(aaa[0] == 1.0);
  CHECK(sum(aaa) == 1.0);

  const auto mkvl = spike2vec_spectrum("MKVL", 3, kStrict);
  CHECK(mkvl[oracle::word_index("MKV", kSymbols)] == 0.5);
  CHECK(mkvl[oracle::word_index("KVL", kSymbols)] == 0.5);
  CHECK(std::count_if(mkvl.begin(), mkvl.end(), [](double v) { return v != 0.0; }) == 2);

  std::mt19937_64 gen(30);
  const auto s = oracle::random_sequence(gen, kSymbols, 30);
  CHECK(spike2vec_spectrum(s, 3, kStrict) == oracle::spectrum(s, 3, kSymbols));
}

TEST_CASE("spike2vec: count and simplex laws on random sequences") {
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + gen() % 3;
    const auto s = oracle::random_sequence(gen, kSymbols, k + gen() % 100);
    const auto counts = spike2vec_counts(s, k, kStrict);
    CHECK(sum(counts) == static_cast<double>(s.size() - k + 1));
    const auto spec = spike2vec_spectrum(s, k, kStrict);
    CHECK(sum(spec) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*std::min_element(spec.begin(), spec.end()) >= 0.0);
  }
  CHECK_THROWS_AS(spike2vec_spectrum("MKBV", 2, kStrict), ValidationError);
  CHECK_THROWS_AS(spectrum_dim(kStrict, 7), ConfigError);
}

TEST_CASE("minimizer_of_kmer: spec examples") {
  CHECK(minimizer_of_kmer("ACB", 3) == "ACB");
  CHECK(minimizer_of_kmer("CAB", 2) == "AB");
  CHECK(minimizer_of_kmer("AAAA", 3) == "AAA");
  CHECK_THROWS(minimizer_of_kmer("AC", 3));
}

TEST_CASE("minimizer_of_kmer: never exceeds any window or reversal") {
  std::mt19937_64 gen(4);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t k = 2 + gen() % 10;
    const std::size_t m = 1 + gen() % (k - 1);
    const auto kmer = oracle::random_sequence(gen, "ACDE", k);  // small alphabet forces ties
    const auto got = minimizer_of_kmer(kmer, m);
    CHECK(got == oracle::minimizer(kmer, m));
    for (std::size_t i = 0; i + m <= k; ++i) {
      const auto w = kmer.substr(i, m);
      CHECK(got <= w);
      CHECK(got <= std::string(w.rbegin(), w.rend()));
    }
  }
}

TEST_CASE("minimizer_spectrum: spec examples") {
  const KmerParams params;  // k = 9, m = 3
  const auto ones = minimizer_spectrum("AAAAAAAAAA", params, kStrict);
  REQUIRE(ones.size() == 8000);
  CHECK(ones[0] == 1.0);

  std::mt19937_64 gen(20);
  const auto s20 = oracle::random_sequence(gen, kSymbols, 20);
  CHECK(minimizer_spectrum(s20, params, kStrict) == oracle::minimizer_spectrum(s20, 9, 3, kSymbols));

  // Length 12 with k = 9: four k-mers, so every entry is a multiple of 1/4.
  const auto s12 = oracle::random_sequence(gen, kSymbols, 12);
  const auto spec = minimizer_spectrum(s12, params, kStrict);
  for (double v : spec) CHECK(v * 4.0 == std::round(v * 4.0));
  CHECK(sum(spec) == doctest::Approx(1.0));
  CHECK_THROWS_AS(minimizer_spectrum("MKV", params, kStrict), ValidationError);
}

TEST_CASE("minimizer_spectrum: index space matches spike2vec at equal length") {
  KmerParams params;
  params.minimizer_k = 5;
  params.minimizer_m = 2;
  const auto spec = minimizer_spectrum("MKVLAACDEF", params, kStrict);
  CHECK(spec.size() == spike2vec_spectrum("MKVLAACDEF", 2, kStrict).size());
}

TEST_CASE("pwm2vec_embed: spec examples") {
  const auto aaaa = pwm2vec_embed("AAAA", 3, kStrict, 5);
  REQUIRE(aaaa.size() == 5);
  CHECK(aaaa[0] == aaaa[1]);
  CHECK(aaaa[0] != 0.0);
  CHECK(aaaa[2] == 0.0);
  CHECK(aaaa[4] == 0.0);

  const auto mkvl = pwm2vec_embed("MKVL", 3, kStrict, 2);
  const auto oracle_mkvl = oracle::pwm_embed("MKVL", 3, kSymbols, 2);
  // Hand computation: every observed residue has count 1 at its position,
  // probability (1 + 1) / (2 + 20) = 1/11, weight log2(20/11); three
  // positions per k-mer.
  const double w = std::log2(20.0 / 11.0);
  CHECK(std::abs(mkvl[0] - 3 * w) <= 1e-12);
  CHECK(std::abs(mkvl[1] - 3 * w) <= 1e-12);
  CHECK(std::abs(mkvl[0] - oracle_mkvl[0]) <= 1e-12);

  CHECK_THROWS_AS(pwm2vec_embed("MKVLA", 3, kStrict, 2), ConfigError);
}

TEST_CASE("pwm2vec_embed: random sequences against the straight-line oracle") {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + gen() % 5;
    const auto s = oracle::random_sequence(gen, kSymbols, k + gen() % 80);
    const std::size_t pad = s.size() - k + 1 + gen() % 10;
    const auto got = pwm2vec_embed(s, k, kStrict, pad);
    const auto expected = oracle::pwm_embed(s, k, kSymbols, pad);
    REQUIRE(got.size() == pad);
    for (std::size_t i = 0; i < pad; ++i) CHECK(std::abs(got[i] - expected[i]) <= 1e-12);
    for (std::size_t i = s.size() - k + 1; i < pad; ++i) CHECK(got[i] == 0.0);
  }
}

TEST_CASE("rff: zero row maps to sqrt(2/D) cos(b)") {
  const RffProjector proj(6, {64, 0.5, 3});
  const Matrix z = proj.project(Matrix::Zero(2, 6));
  const double bound = std::sqrt(2.0 / 64.0);
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    CHECK(std::abs(z(0, j)) <= bound + 1e-15);
    CHECK(z(0, j) == z(1, j));
  }
}

TEST_CASE("rff: components bounded, deterministic, gamma default") {
  Rng rng(2);
  Matrix x(10, 8);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  const RffProjector a(8, {128, 0.0, 9});
  const RffProjector b(8, {128, 0.0, 9});
  CHECK(a.gamma() == doctest::Approx(1.0 / 8.0));
  const Matrix za = a.project(x);
  CHECK(za == b.project(x));
  CHECK(za.cwiseAbs().maxCoeff() <= std::sqrt(2.0 / 128.0) + 1e-15);
  CHECK_THROWS_AS(a.project(Matrix::Zero(1, 3)), ShapeError);
}

TEST_CASE("rff: kernel approximation improves with D") {
  auto mean_error = [](std::size_t dim) {
    Rng rng(77);
    Matrix x(100, 5), y(100, 5);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      x.data()[i] = rng.normal(0.0, 0.4);
      y.data()[i] = rng.normal(0.0, 0.4);
    }
    const RffProjector proj(5, {dim, 1.0, 123});
    const Matrix zx = proj.project(x), zy = proj.project(y);
    double err = 0.0;
    for (Eigen::Index i = 0; i < 100; ++i) {
      const double exact = std::exp(-(x.row(i) - y.row(i)).squaredNorm());
      err += std::abs(zx.row(i).dot(zy.row(i)) - exact);
    }
    return err / 100.0;
  };
  const double e512 = mean_error(512);
  CHECK(e512 <= 0.05);
  CHECK(e512 < mean_error(64));
}

TEST_CASE("embed_corpus: Spike2Vec shape, determinism and metadata") {
  const auto corpus = small_corpus();
  EmbeddingParams params;
  const auto a = embed_corpus(corpus, params, kStrict);
  CHECK(a.rows() == 3);
  CHECK(a.dim() == 8000);
  CHECK(a.labels == LabelVector{0, 1, 0});
  CHECK(a.params["k"] == 3);
  CHECK(a.origin == std::vector<std::int64_t>{0, 1, 2});
  for (std::size_t i = 0; i < a.rows(); ++i) CHECK(a.values.row(static_cast<Eigen::Index>(i)).sum() == doctest::Approx(1.0));
  const auto b = embed_corpus(corpus, params, kStrict);
  CHECK(a.values == b.values);
}

TEST_CASE("embed_corpus: PWM2Vec derives the pad length from the longest sequence") {
  // Longest sequence 71 with k = 3 gives 69 windows.
  std::mt19937_64 gen(71);
  std::vector<seqio::SequenceRecord> records;
  for (std::size_t len : {11, 40, 71, 68}) records.push_back({"s" + std::to_string(len), oracle::random_sequence(gen, kSymbols, len), "flu"});
  records.push_back({"t", "MKVLAAGHKL", "other"});
  const seqio::LabeledCorpus corpus(records);
  EmbeddingParams params;
  params.method = Method::PWM2Vec;
  const auto m = embed_corpus(corpus, params, kStrict);
  CHECK(m.dim() == 69);
  CHECK(m.params["pad_len"] == 69);
  CHECK(m.values(0, 8) != 0.0);  // 11 - 3 + 1 = 9 scores
  CHECK(m.values(0, 9) == 0.0);
}

TEST_CASE("embed_corpus: short sequences fail or are skipped") {
  const seqio::LabeledCorpus corpus({{"ok1", "MKVLAAGHKLW", "a"}, {"short", "MKV", "a"}, {"ok2", "ACDEFGHIKLM", "b"}});
  EmbeddingParams params;
  params.method = Method::Minimizer;
  try {
    (void)embed_corpus(corpus, params, kStrict);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("short") != std::string::npos);
  }
  params.skip_short = true;
  EmbedStats stats;
  const auto m = embed_corpus(corpus, params, kStrict, &stats);
  CHECK(m.rows() == 2);
  CHECK(stats.skipped == 1);
  CHECK(stats.skipped_ids == std::vector<std::string>{"short"});
  CHECK(m.origin == std::vector<std::int64_t>{0, 2});
}

TEST_CASE("FeatureMatrix: save/load is bit exact and CSV has a header") {
  const auto corpus = small_corpus();
  EmbeddingParams params;
  params.kmer.k = 2;
  auto m = embed_corpus(corpus, params, kStrict);
  m = rff_project(m, {16, 0.0, 5});
  CHECK(m.dim() == 16);
  CHECK(m.params.contains("rff"));

  const auto dir = oracle::scratch_dir("featurize");
  m.save(dir / "m.fm");
  const auto back = FeatureMatrix::load(dir / "m.fm");
  CHECK(back.values == m.values);
  CHECK(back.labels == m.labels);
  CHECK(back.class_names == m.class_names);
  CHECK(back.origin == m.origin);
  CHECK(back.method == m.method);
  CHECK(back.params == m.params);

  std::ostringstream csv;
  m.write_csv(csv);
  const auto text = csv.str();
  CHECK(text.rfind("label,f0,f1,", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);

  const std::vector<std::size_t> pick = {2, 0};
  const auto sub = m.select(pick);
  CHECK(sub.rows() == 2);
  CHECK(sub.values.row(0) == m.values.row(2));
  CHECK(sub.origin == std::vector<std::int64_t>{2, 0});

  auto broken = m;
  broken.values(0, 0) = std::nan("");
  CHECK_THROWS_AS(broken.validate(), NumericError);
  broken = m;
  broken.labels[0] = 7;
  CHECK_THROWS_AS(broken.validate(), ValidationError);
}

TEST_CASE("method names round trip") {
  for (auto m : {Method::Spike2Vec, Method::PWM2Vec, Method::Minimizer}) CHECK(method_from_string(to_string(m)) == m);
  CHECK(method_from_string("SPIKE2VEC") == Method::Spike2Vec);
  CHECK_THROWS_AS(method_from_string("word2vec"), ConfigError);
  KmerParams bad;
  bad.minimizer_m = 9;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
