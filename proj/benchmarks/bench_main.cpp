// Micro benchmarks for the hot paths of an experiment run.

#include "seqgan/classify.hpp"
#include "seqgan/featurize.hpp"
#include "seqgan/gan.hpp"
#include "seqgan/random.hpp"
#include "seqgan/seqio.hpp"

#include <benchmark/benchmark.h>

using namespace seqgan;

namespace {

std::string random_protein(Rng& rng, std::size_t length) {
  static const std::string residues = "ACDEFGHIKLMNPQRSTVWY";
  std::string s(length, 'A');
  for (auto& c : s) c = residues[rng.index(residues.size())];
  return s;
}

Matrix random_simplex_rows(Rng& rng, Eigen::Index n, Eigen::Index dim) {
  Matrix m(n, dim);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform() + 1e-3;
  for (Eigen::Index i = 0; i < n; ++i) m.row(i) /= m.row(i).sum();
  return m;
}

void BM_Spike2VecSpectrum(benchmark::State& state) {
  Rng rng(1);
  const auto seq = random_protein(rng, static_cast<std::size_t>(state.range(0)));
  const auto alphabet = seqio::Alphabet::strict();
  for (auto _ : state) benchmark::DoNotOptimize(featurize::spike2vec_spectrum(seq, 3, alphabet));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Spike2VecSpectrum)->Arg(100)->Arg(1300);

void BM_MinimizerSpectrum(benchmark::State& state) {
  Rng rng(2);
  const auto seq = random_protein(rng, static_cast<std::size_t>(state.range(0)));
  const auto alphabet = seqio::Alphabet::strict();
  const featurize::KmerParams params;
  for (auto _ : state) benchmark::DoNotOptimize(featurize::minimizer_spectrum(seq, params, alphabet));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MinimizerSpectrum)->Arg(100)->Arg(1300);

void BM_Pwm2VecEmbed(benchmark::State& state) {
  Rng rng(3);
  const auto seq = random_protein(rng, static_cast<std::size_t>(state.range(0)));
  const auto alphabet = seqio::Alphabet::strict();
  for (auto _ : state) benchmark::DoNotOptimize(featurize::pwm2vec_embed(seq, 3, alphabet, 1300));
}
BENCHMARK(BM_Pwm2VecEmbed)->Arg(100)->Arg(1300);

void BM_RffProject(benchmark::State& state) {
  Rng rng(4);
  const Matrix x = random_simplex_rows(rng, 256, 8000);
  const featurize::RffProjector proj(8000, {static_cast<std::size_t>(state.range(0)), 0.0, 5});
  for (auto _ : state) benchmark::DoNotOptimize(proj.project(x));
  state.SetItemsProcessed(state.iterations() * x.rows());
}
BENCHMARK(BM_RffProject)->Arg(128)->Arg(512);

// Time per adversarial iteration (one discriminator and one generator step).
void BM_GanIteration(benchmark::State& state) {
  Rng rng(6);
  const Matrix real = random_simplex_rows(rng, 500, state.range(0));
  gan::GanConfig cfg;
  cfg.iterations = 20;
  cfg.seed = 6;
  for (auto _ : state) benchmark::DoNotOptimize(gan::train_class_gan(real, cfg, 0));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cfg.iterations));
}
BENCHMARK(BM_GanIteration)->Arg(400)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_KnnPredict(benchmark::State& state) {
  Rng rng(7);
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const Matrix x = random_simplex_rows(rng, n, 512);
  LabelVector y(static_cast<std::size_t>(n));
  for (auto& label : y) label = static_cast<Label>(rng.index(2));
  y[0] = 0;
  y[1] = 1;
  const auto model = classify::fit(classify::Family::KNN, x, y, 2, classify::ClassifierConfig{});
  const Matrix queries = random_simplex_rows(rng, 100, 512);
  for (auto _ : state) benchmark::DoNotOptimize(model->predict(queries));
  state.SetItemsProcessed(state.iterations() * queries.rows());
}
BENCHMARK(BM_KnnPredict)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
