#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "taskaff/affinity.hpp"
#include "taskaff/graph.hpp"
#include "taskaff/grouping.hpp"
#include "taskaff/mtl.hpp"

using namespace taskaff;

namespace {

Graph random_graph(std::size_t n, double mean_degree, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<NodeId> pick(0, n - 1);
  std::vector<Graph::Edge> edges;
  const auto m = static_cast<std::size_t>(mean_degree * static_cast<double>(n) / 2.0);
  for (std::size_t k = 0; k < m; ++k) edges.emplace_back(pick(rng), pick(rng));
  return Graph(n, edges);
}

Matrix gaussian(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

void BM_PersonalizedPageRank(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Graph g = random_graph(n, 10.0, 1);
  const std::vector<NodeId> seeds{0, 1, 2, 3, 4};
  for (auto _ : state) benchmark::DoNotOptimize(personalized_pagerank(g, seeds));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_PersonalizedPageRank)->RangeMultiplier(4)->Range(1 << 10, 1 << 16)->Complexity();

void BM_ClosedFormFit(benchmark::State& state) {
  const auto rows = state.range(0);
  const Matrix f = gaussian(rows, 48, 2);
  std::vector<Vector> labels;
  for (int t = 0; t < 10; ++t) labels.push_back(gaussian(rows, 1, 3 + t).col(0));
  for (auto _ : state) benchmark::DoNotOptimize(fit_closed_form(f, labels, 0.0));
  state.SetComplexityN(rows);
}
BENCHMARK(BM_ClosedFormFit)->RangeMultiplier(4)->Range(256, 1 << 14)->Complexity();

void BM_SpectralCluster(benchmark::State& state) {
  const auto t = state.range(0);
  // noisy block affinity with t/10 blocks over the 2t task copies
  Matrix a = gaussian(2 * t, 2 * t, 4).cwiseAbs() * 0.05;
  for (Eigen::Index i = 0; i < 2 * t; ++i)
    for (Eigen::Index j = 0; j < 2 * t; ++j)
      if ((i % t) / 10 == (j % t) / 10) a(i, j) += 1.0;
  a = (a + a.transpose()) / 2.0;
  const auto k = static_cast<std::size_t>(t / 10);
  for (auto _ : state) benchmark::DoNotOptimize(spectral_cluster(a, k, 7));
}
BENCHMARK(BM_SpectralCluster)->Arg(20)->Arg(100)->Arg(400);

void BM_EstimateAffinity(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  constexpr std::size_t kTasks = 100, kAlpha = 10;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 0.0);
  std::vector<SubsetEvaluation> log;
  for (std::size_t k = 0; k < n; ++k) {
    SubsetEvaluation e;
    e.subset = sample_uniform_subset(kTasks, kAlpha, rng);
    for (std::size_t q = 0; q < kAlpha; ++q) e.scores.push_back(u(rng));
    log.push_back(std::move(e));
  }
  for (auto _ : state) benchmark::DoNotOptimize(estimate_affinity(log, kTasks));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_EstimateAffinity)->RangeMultiplier(4)->Range(500, 32000)->Complexity();

}  // namespace
