#include <benchmark/benchmark.h>

#include <random>

#include "hml/classifier.hpp"
#include "hml/lmnn.hpp"
#include "hml/mmc.hpp"
#include "hml/synthetic.hpp"

namespace {

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

std::vector<int> cyclic(Eigen::Index n, int classes) {
  std::vector<int> y;
  for (Eigen::Index i = 0; i < n; ++i) y.push_back(static_cast<int>(i % classes));
  return y;
}

// One objective+gradient evaluation; this dominates an LMNN fit.
void BM_LmnnObjectiveGradient(benchmark::State& state) {
  const auto n = state.range(0);
  const Eigen::MatrixXd x = gaussian(n, 16, 1);
  const auto y = cyclic(n, 4);
  hml::LmnnConfig cfg;
  const auto targets = hml::target_neighbors(x, y, cfg.k);
  const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(16, 16);
  for (auto _ : state)
    benchmark::DoNotOptimize(hml::lmnn_objective_and_gradient(x, y, m, targets, cfg));
  state.SetComplexityN(n);
}
BENCHMARK(BM_LmnnObjectiveGradient)->RangeMultiplier(2)->Range(32, 256)->Complexity();

void BM_SvrFit(benchmark::State& state) {
  const auto n = state.range(0);
  const Eigen::MatrixXd x = gaussian(n, 8, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = x(i, 0) > 0 ? 1.0 : -1.0;
  for (auto _ : state)
    benchmark::DoNotOptimize(hml::fit_svr_laplacian(x, y, 1.0, hml::Kernel{}));
}
BENCHMARK(BM_SvrFit)->Arg(16)->Arg(64)->Arg(128);

void BM_HierarchicalPredict(benchmark::State& state) {
  hml::SyntheticSpec spec;
  spec.samples_per_class = 20;
  const auto ds = hml::make_synthetic(spec);
  hml::VariantSpec vs;
  vs.variant = hml::Variant::hier_per_node_metric;
  vs.lmnn = hml::LmnnConfig{};
  vs.mmc = hml::MmcConfig{};
  const auto model = hml::train_hierarchical_variant(ds, vs);
  const Eigen::MatrixXd probes = gaussian(64, ds.dim(), 3);
  Eigen::Index i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(hml::predict(model, probes.row(i).transpose()));
    i = (i + 1) % probes.rows();
  }
}
BENCHMARK(BM_HierarchicalPredict);

}  // namespace

BENCHMARK_MAIN();
