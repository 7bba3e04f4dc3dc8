// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Criterion 11 is informational and never fails the run.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "hml/classifier.hpp"
#include "hml/cli/commands.hpp"
#include "hml/eval.hpp"
#include "hml/hierarchy.hpp"
#include "hml/io.hpp"
#include "hml/lmnn.hpp"
#include "hml/mmc.hpp"
#include "hml/synthetic.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace hml;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, double budget_s,
            const std::function<Outcome()>& check) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget_s > 0 && secs > budget_s) {
    o.pass = false;
    o.detail += " (over time budget)";
  }
  if (!o.pass) ++failures;
  std::printf("[%2d] %s  %s: %s [%.1fs]\n", id, o.pass ? "PASS" : "FAIL", title.c_str(),
              o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

VariantSpec spec_for(Variant v, int K = 7) {
  VariantSpec s;
  s.variant = v;
  s.K = K;
  if (uses_metric_learning(v)) s.lmnn = LmnnConfig{};
  if (is_hierarchical(v)) s.mmc = MmcConfig{};
  return s;
}

std::vector<int> cyclic_labels(Index n, int classes) {
  std::vector<int> y;
  for (Index i = 0; i < n; ++i) y.push_back(static_cast<int>(i % classes));
  return y;
}

Eigen::MatrixXd random_psd(std::mt19937_64& rng, Index d) {
  const Eigen::MatrixXd a = oracle::random_matrix(d, d, rng);
  return a.transpose() * a / static_cast<double>(d) + 0.5 * Eigen::MatrixXd::Identity(d, d);
}

Outcome psd_suite() {
  std::mt19937_64 rng(101);
  double worst_asym = 0.0, worst_eig = 1e300;
  int n_fits = 0;
  for (Index d : {3, 5, 10}) {
    for (Index n : {20, 60}) {
      for (int rep = 0; rep < 4 && n_fits < 20; ++rep, ++n_fits) {
        const Eigen::MatrixXd x = oracle::random_matrix(n, d, rng);
        LmnnConfig cfg;
        cfg.k = 3;
        cfg.low_rank = rep == 3;
        const auto r = fit_lmnn(x, cyclic_labels(n, 2 + rep % 3), cfg);
        worst_asym = std::max(worst_asym, max_asymmetry(r.metric.matrix()));
        worst_eig = std::min(worst_eig, min_eigenvalue(r.metric.matrix()));
      }
    }
  }
  while (n_fits < 20) {
    const Eigen::MatrixXd x = oracle::random_matrix(20, 5, rng);
    const auto r = fit_lmnn(x, cyclic_labels(20, 2), LmnnConfig{});
    worst_asym = std::max(worst_asym, max_asymmetry(r.metric.matrix()));
    worst_eig = std::min(worst_eig, min_eigenvalue(r.metric.matrix()));
    ++n_fits;
  }
  return {worst_asym <= 1e-10 && worst_eig >= -1e-8,
          std::to_string(n_fits) + " fits, max asymmetry " + fmt("%.2e", worst_asym) +
              ", min eigenvalue " + fmt("%.3e", worst_eig)};
}

Outcome gradient_check() {
  std::mt19937_64 rng(202);
  double worst = 0.0;
  int checked = 0, skipped = 0;
  while (checked < 10) {
    const Eigen::MatrixXd x = oracle::random_matrix(12, 3, rng);
    const auto y = cyclic_labels(12, 2);
    LmnnConfig cfg;
    cfg.k = 2;
    const auto targets = target_neighbors(x, y, cfg.k);
    const Eigen::MatrixXd m = random_psd(rng, 3);
    double kink = 1e300;
    for (Index i = 0; i < 12; ++i)
      for (Index j : targets.lists[static_cast<std::size_t>(i)])
        for (Index l = 0; l < 12; ++l)
          if (y[static_cast<std::size_t>(l)] != y[static_cast<std::size_t>(i)])
            kink = std::min(kink, std::abs(cfg.margin +
                                           oracle::squared_form_naive(m, x.row(i), x.row(j)) -
                                           oracle::squared_form_naive(m, x.row(i), x.row(l))));
    if (kink <= 1e-3) {
      ++skipped;
      continue;
    }
    ++checked;
    const auto g = lmnn_objective_and_gradient(x, y, m, targets, cfg).gradient;
    const double h = 1e-5;
    for (Index a = 0; a < 3; ++a) {
      for (Index b = 0; b < 3; ++b) {
        Eigen::MatrixXd p = m, q = m;
        p(a, b) += h;
        q(a, b) -= h;
        const double fd = (lmnn_objective_and_gradient(x, y, p, targets, cfg).objective -
                           lmnn_objective_and_gradient(x, y, q, targets, cfg).objective) /
                          (2 * h);
        const double denom = std::max(std::abs(fd), 1e-3 * g.cwiseAbs().maxCoeff());
        worst = std::max(worst, std::abs(g(a, b) - fd) / denom);
      }
    }
  }
  return {worst < 1e-4, "10 instances (" + std::to_string(skipped) +
                            " near-kink draws skipped), max relative error " +
                            fmt("%.2e", worst)};
}

Outcome brute_force_objective() {
  std::mt19937_64 rng(303);
  double worst = 0.0;
  for (int t = 0; t < 30; ++t) {
    const Index n = 4 + static_cast<Index>(rng() % 12);
    const Index d = 1 + static_cast<Index>(rng() % 5);
    const Eigen::MatrixXd x = oracle::random_matrix(n, d, rng);
    const auto y = cyclic_labels(n, 2 + t % 3);
    LmnnConfig cfg;
    cfg.k = 1 + t % 3;
    cfg.mu = 0.05 * (t % 21);
    const auto targets = target_neighbors(x, y, cfg.k);
    const Eigen::MatrixXd m = random_psd(rng, d);
    const double got = lmnn_objective_and_gradient(x, y, m, targets, cfg).objective;
    const double ref =
        oracle::lmnn_objective_bruteforce(x, y, m, targets.lists, cfg.mu, cfg.margin);
    worst = std::max(worst, std::abs(got - ref) / std::max(1e-300, std::abs(ref)));
  }
  return {worst <= 1e-9, "30 instances with N<=15, max relative difference " + fmt("%.2e", worst)};
}

Outcome mmc_planted() {
  const std::vector<int> planted{1, 1, 1, 1, 1, -1, -1, -1, -1, -1};
  auto same = [](const std::vector<int>& a, const std::vector<int>& b) {
    bool s = true, f = true;
    for (std::size_t i = 0; i < a.size(); ++i) {
      s = s && a[i] == b[i];
      f = f && a[i] == -b[i];
    }
    return s || f;
  };
  int recovered = 0, oracle_agree = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd x(10, 2);
    for (int i = 0; i < 10; ++i) {
      x(i, 0) = (i < 5 ? 0.0 : 10.0) + n(rng);
      x(i, 1) = n(rng);
    }
    MmcConfig cfg;
    cfg.balance = 0.0;
    cfg.seed = seed;
    const auto r = mmc_bipartition(x, cfg);
    recovered += same(r.assignment, planted);
    oracle_agree += same(r.assignment, oracle::best_balanced_bipartition_2d(x, 0));
  }
  return {recovered >= 9 && oracle_agree == 10,
          "planted split recovered in " + std::to_string(recovered) +
              "/10 seeds, exhaustive-oracle agreement " + std::to_string(oracle_agree) + "/10"};
}

Outcome mmc_monotone() {
  std::mt19937_64 rng(505);
  int ok = 0;
  for (int t = 0; t < 20; ++t) {
    const Index n = 2 + static_cast<Index>(rng() % 14);
    const Eigen::MatrixXd x = oracle::random_matrix(n, 1 + static_cast<Index>(rng() % 5), rng);
    MmcConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(t);
    if (t % 2) cfg.balance = static_cast<double>(rng() % 4);
    const auto r = mmc_bipartition(x, cfg);
    bool good = true;
    for (std::size_t i = 1; i < r.objective_trace.size(); ++i)
      good = good && r.objective_trace[i] <= r.objective_trace[i - 1];
    const int sum = std::accumulate(r.assignment.begin(), r.assignment.end(), 0);
    const double l = cfg.balance_for(n);
    good = good && std::abs(sum) <= std::max(l, n % 2 ? 1.0 : 0.0) && std::abs(sum) < n;
    ok += good;
  }
  return {ok == 20, std::to_string(ok) + "/20 instances monotone and balanced"};
}

Outcome tree_suite() {
  std::mt19937_64 rng(606);
  std::string detail;
  bool pass = true;
  for (int m : {1, 2, 3, 7, 16}) {
    CentroidSet cs;
    cs.centroids = oracle::random_matrix(m, 6, rng);
    for (int c = 0; c < m; ++c) cs.class_ids.push_back(c);
    MmcConfig cfg;
    cfg.seed = 77;
    const auto a = build_tree(cs, cfg);
    const auto b = build_tree(cs, cfg);
    const bool valid = validate_tree(a, m).empty();
    const bool counts = a.internal_nodes().size() == static_cast<std::size_t>(m - 1) &&
                        a.leaves().size() == static_cast<std::size_t>(m);
    bool same = a.nodes.size() == b.nodes.size();
    for (const auto& [id, rec] : a.nodes) same = same && b.contains(id) && b.at(id).class_ids == rec.class_ids;
    pass = pass && valid && counts && same;
    detail += "M=" + std::to_string(m) + (valid && counts && same ? " ok " : " BAD ");
  }
  return {pass, detail};
}

Outcome inference_oracle() {
  long agree = 0, total = 0, flat_agree = 0, flat_total = 0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    std::mt19937_64 rng(700 + s);
    const Eigen::MatrixXd centers = oracle::random_matrix(4, 3, rng) * 3.0;
    const auto ds = oracle::blobs(centers, 12, 1.0, 710 + s);
    auto spec = spec_for(Variant::hier_per_node_metric, 1 + 2 * static_cast<int>(s % 4));
    spec.mmc->seed = s;
    const auto model = train_hierarchical_variant(ds, spec);
    const Eigen::MatrixXd a = oracle::random_matrix(3, 3, rng);
    const Eigen::MatrixXd m = s == 0 ? Eigen::MatrixXd::Identity(3, 3) : Eigen::MatrixXd(a.transpose() * a);
    FlatKnn flat(ds.features, ds.labels, 4, spec.K, MetricMatrix::from_matrix(m));
    for (int i = 0; i < 40; ++i) {
      const Eigen::VectorXd x = oracle::random_matrix(3, 1, rng) * 4.0;
      agree += predict(model, x) == oracle::tree_walk_naive(model, x);
      ++total;
      flat_agree += flat.predict(x) == oracle::flat_knn_naive(ds.features, ds.labels, 4, m, spec.K, x);
      ++flat_total;
    }
  }
  return {agree == total && flat_agree == flat_total,
          "tree walk " + std::to_string(agree) + "/" + std::to_string(total) + ", flat knn " +
              std::to_string(flat_agree) + "/" + std::to_string(flat_total)};
}

Outcome synthetic_ordering() {
  const auto ds = make_synthetic(SyntheticSpec{});
  const std::vector<SplitSpec> splits{{0.8, 0}};
  std::vector<VariantSpec> variants;
  for (Variant v : all_variants()) variants.push_back(spec_for(v));
  std::vector<std::uint64_t> seeds(10);
  std::iota(seeds.begin(), seeds.end(), 0);
  const auto res = run_benchmark(ds, splits, variants, seeds);
  std::cout << format_table(res.table);
  const auto& row = res.table.rows.front();
  auto acc = [&](Variant v) {
    const auto& cell = row.accuracy[static_cast<std::size_t>(v)];
    return cell ? 100.0 * *cell : -1.0;
  };
  const double per_node = acc(Variant::hier_per_node_metric);
  const double flat = acc(Variant::flat_knn);
  const double global = acc(Variant::hier_global_metric);
  const double m_flat = per_node - flat, m_global = per_node - global;
  return {m_flat >= 3.0 && m_global >= 3.0,
          "per-node " + fmt("%.2f", per_node) + "%, flat_knn " + fmt("%.2f", flat) +
              "%, hier_global_metric " + fmt("%.2f", global) + "%; margins " +
              fmt("%+.2f", m_flat) + " / " + fmt("%+.2f", m_global) + " points (need >= 3)"};
}

Outcome degenerate_cases() {
  LabeledDataset one;
  std::mt19937_64 rng(909);
  one.features = oracle::random_matrix(6, 3, rng);
  one.labels.assign(6, 0);
  one.class_names = {"solo"};
  bool single_ok = true;
  for (Variant v : all_variants()) {
    const auto p = train_variant(one, spec_for(v));
    for (int i = 0; i < 20; ++i)
      single_ok = single_ok && p->predict(oracle::random_matrix(3, 1, rng) * 10.0) == 0;
  }
  const auto model = train_hierarchical_variant(one, spec_for(Variant::hier_per_node_metric));
  const auto back = decode_model(encode_model(model));
  single_ok = single_ok && back.node_metrics.empty() &&
              predict(back, Eigen::Vector3d(1, 2, 3)) == 0;

  Eigen::MatrixXd centers(2, 3);
  centers << 0, 0, 0, 1.5, 0.5, 0;
  const auto two = oracle::blobs(centers, 20, 1.0, 910);
  long same = 0, total = 0;
  for (int K : {1, 3, 5, 7}) {
    const auto h = train_variant(two, spec_for(Variant::hier_no_metric, K));
    const auto f = train_variant(two, spec_for(Variant::flat_knn, K));
    for (int i = 0; i < 100; ++i) {
      const Eigen::VectorXd x = oracle::random_matrix(3, 1, rng) * 2.0;
      same += h->predict(x) == f->predict(x);
      ++total;
    }
  }
  return {single_ok && same == total,
          std::string("M=1 ") + (single_ok ? "always predicts the single class" : "BROKEN") +
              "; M=2 hier_no_metric == flat_knn on " + std::to_string(same) + "/" +
              std::to_string(total) + " probes for K in {1,3,5,7}"};
}

Outcome reproducibility() {
  const fs::path dir = fs::temp_directory_path() / "hml_acceptance_repro";
  fs::remove_all(dir);
  fs::create_directories(dir);
  SyntheticSpec spec;
  spec.samples_per_class = 25;
  save_dataset(make_synthetic(spec), dir / "data.csv", DatasetFormat::csv);
  write_file_atomic(dir / "config.json", std::string("{\"dataset\": {\"path\": \"data.csv\"}}"));

  std::ostringstream sink;
  cli::Streams io{sink, sink};
  cli::CommonOptions opts;
  opts.config = dir / "config.json";
  opts.out = dir / "a";
  cli::cmd_train(cli::effective_config(opts), 1, io);
  opts.out = dir / "b";
  cli::cmd_train(cli::effective_config(opts), 1, io);
  const bool identical = read_file_bytes(dir / "a/model.hmlm") == read_file_bytes(dir / "b/model.hmlm");

  const auto model = load_model(dir / "a/model.hmlm");
  save_model(model, dir / "resaved.hmlm");
  const auto again = load_model(dir / "resaved.hmlm");
  std::mt19937_64 rng(1010);
  int same = 0;
  for (int i = 0; i < 100; ++i) {
    const Eigen::VectorXd x = oracle::random_matrix(16, 1, rng) * 3.0;
    same += predict(model, x) == predict(again, x);
  }
  return {identical && same == 100,
          std::string("model files ") + (identical ? "byte-identical" : "DIFFER") +
              ", round-trip predictions identical on " + std::to_string(same) + "/100 probes"};
}

void at_scale_check() {
  const char* path = std::getenv("HML_AT_SCALE_FEATURES");
  if (!path) {
    std::printf("[11] INFO  at-scale check: skipped (set HML_AT_SCALE_FEATURES to a CSV of "
                "precomputed 4096-d features; expected hier_per_node_metric near 94%%)\n");
    return;
  }
  try {
    const auto ds = load_dataset(path, DatasetFormat::csv);
    const auto split = stratified_split(ds, {0.8, 0});
    auto spec = spec_for(Variant::hier_per_node_metric);
    spec.lmnn->low_rank = ds.dim() > split.train.size();
    const auto r = evaluate(*train_variant(split.train, spec), split.test);
    std::printf("[11] INFO  at-scale check: hier_per_node_metric %.2f%% on %ld test samples "
                "(reference 94%%)\n",
                100.0 * r.overall_accuracy, r.n_test);
  } catch (const std::exception& e) {
    std::printf("[11] INFO  at-scale check: could not run: %s\n", e.what());
  }
}

}  // namespace

int main() {
  report(1, "PSD invariant suite", 60, psd_suite);
  report(2, "gradient vs finite differences", 30, gradient_check);
  report(3, "objective vs brute-force triples", 0, brute_force_objective);
  report(4, "MMC planted partition", 30, mmc_planted);
  report(5, "MMC monotone trace and balance", 0, mmc_monotone);
  report(6, "class tree structure", 0, tree_suite);
  report(7, "inference oracle equivalence", 0, inference_oracle);
  report(8, "synthetic benchmark ordering", 300, synthetic_ordering);
  report(9, "degenerate cases", 0, degenerate_cases);
  report(10, "reproducibility", 0, reproducibility);
  at_scale_check();
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
