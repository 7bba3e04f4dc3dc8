#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace hml::oracle {

double svr_primal_minimum(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double C) {
  const Index n = x.rows(), d = x.cols();
  auto value = [&](const Eigen::VectorXd& w, double b) {
    double loss = 0.0;
    for (Index i = 0; i < n; ++i) {
      double f = b;
      for (Index k = 0; k < d; ++k) f += w[k] * x(i, k);
      loss += std::abs(y[i] - f);
    }
    return 0.5 * w.squaredNorm() + C * loss;
  };

  Eigen::VectorXd w = Eigen::VectorXd::Zero(d), best_w = w;
  double b = 0.0, best_b = 0.0, best = value(w, b);
  // Constant-step subgradient descent settles within O(step) of the optimum;
  // each phase restarts from the best point with a ten times smaller step.
  for (double step = 1e-1; step >= 1e-9; step /= 10.0) {
    w = best_w;
    b = best_b;
    for (int it = 0; it < 200000; ++it) {
      Eigen::VectorXd gw = w;
      double gb = 0.0;
      for (Index i = 0; i < n; ++i) {
        double f = b;
        for (Index k = 0; k < d; ++k) f += w[k] * x(i, k);
        const double r = y[i] - f;
        const double s = r > 0 ? -1.0 : (r < 0 ? 1.0 : 0.0);
        for (Index k = 0; k < d; ++k) gw[k] += C * s * x(i, k);
        gb += C * s;
      }
      w -= step * gw;
      b -= step * gb;
      const double v = value(w, b);
      if (v < best) {
        best = v;
        best_w = w;
        best_b = b;
      }
    }
  }
  return best;
}

double separation_margin_2d(const Eigen::MatrixXd& x, const std::vector<int>& labels) {
  auto gap = [&](double theta) {
    const double ux = std::cos(theta), uy = std::sin(theta);
    double pos_min = 1e300, neg_max = -1e300;
    for (Index i = 0; i < x.rows(); ++i) {
      const double p = ux * x(i, 0) + uy * x(i, 1);
      if (labels[static_cast<std::size_t>(i)] > 0) {
        pos_min = std::min(pos_min, p);
      } else {
        neg_max = std::max(neg_max, p);
      }
    }
    return 0.5 * (pos_min - neg_max);
  };
  const int steps = 20000;
  double best = -1e300, best_theta = 0.0;
  for (int s = 0; s < steps; ++s) {
    const double t = 2.0 * std::numbers::pi * s / steps;
    const double g = gap(t);
    if (g > best) {
      best = g;
      best_theta = t;
    }
  }
  // Golden-section refinement around the best sampled angle.
  double lo = best_theta - 2.0 * std::numbers::pi / steps;
  double hi = best_theta + 2.0 * std::numbers::pi / steps;
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 100; ++it) {
    const double a = hi - phi * (hi - lo), b = lo + phi * (hi - lo);
    if (gap(a) < gap(b)) {
      lo = a;
    } else {
      hi = b;
    }
  }
  return std::max({0.0, best, gap(0.5 * (lo + hi))});
}

std::vector<int> best_balanced_bipartition_2d(const Eigen::MatrixXd& x, int max_imbalance) {
  const int n = static_cast<int>(x.rows());
  std::vector<int> best;
  double best_margin = -1.0;
  for (std::uint32_t mask = 0; mask < (1u << (n - 1)); ++mask) {
    std::vector<int> labels(static_cast<std::size_t>(n), 1);
    int sum = 1;
    for (int i = 1; i < n; ++i) {
      if (mask & (1u << (i - 1))) labels[static_cast<std::size_t>(i)] = -1;
      sum += labels[static_cast<std::size_t>(i)];
    }
    if (sum == n || std::abs(sum) > max_imbalance) continue;
    const double m = separation_margin_2d(x, labels);
    if (m > best_margin) {
      best_margin = m;
      best = labels;
    }
  }
  return best;
}

void jacobi_eigen(const Eigen::MatrixXd& input, Eigen::VectorXd& values,
                  Eigen::MatrixXd& vectors) {
  const Index n = input.rows();
  Eigen::MatrixXd a = input;
  vectors = Eigen::MatrixXd::Identity(n, n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Index p = 0; p < n; ++p)
      for (Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (Index p = 0; p < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Index k = 0; k < n; ++k) {
          const double vkp = vectors(k, p), vkq = vectors(k, q);
          vectors(k, p) = c * vkp - s * vkq;
          vectors(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  values = a.diagonal();
}

Eigen::MatrixXd nearest_psd(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  jacobi_eigen(sym, values, vectors);
  const Index n = m.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  for (Index k = 0; k < n; ++k) {
    if (values[k] <= 0.0) continue;
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) out(i, j) += values[k] * vectors(i, k) * vectors(j, k);
  }
  return out;
}

double squared_form_naive(const Eigen::MatrixXd& m, const Eigen::VectorXd& a,
                          const Eigen::VectorXd& b) {
  double s = 0.0;
  for (Index i = 0; i < a.size(); ++i)
    for (Index j = 0; j < a.size(); ++j) s += (a[i] - b[i]) * m(i, j) * (a[j] - b[j]);
  return s;
}

double lmnn_objective_bruteforce(const Eigen::MatrixXd& x, const std::vector<int>& y,
                                 const Eigen::MatrixXd& m,
                                 const std::vector<std::vector<Index>>& targets, double mu,
                                 double margin) {
  const Index n = x.rows();
  double pull = 0.0, push = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index j : targets[static_cast<std::size_t>(i)]) {
      const double dij = squared_form_naive(m, x.row(i), x.row(j));
      pull += dij;
      for (Index l = 0; l < n; ++l) {
        if (y[static_cast<std::size_t>(l)] == y[static_cast<std::size_t>(i)]) continue;
        const double dil = squared_form_naive(m, x.row(i), x.row(l));
        push += std::max(0.0, margin + dij - dil);
      }
    }
  }
  return (1.0 - mu) * pull + mu * push;
}

std::vector<std::vector<Index>> target_neighbors_naive(const Eigen::MatrixXd& x,
                                                       const std::vector<int>& y, int k) {
  const Index n = x.rows();
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    std::vector<std::pair<double, Index>> cand;
    for (Index j = 0; j < n; ++j) {
      if (j == i || y[static_cast<std::size_t>(j)] != y[static_cast<std::size_t>(i)]) continue;
      double d = 0.0;
      for (Index c = 0; c < x.cols(); ++c) d += (x(i, c) - x(j, c)) * (x(i, c) - x(j, c));
      cand.emplace_back(d, j);
    }
    std::sort(cand.begin(), cand.end());
    for (std::size_t t = 0; t < cand.size() && t < static_cast<std::size_t>(k); ++t)
      out[static_cast<std::size_t>(i)].push_back(cand[t].second);
  }
  return out;
}

namespace {

// (squared distance, row) pairs of the K nearest rows, sorted.
std::vector<std::pair<double, Index>> k_nearest(const Eigen::MatrixXd& train,
                                                const std::vector<Index>& rows,
                                                const Eigen::MatrixXd& m, int K,
                                                const Eigen::VectorXd& x) {
  std::vector<std::pair<double, Index>> all;
  for (Index r : rows) all.emplace_back(squared_form_naive(m, train.row(r), x), r);
  std::sort(all.begin(), all.end());
  if (all.size() > static_cast<std::size_t>(K)) all.resize(static_cast<std::size_t>(K));
  return all;
}

}  // namespace

int flat_knn_naive(const Eigen::MatrixXd& train, const std::vector<int>& labels, int num_classes,
                   const Eigen::MatrixXd& m, int K, const Eigen::VectorXd& x) {
  std::vector<Index> rows;
  for (Index r = 0; r < train.rows(); ++r) rows.push_back(r);
  const auto nn = k_nearest(train, rows, m, K, x);
  std::vector<int> votes(static_cast<std::size_t>(num_classes), 0);
  std::vector<double> dsum(static_cast<std::size_t>(num_classes), 0.0);
  for (const auto& [d, r] : nn) {
    const auto c = static_cast<std::size_t>(labels[static_cast<std::size_t>(r)]);
    votes[c] += 1;
    dsum[c] += std::sqrt(std::max(0.0, d));
  }
  int top = 0;
  for (int v : votes) top = std::max(top, v);
  int best = -1;
  double best_mean = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    const auto cc = static_cast<std::size_t>(c);
    if (votes[cc] != top) continue;
    const double mean = dsum[cc] / votes[cc];
    if (best < 0 || mean < best_mean) {
      best = c;
      best_mean = mean;
    }
  }
  return best;
}

int tree_walk_naive(const HierarchicalModel& model, const Eigen::VectorXd& x) {
  std::uint64_t node = 0;
  while (true) {
    const auto& ids = model.tree.nodes.at(NodeId{node}).class_ids;
    if (ids.size() == 1) return ids.front();
    const auto& left_ids = model.tree.nodes.at(NodeId{2 * node + 1}).class_ids;
    const std::set<int> mine(ids.begin(), ids.end());
    const std::set<int> left(left_ids.begin(), left_ids.end());
    std::vector<Index> rows;
    for (std::size_t r = 0; r < model.train_labels.size(); ++r)
      if (mine.count(model.train_labels[r])) rows.push_back(static_cast<Index>(r));

    const Eigen::MatrixXd& m = model.node_metrics.at(NodeId{node}).matrix();
    const auto nn = k_nearest(model.train_features, rows, m, model.K, x);
    int votes_left = 0, votes_right = 0;
    double sum_left = 0.0, sum_right = 0.0;
    for (const auto& [d, r] : nn) {
      if (left.count(model.train_labels[static_cast<std::size_t>(r)])) {
        ++votes_left;
        sum_left += std::sqrt(std::max(0.0, d));
      } else {
        ++votes_right;
        sum_right += std::sqrt(std::max(0.0, d));
      }
    }
    bool go_left = votes_left > votes_right;
    if (votes_left == votes_right) go_left = !(sum_right / votes_right < sum_left / votes_left);
    node = go_left ? 2 * node + 1 : 2 * node + 2;
  }
}

Eigen::MatrixXd centroids_naive(const Eigen::MatrixXd& x, const std::vector<int>& y, int m) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m, x.cols());
  for (int c = 0; c < m; ++c) {
    int count = 0;
    for (Index i = 0; i < x.rows(); ++i) {
      if (y[static_cast<std::size_t>(i)] != c) continue;
      ++count;
      for (Index k = 0; k < x.cols(); ++k) out(c, k) += x(i, k);
    }
    for (Index k = 0; k < x.cols(); ++k) out(c, k) /= count;
  }
  return out;
}

long count_matches(const std::vector<int>& a, const std::vector<int>& b) {
  long n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += a[i] == b[i];
  return n;
}

LabeledDataset blobs(const Eigen::MatrixXd& centers, int per_class, double sigma,
                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  LabeledDataset ds;
  const Index m = centers.rows(), d = centers.cols();
  ds.features.resize(m * per_class, d);
  for (Index c = 0; c < m; ++c) {
    ds.class_names.push_back("c" + std::to_string(c));
    for (int s = 0; s < per_class; ++s) {
      const Index row = c * per_class + s;
      for (Index k = 0; k < d; ++k) ds.features(row, k) = centers(c, k) + noise(rng);
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  return ds;
}

Eigen::MatrixXd random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd out(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) out(i, j) = n(rng);
  return out;
}

}  // namespace hml::oracle
