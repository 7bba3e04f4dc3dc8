#include "hml/mmc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "hml/error.hpp"

namespace hml {

double Kernel::operator()(const Eigen::Ref<const Eigen::VectorXd>& a,
                          const Eigen::Ref<const Eigen::VectorXd>& b) const {
  if (type == KernelType::linear) return a.dot(b);
  return std::exp(-gamma * (a - b).squaredNorm());
}

Eigen::MatrixXd Kernel::gram(const Eigen::MatrixXd& x) const {
  const Eigen::Index n = x.rows();
  if (type == KernelType::linear) return x * x.transpose();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j)
      k(i, j) = k(j, i) = std::exp(-gamma * (x.row(i) - x.row(j)).squaredNorm());
  }
  return k;
}

std::string to_string(const Kernel& k) {
  return k.type == KernelType::linear ? "linear" : "rbf(" + std::to_string(k.gamma) + ")";
}

void MmcConfig::validate() const {
  if (!(C > 0.0)) throw ArgumentError("mmc: C must be positive");
  if (balance && !(*balance >= 0.0)) throw ArgumentError("mmc: l must be non-negative");
  if (!(tol > 0.0)) throw ArgumentError("mmc: tol must be positive");
  if (max_outer_iters < 1) throw ArgumentError("mmc: max_outer_iters must be positive");
  if (restarts < 1) throw ArgumentError("mmc: restarts must be positive");
  if (kernel.type == KernelType::rbf && !(kernel.gamma > 0.0))
    throw ArgumentError("mmc: rbf gamma must be positive");
}

double MmcConfig::balance_for(Eigen::Index n) const {
  if (balance) return *balance;
  return std::max(1.0, std::ceil(0.2 * static_cast<double>(n)));
}

int max_label_imbalance(Eigen::Index n, double balance) {
  const int parity = static_cast<int>(n % 2);
  auto s = static_cast<int>(std::min<double>(std::floor(balance + 1e-9),
                                             static_cast<double>(n)));
  if ((s - parity) % 2 != 0) --s;
  s = std::max(s, parity);
  return std::min(s, std::max(static_cast<int>(n) - 2, parity));
}

namespace {

double median(Eigen::VectorXd v) {
  const auto n = v.size();
  std::sort(v.data(), v.data() + n);
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct DualSolution {
  Eigen::VectorXd alpha;
  double b = 0.0;
  double objective = 0.0;
  int iterations = 0;
};

double primal_objective(const Eigen::MatrixXd& k, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& alpha, double b, double C) {
  const Eigen::VectorXd ka = k * alpha;
  const double reg = 0.5 * alpha.dot(ka);
  return std::max(0.0, reg) + C * ((y - ka).array() - b).abs().sum();
}

// Maximizes y'a - 1/2 a'Ka subject to sum(a) = 0 and -C <= a <= C.
DualSolution solve_dual(const Eigen::MatrixXd& k, const Eigen::VectorXd& y, double C) {
  const Eigen::Index n = y.size();
  DualSolution sol;
  sol.alpha = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd grad = y;  // y - K a
  const double scale = 1.0 + y.cwiseAbs().maxCoeff();
  double threshold = 1e-9 * scale;
  const long max_iters = 200000 + 2000L * n * n;
  double primal = std::numeric_limits<double>::infinity();

  for (long it = 0; it < max_iters; ++it) {
    Eigen::Index up = -1, low = -1;
    double g_up = -std::numeric_limits<double>::infinity();
    double g_low = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < n; ++t) {
      if (sol.alpha[t] < C && grad[t] > g_up) g_up = grad[t], up = t;
      if (sol.alpha[t] > -C && grad[t] < g_low) g_low = grad[t], low = t;
    }
    const bool kkt = up < 0 || low < 0 || g_up - g_low <= threshold;
    if (kkt) {
      const Eigen::VectorXd ka = k * sol.alpha;
      sol.b = median(y - ka);
      primal = primal_objective(k, y, sol.alpha, sol.b, C);
      const double dual = sol.alpha.dot(y) - 0.5 * sol.alpha.dot(ka);
      if (primal - dual <= 1e-6 * std::max(1.0, std::abs(primal)) || threshold < 1e-15 * scale) {
        sol.objective = primal;
        sol.iterations = static_cast<int>(it);
        return sol;
      }
      threshold *= 0.01;
      grad = y - ka;
      continue;
    }
    const double eta = std::max(k(up, up) + k(low, low) - 2.0 * k(up, low), 1e-12);
    double step = (g_up - g_low) / eta;
    step = std::min({step, C - sol.alpha[up], sol.alpha[low] + C});
    sol.alpha[up] += step;
    sol.alpha[low] -= step;
    grad.noalias() -= step * (k.col(up) - k.col(low));
  }
  const Eigen::VectorXd ka = k * sol.alpha;
  sol.b = median(y - ka);
  throw SolverError("svr: no convergence within iteration cap",
                    primal_objective(k, y, sol.alpha, sol.b, C));
}

}  // namespace

double SvrModel::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  double f = b;
  for (Eigen::Index j = 0; j < alpha.size(); ++j)
    if (alpha[j] != 0.0) f += alpha[j] * kernel(support_points.row(j).transpose(), x);
  return f;
}

Eigen::VectorXd SvrModel::predict_all(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = predict(x.row(i).transpose());
  return out;
}

SvrModel fit_svr_laplacian(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double C,
                           const Kernel& kernel) {
  if (x.rows() != y.size())
    throw ShapeError("svr: " + std::to_string(x.rows()) + " rows but " +
                     std::to_string(y.size()) + " targets");
  if (x.rows() < 2) throw ArgumentError("svr: needs at least 2 points");
  if (!(C > 0.0)) throw ArgumentError("svr: C must be positive");
  const auto sol = solve_dual(kernel.gram(x), y, C);
  SvrModel model;
  model.alpha = sol.alpha;
  model.b = sol.b;
  model.kernel = kernel;
  model.support_points = x;
  model.objective = sol.objective;
  model.iterations = sol.iterations;
  return model;
}

double svr_objective(const SvrModel& model, const Eigen::MatrixXd& x,
                     const Eigen::VectorXd& y, double C) {
  const Eigen::MatrixXd k = model.kernel.gram(model.support_points);
  const double reg = 0.5 * model.alpha.dot(k * model.alpha);
  return std::max(0.0, reg) + C * (y - model.predict_all(x)).cwiseAbs().sum();
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::vector<int> balanced_from_order(const std::vector<Eigen::Index>& order) {
  std::vector<int> y(order.size(), 1);
  for (std::size_t r = 0; r < order.size() / 2; ++r) y[order[r]] = -1;
  return y;
}

std::vector<int> principal_direction_labels(const Eigen::MatrixXd& points) {
  const Eigen::MatrixXd centered = points.rowwise() - points.colwise().mean();
  // The top eigenvector of the n x n Gram matrix is proportional to the
  // projections onto the top principal direction.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(centered * centered.transpose());
  const Eigen::VectorXd proj = eig.eigenvectors().col(points.rows() - 1);
  std::vector<Eigen::Index> order(points.rows());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return proj[a] < proj[b]; });
  return balanced_from_order(order);
}

std::vector<int> random_balanced_labels(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (Eigen::Index i = n - 1; i > 0; --i)
    std::swap(order[i], order[rng() % static_cast<std::uint64_t>(i + 1)]);
  return balanced_from_order(order);
}

// Relabels by sign(f) (ties keep the old label), then flips the cheapest
// labels of the majority group until |sum| <= max_imbalance.
std::vector<int> relabel(const Eigen::VectorXd& f, const std::vector<int>& old,
                         int max_imbalance) {
  const auto n = static_cast<Eigen::Index>(old.size());
  std::vector<int> y(old.size());
  int sum = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    y[j] = f[j] > 0.0 ? 1 : f[j] < 0.0 ? -1 : old[j];
    sum += y[j];
  }
  while (std::abs(sum) > max_imbalance) {
    const int majority = sum > 0 ? 1 : -1;
    Eigen::Index pick = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (y[j] != majority) continue;
      const double cost = std::abs(-majority - f[j]) - std::abs(majority - f[j]);
      if (cost < best) best = cost, pick = j;
    }
    y[pick] = -majority;
    sum -= 2 * majority;
  }
  return y;
}

struct RunOutcome {
  std::vector<int> labels;
  std::vector<double> trace;
  bool converged = false;
};

RunOutcome alternate(const Eigen::MatrixXd& k, std::vector<int> y, const MmcConfig& cfg,
                     int max_imbalance) {
  RunOutcome out;
  const auto n = static_cast<Eigen::Index>(y.size());
  for (int it = 0; it < cfg.max_outer_iters; ++it) {
    Eigen::VectorXd target(n);
    for (Eigen::Index j = 0; j < n; ++j) target[j] = y[j];
    const auto fit = solve_dual(k, target, cfg.C);
    if (!out.trace.empty() && fit.objective > out.trace.back()) {
      // Solver noise past the alternating-minimization fixed point.
      out.converged = true;
      break;
    }
    out.trace.push_back(fit.objective);
    out.labels = y;
    const auto t = out.trace.size();
    if (t >= 2 && std::abs(out.trace[t - 2] - out.trace[t - 1]) <=
                      cfg.tol * std::max(std::abs(out.trace[t - 2]), 1e-300)) {
      out.converged = true;
      break;
    }
    const Eigen::VectorXd f = (k * fit.alpha).array() + fit.b;
    auto next = relabel(f, y, max_imbalance);
    if (next == y) {
      out.converged = true;
      break;
    }
    y = std::move(next);
  }
  return out;
}

}  // namespace

MmcResult mmc_bipartition(const Eigen::MatrixXd& points, const MmcConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = points.rows();
  if (n < 2) throw ArgumentError("mmc: needs at least 2 points");
  if (!points.allFinite()) throw ArgumentError("mmc: points contain NaN or Inf");
  const double scale = 1.0 + points.cwiseAbs().maxCoeff();
  if ((points.rowwise() - points.row(0)).cwiseAbs().maxCoeff() <= 1e-12 * scale)
    throw DegenerateInputError("mmc: all points are identical; no separating margin exists");

  const int max_imbalance = max_label_imbalance(n, cfg.balance_for(n));
  const Eigen::MatrixXd k = cfg.kernel.gram(points);

  MmcResult best;
  for (int r = 0; r < cfg.restarts; ++r) {
    auto init = r == 0 ? principal_direction_labels(points)
                       : random_balanced_labels(n, splitmix64(cfg.seed + r));
    auto run = alternate(k, std::move(init), cfg, max_imbalance);
    if (best.objective_trace.empty() || run.trace.back() < best.objective_trace.back()) {
      best.assignment = std::move(run.labels);
      best.objective_trace = std::move(run.trace);
      best.converged = run.converged;
    }
  }
  best.restarts_used = cfg.restarts;
  if (best.assignment.front() == -1)
    for (int& v : best.assignment) v = -v;
  return best;
}

}  // namespace hml
