#include "hml/lmnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "hml/error.hpp"

namespace hml {

MetricMatrix MetricMatrix::identity(Index dim) {
  MetricMatrix out;
  out.m_ = Eigen::MatrixXd::Identity(dim, dim);
  out.identity_ = true;
  return out;
}

double max_asymmetry(const Eigen::MatrixXd& m) {
  return m.rows() == 0 ? 0.0 : (m - m.transpose()).cwiseAbs().maxCoeff();
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
  if (m.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw NumericalError("eigenvalue computation failed");
  return eig.eigenvalues().minCoeff();
}

MetricMatrix MetricMatrix::from_matrix(Eigen::MatrixXd m) {
  if (m.rows() != m.cols()) throw ShapeError("metric must be square");
  if (!m.allFinite()) throw NumericalError("metric has non-finite entries");
  if (max_asymmetry(m) > 1e-10) throw ArgumentError("metric is not symmetric");
  if (min_eigenvalue(m) < -1e-8) throw ArgumentError("metric is not positive semi-definite");
  MetricMatrix out;
  out.identity_ = m.isIdentity(0.0);
  out.m_ = std::move(m);
  return out;
}

double MetricMatrix::squared_form(const Eigen::Ref<const Eigen::VectorXd>& a,
                                  const Eigen::Ref<const Eigen::VectorXd>& b) const {
  const Eigen::VectorXd diff = a - b;
  if (identity_) return diff.squaredNorm();
  return diff.dot(m_ * diff);
}

double mahalanobis_distance(const MetricMatrix& metric,
                            const Eigen::Ref<const Eigen::VectorXd>& x,
                            const Eigen::Ref<const Eigen::VectorXd>& x2) {
  if (x.size() != metric.dim() || x2.size() != metric.dim())
    throw ShapeError("distance: metric has dimension " + std::to_string(metric.dim()) +
                     ", inputs have " + std::to_string(x.size()) + " and " +
                     std::to_string(x2.size()));
  return std::sqrt(std::max(0.0, metric.squared_form(x, x2)));
}

MetricMatrix psd_project(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw ShapeError("psd_project: matrix must be square");
  if (!m.allFinite()) throw NumericalError("psd_project: matrix has non-finite entries");
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(sym);
    const auto& s = svd.singularValues();
    const double cond = s.size() ? s(0) / std::max(s(s.size() - 1), 1e-300) : 0.0;
    throw NumericalError("psd_project: eigendecomposition failed (condition number ~" +
                         std::to_string(cond) + ")");
  }
  const Eigen::VectorXd clamped = eig.eigenvalues().cwiseMax(0.0);
  Eigen::MatrixXd out =
      eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
  out = 0.5 * (out + out.transpose()).eval();
  return MetricMatrix::from_matrix(std::move(out));
}

void LmnnConfig::validate() const {
  if (k < 1) throw ArgumentError("lmnn: k must be positive");
  if (!(mu >= 0.0 && mu <= 1.0)) throw ArgumentError("lmnn: mu must lie in [0, 1]");
  if (!(margin > 0.0)) throw ArgumentError("lmnn: margin must be positive");
  if (max_iters < 1) throw ArgumentError("lmnn: max_iters must be positive");
  if (initial_step && !(*initial_step > 0.0))
    throw ArgumentError("lmnn: initial_step must be positive");
  if (!(tol > 0.0)) throw ArgumentError("lmnn: tol must be positive");
  if (impostor_refresh < 1) throw ArgumentError("lmnn: impostor_refresh must be positive");
}

Index TargetNeighbors::total() const {
  Index t = 0;
  for (const auto& l : lists) t += static_cast<Index>(l.size());
  return t;
}

TargetNeighbors target_neighbors(const Eigen::MatrixXd& x, std::span<const int> y, int k) {
  if (static_cast<Index>(y.size()) != x.rows())
    throw ShapeError("target_neighbors: label count does not match rows");
  if (k < 1) throw ArgumentError("target_neighbors: k must be positive");
  const Index n = x.rows();
  TargetNeighbors out;
  out.lists.resize(n);
  std::set<int> warned;
  for (Index i = 0; i < n; ++i) {
    std::vector<std::pair<double, Index>> cand;
    for (Index j = 0; j < n; ++j)
      if (j != i && y[j] == y[i]) cand.emplace_back((x.row(i) - x.row(j)).squaredNorm(), j);
    const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), cand.size());
    if (take < static_cast<std::size_t>(k) && warned.insert(y[i]).second)
      out.warnings.push_back("class " + std::to_string(y[i]) + " has " +
                             std::to_string(cand.size() + 1) + " samples; k reduced to " +
                             std::to_string(cand.size()));
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take),
                      cand.end());
    for (std::size_t t = 0; t < take; ++t) out.lists[i].push_back(cand[t].second);
  }
  return out;
}

namespace {

// Pull/push weights of one evaluation. The gradient with respect to M is
//   X' diag(coef) X - X' S - S' X
// where row i of S is sum_l w_il x_l over the pair weights of sample i.
struct TripletSums {
  double objective = 0.0;
  long active = 0;
  Eigen::VectorXd coef;
  Eigen::MatrixXd s;
};

template <typename RowForms>
TripletSums accumulate(const Eigen::MatrixXd& xc, std::span<const int> y,
                       const TargetNeighbors& targets, const LmnnConfig& cfg,
                       RowForms&& row_forms) {
  const Index n = xc.rows();
  TripletSums out;
  out.coef = Eigen::VectorXd::Zero(n);
  out.s = Eigen::MatrixXd::Zero(n, xc.cols());
  const double pull = 1.0 - cfg.mu;
  const double push = cfg.mu;
  Eigen::VectorXd w(n);
  for (Index i = 0; i < n; ++i) {
    const auto& nbrs = targets.lists[i];
    if (nbrs.empty()) continue;
    const Eigen::VectorXd dist = row_forms(i);
    w.setZero();
    for (Index j : nbrs) {
      out.objective += pull * dist[j];
      w[j] += pull;
      if (push == 0.0) continue;
      const double reach = cfg.margin + dist[j];
      for (Index l = 0; l < n; ++l) {
        if (y[l] == y[i]) continue;
        const double h = reach - dist[l];
        if (h > 0.0) {
          out.objective += push * h;
          w[j] += push;
          w[l] -= push;
          ++out.active;
        }
      }
    }
    out.coef += w;
    out.coef[i] += w.sum();
    out.s.row(i) = w.transpose() * xc;
  }
  return out;
}

Eigen::MatrixXd full_gradient(const Eigen::MatrixXd& xc, const TripletSums& t) {
  Eigen::MatrixXd g = xc.transpose() * t.coef.asDiagonal() * xc;
  const Eigen::MatrixXd cross = xc.transpose() * t.s;
  g -= cross + cross.transpose();
  return g;
}

TripletSums evaluate_full(const Eigen::MatrixXd& xc, std::span<const int> y,
                          const Eigen::MatrixXd& m, const TargetNeighbors& targets,
                          const LmnnConfig& cfg) {
  const Eigen::MatrixXd t = xc * m;
  return accumulate(xc, y, targets, cfg, [&](Index i) -> Eigen::VectorXd {
    return ((t.rowwise() - t.row(i)).cwiseProduct(xc.rowwise() - xc.row(i))).rowwise().sum();
  });
}

TripletSums evaluate_factored(const Eigen::MatrixXd& xc, std::span<const int> y,
                              const Eigen::MatrixXd& l, const TargetNeighbors& targets,
                              const LmnnConfig& cfg, Eigen::MatrixXd& transformed) {
  transformed = xc * l.transpose();
  return accumulate(xc, y, targets, cfg, [&](Index i) -> Eigen::VectorXd {
    return (transformed.rowwise() - transformed.row(i)).rowwise().squaredNorm();
  });
}

}  // namespace

LmnnEvaluation lmnn_objective_and_gradient(const Eigen::MatrixXd& x, std::span<const int> y,
                                           const Eigen::MatrixXd& metric,
                                           const TargetNeighbors& targets,
                                           const LmnnConfig& cfg) {
  if (static_cast<Index>(y.size()) != x.rows() ||
      static_cast<Index>(targets.lists.size()) != x.rows())
    throw ShapeError("lmnn: labels and target lists must match the sample count");
  if (metric.rows() != x.cols() || metric.cols() != x.cols())
    throw ShapeError("lmnn: metric must be " + std::to_string(x.cols()) + "x" +
                     std::to_string(x.cols()));
  const Eigen::MatrixXd xc = x.rowwise() - x.colwise().mean();
  const auto sums = evaluate_full(xc, y, metric, targets, cfg);
  return {sums.objective, full_gradient(xc, sums), sums.active};
}

namespace {

void check_fit_inputs(const Eigen::MatrixXd& x, std::span<const int> y) {
  if (static_cast<Index>(y.size()) != x.rows())
    throw ShapeError("lmnn: label count does not match rows");
  if (x.rows() < 2) throw ArgumentError("lmnn: needs at least 2 samples");
  if (std::set<int>(y.begin(), y.end()).size() < 2)
    throw ArgumentError("lmnn: needs at least 2 classes");
  if (!x.allFinite()) throw ArgumentError("lmnn: features contain NaN or Inf");
  const double scale = 1.0 + x.cwiseAbs().maxCoeff();
  if ((x.rowwise() - x.row(0)).cwiseAbs().maxCoeff() <= 1e-12 * scale)
    throw DegenerateInputError("lmnn: all samples are identical");
}

void check_finite(double objective, int iter, double step) {
  if (std::isnan(objective))
    throw NumericalError("lmnn: objective became NaN at iteration " + std::to_string(iter) +
                         " (step " + std::to_string(step) + ")");
}

bool small_change(double before, double after, double tol) {
  return before - after <= tol * std::max(std::abs(before), 1e-300);
}

constexpr int kMaxHalvings = 20;
constexpr double kStepGrowth = 1.1;

LmnnResult fit_full(const Eigen::MatrixXd& xc, std::span<const int> y,
                    const TargetNeighbors& targets, const LmnnConfig& cfg, double step) {
  LmnnResult out;
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(xc.cols(), xc.cols());
  auto cur = evaluate_full(xc, y, m, targets, cfg);
  check_finite(cur.objective, 0, step);
  out.objective_trace.push_back(cur.objective);
  bool moved = false;

  for (int it = 1; it <= cfg.max_iters; ++it) {
    out.iterations = it;
    const Eigen::MatrixXd grad = full_gradient(xc, cur);
    bool accepted = false;
    for (int h = 0; h <= kMaxHalvings; ++h, step *= 0.5) {
      Eigen::MatrixXd cand = psd_project(m - step * grad).matrix();
      auto next = evaluate_full(xc, y, cand, targets, cfg);
      check_finite(next.objective, it, step);
      if (next.objective < cur.objective) {
        const bool done = small_change(cur.objective, next.objective, cfg.tol);
        m = std::move(cand);
        cur = std::move(next);
        out.objective_trace.push_back(cur.objective);
        accepted = moved = true;
        step *= kStepGrowth;
        if (done) out.converged = true;
        break;
      }
    }
    if (!accepted) out.converged = true;
    if (out.converged) break;
  }
  out.metric = moved ? MetricMatrix::from_matrix(std::move(m)) : MetricMatrix::identity(xc.cols());
  out.active_impostors_final = cur.active;
  return out;
}

LmnnResult fit_factored(const Eigen::MatrixXd& xc, std::span<const int> y,
                        const TargetNeighbors& targets, const LmnnConfig& cfg, double step) {
  const Index d = xc.cols();
  const Index r = std::min(d, xc.rows());
  Eigen::MatrixXd l;
  if (r == d) {
    l = Eigen::MatrixXd::Identity(d, d);
  } else {
    // Rows spanning the data: distances between samples match the identity
    // metric at the start.
    Eigen::BDCSVD<Eigen::MatrixXd> svd(xc, Eigen::ComputeThinV);
    l = svd.matrixV().leftCols(r).transpose();
  }
  LmnnResult out;
  Eigen::MatrixXd t;
  auto cur = evaluate_factored(xc, y, l, targets, cfg, t);
  check_finite(cur.objective, 0, step);
  out.objective_trace.push_back(cur.objective);

  for (int it = 1; it <= cfg.max_iters; ++it) {
    out.iterations = it;
    // d/dL f(L'L) = 2 L G with G the gradient with respect to M.
    const Eigen::MatrixXd st = cur.s * l.transpose();
    const Eigen::MatrixXd grad =
        2.0 * (t.transpose() * cur.coef.asDiagonal() * xc - t.transpose() * cur.s -
               st.transpose() * xc);
    bool accepted = false;
    for (int h = 0; h <= kMaxHalvings; ++h, step *= 0.5) {
      Eigen::MatrixXd cand = l - step * grad;
      Eigen::MatrixXd cand_t;
      auto next = evaluate_factored(xc, y, cand, targets, cfg, cand_t);
      check_finite(next.objective, it, step);
      if (next.objective < cur.objective) {
        const bool done = small_change(cur.objective, next.objective, cfg.tol);
        l = std::move(cand);
        t = std::move(cand_t);
        cur = std::move(next);
        out.objective_trace.push_back(cur.objective);
        accepted = true;
        step *= kStepGrowth;
        if (done) out.converged = true;
        break;
      }
    }
    if (!accepted) out.converged = true;
    if (out.converged) break;
  }
  Eigen::MatrixXd m = l.transpose() * l;
  m = 0.5 * (m + m.transpose()).eval();
  out.metric = MetricMatrix::from_matrix(std::move(m));
  out.active_impostors_final = cur.active;
  return out;
}

}  // namespace

LmnnResult fit_lmnn(const Eigen::MatrixXd& x, std::span<const int> y, const LmnnConfig& cfg) {
  cfg.validate();
  check_fit_inputs(x, y);
  const Eigen::MatrixXd xc = x.rowwise() - x.colwise().mean();
  auto targets = target_neighbors(xc, y, cfg.k);
  const double step = cfg.initial_step.value_or(1e-7 * static_cast<double>(x.rows()));
  auto out = cfg.low_rank ? fit_factored(xc, y, targets, cfg, step)
                          : fit_full(xc, y, targets, cfg, step);
  out.warnings = std::move(targets.warnings);
  return out;
}

}  // namespace hml
