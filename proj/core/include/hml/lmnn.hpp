#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hml {

using Index = Eigen::Index;

/// Symmetric positive semi-definite matrix defining a Mahalanobis metric.
class MetricMatrix {
 public:
  MetricMatrix() = default;

  static MetricMatrix identity(Index dim);
  /// Validates symmetry (1e-10) and PSD-ness (min eigenvalue >= -1e-8).
  static MetricMatrix from_matrix(Eigen::MatrixXd m);

  const Eigen::MatrixXd& matrix() const { return m_; }
  Index dim() const { return m_.rows(); }
  /// Exact identity; distance evaluation then skips the matrix product.
  bool is_identity() const { return identity_; }

  /// (a - b)' M (a - b), not clamped.
  double squared_form(const Eigen::Ref<const Eigen::VectorXd>& a,
                      const Eigen::Ref<const Eigen::VectorXd>& b) const;

 private:
  Eigen::MatrixXd m_;
  bool identity_ = false;
};

double min_eigenvalue(const Eigen::MatrixXd& m);
double max_asymmetry(const Eigen::MatrixXd& m);

/// sqrt(max(0, (x - x')' M (x - x'))). Throws ShapeError on mismatch.
double mahalanobis_distance(const MetricMatrix& metric,
                            const Eigen::Ref<const Eigen::VectorXd>& x,
                            const Eigen::Ref<const Eigen::VectorXd>& x2);

/// Symmetrizes, then clamps negative eigenvalues to zero. Throws
/// NumericalError if the eigendecomposition fails.
MetricMatrix psd_project(const Eigen::MatrixXd& m);

struct LmnnConfig {
  int k = 7;
  double mu = 0.5;
  double margin = 1.0;
  int max_iters = 200;
  /// Defaults to 1e-7 * N when unset.
  std::optional<double> initial_step;
  double tol = 1e-6;
  int impostor_refresh = 10;
  /// Optimize a factor L (r x d, r = min(d, N)) with M = L'L instead of M.
  bool low_rank = false;

  void validate() const;
};

struct TargetNeighbors {
  std::vector<std::vector<Index>> lists;
  std::vector<std::string> warnings;

  Index total() const;
};

/// For each sample, its k nearest same-label samples under Euclidean
/// distance (self excluded, ties by lower index). Classes with <= k samples
/// get n_c - 1 neighbors and a warning.
TargetNeighbors target_neighbors(const Eigen::MatrixXd& x, std::span<const int> y, int k);

struct LmnnEvaluation {
  double objective = 0.0;
  Eigen::MatrixXd gradient;
  long active_triplets = 0;
};

/// (1 - mu) * sum_{i, j in N_i} D(i, j)
///   + mu * sum_{i, j in N_i, l : y_l != y_i} max(0, margin + D(i, j) - D(i, l))
/// with D the squared form under `metric`. The gradient is with respect to
/// the entries of `metric`; subgradient 0 is used exactly at a hinge kink.
LmnnEvaluation lmnn_objective_and_gradient(const Eigen::MatrixXd& x, std::span<const int> y,
                                           const Eigen::MatrixXd& metric,
                                           const TargetNeighbors& targets,
                                           const LmnnConfig& cfg);

struct LmnnResult {
  MetricMatrix metric;
  std::vector<double> objective_trace;  // accepted iterates only
  long active_impostors_final = 0;
  bool converged = false;
  int iterations = 0;
  std::vector<std::string> warnings;
};

/// Projected (sub)gradient descent from M = I with backtracking. Throws
/// ArgumentError for fewer than 2 samples or classes, DegenerateInputError
/// when all samples coincide, NumericalError on a NaN objective.
LmnnResult fit_lmnn(const Eigen::MatrixXd& x, std::span<const int> y, const LmnnConfig& cfg);

}  // namespace hml
