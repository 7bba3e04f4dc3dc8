#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hml {

enum class KernelType { linear, rbf };

struct Kernel {
  KernelType type = KernelType::linear;
  double gamma = 1.0;  // rbf only: exp(-gamma * |x - x'|^2)

  static Kernel linear() { return {}; }
  static Kernel rbf(double gamma) { return {KernelType::rbf, gamma}; }

  double operator()(const Eigen::Ref<const Eigen::VectorXd>& a,
                    const Eigen::Ref<const Eigen::VectorXd>& b) const;
  Eigen::MatrixXd gram(const Eigen::MatrixXd& x) const;
};

std::string to_string(const Kernel& k);

/// Balanced max-margin clustering settings.
///
/// `balance` is the tolerance l in -l <= sum(y) <= l. When unset it
/// defaults to max(1, ceil(0.2 * n)) for an n-point problem.
struct MmcConfig {
  double C = 1.0;
  std::optional<double> balance;
  Kernel kernel;
  int max_outer_iters = 50;
  double tol = 1e-5;
  std::uint64_t seed = 0;
  int restarts = 5;

  void validate() const;
  double balance_for(Eigen::Index n) const;
};

/// Largest |sum(y)| a +-1 labeling of n points may have under tolerance l.
/// Accounts for parity (an odd n cannot reach 0) and keeps both groups
/// nonempty.
int max_label_imbalance(Eigen::Index n, double balance);

/// Dual-form regressor f(x) = sum_j alpha_j k(x_j, x) + b.
struct SvrModel {
  Eigen::VectorXd alpha;
  double b = 0.0;
  Kernel kernel;
  Eigen::MatrixXd support_points;
  double objective = 0.0;  // primal objective at the fitted targets
  int iterations = 0;

  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::VectorXd predict_all(const Eigen::MatrixXd& x) const;
};

/// Minimizes 1/2 |w|^2 + C * sum_j |y_j - f(x_j)| (epsilon-free SVR).
///
/// Solved in the dual (box-constrained, zero-sum coefficients) by
/// maximal-violating-pair coordinate ascent; the bias is the median of the
/// residuals, which is exact for fixed w. Stops once the duality gap is
/// below 1e-6 relative. Throws SolverError if the iteration cap is hit.
SvrModel fit_svr_laplacian(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double C,
                           const Kernel& kernel);

/// Primal objective of a fitted model on (x, y).
double svr_objective(const SvrModel& model, const Eigen::MatrixXd& x,
                     const Eigen::VectorXd& y, double C);

struct MmcResult {
  std::vector<int> assignment;  // +1 / -1 per input row
  std::vector<double> objective_trace;
  bool converged = false;
  int restarts_used = 0;

  double objective() const { return objective_trace.back(); }
};

/// Splits the rows of `points` into two groups by alternating SVR fits and
/// balance-repaired sign relabeling; best of `cfg.restarts` seeded runs.
/// The first row is always assigned +1. Throws DegenerateInputError when
/// all points coincide.
MmcResult mmc_bipartition(const Eigen::MatrixXd& points, const MmcConfig& cfg);

}  // namespace hml
