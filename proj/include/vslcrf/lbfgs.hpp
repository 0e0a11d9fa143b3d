#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace vslcrf {

using ObjectiveFn = std::function<double(const Eigen::VectorXd&)>;
using GradientFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct LbfgsConfig {
  int memory = 10;          // history pairs
  int max_iters = 200;
  double grad_tol = 1e-5;   // sup-norm stopping test
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
  int max_line_search = 20;
};

struct MinimizeResult {
  Eigen::VectorXd x;
  double objective = 0.0;
  Eigen::VectorXd gradient;
  std::vector<double> trace;  // accepted objective values, starting at x0
  int iterations = 0;
  bool converged = false;     // sup-norm gradient test met
  bool diverged = false;      // non-finite objective with no recovery
  std::string stop_reason;
};

// Two-loop-recursion L-BFGS with a strong Wolfe line search. The returned
// objective never exceeds objective(x0). A failed line search falls back to
// one steepest-descent step; a second consecutive failure stops with the
// best point so far.
MinimizeResult minimize(const ObjectiveFn& objective, const GradientFn& gradient,
                        const Eigen::VectorXd& x0, const LbfgsConfig& cfg);

struct GradCheckResult {
  double max_rel_error = 0.0;
  int worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central finite differences per coordinate;
// relative error = |a - fd| / max(1, |a|, |fd|).
GradCheckResult grad_check(const ObjectiveFn& objective, const GradientFn& gradient,
                           const Eigen::VectorXd& x, double step);

}  // namespace vslcrf
