#include "vslcrf/lbfgs.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

namespace vslcrf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double finite_or_inf(double v) { return std::isfinite(v) ? v : kInf; }

struct LineSearchResult {
  bool ok = false;
  double alpha = 0.0;
  double f = kInf;
  Eigen::VectorXd x;
  Eigen::VectorXd g;
};

// Strong Wolfe line search (bracketing + bisection zoom).
LineSearchResult strong_wolfe(const ObjectiveFn& objective, const GradientFn& gradient,
                              const Eigen::VectorXd& x0, double f0,
                              const Eigen::VectorXd& g0, const Eigen::VectorXd& d,
                              const LbfgsConfig& cfg) {
  LineSearchResult res;
  const double dphi0 = g0.dot(d);
  if (!(dphi0 < 0)) return res;  // not a descent direction

  auto phi = [&](double a, Eigen::VectorXd& xa) {
    xa = x0 + a * d;
    return finite_or_inf(objective(xa));
  };

  const double c1 = cfg.wolfe_c1;
  const double c2 = cfg.wolfe_c2;

  double alpha_prev = 0.0;
  double phi_prev = f0;
  double alpha = 1.0;

  double lo = -1.0, hi = -1.0, phi_lo = kInf;
  bool bracketed = false;

  Eigen::VectorXd xa;
  for (int i = 1; i <= cfg.max_line_search && !bracketed; ++i) {
    const double phi_a = phi(alpha, xa);
    if (phi_a > f0 + c1 * alpha * dphi0 || (i > 1 && phi_a >= phi_prev)) {
      lo = alpha_prev;
      phi_lo = phi_prev;
      hi = alpha;
      bracketed = true;
      break;
    }
    const Eigen::VectorXd ga = gradient(xa);
    const double dphi_a = ga.dot(d);
    if (std::abs(dphi_a) <= -c2 * dphi0) {
      res.ok = true;
      res.alpha = alpha;
      res.f = phi_a;
      res.x = xa;
      res.g = ga;
      return res;
    }
    if (dphi_a >= 0) {
      lo = alpha;
      phi_lo = phi_a;
      hi = alpha_prev;
      bracketed = true;
      break;
    }
    alpha_prev = alpha;
    phi_prev = phi_a;
    alpha *= 2.0;
  }
  if (!bracketed) return res;

  // zoom: lo always satisfies sufficient decrease with the lowest phi found.
  for (int j = 0; j < cfg.max_line_search; ++j) {
    const double a = 0.5 * (lo + hi);
    const double phi_a = phi(a, xa);
    if (phi_a > f0 + c1 * a * dphi0 || phi_a >= phi_lo) {
      hi = a;
      continue;
    }
    const Eigen::VectorXd ga = gradient(xa);
    const double dphi_a = ga.dot(d);
    if (std::abs(dphi_a) <= -c2 * dphi0) {
      res.ok = true;
      res.alpha = a;
      res.f = phi_a;
      res.x = xa;
      res.g = ga;
      return res;
    }
    if (dphi_a * (hi - lo) >= 0) hi = lo;
    lo = a;
    phi_lo = phi_a;
  }
  return res;
}

// Armijo backtracking used for the steepest-descent fallback.
LineSearchResult backtracking(const ObjectiveFn& objective, const GradientFn& gradient,
                              const Eigen::VectorXd& x0, double f0,
                              const Eigen::VectorXd& g0, const Eigen::VectorXd& d,
                              const LbfgsConfig& cfg) {
  LineSearchResult res;
  const double dphi0 = g0.dot(d);
  if (!(dphi0 < 0)) return res;
  double alpha = 1.0 / std::max(1.0, d.cwiseAbs().maxCoeff());
  Eigen::VectorXd xa;
  for (int i = 0; i < 2 * cfg.max_line_search; ++i) {
    xa = x0 + alpha * d;
    const double fa = finite_or_inf(objective(xa));
    if (fa <= f0 + cfg.wolfe_c1 * alpha * dphi0) {
      res.ok = true;
      res.alpha = alpha;
      res.f = fa;
      res.x = xa;
      res.g = gradient(xa);
      return res;
    }
    alpha *= 0.5;
  }
  return res;
}

struct Pair {
  Eigen::VectorXd s;
  Eigen::VectorXd y;
  double rho;
};

Eigen::VectorXd two_loop(const std::deque<Pair>& hist, const Eigen::VectorXd& g) {
  Eigen::VectorXd q = g;
  std::vector<double> a(hist.size());
  for (int i = static_cast<int>(hist.size()) - 1; i >= 0; --i) {
    a[i] = hist[i].rho * hist[i].s.dot(q);
    q -= a[i] * hist[i].y;
  }
  if (!hist.empty()) {
    const Pair& last = hist.back();
    q *= last.s.dot(last.y) / last.y.dot(last.y);
  }
  for (std::size_t i = 0; i < hist.size(); ++i) {
    const double b = hist[i].rho * hist[i].y.dot(q);
    q += (a[i] - b) * hist[i].s;
  }
  return q;
}

}  // namespace

MinimizeResult minimize(const ObjectiveFn& objective, const GradientFn& gradient,
                        const Eigen::VectorXd& x0, const LbfgsConfig& cfg) {
  if (cfg.memory < 1) throw std::invalid_argument("lbfgs: memory must be >= 1");
  if (!(cfg.wolfe_c1 > 0 && cfg.wolfe_c1 < cfg.wolfe_c2 && cfg.wolfe_c2 < 1))
    throw std::invalid_argument("lbfgs: need 0 < c1 < c2 < 1");

  MinimizeResult res;
  res.x = x0;
  res.objective = objective(x0);
  if (!std::isfinite(res.objective))
    throw std::invalid_argument("lbfgs: objective not finite at x0");
  res.gradient = gradient(x0);
  res.trace.push_back(res.objective);

  std::deque<Pair> hist;
  bool fell_back = false;

  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    if (res.gradient.cwiseAbs().maxCoeff() < cfg.grad_tol) {
      res.converged = true;
      res.stop_reason = "grad_tol";
      return res;
    }

    Eigen::VectorXd d = -two_loop(hist, res.gradient);
    if (!(res.gradient.dot(d) < 0)) {
      hist.clear();
      d = -res.gradient;
    }

    LineSearchResult ls =
        strong_wolfe(objective, gradient, res.x, res.objective, res.gradient, d, cfg);
    if (!ls.ok) {
      if (fell_back) {
        res.stop_reason = "line_search_failed";
        return res;
      }
      fell_back = true;
      hist.clear();
      d = -res.gradient;
      ls = backtracking(objective, gradient, res.x, res.objective, res.gradient, d, cfg);
      if (!ls.ok) {
        res.stop_reason = "line_search_failed";
        return res;
      }
    } else {
      fell_back = false;
    }

    if (!std::isfinite(ls.f) || !ls.g.allFinite()) {
      res.diverged = true;
      res.stop_reason = "diverged";
      return res;
    }

    Pair p;
    p.s = ls.x - res.x;
    p.y = ls.g - res.gradient;
    const double ys = p.y.dot(p.s);
    if (ys > 1e-10) {  // keep the implicit Hessian approximation positive definite
      p.rho = 1.0 / ys;
      hist.push_back(std::move(p));
      if (static_cast<int>(hist.size()) > cfg.memory) hist.pop_front();
    }

    res.x = ls.x;
    res.objective = ls.f;
    res.gradient = ls.g;
    res.iterations = iter;
    res.trace.push_back(res.objective);
  }
  res.stop_reason = "max_iters";
  return res;
}

GradCheckResult grad_check(const ObjectiveFn& objective, const GradientFn& gradient,
                           const Eigen::VectorXd& x, double step) {
  if (!(step > 0)) throw std::invalid_argument("grad_check: step must be > 0");
  const Eigen::VectorXd g = gradient(x);
  GradCheckResult res;
  Eigen::VectorXd xp = x;
  for (int i = 0; i < x.size(); ++i) {
    xp(i) = x(i) + step;
    const double fp = objective(xp);
    xp(i) = x(i) - step;
    const double fm = objective(xp);
    xp(i) = x(i);
    const double fd = (fp - fm) / (2.0 * step);
    const double rel = std::abs(g(i) - fd) / std::max({1.0, std::abs(g(i)), std::abs(fd)});
    if (rel > res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst_index = i;
      res.analytic = g(i);
      res.numeric = fd;
    }
  }
  return res;
}

}  // namespace vslcrf
