#include "vslcrf/potentials.hpp"

#include <cmath>
#include <stdexcept>

#include "vslcrf/constants.hpp"

namespace vslcrf {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

double normal_cdf(double z) { return 0.5 * std::erfc(-z * kInvSqrt2); }

double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

double normal_bin_prob(double z_lo, double z_hi) {
  double p;
  if (z_lo > 0.0) {
    // Both bounds in the upper tail: difference of complementary cdfs keeps
    // relative accuracy where Phi saturates at 1.
    p = normal_cdf(-z_lo) - normal_cdf(-z_hi);
  } else {
    p = normal_cdf(z_hi) - normal_cdf(z_lo);
  }
  return p > 0.0 ? p : 0.0;
}

Eigen::VectorXd nominal_node_logprob(const Eigen::VectorXd& x, const NominalParams& p) {
  if (p.beta.cols() != x.size() + 1)
    throw std::invalid_argument("nominal_node_logprob: feature dimension mismatch");
  Eigen::VectorXd f = p.beta.col(0) + p.beta.rightCols(p.beta.cols() - 1) * x;
  const double m = f.maxCoeff();
  const double lse = m + std::log((f.array() - m).exp().sum());
  return f.array() - lse;
}

Eigen::VectorXd ordinal_node_logprob(const Eigen::VectorXd& x, const OrdinalParams& p,
                                     int num_states, double sigma_floor) {
  if (p.a.size() != x.size())
    throw std::invalid_argument("ordinal_node_logprob: feature dimension mismatch");
  const double sigma = effective_sigma(p, sigma_floor);
  const double proj = p.a.dot(x);
  const Eigen::VectorXd b = derive_thresholds(p, num_states);
  Eigen::VectorXd out(num_states);
  for (int c = 1; c <= num_states; ++c) {
    const double z_lo = (b(c - 1) - proj) / sigma;
    const double z_hi = (b(c) - proj) / sigma;
    const double prob = normal_bin_prob(z_lo, z_hi);
    out(c - 1) = std::log(prob > kProbClamp ? prob : kProbClamp);
  }
  return out;
}

double edge_feature(const Eigen::VectorXd& x_r, const Eigen::VectorXd& x_s,
                    EdgeFeatureMode mode) {
  if (mode == EdgeFeatureMode::constant_one) return 1.0;
  if (x_r.size() != x_s.size())
    throw std::invalid_argument("edge_feature: feature dimension mismatch");
  return (x_r - x_s).cwiseAbs().sum();
}

Eigen::MatrixXd edge_logpotential(const Eigen::VectorXd& x_r, const Eigen::VectorXd& x_s,
                                  const EdgeParams& e, EdgeFeatureMode mode) {
  return e.u * edge_feature(x_r, x_s, mode);
}

NodeLogTable build_node_table(const Sequence& seq, const ClassParams& cp, Branch branch,
                              int num_states, double sigma_floor) {
  const int T = seq.length();
  NodeLogTable table;
  table.branch = branch;
  table.values.resize(T, num_states);
  for (int t = 0; t < T; ++t) {
    const Eigen::VectorXd x = seq.frames.row(t).transpose();
    table.values.row(t) =
        (branch == Branch::nominal)
            ? nominal_node_logprob(x, cp.nominal).transpose()
            : ordinal_node_logprob(x, cp.ordinal, num_states, sigma_floor).transpose();
  }
  return table;
}

Eigen::VectorXd edge_features(const Sequence& seq, EdgeFeatureMode mode) {
  const int T = seq.length();
  Eigen::VectorXd g(std::max(0, T - 1));
  for (int t = 0; t + 1 < T; ++t)
    g(t) = edge_feature(seq.frames.row(t).transpose(), seq.frames.row(t + 1).transpose(), mode);
  return g;
}

EdgeLogTable build_edge_table(const Sequence& seq, const EdgeParams& e, EdgeFeatureMode mode) {
  const Eigen::VectorXd g = edge_features(seq, mode);
  EdgeLogTable table;
  table.values.reserve(g.size());
  for (int t = 0; t < g.size(); ++t) table.values.push_back(e.u * g(t));
  return table;
}

double sequence_score(const Sequence& seq, const ClassParams& cp, Branch branch,
                      std::span<const int> path, EdgeFeatureMode mode, double sigma_floor) {
  const int T = seq.length();
  const int C = static_cast<int>(branch == Branch::nominal ? cp.nominal.beta.rows()
                                                           : cp.ordinal.gamma.size() + 2);
  if (static_cast<int>(path.size()) != T)
    throw std::invalid_argument("sequence_score: path length must equal T");
  for (int h : path)
    if (h < 1 || h > C) throw std::invalid_argument("sequence_score: path state out of 1..C");

  const NodeLogTable node = build_node_table(seq, cp, branch, C, sigma_floor);
  const EdgeParams& e = branch == Branch::nominal ? cp.nominal_edge : cp.ordinal_edge;
  const Eigen::VectorXd g = edge_features(seq, mode);

  double score = 0.0;
  for (int t = 0; t < T; ++t) score += node.values(t, path[t] - 1);
  for (int t = 0; t + 1 < T; ++t) score += e.u(path[t] - 1, path[t + 1] - 1) * g(t);
  return score;
}

}  // namespace vslcrf
