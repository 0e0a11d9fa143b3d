#pragma once

// Brute-force reference implementations used only by tests. Everything here
// is computed by direct enumeration over all C^T latent paths with naive
// probability formulas, independent of the forward-backward code paths.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "vslcrf/types.hpp"

namespace oracle {

using vslcrf::Branch;
using vslcrf::ClassParams;
using vslcrf::EdgeFeatureMode;
using vslcrf::Mode;
using vslcrf::Model;
using vslcrf::Sequence;

inline double phi_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline double node_prob(const Eigen::VectorXd& x, const ClassParams& cp, Branch branch,
                        int state /*1-based*/, int C, double sigma_floor) {
  if (branch == Branch::nominal) {
    double denom = 0.0;
    double num = 0.0;
    for (int c = 0; c < C; ++c) {
      double f = cp.nominal.beta(c, 0);
      for (int d = 0; d < x.size(); ++d) f += cp.nominal.beta(c, d + 1) * x(d);
      const double e = std::exp(f);
      denom += e;
      if (c == state - 1) num = e;
    }
    return num / denom;
  }
  const double sigma = cp.ordinal.sigma0 * cp.ordinal.sigma0 + sigma_floor;
  const double proj = cp.ordinal.a.dot(x);
  std::vector<double> b(C + 1);
  b[0] = -std::numeric_limits<double>::infinity();
  b[C] = std::numeric_limits<double>::infinity();
  b[1] = cp.ordinal.b1;
  for (int j = 2; j <= C - 1; ++j)
    b[j] = b[j - 1] + cp.ordinal.gamma(j - 2) * cp.ordinal.gamma(j - 2);
  double p = phi_cdf((b[state] - proj) / sigma) - phi_cdf((b[state - 1] - proj) / sigma);
  if (p < 1e-300) p = 1e-300;
  return p;
}

inline double path_score(const Sequence& seq, const ClassParams& cp, Branch branch,
                         const std::vector<int>& path, int C, EdgeFeatureMode mode,
                         double sigma_floor) {
  const int T = seq.length();
  double score = 0.0;
  for (int t = 0; t < T; ++t)
    score += std::log(
        node_prob(seq.frames.row(t).transpose(), cp, branch, path[t], C, sigma_floor));
  const Eigen::MatrixXd& u = branch == Branch::nominal ? cp.nominal_edge.u : cp.ordinal_edge.u;
  for (int t = 0; t + 1 < T; ++t) {
    double g = 1.0;
    if (mode == EdgeFeatureMode::l1_distance)
      g = (seq.frames.row(t) - seq.frames.row(t + 1)).cwiseAbs().sum();
    score += u(path[t] - 1, path[t + 1] - 1) * g;
  }
  return score;
}

struct Enumeration {
  std::vector<std::vector<int>> paths;
  std::vector<double> scores;
  double log_z = 0.0;
};

inline Enumeration enumerate_paths(const Sequence& seq, const ClassParams& cp, Branch branch,
                                   int C, EdgeFeatureMode mode, double sigma_floor) {
  const int T = seq.length();
  Enumeration e;
  std::vector<int> path(T, 1);
  while (true) {
    e.paths.push_back(path);
    e.scores.push_back(path_score(seq, cp, branch, path, C, mode, sigma_floor));
    int t = T - 1;
    while (t >= 0 && path[t] == C) path[t--] = 1;
    if (t < 0) break;
    ++path[t];
  }
  double m = e.scores[0];
  for (double s : e.scores) m = std::max(m, s);
  double acc = 0.0;
  for (double s : e.scores) acc += std::exp(s - m);
  e.log_z = m + std::log(acc);
  return e;
}

inline double log_z(const Sequence& seq, const ClassParams& cp, Branch branch, int C,
                    EdgeFeatureMode mode, double sigma_floor) {
  return enumerate_paths(seq, cp, branch, C, mode, sigma_floor).log_z;
}

inline Eigen::MatrixXd node_marginals(const Enumeration& e, int T, int C) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(T, C);
  for (std::size_t i = 0; i < e.paths.size(); ++i) {
    const double w = std::exp(e.scores[i] - e.log_z);
    for (int t = 0; t < T; ++t) out(t, e.paths[i][t] - 1) += w;
  }
  return out;
}

inline std::vector<Eigen::MatrixXd> edge_marginals(const Enumeration& e, int T, int C) {
  std::vector<Eigen::MatrixXd> out(T - 1, Eigen::MatrixXd::Zero(C, C));
  for (std::size_t i = 0; i < e.paths.size(); ++i) {
    const double w = std::exp(e.scores[i] - e.log_z);
    for (int t = 0; t + 1 < T; ++t)
      out[t](e.paths[i][t] - 1, e.paths[i][t + 1] - 1) += w;
  }
  return out;
}

// Per-class branch log partitions by enumeration: K x 2.
inline Eigen::MatrixXd branch_log_z(const Sequence& seq, const Model& model) {
  const int K = model.config.num_classes;
  const int C = model.config.num_states;
  Eigen::MatrixXd out(K, 2);
  for (int k = 0; k < K; ++k)
    for (int b = 0; b < 2; ++b)
      out(k, b) = log_z(seq, model.classes[k], static_cast<Branch>(b), C,
                        model.config.edge_feature_mode, model.hyper.sigma_floor);
  return out;
}

inline Eigen::VectorXd class_conditional(const Sequence& seq, const Model& model) {
  const Eigen::MatrixXd lz = branch_log_z(seq, model);
  const int K = model.config.num_classes;
  Eigen::VectorXd scores(K);
  for (int k = 0; k < K; ++k) {
    switch (model.config.mode) {
      case Mode::HCRF:
        scores(k) = lz(k, 0);
        break;
      case Mode::HCORF:
        scores(k) = lz(k, 1);
        break;
      case Mode::VSLm:
        scores(k) = std::max(lz(k, 0), lz(k, 1));
        break;
      default: {
        const double m = std::max(lz(k, 0), lz(k, 1));
        scores(k) = m + std::log(std::exp(lz(k, 0) - m) + std::exp(lz(k, 1) - m));
        break;
      }
    }
  }
  const double m = scores.maxCoeff();
  Eigen::VectorXd p = (scores.array() - m).exp();
  return p / p.sum();
}

inline double nu_posterior_nominal(const Sequence& seq, int label, const Model& model) {
  const Eigen::MatrixXd lz = branch_log_z(seq, model);
  const double zn = lz(label - 1, 0);
  const double zo = lz(label - 1, 1);
  const double m = std::max(zn, zo);
  return std::exp(zn - m) / (std::exp(zn - m) + std::exp(zo - m));
}

}  // namespace oracle
