#include "vslcrf/chain.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace vslcrf {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;  // all -inf (or a +inf/nan input)
  return m + std::log((v.array() - m).exp().sum());
}

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = a > b ? a : b;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

namespace {

// Forward recursion over the chain; returns T x C log-alpha.
Eigen::MatrixXd forward_pass(const Eigen::MatrixXd& node, const EdgeLogTable& edge) {
  const int T = static_cast<int>(node.rows());
  const int C = static_cast<int>(node.cols());
  Eigen::MatrixXd alpha(T, C);
  alpha.row(0) = node.row(0);
  Eigen::VectorXd scratch(C);
  for (int t = 1; t < T; ++t) {
    const Eigen::MatrixXd& e = edge.values[t - 1];
    for (int c = 0; c < C; ++c) {
      scratch = alpha.row(t - 1).transpose() + e.col(c);
      alpha(t, c) = node(t, c) + log_sum_exp(scratch);
    }
  }
  return alpha;
}

Eigen::MatrixXd backward_pass(const Eigen::MatrixXd& node, const EdgeLogTable& edge) {
  const int T = static_cast<int>(node.rows());
  const int C = static_cast<int>(node.cols());
  Eigen::MatrixXd beta(T, C);
  beta.row(T - 1).setZero();
  Eigen::VectorXd scratch(C);
  for (int t = T - 2; t >= 0; --t) {
    const Eigen::MatrixXd& e = edge.values[t];
    for (int l = 0; l < C; ++l) {
      scratch = e.row(l).transpose() + node.row(t + 1).transpose() + beta.row(t + 1).transpose();
      beta(t, l) = log_sum_exp(scratch);
    }
  }
  return beta;
}

}  // namespace

double branch_log_partition(const Sequence& seq, const ClassParams& cp, Branch branch,
                            EdgeFeatureMode mode, double sigma_floor) {
  const int C = static_cast<int>(branch == Branch::nominal ? cp.nominal.beta.rows()
                                                           : cp.ordinal.gamma.size() + 2);
  const NodeLogTable node = build_node_table(seq, cp, branch, C, sigma_floor);
  const EdgeLogTable edge = build_edge_table(
      seq, branch == Branch::nominal ? cp.nominal_edge : cp.ordinal_edge, mode);
  const Eigen::MatrixXd alpha = forward_pass(node.values, edge);
  return log_sum_exp(alpha.row(alpha.rows() - 1).transpose());
}

ChainPosteriors branch_partition(const Sequence& seq, const ClassParams& cp, Branch branch,
                                 EdgeFeatureMode mode, double sigma_floor) {
  const int C = static_cast<int>(branch == Branch::nominal ? cp.nominal.beta.rows()
                                                           : cp.ordinal.gamma.size() + 2);
  const int T = seq.length();
  const NodeLogTable node = build_node_table(seq, cp, branch, C, sigma_floor);
  const EdgeLogTable edge = build_edge_table(
      seq, branch == Branch::nominal ? cp.nominal_edge : cp.ordinal_edge, mode);

  const Eigen::MatrixXd alpha = forward_pass(node.values, edge);
  const Eigen::MatrixXd beta = backward_pass(node.values, edge);

  ChainPosteriors post;
  post.log_z = log_sum_exp(alpha.row(T - 1).transpose());
  post.node_marginals = (alpha + beta).array() - post.log_z;
  post.node_marginals = post.node_marginals.array().exp();

  post.edge_marginals.reserve(std::max(0, T - 1));
  for (int t = 0; t + 1 < T; ++t) {
    Eigen::MatrixXd xi(C, C);
    for (int l = 0; l < C; ++l)
      for (int c = 0; c < C; ++c)
        xi(l, c) = alpha(t, l) + edge.values[t](l, c) + node.values(t + 1, c) +
                   beta(t + 1, c) - post.log_z;
    post.edge_marginals.push_back(xi.array().exp());
  }
  return post;
}

Eigen::MatrixXd branch_log_z_matrix(const Sequence& seq, const Model& model) {
  const auto act = active_branches(model.config.mode);
  Eigen::MatrixXd log_z =
      Eigen::MatrixXd::Constant(model.config.num_classes, 2, kNegInf);
  for (int k = 0; k < model.config.num_classes; ++k)
    for (int b = 0; b < 2; ++b)
      if (act[b])
        log_z(k, b) = branch_log_partition(seq, model.classes[k], static_cast<Branch>(b),
                                           model.config.edge_feature_mode,
                                           model.hyper.sigma_floor);
  return log_z;
}

Eigen::VectorXd class_scores(const Eigen::MatrixXd& log_z, Mode mode) {
  const int K = static_cast<int>(log_z.rows());
  Eigen::VectorXd scores(K);
  for (int k = 0; k < K; ++k) {
    switch (mode) {
      case Mode::HCRF:
        scores(k) = log_z(k, 0);
        break;
      case Mode::HCORF:
        scores(k) = log_z(k, 1);
        break;
      case Mode::VSLm:
        scores(k) = std::max(log_z(k, 0), log_z(k, 1));
        break;
      case Mode::VSLd:
      case Mode::VSLem:
        scores(k) = log_add(log_z(k, 0), log_z(k, 1));
        break;
    }
  }
  return scores;
}

Eigen::VectorXd class_conditional(const Sequence& seq, const Model& model) {
  const Eigen::VectorXd scores = class_scores(branch_log_z_matrix(seq, model),
                                              model.config.mode);
  const double lse = log_sum_exp(scores);
  return (scores.array() - lse).exp();
}

NuPosterior nu_posterior(const Sequence& seq, int label, const Model& model) {
  if (!uses_posterior_reg(model.config.mode) && model.config.mode != Mode::VSLm)
    throw std::invalid_argument("nu_posterior: model mode has no branch indicator");
  if (label < 1 || label > model.config.num_classes)
    throw std::invalid_argument("nu_posterior: label out of range");
  const ClassParams& cp = model.classes[label - 1];
  const double zn = branch_log_partition(seq, cp, Branch::nominal,
                                         model.config.edge_feature_mode,
                                         model.hyper.sigma_floor);
  const double zo = branch_log_partition(seq, cp, Branch::ordinal,
                                         model.config.edge_feature_mode,
                                         model.hyper.sigma_floor);
  NuPosterior nu;
  const double d = zo - zn;
  nu.p_nominal = d > 0 ? std::exp(-d) / (1.0 + std::exp(-d)) : 1.0 / (1.0 + std::exp(d));
  nu.p_ordinal = 1.0 - nu.p_nominal;
  return nu;
}

int predict_sequence(const Sequence& seq, const Model& model) {
  const Eigen::VectorXd probs = class_conditional(seq, model);
  int best = 0;
  for (int k = 1; k < probs.size(); ++k)
    if (probs(k) > probs(best)) best = k;
  return best + 1;
}

std::vector<int> predict_frames(const Sequence& seq, const Model& model, int window) {
  if (window < 1) throw std::invalid_argument("predict_frames: window must be >= 1");
  const int T = seq.length();
  const int w = std::min(window, T);
  std::vector<int> labels(T);
  int prev_lo = -1;
  int prev_label = 0;
  for (int t = 0; t < T; ++t) {
    int lo = t - (w - 1) / 2;
    lo = std::max(0, std::min(lo, T - w));
    if (lo == prev_lo) {
      labels[t] = prev_label;  // same window as the previous frame
      continue;
    }
    Sequence sub;
    sub.id = seq.id;
    sub.subject_id = seq.subject_id;
    sub.frames = seq.frames.middleRows(lo, w);
    sub.label = seq.label;
    labels[t] = predict_sequence(sub, model);
    prev_lo = lo;
    prev_label = labels[t];
  }
  return labels;
}

}  // namespace vslcrf
