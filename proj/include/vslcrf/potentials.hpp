#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "vslcrf/types.hpp"

namespace vslcrf {

// Standard normal cdf via the complementary error function.
double normal_cdf(double z);
double normal_pdf(double z);

// P(Phi(z_lo) < U <= Phi(z_hi)) computed tail-stably; never negative.
double normal_bin_prob(double z_lo, double z_hi);

// Multinomial-logistic log probabilities over the C nominal states:
// entry c = f(x,c) - logsumexp_l f(x,l) with f(x,c) = beta_c^T [1,x].
Eigen::VectorXd nominal_node_logprob(const Eigen::VectorXd& x, const NominalParams& p);

// Cumulative-probit log probabilities over the C ordinal states:
// entry c = log[ Phi((b_c - a^T x)/sigma) - Phi((b_{c-1} - a^T x)/sigma) ],
// clamped below at log(kProbClamp) against cdf underflow.
Eigen::VectorXd ordinal_node_logprob(const Eigen::VectorXd& x, const OrdinalParams& p,
                                     int num_states, double sigma_floor);

// Scalar edge feature g(x_r, x_s): 1 or the L1 distance between the frames.
double edge_feature(const Eigen::VectorXd& x_r, const Eigen::VectorXd& x_s,
                    EdgeFeatureMode mode);

// C x C matrix with entry (c,l) = u_{c,l} * g(x_r, x_s).
Eigen::MatrixXd edge_logpotential(const Eigen::VectorXd& x_r, const Eigen::VectorXd& x_s,
                                  const EdgeParams& e, EdgeFeatureMode mode);

// Per-frame node log-potentials for one branch of one class. Rows are
// log-probability vectors (they exponentiate-sum to 1).
struct NodeLogTable {
  Eigen::MatrixXd values;  // T x C
  Branch branch = Branch::nominal;
};

struct EdgeLogTable {
  std::vector<Eigen::MatrixXd> values;  // T-1 slices of C x C
};

NodeLogTable build_node_table(const Sequence& seq, const ClassParams& cp, Branch branch,
                              int num_states, double sigma_floor);

// Edge features g_t for t = 0..T-2.
Eigen::VectorXd edge_features(const Sequence& seq, EdgeFeatureMode mode);

EdgeLogTable build_edge_table(const Sequence& seq, const EdgeParams& e, EdgeFeatureMode mode);

// Score of one latent path (1-based states): sum of the node log-potentials
// along the path plus the realized edge potentials.
double sequence_score(const Sequence& seq, const ClassParams& cp, Branch branch,
                      std::span<const int> path, EdgeFeatureMode mode, double sigma_floor);

}  // namespace vslcrf
