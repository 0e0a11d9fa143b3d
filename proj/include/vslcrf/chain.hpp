#pragma once

#include <Eigen/Dense>
#include <vector>

#include "vslcrf/potentials.hpp"
#include "vslcrf/types.hpp"

namespace vslcrf {

double log_sum_exp(const Eigen::VectorXd& v);
double log_add(double a, double b);

// Posterior quantities of one class/branch CRF clamped on a sequence.
struct ChainPosteriors {
  double log_z = 0.0;
  Eigen::MatrixXd node_marginals;               // T x C, rows sum to 1
  std::vector<Eigen::MatrixXd> edge_marginals;  // T-1 slices of C x C, each sums to 1
};

// Per-sequence posterior over the branch indicator of a class.
struct NuPosterior {
  double p_nominal = 0.5;
  double p_ordinal = 0.5;
};

// Log partition only (forward pass).
double branch_log_partition(const Sequence& seq, const ClassParams& cp, Branch branch,
                            EdgeFeatureMode mode, double sigma_floor);

// Full forward-backward: log partition plus node and edge marginals.
ChainPosteriors branch_partition(const Sequence& seq, const ClassParams& cp, Branch branch,
                                 EdgeFeatureMode mode, double sigma_floor);

// K x 2 matrix of branch log partitions; entries of branches the mode does
// not use are -inf and never read.
Eigen::MatrixXd branch_log_z_matrix(const Sequence& seq, const Model& model);

// Per-class scores from the branch log partitions:
// HCRF/HCORF pick one column, VSLd/VSLem log-sum-exp the two branches,
// VSLm takes the branch maximum.
Eigen::VectorXd class_scores(const Eigen::MatrixXd& log_z, Mode mode);

// P(y | x), a length-K probability vector. All arithmetic in log domain.
Eigen::VectorXd class_conditional(const Sequence& seq, const Model& model);

// P(nu | x, y) for a VSL-mode model; throws in HCRF/HCORF modes.
NuPosterior nu_posterior(const Sequence& seq, int label, const Model& model);

// MAP label; ties broken toward the lowest label index.
int predict_sequence(const Sequence& seq, const Model& model);

// Sliding-window frame labels: each frame is classified from the window of
// the given width around it. Near the boundaries the window slides inward so
// it keeps its width; it shrinks only if window > T. window is clamped to T.
std::vector<int> predict_frames(const Sequence& seq, const Model& model, int window);

}  // namespace vslcrf
