#pragma once

#include <Eigen/Dense>
#include <vector>

namespace vslcrf {

// Label-similarity graph over the training sequences: S_ij = 1 iff the labels
// match (diagonal excluded), D the diagonal degree matrix, L = D - S.
struct LaplacianGraph {
  Eigen::MatrixXd similarity;
  Eigen::MatrixXd degree;
  Eigen::MatrixXd laplacian;
};

LaplacianGraph build_laplacian(const std::vector<int>& labels);

// L*f evaluated as sum_j L_ij (f_j - f_i), exact zero for constant f since
// every Laplacian row sums to zero.
Eigen::VectorXd laplacian_apply(const LaplacianGraph& g, const Eigen::VectorXd& f);

// R = f^T L f, the disagreement of same-class entries of f; always >= 0.
double posterior_reg(const Eigen::VectorXd& f, const LaplacianGraph& g);

// dR/df = 2 L f.
Eigen::VectorXd posterior_reg_gradient(const Eigen::VectorXd& f, const LaplacianGraph& g);

}  // namespace vslcrf
