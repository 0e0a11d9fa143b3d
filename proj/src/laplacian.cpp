#include "vslcrf/laplacian.hpp"

#include <stdexcept>

namespace vslcrf {

LaplacianGraph build_laplacian(const std::vector<int>& labels) {
  const int n = static_cast<int>(labels.size());
  if (n < 1) throw std::invalid_argument("build_laplacian: need at least one label");
  LaplacianGraph g;
  g.similarity = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && labels[i] == labels[j]) g.similarity(i, j) = 1.0;
  g.degree = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) g.degree(i, i) = g.similarity.row(i).sum();
  g.laplacian = g.degree - g.similarity;
  return g;
}

Eigen::VectorXd laplacian_apply(const LaplacianGraph& g, const Eigen::VectorXd& f) {
  const int n = static_cast<int>(f.size());
  if (g.laplacian.rows() != n)
    throw std::invalid_argument("laplacian_apply: size mismatch");
  Eigen::VectorXd out(n);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i) acc += g.laplacian(i, j) * (f(j) - f(i));
    out(i) = acc;
  }
  return out;
}

double posterior_reg(const Eigen::VectorXd& f, const LaplacianGraph& g) {
  return f.dot(laplacian_apply(g, f));
}

Eigen::VectorXd posterior_reg_gradient(const Eigen::VectorXd& f, const LaplacianGraph& g) {
  return 2.0 * laplacian_apply(g, f);
}

}  // namespace vslcrf
