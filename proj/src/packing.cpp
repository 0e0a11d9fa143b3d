#include "vslcrf/packing.hpp"

#include <stdexcept>

namespace vslcrf {

namespace {

ParamLayout make_layout(const ModelConfig& config, bool force_both) {
  const int C = config.num_states;
  const int D = config.feature_dim;
  const auto act = active_branches(config.mode);

  ParamLayout layout;
  layout.num_classes = config.num_classes;
  layout.nominal_active = force_both || act[0];
  layout.ordinal_active = force_both || act[1];
  layout.node_size[0] = C * (D + 1);
  layout.node_size[1] = D + 1 + (C - 2) + 1;
  layout.edge_size = C * C;

  layout.blocks[0].resize(config.num_classes);
  layout.blocks[1].resize(config.num_classes);
  int offset = 0;
  for (int k = 0; k < config.num_classes; ++k) {
    for (int b = 0; b < 2; ++b) {
      const bool on = (b == 0) ? layout.nominal_active : layout.ordinal_active;
      ParamLayout::Block& blk = layout.blocks[b][k];
      blk.offset = offset;
      blk.size = on ? layout.node_size[b] + layout.edge_size : 0;
      offset += blk.size;
    }
  }
  layout.total = offset;
  return layout;
}

void write_branch(const ClassParams& cp, Branch branch, double* out) {
  int p = 0;
  if (branch == Branch::nominal) {
    const Eigen::MatrixXd& beta = cp.nominal.beta;
    for (int r = 0; r < beta.rows(); ++r)
      for (int c = 0; c < beta.cols(); ++c) out[p++] = beta(r, c);
    const Eigen::MatrixXd& u = cp.nominal_edge.u;
    for (int r = 0; r < u.rows(); ++r)
      for (int c = 0; c < u.cols(); ++c) out[p++] = u(r, c);
  } else {
    const OrdinalParams& o = cp.ordinal;
    for (int d = 0; d < o.a.size(); ++d) out[p++] = o.a(d);
    out[p++] = o.b1;
    for (int g = 0; g < o.gamma.size(); ++g) out[p++] = o.gamma(g);
    out[p++] = o.sigma0;
    const Eigen::MatrixXd& u = cp.ordinal_edge.u;
    for (int r = 0; r < u.rows(); ++r)
      for (int c = 0; c < u.cols(); ++c) out[p++] = u(r, c);
  }
}

void read_branch(ClassParams& cp, Branch branch, const double* in) {
  int p = 0;
  if (branch == Branch::nominal) {
    Eigen::MatrixXd& beta = cp.nominal.beta;
    for (int r = 0; r < beta.rows(); ++r)
      for (int c = 0; c < beta.cols(); ++c) beta(r, c) = in[p++];
    Eigen::MatrixXd& u = cp.nominal_edge.u;
    for (int r = 0; r < u.rows(); ++r)
      for (int c = 0; c < u.cols(); ++c) u(r, c) = in[p++];
  } else {
    OrdinalParams& o = cp.ordinal;
    for (int d = 0; d < o.a.size(); ++d) o.a(d) = in[p++];
    o.b1 = in[p++];
    for (int g = 0; g < o.gamma.size(); ++g) o.gamma(g) = in[p++];
    o.sigma0 = in[p++];
    Eigen::MatrixXd& u = cp.ordinal_edge.u;
    for (int r = 0; r < u.rows(); ++r)
      for (int c = 0; c < u.cols(); ++c) u(r, c) = in[p++];
  }
}

Eigen::VectorXd pack_with(const Model& model, const ParamLayout& layout) {
  Eigen::VectorXd x(layout.total);
  for (int k = 0; k < layout.num_classes; ++k) {
    for (int b = 0; b < 2; ++b) {
      const ParamLayout::Block& blk = layout.blocks[b][k];
      if (blk.size == 0) continue;
      write_branch(model.classes[k], static_cast<Branch>(b), x.data() + blk.offset);
    }
  }
  return x;
}

Model unpack_with(const Model& base, const Eigen::VectorXd& x, const ParamLayout& layout) {
  if (x.size() != layout.total)
    throw std::invalid_argument("unpack_params: vector length mismatch");
  Model model = base;
  for (int k = 0; k < layout.num_classes; ++k) {
    for (int b = 0; b < 2; ++b) {
      const ParamLayout::Block& blk = layout.blocks[b][k];
      if (blk.size == 0) continue;
      read_branch(model.classes[k], static_cast<Branch>(b), x.data() + blk.offset);
    }
  }
  return model;
}

}  // namespace

ParamLayout ParamLayout::make(const ModelConfig& config) { return make_layout(config, false); }

int packed_size(const ModelConfig& config) { return ParamLayout::make(config).total; }

Eigen::VectorXd pack_params(const Model& model) {
  return pack_with(model, ParamLayout::make(model.config));
}

Model unpack_params(const Model& base, const Eigen::VectorXd& x) {
  return unpack_with(base, x, ParamLayout::make(base.config));
}

Eigen::VectorXd pack_full(const Model& model) {
  return pack_with(model, make_layout(model.config, true));
}

Model unpack_full(const Model& base, const Eigen::VectorXd& x) {
  return unpack_with(base, x, make_layout(base.config, true));
}

}  // namespace vslcrf
