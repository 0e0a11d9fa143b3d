#pragma once

#include <Eigen/Dense>

#include "vslcrf/types.hpp"

namespace vslcrf {

// Flat parameter layout used by the optimizer and by model serialization.
//
// Order: classes in label order; per class the nominal branch precedes the
// ordinal branch; within a branch, node parameters precede edge parameters.
//   nominal node: beta row-major (C rows of D+1)
//   nominal edge: u row-major (C x C)
//   ordinal node: a (D), b1, gamma (C-2), sigma0
//   ordinal edge: u row-major (C x C)
// Branches not trained by the mode are excluded entirely.
struct ParamLayout {
  struct Block {
    int offset = 0;
    int size = 0;
  };

  int num_classes = 0;
  bool nominal_active = false;
  bool ordinal_active = false;
  int node_size[2] = {0, 0};  // per-branch node-parameter count
  int edge_size = 0;          // C*C
  std::vector<Block> blocks[2];  // per branch: one block per class (node+edge)
  int total = 0;

  static ParamLayout make(const ModelConfig& config);

  const Block& block(int class_index, Branch b) const {
    return blocks[static_cast<int>(b)][class_index];
  }
};

// Number of packed parameters for a config (mode-aware).
int packed_size(const ModelConfig& config);

// Pack the active branches of `model` into a flat vector.
Eigen::VectorXd pack_params(const Model& model);

// Inverse of pack_params: returns a copy of `base` with the active branches
// overwritten from `x`. Frozen branches keep the values held by `base`.
Model unpack_params(const Model& base, const Eigen::VectorXd& x);

// Both-branch packing used by serialization, independent of the mode.
Eigen::VectorXd pack_full(const Model& model);
Model unpack_full(const Model& base, const Eigen::VectorXd& x);

}  // namespace vslcrf
