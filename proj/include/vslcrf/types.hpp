#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vslcrf/constants.hpp"

namespace vslcrf {

// Training / inference strategy of a model. HCRF and HCORF use a single
// latent-state family; the VSL variants carry both and differ in how the
// branch indicator is handled (max-pooled, marginalized, or EM-weighted).
enum class Mode { HCRF, HCORF, VSLm, VSLd, VSLem };

enum class EdgeFeatureMode { constant_one, l1_distance };

enum class Branch : int { nominal = 0, ordinal = 1 };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);
std::string to_string(EdgeFeatureMode m);
EdgeFeatureMode edge_feature_mode_from_string(const std::string& s);

struct ModelConfig {
  int num_classes = 1;                                        // K
  int num_states = kDefaultNumStates;                         // C
  int feature_dim = 1;                                        // D
  EdgeFeatureMode edge_feature_mode = EdgeFeatureMode::l1_distance;
  Mode mode = Mode::VSLem;
};

struct Hyperparams {
  double lambda_n = kDefaultLambdaN;
  double lambda_o = kDefaultLambdaO;
  double lambda_p = kDefaultLambdaP;
  int max_iters = 200;
  double grad_tol = 1e-5;
  int em_max_rounds = 20;
  double em_obj_tol = 1e-6;
  std::uint64_t seed = 1;
  double sigma_floor = kSigmaFloor;
};

// One observation chain: T x D feature rows plus a sequence-level label.
// frame_labels is auxiliary ground truth (per-frame classes or latent
// phases) used only by evaluation and segmentation.
struct Sequence {
  std::string id;
  std::optional<std::string> subject_id;
  Eigen::MatrixXd frames;  // T x D
  int label = 1;           // in 1..K
  std::optional<std::vector<int>> frame_labels;

  int length() const { return static_cast<int>(frames.rows()); }
};

struct NominalParams {
  Eigen::MatrixXd beta;  // C x (D+1), first column is the bias
};

struct OrdinalParams {
  Eigen::VectorXd a;      // projection, length D
  double b1 = 0.0;        // first threshold
  Eigen::VectorXd gamma;  // displacements, length C-2
  double sigma0 = 1.0;    // scale root: sigma = sigma0^2 + sigma_floor
};

struct EdgeParams {
  Eigen::MatrixXd u;  // C x C
};

// Both branches are always allocated; modes that use only one branch leave
// the other frozen at its initial values (it is excluded from packing).
struct ClassParams {
  NominalParams nominal;
  EdgeParams nominal_edge;
  OrdinalParams ordinal;
  EdgeParams ordinal_edge;
};

struct Model {
  ModelConfig config;
  std::vector<ClassParams> classes;
  Hyperparams hyper;
};

// Thresholds b_0..b_C with infinite endpoints; b_j = b1 + sum_{k<j} gamma_k^2.
// Non-decreasing for every real gamma since the increments are squares.
Eigen::VectorXd derive_thresholds(const OrdinalParams& p, int num_states);

inline double effective_sigma(const OrdinalParams& p, double sigma_floor) {
  return p.sigma0 * p.sigma0 + sigma_floor;
}

// Which branches a mode trains and scores, indexed by Branch.
inline std::array<bool, 2> active_branches(Mode m) {
  switch (m) {
    case Mode::HCRF:
      return {true, false};
    case Mode::HCORF:
      return {false, true};
    default:
      return {true, true};
  }
}

inline bool uses_posterior_reg(Mode m) {
  return m == Mode::VSLd || m == Mode::VSLem;
}

// Throw std::invalid_argument when an invariant is violated.
void validate(const ModelConfig& config);
void validate(const Model& model);
void validate_sequence(const Sequence& seq, int feature_dim, int num_classes);

}  // namespace vslcrf
