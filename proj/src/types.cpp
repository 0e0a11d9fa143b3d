#include "vslcrf/types.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace vslcrf {

std::string to_string(Mode m) {
  switch (m) {
    case Mode::HCRF:
      return "hcrf";
    case Mode::HCORF:
      return "hcorf";
    case Mode::VSLm:
      return "vslm";
    case Mode::VSLd:
      return "vsld";
    case Mode::VSLem:
      return "vslem";
  }
  return "unknown";
}

Mode mode_from_string(const std::string& s) {
  if (s == "hcrf") return Mode::HCRF;
  if (s == "hcorf") return Mode::HCORF;
  if (s == "vslm") return Mode::VSLm;
  if (s == "vsld") return Mode::VSLd;
  if (s == "vslem") return Mode::VSLem;
  throw std::invalid_argument("unknown mode: " + s);
}

std::string to_string(EdgeFeatureMode m) {
  return m == EdgeFeatureMode::constant_one ? "constant_one" : "l1_distance";
}

EdgeFeatureMode edge_feature_mode_from_string(const std::string& s) {
  if (s == "constant_one") return EdgeFeatureMode::constant_one;
  if (s == "l1_distance") return EdgeFeatureMode::l1_distance;
  throw std::invalid_argument("unknown edge feature mode: " + s);
}

Eigen::VectorXd derive_thresholds(const OrdinalParams& p, int num_states) {
  if (num_states < 2) throw std::invalid_argument("derive_thresholds: C must be >= 2");
  Eigen::VectorXd b(num_states + 1);
  b(0) = -std::numeric_limits<double>::infinity();
  b(num_states) = std::numeric_limits<double>::infinity();
  b(1) = p.b1;
  for (int j = 2; j <= num_states - 1; ++j) {
    const double g = p.gamma(j - 2);
    b(j) = b(j - 1) + g * g;
  }
  return b;
}

void validate(const ModelConfig& config) {
  if (config.num_classes < 1) throw std::invalid_argument("config: K must be >= 1");
  if (config.num_states < 2) throw std::invalid_argument("config: C must be >= 2");
  if (config.feature_dim < 1) throw std::invalid_argument("config: D must be >= 1");
}

void validate(const Model& model) {
  validate(model.config);
  const int K = model.config.num_classes;
  const int C = model.config.num_states;
  const int D = model.config.feature_dim;
  if (static_cast<int>(model.classes.size()) != K)
    throw std::invalid_argument("model: classes.size() != K");
  if (model.hyper.lambda_n < 0 || model.hyper.lambda_o < 0 || model.hyper.lambda_p < 0)
    throw std::invalid_argument("model: lambdas must be >= 0");
  if (model.hyper.grad_tol <= 0 || model.hyper.em_obj_tol <= 0)
    throw std::invalid_argument("model: tolerances must be > 0");
  if (model.hyper.sigma_floor <= 0)
    throw std::invalid_argument("model: sigma_floor must be > 0");
  for (const ClassParams& cp : model.classes) {
    if (cp.nominal.beta.rows() != C || cp.nominal.beta.cols() != D + 1)
      throw std::invalid_argument("model: beta must be C x (D+1)");
    if (cp.ordinal.a.size() != D) throw std::invalid_argument("model: a must have length D");
    if (cp.ordinal.gamma.size() != C - 2)
      throw std::invalid_argument("model: gamma must have length C-2");
    if (cp.nominal_edge.u.rows() != C || cp.nominal_edge.u.cols() != C ||
        cp.ordinal_edge.u.rows() != C || cp.ordinal_edge.u.cols() != C)
      throw std::invalid_argument("model: u must be C x C");
    if (!cp.nominal.beta.allFinite() || !cp.ordinal.a.allFinite() ||
        !cp.ordinal.gamma.allFinite() || !std::isfinite(cp.ordinal.b1) ||
        !std::isfinite(cp.ordinal.sigma0) || !cp.nominal_edge.u.allFinite() ||
        !cp.ordinal_edge.u.allFinite())
      throw std::invalid_argument("model: parameters must be finite");
  }
}

void validate_sequence(const Sequence& seq, int feature_dim, int num_classes) {
  if (seq.frames.rows() < 1)
    throw std::invalid_argument("sequence " + seq.id + ": T must be >= 1");
  if (seq.frames.cols() != feature_dim)
    throw std::invalid_argument("sequence " + seq.id + ": feature dimension mismatch");
  if (!seq.frames.allFinite())
    throw std::invalid_argument("sequence " + seq.id + ": frames must be finite");
  if (seq.label < 1 || seq.label > num_classes)
    throw std::invalid_argument("sequence " + seq.id + ": label out of range");
  if (seq.frame_labels && static_cast<int>(seq.frame_labels->size()) != seq.length())
    throw std::invalid_argument("sequence " + seq.id + ": frame_labels length mismatch");
}

}  // namespace vslcrf
