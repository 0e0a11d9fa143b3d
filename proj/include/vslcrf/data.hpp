#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vslcrf/constants.hpp"
#include "vslcrf/types.hpp"

namespace vslcrf {

struct Dataset {
  std::vector<Sequence> sequences;
  int num_classes = 0;  // max label seen
  int feature_dim = 0;
  std::map<std::string, std::string> provenance;
};

// Line-oriented text format, one block per sequence:
//   #seq <id> <subject_id> <label> <T> <D>
//   v_1 ... v_D [| frame_label]     (T rows)
// A "-" subject_id means none. Blocks are separated by blank lines. Floats
// are written with 17 significant digits so save/load round-trips exactly.
Dataset load_dataset(const std::string& path);
void save_dataset(const Dataset& data, const std::string& path);

struct PcaTransform {
  Eigen::VectorXd mean;    // length D0
  Eigen::MatrixXd basis;   // D0 x D, orthonormal columns
  double retained_energy = 1.0;
};

// Principal components of all frames pooled over the dataset, keeping the
// smallest dimension whose eigenvalue mass reaches `energy`. Basis signs are
// fixed (largest-magnitude entry positive) so the transform is deterministic.
PcaTransform fit_pca(const Dataset& data, double energy = kDefaultPcaEnergy);

Eigen::MatrixXd apply_pca(const PcaTransform& t, const Eigen::MatrixXd& frames);
Dataset apply_pca(const PcaTransform& t, const Dataset& data);

// Cut a frame-labeled recording into maximal constant-label runs of length
// >= min_len. Runs of 1s become class-1 (active) sequences, runs of 0s
// class-2 (other); shorter runs are dropped.
std::vector<Sequence> segment_sequences(const Eigen::MatrixXd& frames,
                                        const std::vector<int>& frame_labels,
                                        int min_len = kDefaultMinSegmentLen,
                                        const std::string& id_prefix = "seg",
                                        const std::optional<std::string>& subject_id = {});

// Apply segment_sequences to every sequence of a binary-frame-labeled dataset.
Dataset segment_dataset(const Dataset& data, int min_len = kDefaultMinSegmentLen);

// Subsample class-2 (inactive) sequences down to the class-1 count, seeded,
// without replacement. No-op when class 2 is not in excess.
Dataset balance(const Dataset& data, std::uint64_t seed);

enum class SynthRegime { ordinal_ramp, nominal_clusters, mixed };

std::string to_string(SynthRegime r);
SynthRegime synth_regime_from_string(const std::string& s);

// Synthetic sequence generator.
//   ordinal_ramp:     intensity ramps 0 -> 1 -> 0; emissions follow the ramp
//                     along a fixed direction plus isotropic Gaussian noise;
//                     frame_labels hold the intensity tertile (1..3).
//   nominal_clusters: sticky 3-state chain over unordered cluster means;
//                     frame_labels hold the state (1..3).
//   mixed:            class 1 = ordinal_ramp, class 2 = nominal_clusters.
Dataset gen_synthetic(SynthRegime regime, int n_seq, int len, int dim, double noise_sd,
                      std::uint64_t seed);

}  // namespace vslcrf
