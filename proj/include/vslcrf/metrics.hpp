#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vslcrf/data.hpp"

namespace vslcrf {

enum class EvalMode { frame_based, sequence_based };

struct EvalReport {
  EvalMode mode = EvalMode::sequence_based;
  int num_classes = 0;
  long n_units = 0;                    // frames or sequences scored
  Eigen::MatrixXi confusion;           // rows = truth, cols = prediction
  std::vector<double> per_class_f1;    // index label-1
  std::vector<double> per_class_recall;
  double macro_f1 = 0.0;
  double classification_rate = 0.0;
};

// Per-frame F1 from the confusion matrix; F1 = 0 when precision+recall = 0.
// num_classes 0 means "infer from the labels".
EvalReport f1_frame(const std::vector<int>& pred, const std::vector<int>& truth,
                    int num_classes = 0);

// Sequence-level predictions expanded to their frame counts, then scored as
// frames. This realizes "F1 weighted by the number of frames per sequence".
EvalReport f1_sequence_weighted(const std::vector<int>& preds, const std::vector<int>& truths,
                                const std::vector<int>& lengths, int num_classes = 0);

// Unweighted sequence-level report (classification rate + per-class recall).
EvalReport classification_report(const std::vector<int>& preds,
                                 const std::vector<int>& truths, int num_classes = 0);

double classification_rate(const std::vector<int>& preds, const std::vector<int>& truths);

// Subject-independent folds: subjects (or sequence ids when a subject is
// missing) are assigned greedily to the currently lightest fold after a
// seeded shuffle; no subject spans train and test of any fold.
std::vector<std::pair<std::vector<int>, std::vector<int>>> group_kfold(const Dataset& data,
                                                                       int folds,
                                                                       std::uint64_t seed);

// Flat key-value block plus the confusion matrix; machine-parseable.
std::string format_report(const EvalReport& report);

}  // namespace vslcrf
