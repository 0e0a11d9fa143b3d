#include "vslcrf/metrics.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <stdexcept>

#include "vslcrf/rng.hpp"
#include "vslcrf/textio.hpp"

namespace vslcrf {

namespace {

EvalReport report_from_confusion(Eigen::MatrixXi confusion, EvalMode mode) {
  const int K = static_cast<int>(confusion.rows());
  EvalReport rep;
  rep.mode = mode;
  rep.num_classes = K;
  rep.confusion = std::move(confusion);
  rep.n_units = rep.confusion.sum();

  long correct = 0;
  for (int c = 0; c < K; ++c) correct += rep.confusion(c, c);
  rep.classification_rate = rep.n_units > 0 ? double(correct) / double(rep.n_units) : 0.0;

  rep.per_class_f1.resize(K);
  rep.per_class_recall.resize(K);
  double f1_sum = 0.0;
  for (int c = 0; c < K; ++c) {
    const long tp = rep.confusion(c, c);
    const long truth_c = rep.confusion.row(c).sum();
    const long pred_c = rep.confusion.col(c).sum();
    const double precision = pred_c > 0 ? double(tp) / double(pred_c) : 0.0;
    const double recall = truth_c > 0 ? double(tp) / double(truth_c) : 0.0;
    rep.per_class_recall[c] = recall;
    rep.per_class_f1[c] =
        precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    f1_sum += rep.per_class_f1[c];
  }
  rep.macro_f1 = K > 0 ? f1_sum / K : 0.0;
  return rep;
}

int infer_classes(const std::vector<int>& a, const std::vector<int>& b, int num_classes) {
  int k = num_classes;
  for (int v : a) k = std::max(k, v);
  for (int v : b) k = std::max(k, v);
  return k;
}

Eigen::MatrixXi count_confusion(const std::vector<int>& pred, const std::vector<int>& truth,
                                int K) {
  Eigen::MatrixXi confusion = Eigen::MatrixXi::Zero(K, K);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (truth[i] < 1 || truth[i] > K || pred[i] < 1 || pred[i] > K)
      throw std::invalid_argument("labels must lie in 1..K");
    confusion(truth[i] - 1, pred[i] - 1) += 1;
  }
  return confusion;
}

}  // namespace

EvalReport f1_frame(const std::vector<int>& pred, const std::vector<int>& truth,
                    int num_classes) {
  if (pred.size() != truth.size())
    throw std::invalid_argument("f1_frame: prediction/truth length mismatch");
  const int K = infer_classes(pred, truth, num_classes);
  return report_from_confusion(count_confusion(pred, truth, K), EvalMode::frame_based);
}

EvalReport f1_sequence_weighted(const std::vector<int>& preds, const std::vector<int>& truths,
                                const std::vector<int>& lengths, int num_classes) {
  if (preds.size() != truths.size() || preds.size() != lengths.size())
    throw std::invalid_argument("f1_sequence_weighted: aligned lists required");
  std::vector<int> pred_frames, truth_frames;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (lengths[i] < 1)
      throw std::invalid_argument("f1_sequence_weighted: lengths must be >= 1");
    pred_frames.insert(pred_frames.end(), lengths[i], preds[i]);
    truth_frames.insert(truth_frames.end(), lengths[i], truths[i]);
  }
  EvalReport rep = f1_frame(pred_frames, truth_frames, num_classes);
  rep.mode = EvalMode::sequence_based;
  return rep;
}

EvalReport classification_report(const std::vector<int>& preds,
                                 const std::vector<int>& truths, int num_classes) {
  if (preds.size() != truths.size())
    throw std::invalid_argument("classification_report: length mismatch");
  const int K = infer_classes(preds, truths, num_classes);
  return report_from_confusion(count_confusion(preds, truths, K), EvalMode::sequence_based);
}

double classification_rate(const std::vector<int>& preds, const std::vector<int>& truths) {
  if (preds.size() != truths.size())
    throw std::invalid_argument("classification_rate: length mismatch");
  if (preds.empty()) return 0.0;
  long correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == truths[i]) ++correct;
  return double(correct) / double(preds.size());
}

std::vector<std::pair<std::vector<int>, std::vector<int>>> group_kfold(const Dataset& data,
                                                                       int folds,
                                                                       std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("group_kfold: folds must be >= 2");

  // Groups in first-appearance order, so the seeded shuffle is reproducible.
  std::vector<std::string> group_names;
  std::map<std::string, std::vector<int>> members;
  for (std::size_t i = 0; i < data.sequences.size(); ++i) {
    const Sequence& s = data.sequences[i];
    const std::string g = s.subject_id ? *s.subject_id : s.id;
    if (!members.count(g)) group_names.push_back(g);
    members[g].push_back(static_cast<int>(i));
  }
  if (static_cast<int>(group_names.size()) < folds)
    throw std::invalid_argument("group_kfold: fewer groups than folds");

  Rng rng(seed);
  rng.shuffle(group_names);
  std::stable_sort(group_names.begin(), group_names.end(),
                   [&](const std::string& a, const std::string& b) {
                     return members[a].size() > members[b].size();
                   });

  std::vector<long> load(folds, 0);
  std::vector<std::vector<int>> test_idx(folds);
  for (const std::string& g : group_names) {
    int best = 0;
    for (int f = 1; f < folds; ++f)
      if (load[f] < load[best]) best = f;
    load[best] += static_cast<long>(members[g].size());
    test_idx[best].insert(test_idx[best].end(), members[g].begin(), members[g].end());
  }

  std::vector<std::pair<std::vector<int>, std::vector<int>>> out(folds);
  for (int f = 0; f < folds; ++f) {
    std::sort(test_idx[f].begin(), test_idx[f].end());
    std::vector<bool> in_test(data.sequences.size(), false);
    for (int i : test_idx[f]) in_test[i] = true;
    for (std::size_t i = 0; i < data.sequences.size(); ++i)
      if (!in_test[i]) out[f].first.push_back(static_cast<int>(i));
    out[f].second = test_idx[f];
  }
  return out;
}

std::string format_report(const EvalReport& report) {
  std::ostringstream out;
  out << "#report v1\n";
  out << "mode " << (report.mode == EvalMode::frame_based ? "frame_based" : "sequence_based")
      << '\n';
  out << "classes " << report.num_classes << '\n';
  out << "units " << report.n_units << '\n';
  out << "classification_rate " << fmt17(report.classification_rate) << '\n';
  out << "macro_f1 " << fmt17(report.macro_f1) << '\n';
  for (int c = 0; c < report.num_classes; ++c)
    out << "f1_class_" << (c + 1) << ' ' << fmt17(report.per_class_f1[c]) << '\n';
  for (int c = 0; c < report.num_classes; ++c)
    out << "recall_class_" << (c + 1) << ' ' << fmt17(report.per_class_recall[c]) << '\n';
  out << "confusion " << report.num_classes << 'x' << report.num_classes << '\n';
  for (int r = 0; r < report.num_classes; ++r) {
    for (int c = 0; c < report.num_classes; ++c) {
      if (c > 0) out << ' ';
      out << report.confusion(r, c);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace vslcrf
