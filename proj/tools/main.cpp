// vslcrf: batch CLI for sequence classification with variable-state latent
// CRFs. Subcommands: synth, train, predict, eval, cv, gradcheck.

#include <CLI11.hpp>
#include <chrono>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <sstream>

#include "vslcrf/chain.hpp"
#include "vslcrf/data.hpp"
#include "vslcrf/lbfgs.hpp"
#include "vslcrf/learning.hpp"
#include "vslcrf/metrics.hpp"
#include "vslcrf/model_io.hpp"
#include "vslcrf/packing.hpp"
#include "vslcrf/rng.hpp"
#include "vslcrf/textio.hpp"

using namespace vslcrf;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct ManifestWriter {
  json doc;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

  ManifestWriter(const std::string& command) {
    doc["command"] = command;
    doc["toolkit_version"] = kVersion;
  }
  void flag(const std::string& name, const json& value) { doc["flags"][name] = value; }
  void input(const std::string& path) { doc["inputs"].push_back(path); }
  void output(const std::string& path) { doc["outputs"].push_back(path); }
  void write(const std::string& next_to) {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    doc["wall_clock_sec"] = secs;
    const std::string path = next_to + ".manifest.json";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << doc.dump(2) << '\n';
  }
};

struct PrepFlags {
  bool segment = false;
  int min_seg_len = kDefaultMinSegmentLen;
  bool do_balance = false;
  bool do_pca = false;
  double pca_energy = kDefaultPcaEnergy;
};

void add_prep_flags(CLI::App* cmd, PrepFlags& prep) {
  cmd->add_flag("--segment", prep.segment,
                "cut frame-labeled recordings into constant-label runs");
  cmd->add_option("--min-seg-len", prep.min_seg_len, "minimum segment length")
      ->capture_default_str();
  cmd->add_flag("--balance", prep.do_balance,
                "subsample class-2 sequences down to the class-1 count");
  cmd->add_flag("--pca", prep.do_pca, "project features onto principal components");
  cmd->add_option("--pca-energy", prep.pca_energy, "PCA retained-energy threshold")
      ->capture_default_str();
}

struct TrainFlags {
  std::string mode = "vslem";
  int states = kDefaultNumStates;
  std::string edge_feature = "l1_distance";
  double lambda_n = kDefaultLambdaN;
  double lambda_o = kDefaultLambdaO;
  double lambda_p = kDefaultLambdaP;
  int max_iters = 200;
  double grad_tol = 1e-5;
  int em_rounds = 20;
  double em_tol = 1e-6;
  std::uint64_t seed = 1;
};

void add_train_flags(CLI::App* cmd, TrainFlags& tf) {
  cmd->add_option("--mode", tf.mode, "hcrf|hcorf|vslm|vsld|vslem")->capture_default_str();
  cmd->add_option("--states", tf.states, "latent states per branch (C)")
      ->capture_default_str();
  cmd->add_option("--edge-feature", tf.edge_feature, "constant_one|l1_distance")
      ->capture_default_str();
  cmd->add_option("--lambda-n", tf.lambda_n, "L2 weight, nominal branch")
      ->capture_default_str();
  cmd->add_option("--lambda-o", tf.lambda_o, "L2 weight, ordinal branch")
      ->capture_default_str();
  cmd->add_option("--lambda-p", tf.lambda_p, "posterior-regularization weight")
      ->capture_default_str();
  cmd->add_option("--max-iters", tf.max_iters, "optimizer iteration budget")
      ->capture_default_str();
  cmd->add_option("--grad-tol", tf.grad_tol, "gradient sup-norm stopping tolerance")
      ->capture_default_str();
  cmd->add_option("--em-rounds", tf.em_rounds, "maximum EM rounds (vslem)")
      ->capture_default_str();
  cmd->add_option("--em-tol", tf.em_tol, "EM objective-change tolerance")
      ->capture_default_str();
  cmd->add_option("--seed", tf.seed, "seed for all randomness")->capture_default_str();
}

Hyperparams hyper_from(const TrainFlags& tf) {
  Hyperparams h;
  h.lambda_n = tf.lambda_n;
  h.lambda_o = tf.lambda_o;
  h.lambda_p = tf.lambda_p;
  h.max_iters = tf.max_iters;
  h.grad_tol = tf.grad_tol;
  h.em_max_rounds = tf.em_rounds;
  h.em_obj_tol = tf.em_tol;
  h.seed = tf.seed;
  return h;
}

ModelConfig config_from(const TrainFlags& tf, int num_classes, int feature_dim) {
  ModelConfig config;
  config.num_classes = num_classes;
  config.num_states = tf.states;
  config.feature_dim = feature_dim;
  config.edge_feature_mode = edge_feature_mode_from_string(tf.edge_feature);
  config.mode = mode_from_string(tf.mode);
  return config;
}

Dataset load_and_segment(const std::string& path, const PrepFlags& prep) {
  Dataset data = load_dataset(path);
  if (prep.segment) data = segment_dataset(data, prep.min_seg_len);
  return data;
}

// Train-side preprocessing: balancing and PCA are fit on training data only.
struct PreparedTrain {
  Dataset train;
  std::optional<PcaTransform> pca;
};

PreparedTrain prepare_train(Dataset train, const PrepFlags& prep, std::uint64_t seed) {
  PreparedTrain out;
  if (prep.do_balance) train = balance(train, seed);
  if (prep.do_pca) {
    out.pca = fit_pca(train, prep.pca_energy);
    train = apply_pca(*out.pca, train);
  }
  out.train = std::move(train);
  return out;
}

Dataset subset(const Dataset& data, const std::vector<int>& idx) {
  Dataset out;
  out.feature_dim = data.feature_dim;
  out.num_classes = data.num_classes;
  out.provenance = data.provenance;
  for (int i : idx) out.sequences.push_back(data.sequences[i]);
  return out;
}

void check_model_data(const Model& model, const Dataset& data) {
  if (data.feature_dim != model.config.feature_dim)
    throw std::runtime_error("feature dimension mismatch: model D=" +
                             std::to_string(model.config.feature_dim) + ", data D=" +
                             std::to_string(data.feature_dim));
  if (data.num_classes > model.config.num_classes)
    throw std::runtime_error("class mismatch: model K=" +
                             std::to_string(model.config.num_classes) +
                             ", data labels reach " + std::to_string(data.num_classes));
}

// ---------------- grid search ----------------

std::vector<double> parse_lambda_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(parse_double(tok));
  if (out.empty()) throw std::invalid_argument("empty lambda list in --grid");
  return out;
}

struct Grid {
  std::vector<double> lambda_n, lambda_o, lambda_p;
};

Grid parse_grid(const std::string& text) {
  if (text == "default") {
    const std::vector<double> def{0.0, 1e-3, 1e-2, 1e-1, 1.0};
    return {def, def, def};
  }
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ';')) parts.push_back(tok);
  if (parts.size() != 3)
    throw std::invalid_argument(
        "--grid wants 'default' or three ;-separated lists: ln;lo;lp");
  return {parse_lambda_list(parts[0]), parse_lambda_list(parts[1]),
          parse_lambda_list(parts[2])};
}

// Single grouped validation split holding out ~val_frac of the sequences.
std::pair<std::vector<int>, std::vector<int>> validation_split(const Dataset& data,
                                                               double val_frac,
                                                               std::uint64_t seed) {
  std::vector<std::string> group_names;
  std::map<std::string, std::vector<int>> members;
  for (std::size_t i = 0; i < data.sequences.size(); ++i) {
    const Sequence& s = data.sequences[i];
    const std::string g = s.subject_id ? *s.subject_id : s.id;
    if (!members.count(g)) group_names.push_back(g);
    members[g].push_back(static_cast<int>(i));
  }
  if (group_names.size() < 2)
    throw std::runtime_error("grid search needs at least two subject groups");
  Rng rng(seed);
  rng.shuffle(group_names);
  const std::size_t want =
      std::max<std::size_t>(1, static_cast<std::size_t>(val_frac * data.sequences.size()));
  std::vector<int> val;
  std::size_t gi = 0;
  while (val.size() < want && gi + 1 < group_names.size()) {
    const auto& m = members[group_names[gi++]];
    val.insert(val.end(), m.begin(), m.end());
  }
  std::vector<bool> in_val(data.sequences.size(), false);
  for (int i : val) in_val[i] = true;
  std::vector<int> train;
  for (std::size_t i = 0; i < data.sequences.size(); ++i)
    if (!in_val[i]) train.push_back(static_cast<int>(i));
  std::sort(val.begin(), val.end());
  return {train, val};
}

struct GridResult {
  double lambda_n = 0, lambda_o = 0, lambda_p = 0;
  double macro_f1 = -1.0;
  json table = json::array();
};

GridResult run_grid(const Dataset& data, const TrainFlags& tf, const PrepFlags& prep,
                    const Grid& grid, double val_frac) {
  const auto [train_idx, val_idx] = validation_split(data, val_frac, tf.seed);
  const Dataset train_all = subset(data, train_idx);
  const Dataset val_all = subset(data, val_idx);

  const bool with_p = uses_posterior_reg(mode_from_string(tf.mode));
  const std::vector<double> lp_list = with_p ? grid.lambda_p : std::vector<double>{0.0};

  GridResult best;
  for (double ln : grid.lambda_n)
    for (double lo : grid.lambda_o)
      for (double lp : lp_list) {
        TrainFlags combo = tf;
        combo.lambda_n = ln;
        combo.lambda_o = lo;
        combo.lambda_p = lp;
        const PreparedTrain pt = prepare_train(train_all, prep, tf.seed);
        const ModelConfig config =
            config_from(combo, data.num_classes, pt.train.feature_dim);
        const TrainState state =
            fit(pt.train.sequences, config, hyper_from(combo));
        const Dataset val = pt.pca ? apply_pca(*pt.pca, val_all) : val_all;
        std::vector<int> preds, truths, lengths;
        for (const Sequence& s : val.sequences) {
          preds.push_back(predict_sequence(s, state.model));
          truths.push_back(s.label);
          lengths.push_back(s.length());
        }
        const double f1 =
            f1_sequence_weighted(preds, truths, lengths, data.num_classes).macro_f1;
        best.table.push_back({{"lambda_n", ln},
                              {"lambda_o", lo},
                              {"lambda_p", lp},
                              {"val_macro_f1", f1}});
        if (f1 > best.macro_f1) {
          best.macro_f1 = f1;
          best.lambda_n = ln;
          best.lambda_o = lo;
          best.lambda_p = lp;
        }
      }
  return best;
}

// ---------------- predictions file ----------------

struct Predictions {
  bool frame_mode = false;
  int num_classes = 0;
  int window = 0;
  std::vector<std::pair<std::string, int>> sequence_preds;
  std::vector<std::pair<std::string, std::vector<int>>> frame_preds;
};

void write_predictions(const Predictions& p, const Model& model, const Dataset& data,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write predictions: " + path);
  out << "#predictions v1\n";
  out << "mode " << (p.frame_mode ? "frame" : "sequence") << '\n';
  out << "classes " << p.num_classes << '\n';
  if (p.frame_mode) {
    out << "window " << p.window << '\n';
    for (const auto& [id, labels] : p.frame_preds) {
      out << "frames " << id << ' ' << labels.size();
      for (int l : labels) out << ' ' << l;
      out << '\n';
    }
  } else {
    for (std::size_t i = 0; i < p.sequence_preds.size(); ++i) {
      const auto& [id, pred] = p.sequence_preds[i];
      out << "seq " << id << ' ' << pred;
      const Eigen::VectorXd probs = class_conditional(data.sequences[i], model);
      for (int k = 0; k < probs.size(); ++k) out << ' ' << fmt17(probs(k));
      if (active_branches(model.config.mode)[0] && active_branches(model.config.mode)[1]) {
        const NuPosterior nu = nu_posterior(data.sequences[i], pred, model);
        out << ' ' << fmt17(nu.p_nominal) << ' ' << fmt17(nu.p_ordinal);
      }
      out << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

Predictions read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open predictions: " + path);
  Predictions p;
  std::string line;
  if (!std::getline(in, line) || line != "#predictions v1")
    throw std::runtime_error(path + ": bad predictions header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "mode") {
      std::string m;
      ss >> m;
      p.frame_mode = m == "frame";
    } else if (tag == "classes") {
      ss >> p.num_classes;
    } else if (tag == "window") {
      ss >> p.window;
    } else if (tag == "seq") {
      std::string id;
      int pred;
      ss >> id >> pred;
      p.sequence_preds.emplace_back(id, pred);
    } else if (tag == "frames") {
      std::string id;
      int n;
      ss >> id >> n;
      std::vector<int> labels(n);
      for (int i = 0; i < n; ++i) ss >> labels[i];
      p.frame_preds.emplace_back(id, std::move(labels));
    } else {
      throw std::runtime_error(path + ": unknown record '" + tag + "'");
    }
  }
  return p;
}

// ---------------- subcommands ----------------

int cmd_synth(const std::string& regime, int nseq, int len, int dim, double noise,
              std::uint64_t seed, const std::string& out_path) {
  ManifestWriter manifest("synth");
  manifest.flag("regime", regime);
  manifest.flag("nseq", nseq);
  manifest.flag("T", len);
  manifest.flag("D", dim);
  manifest.flag("noise", noise);
  manifest.doc["seed"] = seed;
  const Dataset data =
      gen_synthetic(synth_regime_from_string(regime), nseq, len, dim, noise, seed);
  save_dataset(data, out_path);
  manifest.output(out_path);
  manifest.write(out_path);
  std::cout << "wrote " << data.sequences.size() << " sequences to " << out_path << '\n';
  return kExitOk;
}

json manifest_flags(const TrainFlags& tf, const PrepFlags& prep) {
  json j;
  j["mode"] = tf.mode;
  j["states"] = tf.states;
  j["edge_feature"] = tf.edge_feature;
  j["lambda_n"] = tf.lambda_n;
  j["lambda_o"] = tf.lambda_o;
  j["lambda_p"] = tf.lambda_p;
  j["max_iters"] = tf.max_iters;
  j["grad_tol"] = tf.grad_tol;
  j["em_rounds"] = tf.em_rounds;
  j["em_tol"] = tf.em_tol;
  j["segment"] = prep.segment;
  j["min_seg_len"] = prep.min_seg_len;
  j["balance"] = prep.do_balance;
  j["pca"] = prep.do_pca;
  j["pca_energy"] = prep.pca_energy;
  return j;
}

int cmd_train(const std::string& data_path, const std::string& out_path, TrainFlags tf,
              const PrepFlags& prep, const std::string& grid_text, double val_frac) {
  ManifestWriter manifest("train");
  manifest.input(data_path);
  manifest.doc["seed"] = tf.seed;

  const Dataset raw = load_and_segment(data_path, prep);
  if (raw.sequences.empty()) throw std::runtime_error("no sequences to train on");

  if (!grid_text.empty()) {
    const GridResult best = run_grid(raw, tf, prep, parse_grid(grid_text), val_frac);
    tf.lambda_n = best.lambda_n;
    tf.lambda_o = best.lambda_o;
    tf.lambda_p = best.lambda_p;
    manifest.doc["grid"] = best.table;
    manifest.doc["grid_best"] = {{"lambda_n", best.lambda_n},
                                 {"lambda_o", best.lambda_o},
                                 {"lambda_p", best.lambda_p},
                                 {"val_macro_f1", best.macro_f1}};
  }
  manifest.doc["flags"] = manifest_flags(tf, prep);

  const PreparedTrain pt = prepare_train(raw, prep, tf.seed);
  const ModelConfig config = config_from(tf, raw.num_classes, pt.train.feature_dim);
  const TrainState state = fit(pt.train.sequences, config, hyper_from(tf));

  manifest.doc["objective_trace"] = state.objective_trace;
  manifest.doc["converged"] = state.converged;
  manifest.doc["stop_reason"] = state.stop_reason;
  if (state.diverged) {
    manifest.write(out_path);
    throw std::runtime_error("training diverged (non-finite objective); model not saved");
  }

  save_model({state.model, pt.pca}, out_path);
  manifest.output(out_path);
  manifest.write(out_path);
  std::cout << "trained " << tf.mode << " on " << pt.train.sequences.size()
            << " sequences; final objective "
            << fmt17(state.objective_trace.empty() ? 0.0 : state.objective_trace.back())
            << '\n';
  return kExitOk;
}

int cmd_predict(const std::string& model_path, const std::string& data_path,
                const std::string& out_path, bool frame_mode, int window) {
  ManifestWriter manifest("predict");
  manifest.input(model_path);
  manifest.input(data_path);
  manifest.flag("frame", frame_mode);
  manifest.flag("window", window);

  const SavedModel saved = load_model(model_path);
  Dataset data = load_dataset(data_path);
  if (saved.pca) data = apply_pca(*saved.pca, data);
  check_model_data(saved.model, data);

  Predictions p;
  p.num_classes = saved.model.config.num_classes;
  p.frame_mode = frame_mode;
  p.window = window;
  for (const Sequence& s : data.sequences) {
    if (frame_mode)
      p.frame_preds.emplace_back(s.id, predict_frames(s, saved.model, window));
    else
      p.sequence_preds.emplace_back(s.id, predict_sequence(s, saved.model));
  }
  write_predictions(p, saved.model, data, out_path);
  manifest.output(out_path);
  manifest.write(out_path);
  std::cout << "wrote predictions for " << data.sequences.size() << " sequences to "
            << out_path << '\n';
  return kExitOk;
}

int cmd_eval(const std::string& data_path, const std::string& pred_path,
             const std::string& out_path) {
  ManifestWriter manifest("eval");
  manifest.input(data_path);
  manifest.input(pred_path);

  const Dataset data = load_dataset(data_path);
  const Predictions p = read_predictions(pred_path);
  std::map<std::string, const Sequence*> by_id;
  for (const Sequence& s : data.sequences) by_id[s.id] = &s;

  std::ostringstream out;
  if (p.frame_mode) {
    std::vector<int> pred, truth;
    for (const auto& [id, labels] : p.frame_preds) {
      const auto it = by_id.find(id);
      if (it == by_id.end())
        throw std::runtime_error("prediction for unknown sequence id: " + id);
      const Sequence& s = *it->second;
      if (!s.frame_labels)
        throw std::runtime_error("sequence " + id + " has no frame labels to score against");
      if (static_cast<int>(labels.size()) != s.length())
        throw std::runtime_error("frame prediction length mismatch for " + id);
      for (int t = 0; t < s.length(); ++t) {
        const int fl = (*s.frame_labels)[t];
        if (fl < 1 || fl > std::max(p.num_classes, data.num_classes))
          throw std::runtime_error("sequence " + id +
                                   ": frame labels are not class labels in 1..K");
        pred.push_back(labels[t]);
        truth.push_back(fl);
      }
    }
    out << format_report(f1_frame(pred, truth, p.num_classes));
  } else {
    std::vector<int> preds, truths, lengths;
    for (const auto& [id, label] : p.sequence_preds) {
      const auto it = by_id.find(id);
      if (it == by_id.end())
        throw std::runtime_error("prediction for unknown sequence id: " + id);
      preds.push_back(label);
      truths.push_back(it->second->label);
      lengths.push_back(it->second->length());
    }
    out << "# sequence classification (unweighted)\n";
    out << format_report(classification_report(preds, truths, p.num_classes));
    out << "# sequence F1 weighted by frame counts\n";
    out << format_report(f1_sequence_weighted(preds, truths, lengths, p.num_classes));
  }

  std::ofstream file(out_path);
  if (!file) throw std::runtime_error("cannot write report: " + out_path);
  file << out.str();
  file.close();
  manifest.output(out_path);
  manifest.write(out_path);
  std::cout << out.str();
  return kExitOk;
}

int cmd_cv(const std::string& data_path, const std::string& out_path, TrainFlags tf,
           const PrepFlags& prep, int folds, bool frame_mode, int window,
           bool group_by_sequence) {
  ManifestWriter manifest("cv");
  manifest.input(data_path);
  manifest.doc["seed"] = tf.seed;
  manifest.doc["flags"] = manifest_flags(tf, prep);
  manifest.flag("folds", folds);
  manifest.flag("frame", frame_mode);
  manifest.flag("window", window);

  Dataset data = load_and_segment(data_path, prep);
  if (group_by_sequence)
    for (Sequence& s : data.sequences) s.subject_id.reset();  // each sequence its own group

  const auto fold_spec = group_kfold(data, folds, tf.seed);
  std::ostringstream out;
  std::vector<int> pooled_pred, pooled_truth, pooled_len;
  std::vector<int> pooled_frame_pred, pooled_frame_truth;

  for (std::size_t f = 0; f < fold_spec.size(); ++f) {
    const Dataset train_raw = subset(data, fold_spec[f].first);
    const Dataset test_raw = subset(data, fold_spec[f].second);

    // subject disjointness, echoed into the report
    std::set<std::string> train_subj, test_subj;
    for (const Sequence& s : train_raw.sequences)
      train_subj.insert(s.subject_id ? *s.subject_id : s.id);
    for (const Sequence& s : test_raw.sequences)
      test_subj.insert(s.subject_id ? *s.subject_id : s.id);
    bool disjoint = true;
    for (const auto& g : test_subj)
      if (train_subj.count(g)) disjoint = false;

    const PreparedTrain pt = prepare_train(train_raw, prep, tf.seed);
    const Dataset test = pt.pca ? apply_pca(*pt.pca, test_raw) : test_raw;
    const ModelConfig config = config_from(tf, data.num_classes, pt.train.feature_dim);
    const TrainState state = fit(pt.train.sequences, config, hyper_from(tf));
    if (state.diverged) throw std::runtime_error("training diverged in fold " +
                                                 std::to_string(f));

    std::vector<int> preds, truths, lengths;
    for (const Sequence& s : test.sequences) {
      preds.push_back(predict_sequence(s, state.model));
      truths.push_back(s.label);
      lengths.push_back(s.length());
      if (frame_mode && s.frame_labels) {
        const std::vector<int> fp = predict_frames(s, state.model, window);
        for (int t = 0; t < s.length(); ++t) {
          const int fl = (*s.frame_labels)[t];
          if (fl >= 1 && fl <= data.num_classes) {
            pooled_frame_pred.push_back(fp[t]);
            pooled_frame_truth.push_back(fl);
          }
        }
      }
    }
    pooled_pred.insert(pooled_pred.end(), preds.begin(), preds.end());
    pooled_truth.insert(pooled_truth.end(), truths.begin(), truths.end());
    pooled_len.insert(pooled_len.end(), lengths.begin(), lengths.end());

    out << "# fold " << f << " (train " << train_raw.sequences.size() << ", test "
        << test_raw.sequences.size() << ", subjects_disjoint "
        << (disjoint ? "yes" : "NO") << ")\n";
    out << format_report(
        f1_sequence_weighted(preds, truths, lengths, data.num_classes));
  }

  out << "# pooled over " << folds << " folds: sequence classification\n";
  out << format_report(classification_report(pooled_pred, pooled_truth, data.num_classes));
  out << "# pooled over " << folds << " folds: sequence F1 weighted by frame counts\n";
  out << format_report(
      f1_sequence_weighted(pooled_pred, pooled_truth, pooled_len, data.num_classes));
  if (!pooled_frame_pred.empty()) {
    out << "# pooled over " << folds << " folds: frame-based F1 (window " << window
        << ")\n";
    out << format_report(f1_frame(pooled_frame_pred, pooled_frame_truth, data.num_classes));
  }

  std::ofstream file(out_path);
  if (!file) throw std::runtime_error("cannot write report: " + out_path);
  file << out.str();
  file.close();
  manifest.output(out_path);
  manifest.write(out_path);
  std::cout << out.str();
  return kExitOk;
}

int cmd_gradcheck(const std::string& modes_text, std::uint64_t seed, int draws,
                  const std::string& out_path) {
  std::vector<std::string> modes;
  if (modes_text == "all") {
    modes = {"hcrf", "hcorf", "vslm", "vsld", "vslem"};
  } else {
    std::stringstream ss(modes_text);
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) modes.push_back(tok);
  }

  const double step = 1e-5;
  const double tol = 1e-4;
  bool all_ok = true;
  std::ostringstream out;
  Rng rng(seed);

  for (const std::string& mode_name : modes) {
    const Mode mode = mode_from_string(mode_name);
    double worst = 0.0;
    int worst_coord = -1;
    for (int draw = 0; draw < draws; ++draw) {
      ModelConfig config{2, 3, 2, EdgeFeatureMode::l1_distance, mode};
      Hyperparams h;
      h.lambda_n = 0.02;
      h.lambda_o = 0.03;
      h.lambda_p = uses_posterior_reg(mode) ? 0.05 : 0.0;
      h.seed = rng.uniform_int(1u << 30);
      Model base = init_params(config, h, {});
      // random offset so the probe point is generic
      Eigen::VectorXd x0 = pack_params(base);
      for (int i = 0; i < x0.size(); ++i) x0(i) += 0.5 * rng.normal();
      base = unpack_params(base, x0);

      std::vector<Sequence> data;
      for (int i = 0; i < 4; ++i) {
        Sequence s;
        s.id = "g" + std::to_string(i);
        s.label = 1 + static_cast<int>(rng.uniform_int(2));
        s.frames.resize(3, 2);
        for (int t = 0; t < 3; ++t)
          for (int d = 0; d < 2; ++d) s.frames(t, d) = rng.normal();
        data.push_back(std::move(s));
      }

      std::vector<NuPosterior> q;
      if (mode == Mode::VSLem)
        for (std::size_t i = 0; i < data.size(); ++i) {
          const double pn = 0.2 + 0.6 * rng.uniform01();
          q.push_back({pn, 1.0 - pn});
        }

      if (mode == Mode::VSLm) {
        // probe only where every branch winner is strict
        bool strict = true;
        for (const Sequence& s : data) {
          const Eigen::MatrixXd lz = branch_log_z_matrix(s, base);
          for (int k = 0; k < 2; ++k)
            if (std::abs(lz(k, 0) - lz(k, 1)) < 1e-3) strict = false;
        }
        if (!strict) {
          --draw;
          continue;
        }
      }

      const auto obj = [&](const Eigen::VectorXd& x) {
        const Model m = unpack_params(base, x);
        return mode == Mode::VSLem ? em_weighted_objective(data, m, q)
                                   : nll_objective(data, m);
      };
      const auto grad = [&](const Eigen::VectorXd& x) {
        const Model m = unpack_params(base, x);
        if (mode == Mode::VSLem) return em_weighted_gradient(data, m, q);
        if (mode == Mode::VSLm) return vslm_subgradient(data, m);
        return nll_gradient(data, m);
      };
      const GradCheckResult res = grad_check(obj, grad, pack_params(base), step);
      if (res.max_rel_error > worst) {
        worst = res.max_rel_error;
        worst_coord = res.worst_index;
      }
    }
    const bool ok = worst < tol;
    all_ok = all_ok && ok;
    out << (ok ? "PASS" : "FAIL") << ' ' << mode_name << " max_rel_error "
        << fmt17(worst) << " worst_coordinate " << worst_coord << " draws " << draws
        << '\n';
  }

  std::cout << out.str();
  if (!out_path.empty()) {
    ManifestWriter manifest("gradcheck");
    manifest.doc["seed"] = seed;
    manifest.flag("modes", modes_text);
    manifest.flag("draws", draws);
    std::ofstream file(out_path);
    if (!file) throw std::runtime_error("cannot write report: " + out_path);
    file << out.str();
    file.close();
    manifest.output(out_path);
    manifest.write(out_path);
  }
  return all_ok ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"variable-state latent CRF sequence classification toolkit"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string sy_regime = "mixed", sy_out;
  int sy_nseq = 100, sy_T = 30, sy_D = 4;
  double sy_noise = 0.8;
  std::uint64_t sy_seed = 1;
  synth->add_option("--regime", sy_regime, "ordinal_ramp|nominal_clusters|mixed")
      ->capture_default_str();
  synth->add_option("--nseq", sy_nseq, "number of sequences")->capture_default_str();
  synth->add_option("--T", sy_T, "frames per sequence")->capture_default_str();
  synth->add_option("--D", sy_D, "feature dimension")->capture_default_str();
  synth->add_option("--noise", sy_noise, "emission noise std")->capture_default_str();
  synth->add_option("--seed", sy_seed, "seed")->capture_default_str();
  synth->add_option("--out", sy_out, "output dataset path")->required();

  // train
  auto* train = app.add_subcommand("train", "train a model on a dataset");
  std::string tr_data, tr_out, tr_grid;
  double tr_val_frac = 0.2;
  TrainFlags tr_flags;
  PrepFlags tr_prep;
  train->add_option("--data", tr_data, "training dataset")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--out", tr_out, "output model path")->required();
  add_train_flags(train, tr_flags);
  add_prep_flags(train, tr_prep);
  train->add_option("--grid", tr_grid,
                    "lambda grid search: 'default' or 'ln,...;lo,...;lp,...'");
  train->add_option("--val-frac", tr_val_frac, "validation fraction for --grid")
      ->capture_default_str();

  // predict
  auto* predict = app.add_subcommand("predict", "predict labels with a trained model");
  std::string pr_model, pr_data, pr_out;
  bool pr_frame = false;
  int pr_window = kDefaultMinSegmentLen;
  predict->add_option("--model", pr_model, "model file")
      ->required()
      ->check(CLI::ExistingFile);
  predict->add_option("--data", pr_data, "dataset to label")
      ->required()
      ->check(CLI::ExistingFile);
  predict->add_option("--out", pr_out, "output predictions path")->required();
  predict->add_flag("--frame", pr_frame, "sliding-window frame labels");
  predict->add_option("--window", pr_window, "sliding window width")->capture_default_str();

  // eval
  auto* eval = app.add_subcommand("eval", "score predictions against a dataset");
  std::string ev_data, ev_pred, ev_out;
  eval->add_option("--data", ev_data, "dataset with ground truth")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--pred", ev_pred, "predictions file")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--out", ev_out, "output report path")->required();

  // cv
  auto* cv = app.add_subcommand("cv", "subject-independent cross-validation");
  std::string cv_data, cv_out;
  TrainFlags cv_flags;
  PrepFlags cv_prep;
  int cv_folds = 10, cv_window = kDefaultMinSegmentLen;
  bool cv_frame = false, cv_by_seq = false;
  cv->add_option("--data", cv_data, "dataset")->required()->check(CLI::ExistingFile);
  cv->add_option("--out", cv_out, "output report path")->required();
  cv->add_option("--folds", cv_folds, "number of folds")->capture_default_str();
  cv->add_flag("--frame", cv_frame, "also score sliding-window frame labels");
  cv->add_option("--window", cv_window, "sliding window width")->capture_default_str();
  cv->add_flag("--group-by-sequence", cv_by_seq, "treat each sequence as its own subject");
  add_train_flags(cv, cv_flags);
  add_prep_flags(cv, cv_prep);

  // gradcheck
  auto* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference check of every training gradient");
  std::string gc_modes = "all", gc_out;
  std::uint64_t gc_seed = 1;
  int gc_draws = 5;
  gradcheck->add_option("--modes", gc_modes, "comma list of modes, or 'all'")
      ->capture_default_str();
  gradcheck->add_option("--seed", gc_seed, "seed")->capture_default_str();
  gradcheck->add_option("--draws", gc_draws, "random instances per mode")
      ->capture_default_str();
  gradcheck->add_option("--out", gc_out, "optional report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (synth->parsed())
      return cmd_synth(sy_regime, sy_nseq, sy_T, sy_D, sy_noise, sy_seed, sy_out);
    if (train->parsed())
      return cmd_train(tr_data, tr_out, tr_flags, tr_prep, tr_grid, tr_val_frac);
    if (predict->parsed())
      return cmd_predict(pr_model, pr_data, pr_out, pr_frame, pr_window);
    if (eval->parsed()) return cmd_eval(ev_data, ev_pred, ev_out);
    if (cv->parsed())
      return cmd_cv(cv_data, cv_out, cv_flags, cv_prep, cv_folds, cv_frame, cv_window,
                    cv_by_seq);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_modes, gc_seed, gc_draws, gc_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
