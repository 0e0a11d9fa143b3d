#include "vslcrf/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "vslcrf/rng.hpp"
#include "vslcrf/textio.hpp"

namespace vslcrf {

namespace {

// Emission scale of the synthetic generators.
constexpr double kRampAmplitude = 2.5;
constexpr double kStickiness = 0.85;

[[noreturn]] void parse_fail(const std::string& path, int line_no, const std::string& msg) {
  throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": " + msg);
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> toks;
  std::string t;
  while (ss >> t) toks.push_back(t);
  return toks;
}

}  // namespace

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);

  Dataset data;
  std::string line;
  int line_no = 0;
  int pending_rows = 0;
  Sequence current;
  bool in_block = false;
  bool saw_frame_labels = false;

  auto finish_block = [&]() {
    if (!in_block) return;
    if (pending_rows != 0)
      parse_fail(path, line_no, "sequence " + current.id + " ended early (" +
                                    std::to_string(pending_rows) + " rows missing)");
    if (!saw_frame_labels) current.frame_labels.reset();
    data.sequences.push_back(std::move(current));
    current = Sequence{};
    in_block = false;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const bool blank = line.find_first_not_of(" \t") == std::string::npos;
    if (blank) {
      finish_block();
      continue;
    }
    if (line.rfind("#seq", 0) == 0) {
      finish_block();
      const auto toks = split_ws(line);
      if (toks.size() != 6)
        parse_fail(path, line_no, "header must be '#seq <id> <subject> <label> <T> <D>'");
      current = Sequence{};
      current.id = toks[1];
      if (toks[2] != "-") current.subject_id = toks[2];
      long label, T, D;
      try {
        label = parse_long(toks[3]);
        T = parse_long(toks[4]);
        D = parse_long(toks[5]);
      } catch (const std::exception& e) {
        parse_fail(path, line_no, e.what());
      }
      if (label < 1) parse_fail(path, line_no, "label out of range (must be >= 1)");
      if (T < 1) parse_fail(path, line_no, "T must be >= 1");
      if (D < 1) parse_fail(path, line_no, "D must be >= 1");
      if (data.feature_dim == 0) data.feature_dim = static_cast<int>(D);
      if (static_cast<int>(D) != data.feature_dim)
        parse_fail(path, line_no, "inconsistent feature dimension D");
      current.label = static_cast<int>(label);
      current.frames.resize(T, D);
      current.frame_labels.emplace();
      current.frame_labels->reserve(T);
      pending_rows = static_cast<int>(T);
      in_block = true;
      saw_frame_labels = false;
      continue;
    }
    if (!in_block) parse_fail(path, line_no, "data row outside a #seq block");
    if (pending_rows == 0)
      parse_fail(path, line_no, "extra data row in sequence " + current.id);

    std::string values = line;
    std::string suffix;
    const std::size_t bar = line.find('|');
    if (bar != std::string::npos) {
      values = line.substr(0, bar);
      suffix = line.substr(bar + 1);
    }
    const auto toks = split_ws(values);
    if (static_cast<int>(toks.size()) != data.feature_dim)
      parse_fail(path, line_no,
                 "expected " + std::to_string(data.feature_dim) + " values, got " +
                     std::to_string(toks.size()));
    const int t = current.length() - pending_rows;
    for (int d = 0; d < data.feature_dim; ++d) {
      try {
        current.frames(t, d) = parse_double(toks[d]);
      } catch (const std::exception& e) {
        parse_fail(path, line_no, e.what());
      }
      if (!std::isfinite(current.frames(t, d)))
        parse_fail(path, line_no, "non-finite feature value");
    }
    if (bar != std::string::npos) {
      const auto stoks = split_ws(suffix);
      if (stoks.size() != 1) parse_fail(path, line_no, "expected one frame label after '|'");
      try {
        current.frame_labels->push_back(static_cast<int>(parse_long(stoks[0])));
      } catch (const std::exception& e) {
        parse_fail(path, line_no, e.what());
      }
      saw_frame_labels = true;
    } else {
      if (saw_frame_labels)
        parse_fail(path, line_no, "frame labels must be present on all rows or none");
      current.frame_labels->push_back(0);
    }
    --pending_rows;
  }
  ++line_no;
  finish_block();

  if (data.sequences.empty()) throw std::runtime_error(path + ": no sequences found");
  for (const Sequence& s : data.sequences)
    data.num_classes = std::max(data.num_classes, s.label);
  for (const Sequence& s : data.sequences)
    validate_sequence(s, data.feature_dim, data.num_classes);
  data.provenance["source"] = path;
  return data;
}

void save_dataset(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path);
  for (const Sequence& s : data.sequences) {
    out << "#seq " << s.id << ' ' << (s.subject_id ? *s.subject_id : "-") << ' ' << s.label
        << ' ' << s.length() << ' ' << s.frames.cols() << '\n';
    for (int t = 0; t < s.length(); ++t) {
      for (int d = 0; d < s.frames.cols(); ++d) {
        if (d > 0) out << ' ';
        out << fmt17(s.frames(t, d));
      }
      if (s.frame_labels) out << " | " << (*s.frame_labels)[t];
      out << '\n';
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

PcaTransform fit_pca(const Dataset& data, double energy) {
  if (!(energy > 0.0 && energy <= 1.0))
    throw std::invalid_argument("fit_pca: energy must be in (0, 1]");
  long total_rows = 0;
  for (const Sequence& s : data.sequences) total_rows += s.length();
  if (total_rows < 2) throw std::invalid_argument("fit_pca: need at least 2 frames");
  const int d0 = data.feature_dim;

  Eigen::MatrixXd frames(total_rows, d0);
  long r = 0;
  for (const Sequence& s : data.sequences) {
    frames.middleRows(r, s.length()) = s.frames;
    r += s.length();
  }

  PcaTransform t;
  t.mean = frames.colwise().mean();
  frames.rowwise() -= t.mean.transpose();
  const Eigen::MatrixXd cov =
      frames.transpose() * frames / static_cast<double>(total_rows - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw std::runtime_error("fit_pca: eigensolver failed");

  // Eigen returns ascending order; walk from the top.
  Eigen::VectorXd evals = es.eigenvalues().cwiseMax(0.0);
  const double total = evals.sum();
  const double emax = evals.maxCoeff();
  if (!(total > 0.0) || !(emax > 0.0))
    throw std::invalid_argument("fit_pca: zero-variance data");

  int rank = 0;
  for (int i = 0; i < d0; ++i)
    if (evals(i) > emax * 1e-12) ++rank;

  int keep = rank;
  double cum = 0.0;
  for (int i = 0; i < rank; ++i) {
    cum += evals(d0 - 1 - i);
    if (cum >= energy * total * (1.0 - 1e-12)) {
      keep = i + 1;
      break;
    }
  }

  t.basis.resize(d0, keep);
  double kept = 0.0;
  for (int i = 0; i < keep; ++i) {
    Eigen::VectorXd v = es.eigenvectors().col(d0 - 1 - i);
    int arg = 0;
    for (int j = 1; j < d0; ++j)
      if (std::abs(v(j)) > std::abs(v(arg))) arg = j;
    if (v(arg) < 0) v = -v;
    t.basis.col(i) = v;
    kept += evals(d0 - 1 - i);
  }
  t.retained_energy = kept / total;
  return t;
}

Eigen::MatrixXd apply_pca(const PcaTransform& t, const Eigen::MatrixXd& frames) {
  if (frames.cols() != t.mean.size())
    throw std::invalid_argument("apply_pca: feature dimension mismatch");
  return (frames.rowwise() - t.mean.transpose()) * t.basis;
}

Dataset apply_pca(const PcaTransform& t, const Dataset& data) {
  Dataset out = data;
  for (Sequence& s : out.sequences) s.frames = apply_pca(t, s.frames);
  out.feature_dim = static_cast<int>(t.basis.cols());
  out.provenance["pca_dim"] = std::to_string(out.feature_dim);
  return out;
}

std::vector<Sequence> segment_sequences(const Eigen::MatrixXd& frames,
                                        const std::vector<int>& frame_labels, int min_len,
                                        const std::string& id_prefix,
                                        const std::optional<std::string>& subject_id) {
  if (static_cast<long>(frame_labels.size()) != frames.rows())
    throw std::invalid_argument("segment_sequences: label length mismatch");
  if (min_len < 1) throw std::invalid_argument("segment_sequences: min_len must be >= 1");
  for (int v : frame_labels)
    if (v != 0 && v != 1)
      throw std::invalid_argument("segment_sequences: frame labels must be binary");

  std::vector<Sequence> out;
  const int T = static_cast<int>(frames.rows());
  int start = 0;
  int kept = 0;
  while (start < T) {
    int end = start;
    while (end < T && frame_labels[end] == frame_labels[start]) ++end;
    const int run = end - start;
    if (run >= min_len) {
      Sequence s;
      s.id = id_prefix + "_seg" + std::to_string(kept++);
      s.subject_id = subject_id;
      s.frames = frames.middleRows(start, run);
      s.label = frame_labels[start] == 1 ? 1 : 2;
      s.frame_labels = std::vector<int>(run, s.label);
      out.push_back(std::move(s));
    }
    start = end;
  }
  return out;
}

Dataset segment_dataset(const Dataset& data, int min_len) {
  Dataset out;
  out.feature_dim = data.feature_dim;
  out.num_classes = 2;
  out.provenance = data.provenance;
  out.provenance["segmented_min_len"] = std::to_string(min_len);
  for (const Sequence& s : data.sequences) {
    if (!s.frame_labels)
      throw std::invalid_argument("segment_dataset: sequence " + s.id +
                                  " has no frame labels");
    auto segs = segment_sequences(s.frames, *s.frame_labels, min_len, s.id, s.subject_id);
    for (Sequence& seg : segs) out.sequences.push_back(std::move(seg));
  }
  return out;
}

Dataset balance(const Dataset& data, std::uint64_t seed) {
  if (data.num_classes != 2)
    throw std::invalid_argument("balance: requires two-class data");
  std::vector<int> negatives;
  int positives = 0;
  for (std::size_t i = 0; i < data.sequences.size(); ++i) {
    if (data.sequences[i].label == 1)
      ++positives;
    else
      negatives.push_back(static_cast<int>(i));
  }
  if (static_cast<int>(negatives.size()) <= positives) return data;

  Rng rng(seed);
  rng.shuffle(negatives);
  std::vector<bool> keep(data.sequences.size(), false);
  for (std::size_t i = 0; i < data.sequences.size(); ++i)
    if (data.sequences[i].label == 1) keep[i] = true;
  for (int i = 0; i < positives; ++i) keep[negatives[i]] = true;

  Dataset out;
  out.feature_dim = data.feature_dim;
  out.num_classes = data.num_classes;
  out.provenance = data.provenance;
  out.provenance["balanced_seed"] = std::to_string(seed);
  for (std::size_t i = 0; i < data.sequences.size(); ++i)
    if (keep[i]) out.sequences.push_back(data.sequences[i]);
  return out;
}

std::string to_string(SynthRegime r) {
  switch (r) {
    case SynthRegime::ordinal_ramp:
      return "ordinal_ramp";
    case SynthRegime::nominal_clusters:
      return "nominal_clusters";
    case SynthRegime::mixed:
      return "mixed";
  }
  return "unknown";
}

SynthRegime synth_regime_from_string(const std::string& s) {
  if (s == "ordinal_ramp") return SynthRegime::ordinal_ramp;
  if (s == "nominal_clusters") return SynthRegime::nominal_clusters;
  if (s == "mixed") return SynthRegime::mixed;
  throw std::invalid_argument("unknown synthetic regime: " + s);
}

namespace {

Eigen::VectorXd random_unit(Rng& rng, int dim) {
  Eigen::VectorXd v(dim);
  double norm = 0.0;
  while (norm < 1e-12) {
    for (int d = 0; d < dim; ++d) v(d) = rng.normal();
    norm = v.norm();
  }
  return v / norm;
}

Sequence make_ramp_sequence(Rng& rng, const Eigen::VectorXd& direction, int label, int len,
                            double noise_sd, const std::string& id,
                            const std::string& subject) {
  const int dim = static_cast<int>(direction.size());
  Sequence s;
  s.id = id;
  s.subject_id = subject;
  s.label = label;
  s.frames.resize(len, dim);
  s.frame_labels = std::vector<int>(len);
  const double mid = (len - 1) / 2.0;
  for (int t = 0; t < len; ++t) {
    const double intensity = len == 1 ? 1.0 : 1.0 - std::abs(t - mid) / mid;
    Eigen::VectorXd x = kRampAmplitude * intensity * direction;
    for (int d = 0; d < dim; ++d) x(d) += noise_sd * rng.normal();
    s.frames.row(t) = x.transpose();
    (*s.frame_labels)[t] = intensity < 1.0 / 3 ? 1 : (intensity < 2.0 / 3 ? 2 : 3);
  }
  return s;
}

Sequence make_cluster_sequence(Rng& rng, const std::vector<Eigen::VectorXd>& means,
                               int label, int len, double noise_sd, const std::string& id,
                               const std::string& subject) {
  const int dim = static_cast<int>(means[0].size());
  Sequence s;
  s.id = id;
  s.subject_id = subject;
  s.label = label;
  s.frames.resize(len, dim);
  s.frame_labels = std::vector<int>(len);
  int state = static_cast<int>(rng.uniform_int(3));
  for (int t = 0; t < len; ++t) {
    if (t > 0 && rng.uniform01() >= kStickiness) {
      const int hop = static_cast<int>(rng.uniform_int(2));
      state = (state + 1 + hop) % 3;
    }
    Eigen::VectorXd x = means[state];
    for (int d = 0; d < dim; ++d) x(d) += noise_sd * rng.normal();
    s.frames.row(t) = x.transpose();
    (*s.frame_labels)[t] = state + 1;
  }
  return s;
}

}  // namespace

Dataset gen_synthetic(SynthRegime regime, int n_seq, int len, int dim, double noise_sd,
                      std::uint64_t seed) {
  if (n_seq < 1 || len < 1 || dim < 1)
    throw std::invalid_argument("gen_synthetic: sizes must be positive");
  if (noise_sd < 0) throw std::invalid_argument("gen_synthetic: noise_sd must be >= 0");

  Rng rng(seed);

  // Fixed geometry per dataset: a ramp direction plus an equilateral cluster
  // triangle in a subspace orthogonal to it, so neither class trivially
  // mimics the other's latent structure.
  const Eigen::VectorXd ramp_dir = random_unit(rng, dim);
  std::vector<Eigen::VectorXd> means;
  if (dim >= 2) {
    Eigen::VectorXd e1 = random_unit(rng, dim);
    e1 -= ramp_dir * ramp_dir.dot(e1);
    if (e1.norm() < 1e-8) e1 = random_unit(rng, dim);
    e1.normalize();
    Eigen::VectorXd e2;
    if (dim >= 3) {
      e2 = random_unit(rng, dim);
      e2 -= ramp_dir * ramp_dir.dot(e2) + e1 * e1.dot(e2);
      if (e2.norm() < 1e-8) e2 = e1;
      e2.normalize();
    } else {
      e2 = e1;
    }
    means.push_back(kRampAmplitude * e1);
    means.push_back(kRampAmplitude * (-0.5 * e1 + 0.8660254037844386 * e2));
    means.push_back(kRampAmplitude * (-0.5 * e1 - 0.8660254037844386 * e2));
  } else {
    means = {Eigen::VectorXd::Constant(1, -kRampAmplitude),
             Eigen::VectorXd::Constant(1, 0.0),
             Eigen::VectorXd::Constant(1, kRampAmplitude)};
  }

  Dataset data;
  data.feature_dim = dim;
  data.num_classes = regime == SynthRegime::mixed ? 2 : 1;
  data.provenance["regime"] = to_string(regime);
  data.provenance["n_seq"] = std::to_string(n_seq);
  data.provenance["T"] = std::to_string(len);
  data.provenance["D"] = std::to_string(dim);
  data.provenance["noise_sd"] = fmt17(noise_sd);
  data.provenance["seed"] = std::to_string(seed);

  const int n_ramp = regime == SynthRegime::mixed      ? (n_seq + 1) / 2
                     : regime == SynthRegime::ordinal_ramp ? n_seq
                                                           : 0;
  for (int i = 0; i < n_seq; ++i) {
    const std::string id = "syn" + std::to_string(i);
    const std::string subject = "s" + std::to_string(i % 10);
    if (i < n_ramp) {
      const int label = 1;
      data.sequences.push_back(
          make_ramp_sequence(rng, ramp_dir, label, len, noise_sd, id, subject));
    } else {
      const int label = regime == SynthRegime::mixed ? 2 : 1;
      data.sequences.push_back(
          make_cluster_sequence(rng, means, label, len, noise_sd, id, subject));
    }
  }
  return data;
}

}  // namespace vslcrf
