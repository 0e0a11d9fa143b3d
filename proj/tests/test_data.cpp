#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "test_util.hpp"
#include "vslcrf/data.hpp"

using namespace vslcrf;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("vslcrf_test_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

Dataset demo_dataset() {
  Rng rng(81);
  Dataset d;
  d.feature_dim = 3;
  d.num_classes = 2;
  for (int i = 0; i < 5; ++i) {
    Sequence s = testutil::random_sequence(2 + i, 3, rng, 1 + i % 2, "seq" + std::to_string(i));
    if (i % 2 == 0) s.subject_id = "subj" + std::to_string(i / 2);
    if (i == 3) {
      s.frame_labels = std::vector<int>(s.length());
      for (int t = 0; t < s.length(); ++t) (*s.frame_labels)[t] = 1 + t % 3;
    }
    d.sequences.push_back(s);
  }
  return d;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("save/load round-trips a dataset exactly") {
  TempDir tmp;
  const Dataset d = demo_dataset();
  save_dataset(d, tmp.file("d.txt"));
  const Dataset back = load_dataset(tmp.file("d.txt"));
  REQUIRE(back.sequences.size() == d.sequences.size());
  CHECK(back.feature_dim == d.feature_dim);
  CHECK(back.num_classes == d.num_classes);
  for (std::size_t i = 0; i < d.sequences.size(); ++i) {
    const Sequence& a = d.sequences[i];
    const Sequence& b = back.sequences[i];
    CHECK(a.id == b.id);
    CHECK(a.subject_id == b.subject_id);
    CHECK(a.label == b.label);
    CHECK(a.frames == b.frames);  // 17 digits: exact
    CHECK(a.frame_labels == b.frame_labels);
  }
}

TEST_CASE("parse errors carry the line number") {
  TempDir tmp;
  SUBCASE("dimension mismatch on line 7") {
    std::ofstream out(tmp.file("bad.txt"));
    out << "#seq s - 1 6 3\n";
    for (int i = 0; i < 5; ++i) out << "0.1 0.2 0.3\n";
    out << "0.1 0.2\n";  // line 7: only two values
    out.close();
    try {
      load_dataset(tmp.file("bad.txt"));
      FAIL("expected a parse error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("line 7") != std::string::npos);
    }
  }
  SUBCASE("empty sequences are rejected") {
    std::ofstream out(tmp.file("empty.txt"));
    out << "#seq s - 1 0 3\n";
    out.close();
    CHECK_THROWS_AS(load_dataset(tmp.file("empty.txt")), std::runtime_error);
  }
  SUBCASE("label below 1 is rejected") {
    std::ofstream out(tmp.file("label.txt"));
    out << "#seq s - 0 1 2\n0.0 0.0\n";
    out.close();
    CHECK_THROWS_AS(load_dataset(tmp.file("label.txt")), std::runtime_error);
  }
  SUBCASE("rows outside a block are rejected") {
    std::ofstream out(tmp.file("stray.txt"));
    out << "0.0 0.0\n";
    out.close();
    CHECK_THROWS_AS(load_dataset(tmp.file("stray.txt")), std::runtime_error);
  }
  SUBCASE("truncated blocks are rejected") {
    std::ofstream out(tmp.file("short.txt"));
    out << "#seq s - 1 3 2\n0.0 0.0\n";
    out.close();
    CHECK_THROWS_AS(load_dataset(tmp.file("short.txt")), std::runtime_error);
  }
}

TEST_CASE("fit_pca: rank handling and planted spectra") {
  SUBCASE("data in an exact 2-D subspace keeps 2 dimensions at 97%") {
    Rng rng(82);
    Dataset d;
    d.feature_dim = 5;
    d.num_classes = 1;
    Sequence s;
    s.id = "sub";
    s.label = 1;
    s.frames.resize(60, 5);
    for (int t = 0; t < 60; ++t) {
      const double a = rng.normal();
      const double b = 0.8 * rng.normal();
      // span{e1+e2, e3}: exactly rank 2 after centering
      s.frames.row(t) << a, a, b, 0.0, 0.0;
    }
    d.sequences.push_back(s);
    const PcaTransform t = fit_pca(d, 0.97);
    CHECK(t.basis.cols() == 2);
    CHECK(t.retained_energy >= 0.97);

    const PcaTransform full = fit_pca(d, 1.0);
    CHECK(full.basis.cols() == 2);  // energy 1.0 keeps exactly the rank
  }

  SUBCASE("planted spectrum (5,3,1,0.1,0.05) keeps 3 dims at 97%") {
    // two symmetric rows per axis give a diagonal sample covariance with
    // exactly the planted eigenvalues; cumulative energies:
    // 5/9.15=.546, 8/9.15=.874, 9/9.15=.9836 -> D=3
    const std::vector<double> evals{5.0, 3.0, 1.0, 0.1, 0.05};
    const int dim = 5;
    const int rows = 2 * dim;
    Dataset d;
    d.feature_dim = dim;
    d.num_classes = 1;
    Sequence s;
    s.id = "plant";
    s.label = 1;
    s.frames = Eigen::MatrixXd::Zero(rows, dim);
    for (int j = 0; j < dim; ++j) {
      const double c = std::sqrt(evals[j] * (rows - 1) / 2.0);
      s.frames(2 * j, j) = c;
      s.frames(2 * j + 1, j) = -c;
    }
    d.sequences.push_back(s);
    const PcaTransform t = fit_pca(d, 0.97);
    CHECK(t.basis.cols() == 3);
    CHECK(t.retained_energy == doctest::Approx(9.0 / 9.15).epsilon(1e-9));
    // deterministic sign convention: dominant entries positive
    for (int c = 0; c < 3; ++c) CHECK(t.basis.col(c).cwiseAbs().maxCoeff() ==
                                      doctest::Approx(t.basis.col(c).maxCoeff()));
    // orthonormal columns
    const Eigen::MatrixXd gram = t.basis.transpose() * t.basis;
    CHECK((gram - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);
  }

  SUBCASE("zero-variance data is rejected") {
    Dataset d;
    d.feature_dim = 2;
    d.num_classes = 1;
    Sequence s;
    s.id = "const";
    s.label = 1;
    s.frames = Eigen::MatrixXd::Constant(5, 2, 3.0);
    d.sequences.push_back(s);
    CHECK_THROWS_AS(fit_pca(d, 0.97), std::invalid_argument);
  }

  SUBCASE("projection retains the requested energy on the fitting set") {
    Rng rng(83);
    Dataset d;
    d.feature_dim = 6;
    d.num_classes = 1;
    Sequence s = testutil::random_sequence(80, 6, rng);
    for (int t = 0; t < 80; ++t) s.frames(t, 0) *= 4.0;  // anisotropic
    d.sequences.push_back(s);
    const PcaTransform t = fit_pca(d, 0.9);
    const Eigen::MatrixXd centered =
        s.frames.rowwise() - s.frames.colwise().mean();
    const Eigen::MatrixXd proj = apply_pca(t, s.frames);
    const double total = centered.squaredNorm();
    const double kept = proj.squaredNorm();
    CHECK(kept / total >= 0.9 - 1e-9);
  }
}

TEST_CASE("segment_sequences follows run lengths") {
  Eigen::MatrixXd frames(13, 2);
  frames.setRandom();
  SUBCASE("6 ones then 7 zeros") {
    std::vector<int> labels{1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
    const auto segs = segment_sequences(frames, labels, 6, "rec");
    REQUIRE(segs.size() == 2);
    CHECK(segs[0].label == 1);
    CHECK(segs[0].length() == 6);
    CHECK(segs[1].label == 2);
    CHECK(segs[1].length() == 7);
    CHECK(segs[0].frames == frames.topRows(6));
    CHECK(segs[1].frames == frames.bottomRows(7));
  }
  SUBCASE("runs shorter than min_len vanish") {
    Eigen::MatrixXd five(5, 2);
    five.setRandom();
    CHECK(segment_sequences(five, {1, 1, 1, 1, 1}, 6).empty());
  }
  SUBCASE("alternating labels produce nothing") {
    std::vector<int> alt(13);
    for (int i = 0; i < 13; ++i) alt[i] = i % 2;
    CHECK(segment_sequences(frames, alt, 6).empty());
  }
  SUBCASE("non-binary labels are rejected") {
    CHECK_THROWS_AS(segment_sequences(frames, std::vector<int>(13, 2), 6),
                    std::invalid_argument);
  }
  SUBCASE("default minimum segment length is 6") {
    std::vector<int> labels{1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0};
    const auto segs = segment_sequences(frames, labels);
    REQUIRE(segs.size() == 1);  // the 5-run falls below the default threshold
    CHECK(segs[0].label == 2);
  }
}

TEST_CASE("balance subsamples the inactive class") {
  Rng rng(84);
  Dataset d;
  d.feature_dim = 2;
  d.num_classes = 2;
  for (int i = 0; i < 40; ++i)
    d.sequences.push_back(
        testutil::random_sequence(3, 2, rng, i < 10 ? 1 : 2, "s" + std::to_string(i)));

  const Dataset b = balance(d, 77);
  int pos = 0, neg = 0;
  for (const auto& s : b.sequences) (s.label == 1 ? pos : neg)++;
  CHECK(pos == 10);
  CHECK(neg == 10);

  const Dataset b2 = balance(d, 77);
  REQUIRE(b.sequences.size() == b2.sequences.size());
  for (std::size_t i = 0; i < b.sequences.size(); ++i)
    CHECK(b.sequences[i].id == b2.sequences[i].id);  // seeded: same survivors

  Dataset few = d;
  few.sequences.resize(15);  // 10 positives, 5 negatives
  const Dataset same = balance(few, 1);
  CHECK(same.sequences.size() == 15);
}

TEST_CASE("gen_synthetic is seeded and honors noise") {
  const Dataset a = gen_synthetic(SynthRegime::mixed, 10, 8, 3, 0.5, 42);
  const Dataset b = gen_synthetic(SynthRegime::mixed, 10, 8, 3, 0.5, 42);
  REQUIRE(a.sequences.size() == 10);
  CHECK(a.num_classes == 2);
  for (std::size_t i = 0; i < a.sequences.size(); ++i) {
    CHECK(a.sequences[i].frames == b.sequences[i].frames);
    CHECK(a.sequences[i].label == b.sequences[i].label);
  }

  // zero noise: ramp emissions sit exactly on the ramp trajectory
  const Dataset ramp = gen_synthetic(SynthRegime::ordinal_ramp, 3, 9, 3, 0.0, 7);
  const Eigen::VectorXd dir = ramp.sequences[0].frames.row(4).transpose();  // apex
  for (const Sequence& s : ramp.sequences) {
    CHECK(s.label == 1);
    const int T = s.length();
    const double mid = (T - 1) / 2.0;
    for (int t = 0; t < T; ++t) {
      const double intensity = 1.0 - std::abs(t - mid) / mid;
      CHECK((s.frames.row(t).transpose() - intensity * dir).cwiseAbs().maxCoeff() <
            1e-12);
    }
  }

  const Dataset clusters = gen_synthetic(SynthRegime::nominal_clusters, 4, 10, 3, 0.0, 11);
  for (const Sequence& s : clusters.sequences) {
    CHECK(s.label == 1);
    REQUIRE(s.frame_labels.has_value());
    for (int t = 0; t < s.length(); ++t) {
      const int st = (*s.frame_labels)[t];
      CHECK(st >= 1);
      CHECK(st <= 3);
    }
  }
}

}  // TEST_SUITE
