#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracle.hpp"
#include "test_util.hpp"
#include "vslcrf/data.hpp"
#include "vslcrf/lbfgs.hpp"
#include "vslcrf/learning.hpp"
#include "vslcrf/metrics.hpp"
#include "vslcrf/packing.hpp"

using namespace vslcrf;

namespace {

Hyperparams quiet_hyper(double ln = 0.0, double lo = 0.0, double lp = 0.0) {
  Hyperparams h;
  h.lambda_n = ln;
  h.lambda_o = lo;
  h.lambda_p = lp;
  return h;
}

// True when, for every sequence and class, one branch beats the other by a
// clear margin, so the VSLm objective is differentiable around the point.
bool vslm_strict_winners(const std::vector<Sequence>& data, const Model& m, double margin) {
  for (const Sequence& s : data) {
    const Eigen::MatrixXd lz = oracle::branch_log_z(s, m);
    for (int k = 0; k < m.config.num_classes; ++k)
      if (std::abs(lz(k, 0) - lz(k, 1)) < margin) return false;
  }
  return true;
}

double train_accuracy(const std::vector<Sequence>& data, const Model& m) {
  std::vector<int> pred, truth;
  for (const Sequence& s : data) {
    pred.push_back(predict_sequence(s, m));
    truth.push_back(s.label);
  }
  return classification_rate(pred, truth);
}

}  // namespace

TEST_SUITE("learning") {

TEST_CASE("objective at a symmetric point is N log K") {
  Rng rng(61);
  for (Mode mode : {Mode::HCRF, Mode::HCORF, Mode::VSLm, Mode::VSLd, Mode::VSLem}) {
    ModelConfig config{3, 2, 2, EdgeFeatureMode::l1_distance, mode};
    Model m = testutil::random_model(config, rng);
    m.classes[1] = m.classes[0];
    m.classes[2] = m.classes[0];
    m.hyper = quiet_hyper();
    const auto data = testutil::random_data(5, 4, 2, 3, rng);
    // lambda_p = 0: regularizers off, pure data term
    CHECK(nll_objective(data, m) == doctest::Approx(5.0 * std::log(3.0)).epsilon(1e-12));
  }
}

TEST_CASE("K=1 leaves only the ridge penalties") {
  Rng rng(62);
  ModelConfig config{1, 3, 2, EdgeFeatureMode::l1_distance, Mode::VSLd};
  Model m = testutil::random_model(config, rng);
  m.hyper = quiet_hyper(0.3, 0.7, 0.0);
  const auto data = testutil::random_data(4, 3, 2, 1, rng);

  double norm_n = m.classes[0].nominal.beta.squaredNorm() +
                  m.classes[0].nominal_edge.u.squaredNorm();
  double norm_o = m.classes[0].ordinal.a.squaredNorm() + m.classes[0].ordinal.b1 * m.classes[0].ordinal.b1 +
                  m.classes[0].ordinal.gamma.squaredNorm() +
                  m.classes[0].ordinal.sigma0 * m.classes[0].ordinal.sigma0 +
                  m.classes[0].ordinal_edge.u.squaredNorm();
  CHECK(nll_objective(data, m) ==
        doctest::Approx(0.3 * norm_n + 0.7 * norm_o).epsilon(1e-12));
}

TEST_CASE("objective matches the enumeration oracle") {
  Rng rng(63);
  for (Mode mode : {Mode::HCRF, Mode::HCORF, Mode::VSLm, Mode::VSLd}) {
    ModelConfig config{2, 2, 2, EdgeFeatureMode::l1_distance, mode};
    Model m = testutil::random_model(config, rng);
    m.hyper = quiet_hyper();
    const auto data = testutil::random_data(4, 3, 2, 2, rng);
    double expected = 0.0;
    for (const Sequence& s : data)
      expected += -std::log(oracle::class_conditional(s, m)(s.label - 1));
    CHECK(nll_objective(data, m) == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  Rng rng(64);
  const double step = 1e-5;
  const double tol = 1e-4;
  for (Mode mode : {Mode::HCRF, Mode::HCORF, Mode::VSLm, Mode::VSLd, Mode::VSLem}) {
    for (int draw = 0; draw < 5; ++draw) {
      ModelConfig config{2, 3, 2, EdgeFeatureMode::l1_distance, mode};
      Model base = testutil::random_model(config, rng, 0.7);
      base.hyper = quiet_hyper(0.02, 0.03, uses_posterior_reg(mode) ? 0.05 : 0.0);
      auto data = testutil::random_data(4, 3, 2, 2, rng);
      if (mode == Mode::VSLm) {
        int guard = 0;
        while (!vslm_strict_winners(data, base, 1e-3) && guard++ < 20)
          base = testutil::random_model(config, rng, 0.7);
        REQUIRE(guard < 20);
      }

      std::vector<NuPosterior> q;
      if (mode == Mode::VSLem)
        for (std::size_t i = 0; i < data.size(); ++i) {
          const double p = 0.2 + 0.6 * rng.uniform01();
          q.push_back({p, 1.0 - p});
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
      CHECK(res.max_rel_error < tol);
    }
  }
}

TEST_CASE("ridge-only gradient is 2 lambda theta") {
  Rng rng(65);
  ModelConfig config{2, 3, 2, EdgeFeatureMode::l1_distance, Mode::VSLd};
  Model m = testutil::random_model(config, rng);
  m.hyper = quiet_hyper(0.4, 0.9, 0.0);
  const std::vector<Sequence> empty;
  const Eigen::VectorXd g = nll_gradient(empty, m);
  const Eigen::VectorXd x = pack_params(m);
  const ParamLayout layout = ParamLayout::make(config);
  for (int k = 0; k < 2; ++k) {
    const auto& nb = layout.block(k, Branch::nominal);
    for (int i = 0; i < nb.size; ++i)
      CHECK(g(nb.offset + i) == doctest::Approx(2.0 * 0.4 * x(nb.offset + i)).epsilon(1e-14));
    const auto& ob = layout.block(k, Branch::ordinal);
    for (int i = 0; i < ob.size; ++i)
      CHECK(g(ob.offset + i) == doctest::Approx(2.0 * 0.9 * x(ob.offset + i)).epsilon(1e-14));
  }
}

TEST_CASE("gradient blocks coincide across identical classes at a symmetric point") {
  Rng rng(66);
  ModelConfig config{2, 2, 2, EdgeFeatureMode::l1_distance, Mode::VSLd};
  Model m = testutil::random_model(config, rng);
  m.classes[1] = m.classes[0];
  m.hyper = quiet_hyper();
  // equal class counts so the data term is fully symmetric
  std::vector<Sequence> data;
  for (int i = 0; i < 4; ++i) {
    Sequence a = testutil::random_sequence(3, 2, rng, 1, "a" + std::to_string(i));
    Sequence b = a;
    b.label = 2;
    b.id = "b" + std::to_string(i);
    data.push_back(a);
    data.push_back(b);
  }
  const Eigen::VectorXd g = nll_gradient(data, m);
  const ParamLayout layout = ParamLayout::make(config);
  for (int b = 0; b < 2; ++b) {
    const auto& b0 = layout.blocks[b][0];
    const auto& b1 = layout.blocks[b][1];
    for (int i = 0; i < b0.size; ++i)
      CHECK(g(b0.offset + i) == doctest::Approx(g(b1.offset + i)).epsilon(1e-12));
  }
}

TEST_CASE("VSLm subgradient flows only through winning branches") {
  Rng rng(67);
  ModelConfig config{2, 2, 2, EdgeFeatureMode::l1_distance, Mode::VSLm};
  Model m = testutil::random_model(config, rng, 0.5);
  m.hyper = quiet_hyper();
  // positive self-transitions on the nominal branch, negative on the
  // ordinal: the nominal partition wins for every class and sequence
  for (auto& cp : m.classes) {
    cp.nominal_edge.u = 2.0 * Eigen::MatrixXd::Identity(2, 2);
    cp.ordinal_edge.u = -2.0 * Eigen::MatrixXd::Identity(2, 2);
  }
  const auto data = testutil::random_data(3, 4, 2, 2, rng);
  REQUIRE(vslm_strict_winners(data, m, 1e-3));
  for (const Sequence& s : data) {
    const Eigen::MatrixXd lz = oracle::branch_log_z(s, m);
    for (int k = 0; k < 2; ++k) REQUIRE(lz(k, 0) > lz(k, 1));
  }

  const Eigen::VectorXd g = vslm_subgradient(data, m);
  const ParamLayout layout = ParamLayout::make(config);
  for (int k = 0; k < 2; ++k) {
    const auto& ob = layout.block(k, Branch::ordinal);
    for (int i = 0; i < ob.size; ++i) CHECK(g(ob.offset + i) == 0.0);
  }

  // the winning-branch gradient equals the HCRF gradient of the same params
  Model h = m;
  h.config.mode = Mode::HCRF;
  const Eigen::VectorXd gh = nll_gradient(data, h);
  const ParamLayout hl = ParamLayout::make(h.config);
  for (int k = 0; k < 2; ++k) {
    const auto& nb = layout.block(k, Branch::nominal);
    const auto& hb = hl.block(k, Branch::nominal);
    for (int i = 0; i < nb.size; ++i)
      CHECK(g(nb.offset + i) == doctest::Approx(gh(hb.offset + i)).epsilon(1e-12));
  }
}

TEST_CASE("exact branch ties route the subgradient to the nominal branch") {
  Rng rng(68);
  ModelConfig config{2, 2, 2, EdgeFeatureMode::l1_distance, Mode::VSLm};
  Model m = testutil::random_model(config, rng, 0.5);
  m.hyper = quiet_hyper();
  // identical node tables on both branches (uniform rows over C=2) and zero
  // edge weights make the two branch partitions bitwise equal: an exact tie
  for (auto& cp : m.classes) {
    cp.nominal.beta.setZero();
    cp.ordinal.a.setZero();
    cp.ordinal.b1 = 0.0;
    cp.nominal_edge.u.setZero();
    cp.ordinal_edge.u.setZero();
  }
  const auto data = testutil::random_data(3, 4, 2, 2, rng);
  for (const Sequence& s : data) {
    const Eigen::MatrixXd lz = branch_log_z_matrix(s, m);
    for (int k = 0; k < 2; ++k) REQUIRE(lz(k, 0) == lz(k, 1));
  }
  const Eigen::VectorXd g = vslm_subgradient(data, m);
  const ParamLayout layout = ParamLayout::make(config);
  for (int k = 0; k < 2; ++k) {
    const auto& ob = layout.block(k, Branch::ordinal);
    for (int i = 0; i < ob.size; ++i) CHECK(g(ob.offset + i) == 0.0);
  }
}

TEST_CASE("HCRF mode equals a hand-rolled single-branch computation") {
  Rng rng(69);
  ModelConfig config{2, 3, 2, EdgeFeatureMode::l1_distance, Mode::HCRF};
  Model m = testutil::random_model(config, rng);
  m.hyper = quiet_hyper(0.1, 0.0, 0.0);
  const auto data = testutil::random_data(5, 4, 2, 2, rng);
  double hand = 0.0;
  for (const Sequence& s : data) {
    Eigen::VectorXd scores(2);
    for (int k = 0; k < 2; ++k)
      scores(k) = branch_log_partition(s, m.classes[k], Branch::nominal,
                                       config.edge_feature_mode, m.hyper.sigma_floor);
    hand += log_sum_exp(scores) - scores(s.label - 1);
  }
  for (const auto& cp : m.classes)
    hand += 0.1 * (cp.nominal.beta.squaredNorm() + cp.nominal_edge.u.squaredNorm());
  CHECK(nll_objective(data, m) == doctest::Approx(hand).epsilon(1e-12));
}

TEST_CASE("objective is invariant under permuting the training order") {
  Rng rng(70);
  ModelConfig config{2, 2, 2, EdgeFeatureMode::l1_distance, Mode::VSLd};
  Model m = testutil::random_model(config, rng);
  m.hyper = quiet_hyper(0.01, 0.01, 0.1);
  auto data = testutil::random_data(6, 3, 2, 2, rng);
  const double before = nll_objective(data, m);
  std::reverse(data.begin(), data.end());
  const double after = nll_objective(data, m);
  CHECK(std::abs(before - after) <= 1e-12 * std::max(1.0, std::abs(before)));
}

TEST_CASE("init_params honors the documented initialization") {
  ModelConfig config{2, 3, 4, EdgeFeatureMode::l1_distance, Mode::VSLem};
  Hyperparams h;
  h.seed = 123;
  const Model a = init_params(config, h, {});
  const Model b = init_params(config, h, {});
  CHECK(pack_full(a) == pack_full(b));  // seeded: reproducible

  for (const auto& cp : a.classes) {
    CHECK(cp.nominal_edge.u.cwiseAbs().maxCoeff() == 0.0);
    CHECK(cp.ordinal_edge.u.cwiseAbs().maxCoeff() == 0.0);
    CHECK(cp.nominal.beta.cwiseAbs().maxCoeff() <= 0.1);
    CHECK(cp.ordinal.sigma0 == 1.0);
    // C=3: gamma = 1/sqrt(3) so the thresholds are (-inf, 0, 1/3, +inf)
    const Eigen::VectorXd th = derive_thresholds(cp.ordinal, 3);
    CHECK(th(1) == 0.0);
    CHECK(th(2) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  }

  // zero edge weights at init: every edge potential vanishes
  Rng rng(71);
  const Sequence s = testutil::random_sequence(3, 4, rng);
  const EdgeLogTable e = build_edge_table(s, a.classes[0].nominal_edge,
                                          config.edge_feature_mode);
  for (const auto& slice : e.values) CHECK(slice.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fit reaches 100% training accuracy on separable data in every mode") {
  const Dataset data = gen_synthetic(SynthRegime::mixed, 14, 10, 3, 0.15, 5);
  for (Mode mode : {Mode::HCRF, Mode::HCORF, Mode::VSLm, Mode::VSLd, Mode::VSLem}) {
    ModelConfig config{2, 2, 3, EdgeFeatureMode::l1_distance, mode};
    Hyperparams h;
    h.lambda_n = 1e-3;
    h.lambda_o = 1e-3;
    h.lambda_p = uses_posterior_reg(mode) ? 1e-2 : 0.0;
    h.max_iters = mode == Mode::VSLm ? 150 : 80;
    h.em_max_rounds = 5;
    h.seed = 2;
    const TrainState state = fit(data.sequences, config, h);
    CHECK(!state.diverged);
    CHECK(train_accuracy(data.sequences, state.model) == doctest::Approx(1.0));
  }
}

TEST_CASE("fit rejects empty and inconsistent data") {
  ModelConfig config{2, 2, 3, EdgeFeatureMode::l1_distance, Mode::HCRF};
  Hyperparams h;
  CHECK_THROWS_AS(fit({}, config, h), std::invalid_argument);
  Rng rng(72);
  std::vector<Sequence> bad{testutil::random_sequence(3, 3, rng, 5)};
  CHECK_THROWS_AS(fit(bad, config, h), std::invalid_argument);
}

TEST_CASE("VSLem: monotone objective, normalized posteriors, determinism") {
  const Dataset data = gen_synthetic(SynthRegime::mixed, 16, 12, 3, 0.6, 9);
  ModelConfig config{2, 3, 3, EdgeFeatureMode::l1_distance, Mode::VSLem};
  Hyperparams h;
  h.max_iters = 60;
  h.em_max_rounds = 6;
  h.seed = 4;
  const TrainState state = fit(data.sequences, config, h);
  REQUIRE(state.objective_trace.size() >= 2);
  for (std::size_t i = 1; i < state.objective_trace.size(); ++i)
    CHECK(state.objective_trace[i] <= state.objective_trace[i - 1] + 1e-6);
  REQUIRE(!state.nu_trace.empty());
  for (const auto& round : state.nu_trace) {
    CHECK(round.size() == data.sequences.size());
    for (const NuPosterior& nu : round)
      CHECK(nu.p_nominal + nu.p_ordinal == doctest::Approx(1.0).epsilon(1e-12));
  }

  const TrainState again = fit(data.sequences, config, h);
  CHECK(pack_full(state.model) == pack_full(again.model));  // bit-identical
}

TEST_CASE("large lambda_p pulls same-class branch posteriors together") {
  const Dataset data = gen_synthetic(SynthRegime::mixed, 12, 10, 3, 0.7, 3);
  ModelConfig config{2, 2, 3, EdgeFeatureMode::l1_distance, Mode::VSLem};
  const auto run = [&](double lambda_p) {
    Hyperparams h;
    h.max_iters = 48;
    h.em_max_rounds = 8;
    h.lambda_p = lambda_p;
    h.seed = 6;
    return fit(data.sequences, config, h);
  };
  const auto disparity = [&](const std::vector<NuPosterior>& q) {
    double total = 0.0;
    for (int cls = 1; cls <= 2; ++cls) {
      double lo = 1.0, hi = 0.0;
      for (std::size_t i = 0; i < q.size(); ++i) {
        if (data.sequences[i].label != cls) continue;
        lo = std::min(lo, q[i].p_ordinal);
        hi = std::max(hi, q[i].p_ordinal);
      }
      total += hi - lo;
    }
    return total;
  };

  const TrainState reg = run(10.0);
  const TrainState unreg = run(0.0);
  REQUIRE(reg.nu_trace.size() >= 2);
  REQUIRE(unreg.nu_trace.size() >= 2);
  // the pull accumulates over rounds and dominates the unregularized run
  CHECK(disparity(reg.nu_trace.back()) < disparity(reg.nu_trace.front()));
  CHECK(disparity(reg.nu_trace.back()) < 0.5 * disparity(unreg.nu_trace.back()));
}

}  // TEST_SUITE
