#include "vslcrf/learning.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "vslcrf/lbfgs.hpp"
#include "vslcrf/packing.hpp"
#include "vslcrf/rng.hpp"

namespace vslcrf {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<int> labels_of(const std::vector<Sequence>& data) {
  std::vector<int> labels;
  labels.reserve(data.size());
  for (const Sequence& s : data) labels.push_back(s.label);
  return labels;
}

// Everything the objective and gradient need from one (sequence, class,
// branch) triple: the log partition and, when requested, the expected
// score gradient E_{P(h|x)}[ds/dtheta] in the branch block layout
// (node parameters first, then the C*C edge parameters).
struct SeqEval {
  Eigen::MatrixXd log_z;                               // K x 2, -inf inactive
  std::vector<std::array<Eigen::VectorXd, 2>> expect;  // [K][branch]
};

Eigen::VectorXd nominal_expectation(const Sequence& seq, const ClassParams& cp,
                                    const ChainPosteriors& post, const Eigen::VectorXd& g,
                                    int C, int D) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(C * (D + 1) + C * C);
  const int T = seq.length();
  for (int t = 0; t < T; ++t) {
    const Eigen::VectorXd x = seq.frames.row(t).transpose();
    const Eigen::VectorXd logp = nominal_node_logprob(x, cp.nominal);
    for (int c = 0; c < C; ++c) {
      const double coef = post.node_marginals(t, c) - std::exp(logp(c));
      const int base = c * (D + 1);
      out(base) += coef;
      out.segment(base + 1, D) += coef * x;
    }
  }
  const int ubase = C * (D + 1);
  for (int t = 0; t + 1 < T; ++t)
    for (int c = 0; c < C; ++c)
      for (int l = 0; l < C; ++l)
        out(ubase + c * C + l) += post.edge_marginals[t](c, l) * g(t);
  return out;
}

Eigen::VectorXd ordinal_expectation(const Sequence& seq, const ClassParams& cp,
                                    const ChainPosteriors& post, const Eigen::VectorXd& g,
                                    int C, int D, double sigma_floor) {
  const int node_size = D + C;  // a, b1, gamma (C-2), sigma0
  Eigen::VectorXd out = Eigen::VectorXd::Zero(node_size + C * C);
  const OrdinalParams& p = cp.ordinal;
  const double sigma = effective_sigma(p, sigma_floor);
  const Eigen::VectorXd b = derive_thresholds(p, C);
  const int T = seq.length();

  const int idx_b1 = D;
  const int idx_gamma = D + 1;
  const int idx_sigma0 = D + 1 + (C - 2);

  for (int t = 0; t < T; ++t) {
    const Eigen::VectorXd x = seq.frames.row(t).transpose();
    const double proj = p.a.dot(x);
    for (int c = 1; c <= C; ++c) {
      const double mu = post.node_marginals(t, c - 1);
      if (mu == 0.0) continue;
      const double z_lo = (b(c - 1) - proj) / sigma;
      const double z_hi = (b(c) - proj) / sigma;
      const double prob = normal_bin_prob(z_lo, z_hi);
      if (prob <= kProbClamp) continue;  // clamped bin: zero subgradient
      const double inv = 1.0 / prob;
      const bool hi_finite = std::isfinite(z_hi);
      const bool lo_finite = std::isfinite(z_lo);
      const double pdf_hi = hi_finite ? normal_pdf(z_hi) : 0.0;
      const double pdf_lo = lo_finite ? normal_pdf(z_lo) : 0.0;

      // d log P / d proj, with dz/dproj = -1/sigma for both bounds.
      const double dproj = -(pdf_hi - pdf_lo) * inv / sigma;
      out.segment(0, D) += mu * dproj * x;

      // Finite thresholds b_j move with b1 one-for-one.
      const double db1 =
          ((hi_finite ? pdf_hi : 0.0) - (lo_finite ? pdf_lo : 0.0)) * inv / sigma;
      out(idx_b1) += mu * db1;

      // gamma_m enters every finite threshold b_j with j >= m+2 as gamma_m^2.
      for (int m = 0; m < C - 2; ++m) {
        double d = 0.0;
        if (hi_finite && c >= m + 2) d += pdf_hi;
        if (lo_finite && c - 1 >= m + 2) d -= pdf_lo;
        if (d != 0.0) out(idx_gamma + m) += mu * d * inv * 2.0 * p.gamma(m) / sigma;
      }

      // d log P / d sigma, with dz/dsigma = -z/sigma; chain sigma = sigma0^2 + floor.
      double dsigma = 0.0;
      if (hi_finite) dsigma += pdf_hi * (-z_hi / sigma);
      if (lo_finite) dsigma -= pdf_lo * (-z_lo / sigma);
      out(idx_sigma0) += mu * dsigma * inv * 2.0 * p.sigma0;
    }
  }

  for (int t = 0; t + 1 < T; ++t)
    for (int c = 0; c < C; ++c)
      for (int l = 0; l < C; ++l)
        out(node_size + c * C + l) += post.edge_marginals[t](c, l) * g(t);
  return out;
}

SeqEval evaluate_sequence(const Sequence& seq, const Model& model, bool with_expect) {
  const int K = model.config.num_classes;
  const int C = model.config.num_states;
  const int D = model.config.feature_dim;
  const auto act = active_branches(model.config.mode);
  const EdgeFeatureMode emode = model.config.edge_feature_mode;

  SeqEval eval;
  eval.log_z = Eigen::MatrixXd::Constant(K, 2, kNegInf);
  if (with_expect) eval.expect.resize(K);

  const Eigen::VectorXd g = edge_features(seq, emode);
  for (int k = 0; k < K; ++k) {
    for (int bi = 0; bi < 2; ++bi) {
      if (!act[bi]) continue;
      const Branch branch = static_cast<Branch>(bi);
      if (!with_expect) {
        eval.log_z(k, bi) = branch_log_partition(seq, model.classes[k], branch, emode,
                                                 model.hyper.sigma_floor);
        continue;
      }
      const ChainPosteriors post = branch_partition(seq, model.classes[k], branch, emode,
                                                    model.hyper.sigma_floor);
      eval.log_z(k, bi) = post.log_z;
      eval.expect[k][bi] =
          branch == Branch::nominal
              ? nominal_expectation(seq, model.classes[k], post, g, C, D)
              : ordinal_expectation(seq, model.classes[k], post, g, C, D,
                                    model.hyper.sigma_floor);
    }
  }
  return eval;
}

// -log of the mode's class conditional for one sequence given its branch
// log partitions; VSLem with weights uses the q-weighted joint instead.
double data_term(const Eigen::MatrixXd& log_z, int label, Mode mode, const NuPosterior* q) {
  const Eigen::VectorXd scores = class_scores(log_z, mode);
  const double lse = log_sum_exp(scores);
  if (q != nullptr) {
    return lse - q->p_nominal * log_z(label - 1, 0) - q->p_ordinal * log_z(label - 1, 1);
  }
  return lse - scores(label - 1);
}

double squared_norm_penalty(const Eigen::VectorXd& x, const ParamLayout& layout,
                            const Hyperparams& hyper) {
  double reg = 0.0;
  for (int k = 0; k < layout.num_classes; ++k) {
    const auto& nb = layout.block(k, Branch::nominal);
    if (nb.size > 0) reg += hyper.lambda_n * x.segment(nb.offset, nb.size).squaredNorm();
    const auto& ob = layout.block(k, Branch::ordinal);
    if (ob.size > 0) reg += hyper.lambda_o * x.segment(ob.offset, ob.size).squaredNorm();
  }
  return reg;
}

// Branch posterior of the clamped class, f = P(nu = nominal | y, x).
double nominal_branch_posterior(const Eigen::MatrixXd& log_z, int label) {
  const double d = log_z(label - 1, 1) - log_z(label - 1, 0);
  return d > 0 ? std::exp(-d) / (1.0 + std::exp(-d)) : 1.0 / (1.0 + std::exp(d));
}

double objective_impl(const std::vector<Sequence>& data, const Model& model,
                      const LaplacianGraph* graph, const std::vector<NuPosterior>* q) {
  const Mode mode = model.config.mode;
  double obj = 0.0;
  Eigen::VectorXd f(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const SeqEval eval = evaluate_sequence(data[i], model, false);
    obj += data_term(eval.log_z, data[i].label, mode, q ? &(*q)[i] : nullptr);
    if (graph != nullptr) f(i) = nominal_branch_posterior(eval.log_z, data[i].label);
  }
  const ParamLayout layout = ParamLayout::make(model.config);
  obj += squared_norm_penalty(pack_params(model), layout, model.hyper);
  if (graph != nullptr) {
    // R_nominal + R_ordinal; the two coincide because f_ordinal = 1 - f_nominal.
    obj += model.hyper.lambda_p *
           (posterior_reg(f, *graph) +
            posterior_reg(Eigen::VectorXd(Eigen::VectorXd::Ones(f.size()) - f), *graph));
  }
  return obj;
}

Eigen::VectorXd gradient_impl(const std::vector<Sequence>& data, const Model& model,
                              const LaplacianGraph* graph, const std::vector<NuPosterior>* q) {
  const Mode mode = model.config.mode;
  const int K = model.config.num_classes;
  const auto act = active_branches(mode);
  const ParamLayout layout = ParamLayout::make(model.config);

  std::vector<SeqEval> evals;
  evals.reserve(data.size());
  Eigen::VectorXd f(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    evals.push_back(evaluate_sequence(data[i], model, true));
    if (graph != nullptr) f(i) = nominal_branch_posterior(evals[i].log_z, data[i].label);
  }
  Eigen::VectorXd lf;
  if (graph != nullptr) lf = laplacian_apply(*graph, f);

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(layout.total);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const SeqEval& eval = evals[i];
    const int y = data[i].label;
    const Eigen::VectorXd scores = class_scores(eval.log_z, mode);
    const double lse = log_sum_exp(scores);
    const Eigen::VectorXd probs = (scores.array() - lse).exp();

    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(K, 2);
    switch (mode) {
      case Mode::HCRF:
        for (int k = 0; k < K; ++k) w(k, 0) = probs(k) - (k == y - 1 ? 1.0 : 0.0);
        break;
      case Mode::HCORF:
        for (int k = 0; k < K; ++k) w(k, 1) = probs(k) - (k == y - 1 ? 1.0 : 0.0);
        break;
      case Mode::VSLm:
        for (int k = 0; k < K; ++k) {
          const int winner = eval.log_z(k, 0) >= eval.log_z(k, 1) ? 0 : 1;
          w(k, winner) = probs(k) - (k == y - 1 ? 1.0 : 0.0);
        }
        break;
      case Mode::VSLd:
      case Mode::VSLem:
        for (int k = 0; k < K; ++k) {
          const double lse_k = log_add(eval.log_z(k, 0), eval.log_z(k, 1));
          for (int bi = 0; bi < 2; ++bi) {
            const double r = std::exp(eval.log_z(k, bi) - lse_k);
            const double target =
                (k == y - 1)
                    ? (q != nullptr ? (bi == 0 ? (*q)[i].p_nominal : (*q)[i].p_ordinal)
                                    : (bi == 0 ? nominal_branch_posterior(eval.log_z, y)
                                               : 1.0 - nominal_branch_posterior(eval.log_z, y)))
                    : 0.0;
            w(k, bi) = probs(k) * r - target;
          }
        }
        break;
    }

    if (graph != nullptr) {
      // d/dOmega of lambda_p (R_n + R_o) = 4 lambda_p (Lf)_i f_i (1-f_i)
      // through the clamped class's two branch partitions.
      const double c = model.hyper.lambda_p * 4.0 * lf(i) * f(i) * (1.0 - f(i));
      w(y - 1, 0) += c;
      w(y - 1, 1) -= c;
    }

    for (int k = 0; k < K; ++k)
      for (int bi = 0; bi < 2; ++bi) {
        if (!act[bi] || w(k, bi) == 0.0) continue;
        const ParamLayout::Block& blk = layout.block(k, static_cast<Branch>(bi));
        grad.segment(blk.offset, blk.size) += w(k, bi) * eval.expect[k][bi];
      }
  }

  const Eigen::VectorXd x = pack_params(model);
  for (int k = 0; k < K; ++k) {
    const auto& nb = layout.block(k, Branch::nominal);
    if (nb.size > 0)
      grad.segment(nb.offset, nb.size) +=
          2.0 * model.hyper.lambda_n * x.segment(nb.offset, nb.size);
    const auto& ob = layout.block(k, Branch::ordinal);
    if (ob.size > 0)
      grad.segment(ob.offset, ob.size) +=
          2.0 * model.hyper.lambda_o * x.segment(ob.offset, ob.size);
  }
  return grad;
}

const LaplacianGraph* maybe_graph(const Model& model, const std::vector<Sequence>& data,
                                  LaplacianGraph& storage) {
  if (data.empty()) return nullptr;
  if (!uses_posterior_reg(model.config.mode) || model.hyper.lambda_p == 0.0) return nullptr;
  storage = build_laplacian(labels_of(data));
  return &storage;
}

}  // namespace

Model init_params(const ModelConfig& config, const Hyperparams& hyper,
                  const std::vector<Sequence>& data) {
  validate(config);
  if (!data.empty() && data.front().frames.cols() != config.feature_dim)
    throw std::invalid_argument("init_params: data feature dimension mismatch");
  const int C = config.num_states;
  const int D = config.feature_dim;
  Rng rng(hyper.seed);
  Model model;
  model.config = config;
  model.hyper = hyper;
  model.classes.resize(config.num_classes);
  for (ClassParams& cp : model.classes) {
    cp.nominal.beta.resize(C, D + 1);
    for (int r = 0; r < C; ++r)
      for (int c = 0; c <= D; ++c) cp.nominal.beta(r, c) = rng.uniform(-0.1, 0.1);
    cp.ordinal.a.resize(D);
    for (int d = 0; d < D; ++d) cp.ordinal.a(d) = rng.uniform(-0.1, 0.1);
    cp.ordinal.b1 = 0.0;
    cp.ordinal.gamma = Eigen::VectorXd::Constant(C - 2, 1.0 / std::sqrt(double(C)));
    cp.ordinal.sigma0 = 1.0;
    cp.nominal_edge.u = Eigen::MatrixXd::Zero(C, C);
    cp.ordinal_edge.u = Eigen::MatrixXd::Zero(C, C);
  }
  return model;
}

double nll_objective(const std::vector<Sequence>& data, const Model& model) {
  LaplacianGraph storage;
  return objective_impl(data, model, maybe_graph(model, data, storage), nullptr);
}

Eigen::VectorXd nll_gradient(const std::vector<Sequence>& data, const Model& model) {
  if (model.config.mode == Mode::VSLm)
    throw std::invalid_argument("nll_gradient: use vslm_subgradient for VSLm");
  LaplacianGraph storage;
  return gradient_impl(data, model, maybe_graph(model, data, storage), nullptr);
}

Eigen::VectorXd vslm_subgradient(const std::vector<Sequence>& data, const Model& model) {
  if (model.config.mode != Mode::VSLm)
    throw std::invalid_argument("vslm_subgradient: model mode must be VSLm");
  return gradient_impl(data, model, nullptr, nullptr);
}

double em_weighted_objective(const std::vector<Sequence>& data, const Model& model,
                             const std::vector<NuPosterior>& q) {
  if (q.size() != data.size())
    throw std::invalid_argument("em_weighted_objective: q size mismatch");
  LaplacianGraph storage;
  return objective_impl(data, model, maybe_graph(model, data, storage), &q);
}

Eigen::VectorXd em_weighted_gradient(const std::vector<Sequence>& data, const Model& model,
                                     const std::vector<NuPosterior>& q) {
  if (q.size() != data.size())
    throw std::invalid_argument("em_weighted_gradient: q size mismatch");
  LaplacianGraph storage;
  return gradient_impl(data, model, maybe_graph(model, data, storage), &q);
}

double em_free_energy(const std::vector<Sequence>& data, const Model& model,
                      const std::vector<NuPosterior>& q) {
  double entropy_term = 0.0;
  for (const NuPosterior& nu : q) {
    if (nu.p_nominal > 0) entropy_term += nu.p_nominal * std::log(nu.p_nominal);
    if (nu.p_ordinal > 0) entropy_term += nu.p_ordinal * std::log(nu.p_ordinal);
  }
  return em_weighted_objective(data, model, q) + entropy_term;
}

TrainState fit(const std::vector<Sequence>& data, const ModelConfig& config,
               const Hyperparams& hyper) {
  validate(config);
  if (data.empty()) throw std::invalid_argument("fit: empty data");
  for (const Sequence& seq : data)
    validate_sequence(seq, config.feature_dim, config.num_classes);

  TrainState state;
  state.model = init_params(config, hyper, data);

  LaplacianGraph storage;
  const LaplacianGraph* graph = maybe_graph(state.model, data, storage);

  const auto pack = [&]() { return pack_params(state.model); };
  const auto objective = [&](const Eigen::VectorXd& x) {
    return objective_impl(data, unpack_params(state.model, x), graph, nullptr);
  };

  switch (config.mode) {
    case Mode::HCRF:
    case Mode::HCORF:
    case Mode::VSLd: {
      const auto gradient = [&](const Eigen::VectorXd& x) {
        return gradient_impl(data, unpack_params(state.model, x), graph, nullptr);
      };
      LbfgsConfig lc;
      lc.max_iters = hyper.max_iters;
      lc.grad_tol = hyper.grad_tol;
      const MinimizeResult res = minimize(objective, gradient, pack(), lc);
      state.model = unpack_params(state.model, res.x);
      state.objective_trace = res.trace;
      state.converged = res.converged;
      state.diverged = res.diverged;
      state.stop_reason = res.stop_reason;
      break;
    }
    case Mode::VSLm: {
      Eigen::VectorXd x = pack();
      double best_obj = objective(x);
      Eigen::VectorXd best_x = x;
      state.objective_trace.push_back(best_obj);
      state.stop_reason = "max_iters";
      for (int t = 1; t <= hyper.max_iters; ++t) {
        const Eigen::VectorXd g =
            gradient_impl(data, unpack_params(state.model, x), nullptr, nullptr);
        if (g.cwiseAbs().maxCoeff() < hyper.grad_tol) {
          state.converged = true;
          state.stop_reason = "grad_tol";
          break;
        }
        x -= (kVslmStepScale / std::sqrt(double(t))) * g;
        const double obj = objective(x);
        state.objective_trace.push_back(obj);
        if (!std::isfinite(obj)) {
          state.diverged = true;
          state.stop_reason = "diverged";
          break;
        }
        if (obj < best_obj) {
          best_obj = obj;
          best_x = x;
        }
      }
      state.model = unpack_params(state.model, best_x);
      break;
    }
    case Mode::VSLem: {
      std::vector<NuPosterior> q(data.size(), NuPosterior{kNuInitUniform, kNuInitUniform});
      state.objective_trace.push_back(em_free_energy(data, state.model, q));
      const int rounds = std::max(1, hyper.em_max_rounds);
      LbfgsConfig lc;
      lc.max_iters = std::max(1, hyper.max_iters / rounds);
      lc.grad_tol = hyper.grad_tol;
      state.stop_reason = "em_max_rounds";
      for (int round = 1; round <= rounds; ++round) {
        const auto m_obj = [&](const Eigen::VectorXd& x) {
          return objective_impl(data, unpack_params(state.model, x), graph, &q);
        };
        const auto m_grad = [&](const Eigen::VectorXd& x) {
          return gradient_impl(data, unpack_params(state.model, x), graph, &q);
        };
        const MinimizeResult res = minimize(m_obj, m_grad, pack(), lc);
        state.model = unpack_params(state.model, res.x);
        if (res.diverged) {
          state.diverged = true;
          state.stop_reason = "diverged";
          break;
        }
        for (std::size_t i = 0; i < data.size(); ++i)
          q[i] = nu_posterior(data[i], data[i].label, state.model);
        state.nu_trace.push_back(q);
        state.objective_trace.push_back(em_free_energy(data, state.model, q));
        const std::size_t n = state.objective_trace.size();
        if (std::abs(state.objective_trace[n - 1] - state.objective_trace[n - 2]) <
            hyper.em_obj_tol) {
          state.converged = true;
          state.stop_reason = "em_obj_tol";
          break;
        }
      }
      break;
    }
  }
  return state;
}

}  // namespace vslcrf
