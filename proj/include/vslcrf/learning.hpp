#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "vslcrf/chain.hpp"
#include "vslcrf/laplacian.hpp"
#include "vslcrf/types.hpp"

namespace vslcrf {

struct TrainState {
  Model model;
  std::vector<double> objective_trace;
  // VSLem only: branch posteriors per training sequence, one entry per
  // completed EM round.
  std::vector<std::vector<NuPosterior>> nu_trace;
  bool converged = false;
  bool diverged = false;
  std::string stop_reason;
};

// Seeded initial model: beta and a ~ uniform(-0.1, 0.1), b1 = 0,
// gamma = 1/sqrt(C), sigma0 = 1, u = 0. Both branches are initialized
// regardless of mode; frozen branches keep these values.
Model init_params(const ModelConfig& config, const Hyperparams& hyper,
                  const std::vector<Sequence>& data);

// Regularized negative log-likelihood of the mode's class conditional:
//   sum_i -log P(y_i | x_i)  +  lambda_n ||theta_n||^2 + lambda_o ||theta_o||^2
// plus, for VSLd/VSLem, lambda_p (R_nominal + R_ordinal) over the branch
// posteriors of the data. Norms run over the branches the mode trains.
double nll_objective(const std::vector<Sequence>& data, const Model& model);

// Analytic gradient of nll_objective in pack_params layout. Valid for
// HCRF, HCORF and VSLd; a VSLem-mode model gets the same marginal gradient.
Eigen::VectorXd nll_gradient(const std::vector<Sequence>& data, const Model& model);

// Subgradient of the max-pooled VSLm objective: per sequence and class only
// the winning branch receives gradient; exact ties go to the nominal branch.
Eigen::VectorXd vslm_subgradient(const std::vector<Sequence>& data, const Model& model);

// M-step objective/gradient of VSLem: the data term weights each sequence's
// branch terms by q_i(nu); regularizers as in nll_objective.
double em_weighted_objective(const std::vector<Sequence>& data, const Model& model,
                             const std::vector<NuPosterior>& q);
Eigen::VectorXd em_weighted_gradient(const std::vector<Sequence>& data, const Model& model,
                                     const std::vector<NuPosterior>& q);

// Variational free energy monitored by the EM driver:
// em_weighted_objective(q) + sum_i sum_nu q log q. Minimized by the M-step
// in Omega and by the E-step in q; equals nll_objective when q is the
// current branch posterior.
double em_free_energy(const std::vector<Sequence>& data, const Model& model,
                      const std::vector<NuPosterior>& q);

// Train a model from scratch on `data` under the strategy in config.mode:
// L-BFGS for HCRF/HCORF/VSLd, diminishing-step subgradient descent for VSLm,
// alternating E/M rounds for VSLem (q initialized uniform 0.5/0.5).
TrainState fit(const std::vector<Sequence>& data, const ModelConfig& config,
               const Hyperparams& hyper);

}  // namespace vslcrf
