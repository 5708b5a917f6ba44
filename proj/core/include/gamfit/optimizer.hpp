#ifndef GAMFIT_OPTIMIZER_HPP
#define GAMFIT_OPTIMIZER_HPP

#include <Eigen/Dense>
#include <vector>

#include "gamfit/criteria.hpp"

namespace gamfit {

struct OptimizerConfig {
  double grad_tol = 1e-6;        // scaled by (1 + |criterion|)
  int max_outer = 100;
  int max_half = 30;
  double rho_bound = 25.0;       // working infinity
  double drop_threshold = 1e-4;  // scaled by (1 + |criterion|)
  double max_step = 5.0;         // inf-norm cap on one Newton move
  CriterionKind criterion = CriterionKind::gcv;
  double gamma = 1.0;
  PirlsConfig pirls;
  DerivConfig derivs;
  Eigen::VectorXd rho_init;  // empty: use the curvature-balancing heuristic
};

struct OptCertificate {
  double grad_norm = 0.0;           // projected gradient, inf norm
  double min_hessian_eig = 0.0;     // over the active subspace
  std::vector<int> dropped;         // parameters held at working infinity
};

struct OptIterate {
  Eigen::VectorXd rho;
  double value = 0.0;
  double gacv_gap = 0.0;  // |direct - scale-form| when criterion is gacv
};

struct OptResult {
  Eigen::VectorXd rho_hat;
  PirlsState fitted;
  DerivativeBundle bundle;
  CriterionValue criterion;
  int outer_iterations = 0;
  bool converged = false;
  OptCertificate certificate;
  std::vector<OptIterate> trace;
  Eigen::VectorXd edf_terms;
  double edf_parametric = 0.0;
};

// Modified Newton direction: the Hessian eigenvalues are replaced by
// max(|eig|, floor), which makes g'step < 0 whenever g != 0. Inactive
// coordinates get a zero step.
Eigen::VectorXd newton_step(const Eigen::VectorXd& grad, const Eigen::MatrixXd& hess,
                            const std::vector<bool>& active);

// lambda_j0 = tr(X_j'X_j) / tr(S_j), balancing data and penalty curvature
Eigen::VectorXd initial_rho(const AssembledModel& model);

OptResult optimize(const AssembledModel& model, const OptimizerConfig& config = OptimizerConfig());

struct TermEdf {
  Eigen::VectorXd per_term;  // one entry per model term
  double parametric = 0.0;
};
// Partition of tr(A) over the coefficient blocks via diag(B W X).
TermEdf edf_per_term(const PirlsState& state, const AssembledModel& model);

// Criterion value at a fitted state, no derivatives required.
double criterion_value_at(const AssembledModel& model, const PirlsState& state,
                          CriterionKind kind, double gamma);

// Full criterion with gradient and Hessian from a derivative bundle.
CriterionValue eval_criterion(const DerivativeBundle& bundle, const PirlsState& state,
                              const AssembledModel& model, CriterionKind kind, double gamma);

}  // namespace gamfit

#endif
