#ifndef GAMFIT_PIRLS_HPP
#define GAMFIT_PIRLS_HPP

#include <Eigen/Dense>
#include <vector>

#include "gamfit/decomp.hpp"
#include "gamfit/smooths.hpp"

namespace gamfit {

struct PirlsConfig {
  double dev_tol = 1e-9;        // relative change in penalized deviance
  double beta_tol = 1e-7;       // max relative coefficient change
  int max_iter = 200;
  int max_halvings = 30;
  double cond_limit = default_cond_limit();
  DecompMethod method = DecompMethod::qr;
  double rho_bound = 25.0;      // log smoothing parameters clamp to +-this
};

// Converged inner-loop state at fixed log smoothing parameters.
// beta satisfies beta = P K' z' for the final decomposition, with
// z' = W (z - offset).
struct PirlsState {
  Eigen::VectorXd beta;
  Eigen::VectorXd eta, mu;
  Eigen::VectorXd w, z, zprime;
  double deviance = 0.0;
  double penalized_deviance = 0.0;
  int iterations = 0;
  int halvings = 0;
  bool converged = false;
  WorkingDecomposition decomp;
  Eigen::VectorXd lambda;
  std::vector<double> dp_trace;  // accepted penalized deviances, oldest first
};

Eigen::VectorXd initialize_mu(const Family& family, const Eigen::VectorXd& y);

Eigen::VectorXd clamp_rho(const Eigen::VectorXd& rho, double bound);

// Penalized IRLS at fixed rho. Throws convergence_error after max_iter
// or when step halving cannot restore a finite, non-increasing penalized
// deviance. warm_beta, when given, replaces the mean initialization.
PirlsState pirls_fit(const AssembledModel& model, const Eigen::VectorXd& rho,
                     const PirlsConfig& config = PirlsConfig(),
                     const Eigen::VectorXd* warm_beta = nullptr);

}  // namespace gamfit

#endif
