#ifndef GAMFIT_CRITERIA_HPP
#define GAMFIT_CRITERIA_HPP

#include <Eigen/Dense>
#include <string>

#include "gamfit/derivs.hpp"

namespace gamfit {

enum class CriterionKind { aic, gcv, gacv };

CriterionKind criterion_from_name(const std::string& name);
std::string criterion_name(CriterionKind kind);

struct CriterionValue {
  CriterionKind kind = CriterionKind::gcv;
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
  double gamma = 1.0;
  double tau = 0.0;
  double scale_estimate = 0.0;
};

// phi_hat = P / (n - tau), or D / (n - tau) with the deviance variant.
double scale_estimate(double pearson_or_dev, double tau, double n);

// AIC on the deviance scale: D + 2 gamma tau phi (phi = 1 recovers the
// familiar form for binomial/poisson).
CriterionValue eval_aic(const DerivativeBundle& b, double D, double tau, double gamma,
                        double phi);

// GCV: n D / (n - gamma tau)^2.
CriterionValue eval_gcv(const DerivativeBundle& b, double D, double tau, double gamma,
                        double n);

// GACV: D/n + (2 gamma / n) * tau/(n - tau) * P.
CriterionValue eval_gacv(const DerivativeBundle& b, double D, double P, double tau,
                         double gamma, double n);

// the equivalent AIC-form evaluation D/n + 2 gamma tau phi_hat / n with
// phi_hat = P/(n - tau); used to cross-check eval_gacv
double gacv_value_via_scale(double D, double P, double tau, double gamma, double n);

// value-only evaluation for trial points (no derivative bundle needed)
double criterion_value(CriterionKind kind, double D, double P, double tau, double gamma,
                       double phi, double n);

}  // namespace gamfit

#endif
