#ifndef GAMFIT_FAMILIES_HPP
#define GAMFIT_FAMILIES_HPP

#include <Eigen/Dense>
#include <optional>
#include <string>

namespace gamfit {

enum class FamilyKind { gaussian, binomial, poisson, gamma, quasi_var_mu };
enum class LinkKind { identity, log, logit, inverse, sqrt };

// Link function g with derivatives up to third order. Third derivatives
// are needed by the curvature constants of the working-data expansion.
struct Link {
  LinkKind kind = LinkKind::identity;

  double eval(double mu) const;
  double inverse(double eta) const;
  double d1(double mu) const;
  double d2(double mu) const;
  double d3(double mu) const;
  bool valid_mu(double mu) const;
};

struct LinkDerivs {
  Eigen::VectorXd g, g1, g2, g3;
};

struct VarianceDerivs {
  Eigen::VectorXd v, v1, v2;
};

// Exponential-family / quasi-likelihood variance machinery. The quasi
// family implements var(y) proportional to mu (log link use only).
struct Family {
  FamilyKind kind = FamilyKind::gaussian;
  bool scale_known = false;
  double scale = 1.0;

  static Family gaussian(std::optional<double> known_scale = std::nullopt);
  static Family binomial();
  static Family poisson();
  static Family gamma(std::optional<double> known_scale = std::nullopt);
  static Family quasi_var_mu();

  double variance(double mu) const;
  double variance_d1(double mu) const;
  double variance_d2(double mu) const;

  // contribution of one datum to the deviance, prior weight included
  double dev_resid(double y, double mu, double omega) const;
  void check_support(const Eigen::VectorXd& y) const;
  double init_mu(double y) const;
  std::string name() const;
};

Family family_from_name(const std::string& name, std::optional<double> scale = std::nullopt);
Link link_from_name(const std::string& name);
std::string link_name(LinkKind kind);

// Open interval of valid means for a family/link pair, already shrunk by
// the clipping margin so derivative evaluations stay finite.
struct MuBounds {
  double lo, hi;
};
MuBounds mu_bounds(const Family& family, const Link& link);
Eigen::VectorXd clip_mu(const Family& family, const Link& link, const Eigen::VectorXd& mu);

// g, g', g'', g''' elementwise; throws std::domain_error off the valid range.
LinkDerivs link_eval(const Link& link, const Eigen::VectorXd& mu);

// V, V', V'' elementwise; throws std::domain_error off the valid range.
VarianceDerivs variance_eval(const Family& family, const Eigen::VectorXd& mu);

struct DevianceResult {
  double total;
  Eigen::VectorXd per_datum;
};
DevianceResult deviance(const Family& family, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& mu, const Eigen::VectorXd& omega);

// Gradient X'c of the deviance in the coefficients plus the diagonal e of
// its Hessian X'diag(e)X; c is returned as well since several downstream
// products want it directly.
struct DevianceBetaDerivs {
  Eigen::VectorXd grad;  // length q
  Eigen::VectorXd e;     // length n
  Eigen::VectorXd c;     // length n
};
DevianceBetaDerivs deviance_beta_derivs(const Family& family, const Link& link,
                                        const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                                        const Eigen::VectorXd& omega, const Eigen::MatrixXd& X);

// Pearson statistic through the working quantities: sum w_i^2 (z_i - eta_i)^2.
double pearson_stat(const Eigen::VectorXd& w, const Eigen::VectorXd& z,
                    const Eigen::VectorXd& eta);
// Direct form sum omega (y - mu)^2 / V(mu).
double pearson_stat(const Family& family, const Eigen::VectorXd& y,
                    const Eigen::VectorXd& mu, const Eigen::VectorXd& omega);

// Pointwise constants c1..c4 that drive the working-data derivative
// updates: dz/deta = c1, d2z/deta2 = c2, dw/deta = -c3 and
// d2w/deta2 = 3 (dw/deta)^2 / w - c4, all at the converged fit.
struct PointwiseConstants {
  Eigen::VectorXd c1, c2, c3, c4;
};
PointwiseConstants pointwise_constants(const Family& family, const Link& link,
                                       const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                                       const Eigen::VectorXd& w, const Eigen::VectorXd& omega);

}  // namespace gamfit

#endif
