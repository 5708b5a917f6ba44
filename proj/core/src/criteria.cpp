#include "gamfit/criteria.hpp"

#include <stdexcept>

#include "gamfit/errors.hpp"

namespace gamfit {

CriterionKind criterion_from_name(const std::string& name) {
  if (name == "aic") return CriterionKind::aic;
  if (name == "gcv") return CriterionKind::gcv;
  if (name == "gacv") return CriterionKind::gacv;
  throw config_error("unknown criterion: " + name);
}

std::string criterion_name(CriterionKind kind) {
  switch (kind) {
    case CriterionKind::aic: return "aic";
    case CriterionKind::gcv: return "gcv";
    case CriterionKind::gacv: return "gacv";
  }
  return "?";
}

double scale_estimate(double pearson_or_dev, double tau, double n) {
  if (tau >= n) throw std::domain_error("effective degrees of freedom reached the sample size");
  return pearson_or_dev / (n - tau);
}

CriterionValue eval_aic(const DerivativeBundle& b, double D, double tau, double gamma,
                        double phi) {
  CriterionValue out;
  out.kind = CriterionKind::aic;
  out.gamma = gamma;
  out.tau = tau;
  out.scale_estimate = phi;
  out.value = D + 2.0 * gamma * tau * phi;
  out.gradient = b.dD + 2.0 * gamma * phi * b.dtau;
  out.hessian = b.d2D + 2.0 * gamma * phi * b.d2tau;
  return out;
}

CriterionValue eval_gcv(const DerivativeBundle& b, double D, double tau, double gamma,
                        double n) {
  if (gamma * tau >= n) {
    throw std::domain_error("gcv denominator non-positive: model basis too large");
  }
  const double ng = n - gamma * tau;
  CriterionValue out;
  out.kind = CriterionKind::gcv;
  out.gamma = gamma;
  out.tau = tau;
  out.scale_estimate = D / ng;
  out.value = n * D / (ng * ng);
  const int M = static_cast<int>(b.dD.size());
  out.gradient.resize(M);
  out.hessian.resize(M, M);
  for (int k = 0; k < M; ++k) {
    out.gradient[k] = n * b.dD[k] / (ng * ng) + 2.0 * n * gamma * D * b.dtau[k] / (ng * ng * ng);
  }
  for (int k = 0; k < M; ++k) {
    for (int m = 0; m <= k; ++m) {
      const double v = n * b.d2D(k, m) / (ng * ng) +
                       2.0 * n * gamma *
                           (b.dD[k] * b.dtau[m] + b.dD[m] * b.dtau[k] + D * b.d2tau(k, m)) /
                           (ng * ng * ng) +
                       6.0 * n * gamma * gamma * D * b.dtau[k] * b.dtau[m] /
                           (ng * ng * ng * ng);
      out.hessian(k, m) = v;
      out.hessian(m, k) = v;
    }
  }
  return out;
}

CriterionValue eval_gacv(const DerivativeBundle& b, double D, double P, double tau,
                         double gamma, double n) {
  if (tau >= n) throw std::domain_error("gacv denominator non-positive");
  const double nt = n - tau;
  const double h = tau / nt;               // and dh/dtau = n/nt^2, d2h/dtau2 = 2n/nt^3
  CriterionValue out;
  out.kind = CriterionKind::gacv;
  out.gamma = gamma;
  out.tau = tau;
  out.scale_estimate = P / nt;
  out.value = D / n + (2.0 * gamma / n) * h * P;
  const int M = static_cast<int>(b.dD.size());
  Eigen::VectorXd dh(M);
  for (int k = 0; k < M; ++k) dh[k] = n * b.dtau[k] / (nt * nt);
  out.gradient.resize(M);
  out.hessian.resize(M, M);
  for (int k = 0; k < M; ++k) {
    out.gradient[k] = b.dD[k] / n + (2.0 * gamma / n) * (dh[k] * P + h * b.dP[k]);
  }
  for (int k = 0; k < M; ++k) {
    for (int m = 0; m <= k; ++m) {
      const double d2h = 2.0 * n * b.dtau[k] * b.dtau[m] / (nt * nt * nt) +
                         n * b.d2tau(k, m) / (nt * nt);
      const double v = b.d2D(k, m) / n +
                       (2.0 * gamma / n) *
                           (d2h * P + dh[k] * b.dP[m] + dh[m] * b.dP[k] + h * b.d2P(k, m));
      out.hessian(k, m) = v;
      out.hessian(m, k) = v;
    }
  }
  return out;
}

double gacv_value_via_scale(double D, double P, double tau, double gamma, double n) {
  return D / n + 2.0 * gamma * tau * scale_estimate(P, tau, n) / n;
}

double criterion_value(CriterionKind kind, double D, double P, double tau, double gamma,
                       double phi, double n) {
  switch (kind) {
    case CriterionKind::aic:
      return D + 2.0 * gamma * tau * phi;
    case CriterionKind::gcv: {
      if (gamma * tau >= n) throw std::domain_error("gcv denominator non-positive");
      const double ng = n - gamma * tau;
      return n * D / (ng * ng);
    }
    case CriterionKind::gacv:
      if (tau >= n) throw std::domain_error("gacv denominator non-positive");
      return D / n + (2.0 * gamma / n) * tau / (n - tau) * P;
  }
  return 0.0;
}

}  // namespace gamfit
