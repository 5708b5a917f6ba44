#include "gamfit/families.hpp"

#include <cmath>
#include <stdexcept>

#include "gamfit/errors.hpp"

namespace gamfit {

namespace {

constexpr double kMuEps = 1e-8;   // clipping margin at range boundaries
constexpr double kMuBig = 1e8;    // overflow guard for log-type links

double xlogy(double x, double y) { return x == 0.0 ? 0.0 : x * std::log(y); }

void require(bool ok, const char* msg) {
  if (!ok) throw std::domain_error(msg);
}

}  // namespace

double Link::eval(double mu) const {
  switch (kind) {
    case LinkKind::identity: return mu;
    case LinkKind::log: return std::log(mu);
    case LinkKind::logit: return std::log(mu / (1.0 - mu));
    case LinkKind::inverse: return 1.0 / mu;
    case LinkKind::sqrt: return std::sqrt(mu);
  }
  return mu;
}

double Link::inverse(double eta) const {
  switch (kind) {
    case LinkKind::identity: return eta;
    case LinkKind::log: return std::exp(eta);
    case LinkKind::logit: return 1.0 / (1.0 + std::exp(-eta));
    case LinkKind::inverse: return 1.0 / eta;
    case LinkKind::sqrt: return eta * eta;
  }
  return eta;
}

double Link::d1(double mu) const {
  switch (kind) {
    case LinkKind::identity: return 1.0;
    case LinkKind::log: return 1.0 / mu;
    case LinkKind::logit: return 1.0 / (mu * (1.0 - mu));
    case LinkKind::inverse: return -1.0 / (mu * mu);
    case LinkKind::sqrt: return 0.5 / std::sqrt(mu);
  }
  return 1.0;
}

double Link::d2(double mu) const {
  switch (kind) {
    case LinkKind::identity: return 0.0;
    case LinkKind::log: return -1.0 / (mu * mu);
    case LinkKind::logit: {
      const double u = mu * (1.0 - mu);
      return (2.0 * mu - 1.0) / (u * u);
    }
    case LinkKind::inverse: return 2.0 / (mu * mu * mu);
    case LinkKind::sqrt: return -0.25 * std::pow(mu, -1.5);
  }
  return 0.0;
}

double Link::d3(double mu) const {
  switch (kind) {
    case LinkKind::identity: return 0.0;
    case LinkKind::log: return 2.0 / (mu * mu * mu);
    case LinkKind::logit: {
      const double u = mu * (1.0 - mu);
      const double s = 1.0 - 2.0 * mu;
      return 2.0 / (u * u) + 2.0 * s * s / (u * u * u);
    }
    case LinkKind::inverse: return -6.0 / (mu * mu * mu * mu);
    case LinkKind::sqrt: return 0.375 * std::pow(mu, -2.5);
  }
  return 0.0;
}

bool Link::valid_mu(double mu) const {
  switch (kind) {
    case LinkKind::identity: return std::isfinite(mu);
    case LinkKind::log: return mu > 0.0;
    case LinkKind::logit: return mu > 0.0 && mu < 1.0;
    case LinkKind::inverse: return mu != 0.0;
    case LinkKind::sqrt: return mu > 0.0;
  }
  return true;
}

Family Family::gaussian(std::optional<double> known_scale) {
  Family f;
  f.kind = FamilyKind::gaussian;
  f.scale_known = known_scale.has_value();
  f.scale = known_scale.value_or(1.0);
  return f;
}

Family Family::binomial() {
  Family f;
  f.kind = FamilyKind::binomial;
  f.scale_known = true;
  f.scale = 1.0;
  return f;
}

Family Family::poisson() {
  Family f;
  f.kind = FamilyKind::poisson;
  f.scale_known = true;
  f.scale = 1.0;
  return f;
}

Family Family::gamma(std::optional<double> known_scale) {
  Family f;
  f.kind = FamilyKind::gamma;
  f.scale_known = known_scale.has_value();
  f.scale = known_scale.value_or(1.0);
  return f;
}

Family Family::quasi_var_mu() {
  Family f;
  f.kind = FamilyKind::quasi_var_mu;
  f.scale_known = false;
  f.scale = 1.0;
  return f;
}

double Family::variance(double mu) const {
  switch (kind) {
    case FamilyKind::gaussian: return 1.0;
    case FamilyKind::binomial: return mu * (1.0 - mu);
    case FamilyKind::poisson: return mu;
    case FamilyKind::gamma: return mu * mu;
    case FamilyKind::quasi_var_mu: return mu;
  }
  return 1.0;
}

double Family::variance_d1(double mu) const {
  switch (kind) {
    case FamilyKind::gaussian: return 0.0;
    case FamilyKind::binomial: return 1.0 - 2.0 * mu;
    case FamilyKind::poisson: return 1.0;
    case FamilyKind::gamma: return 2.0 * mu;
    case FamilyKind::quasi_var_mu: return 1.0;
  }
  return 0.0;
}

double Family::variance_d2(double mu) const {
  switch (kind) {
    case FamilyKind::gaussian: return 0.0;
    case FamilyKind::binomial: return -2.0;
    case FamilyKind::poisson: return 0.0;
    case FamilyKind::gamma: return 2.0;
    case FamilyKind::quasi_var_mu: return 0.0;
  }
  return 0.0;
}

double Family::dev_resid(double y, double mu, double omega) const {
  switch (kind) {
    case FamilyKind::gaussian: {
      const double r = y - mu;
      return omega * r * r;
    }
    case FamilyKind::binomial:
      return 2.0 * omega * (xlogy(y, y / mu) + xlogy(1.0 - y, (1.0 - y) / (1.0 - mu)));
    case FamilyKind::poisson:
    case FamilyKind::quasi_var_mu:
      return 2.0 * omega * (xlogy(y, y / mu) - (y - mu));
    case FamilyKind::gamma:
      return 2.0 * omega * (-std::log(y / mu) + (y - mu) / mu);
  }
  return 0.0;
}

void Family::check_support(const Eigen::VectorXd& y) const {
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double v = y[i];
    require(std::isfinite(v), "non-finite response value");
    switch (kind) {
      case FamilyKind::gaussian: break;
      case FamilyKind::binomial: require(v >= 0.0 && v <= 1.0, "binomial response outside [0,1]"); break;
      case FamilyKind::poisson: require(v >= 0.0, "negative poisson response"); break;
      case FamilyKind::gamma: require(v > 0.0, "non-positive gamma response"); break;
      case FamilyKind::quasi_var_mu: require(v >= 0.0, "negative response for variance proportional to mean"); break;
    }
  }
}

double Family::init_mu(double y) const {
  switch (kind) {
    case FamilyKind::gaussian: return y;
    case FamilyKind::binomial: return (y + 0.5) / 2.0;
    case FamilyKind::poisson:
    case FamilyKind::quasi_var_mu: return std::max(y, 0.1);
    case FamilyKind::gamma: return y;
  }
  return y;
}

std::string Family::name() const {
  switch (kind) {
    case FamilyKind::gaussian: return "gaussian";
    case FamilyKind::binomial: return "binomial";
    case FamilyKind::poisson: return "poisson";
    case FamilyKind::gamma: return "gamma";
    case FamilyKind::quasi_var_mu: return "quasi";
  }
  return "?";
}

Family family_from_name(const std::string& name, std::optional<double> scale) {
  if (name == "gaussian") return Family::gaussian(scale);
  if (name == "binomial") return Family::binomial();
  if (name == "poisson") return Family::poisson();
  if (name == "gamma") return Family::gamma(scale);
  if (name == "quasi") return Family::quasi_var_mu();
  throw config_error("unknown family: " + name);
}

Link link_from_name(const std::string& name) {
  Link l;
  if (name == "identity") l.kind = LinkKind::identity;
  else if (name == "log") l.kind = LinkKind::log;
  else if (name == "logit") l.kind = LinkKind::logit;
  else if (name == "inverse") l.kind = LinkKind::inverse;
  else if (name == "sqrt") l.kind = LinkKind::sqrt;
  else throw config_error("unknown link: " + name);
  return l;
}

std::string link_name(LinkKind kind) {
  switch (kind) {
    case LinkKind::identity: return "identity";
    case LinkKind::log: return "log";
    case LinkKind::logit: return "logit";
    case LinkKind::inverse: return "inverse";
    case LinkKind::sqrt: return "sqrt";
  }
  return "?";
}

MuBounds mu_bounds(const Family& family, const Link& link) {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  const bool positive = family.kind == FamilyKind::poisson || family.kind == FamilyKind::gamma ||
                        family.kind == FamilyKind::quasi_var_mu || link.kind == LinkKind::log ||
                        link.kind == LinkKind::sqrt || link.kind == LinkKind::inverse;
  if (positive) {
    lo = kMuEps;
    hi = kMuBig;
  }
  if (family.kind == FamilyKind::binomial || link.kind == LinkKind::logit) {
    lo = kMuEps;
    hi = 1.0 - kMuEps;
  }
  return {lo, hi};
}

Eigen::VectorXd clip_mu(const Family& family, const Link& link, const Eigen::VectorXd& mu) {
  const MuBounds b = mu_bounds(family, link);
  return mu.array().max(b.lo).min(b.hi).matrix();
}

LinkDerivs link_eval(const Link& link, const Eigen::VectorXd& mu) {
  LinkDerivs out;
  const Eigen::Index n = mu.size();
  out.g.resize(n);
  out.g1.resize(n);
  out.g2.resize(n);
  out.g3.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    require(link.valid_mu(mu[i]), "mean outside the link's valid range");
    out.g[i] = link.eval(mu[i]);
    out.g1[i] = link.d1(mu[i]);
    out.g2[i] = link.d2(mu[i]);
    out.g3[i] = link.d3(mu[i]);
  }
  return out;
}

VarianceDerivs variance_eval(const Family& family, const Eigen::VectorXd& mu) {
  VarianceDerivs out;
  const Eigen::Index n = mu.size();
  out.v.resize(n);
  out.v1.resize(n);
  out.v2.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = family.variance(mu[i]);
    require(std::isfinite(v) && v > 0.0, "non-positive variance function value");
    out.v[i] = v;
    out.v1[i] = family.variance_d1(mu[i]);
    out.v2[i] = family.variance_d2(mu[i]);
  }
  return out;
}

DevianceResult deviance(const Family& family, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& mu, const Eigen::VectorXd& omega) {
  if (y.size() != mu.size() || y.size() != omega.size()) {
    throw std::invalid_argument("deviance: length mismatch");
  }
  family.check_support(y);
  DevianceResult out;
  out.per_datum.resize(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    require(omega[i] >= 0.0, "negative prior weight");
    if (omega[i] == 0.0) {
      out.per_datum[i] = 0.0;
      continue;
    }
    require(family.variance(mu[i]) > 0.0, "mean outside the family's valid range");
    out.per_datum[i] = family.dev_resid(y[i], mu[i], omega[i]);
  }
  out.total = out.per_datum.sum();
  return out;
}

DevianceBetaDerivs deviance_beta_derivs(const Family& family, const Link& link,
                                        const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                                        const Eigen::VectorXd& omega, const Eigen::MatrixXd& X) {
  const Eigen::Index n = y.size();
  DevianceBetaDerivs out;
  out.c.resize(n);
  out.e.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (omega[i] == 0.0) {
      out.c[i] = 0.0;
      out.e[i] = 0.0;
      continue;
    }
    const double v = family.variance(mu[i]);
    const double v1 = family.variance_d1(mu[i]);
    const double g1 = link.d1(mu[i]);
    const double g2 = link.d2(mu[i]);
    require(v > 0.0 && g1 != 0.0, "mean outside the valid range");
    const double r = y[i] - mu[i];
    out.c[i] = -2.0 * omega[i] * r / (v * g1);
    out.e[i] = 2.0 * omega[i] *
               (1.0 / (v * g1 * g1) + r * (v1 * g1 + v * g2) / (v * v * g1 * g1 * g1));
  }
  out.grad = X.transpose() * out.c;
  return out;
}

double pearson_stat(const Eigen::VectorXd& w, const Eigen::VectorXd& z,
                    const Eigen::VectorXd& eta) {
  if (w.size() != z.size() || w.size() != eta.size()) {
    throw std::invalid_argument("pearson_stat: length mismatch");
  }
  return (w.array() * (z - eta).array()).square().sum();
}

double pearson_stat(const Family& family, const Eigen::VectorXd& y,
                    const Eigen::VectorXd& mu, const Eigen::VectorXd& omega) {
  double p = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (omega[i] == 0.0) continue;
    const double r = y[i] - mu[i];
    p += omega[i] * r * r / family.variance(mu[i]);
  }
  return p;
}

PointwiseConstants pointwise_constants(const Family& family, const Link& link,
                                       const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                                       const Eigen::VectorXd& w, const Eigen::VectorXd& omega) {
  const Eigen::Index n = y.size();
  PointwiseConstants out;
  out.c1.setZero(n);
  out.c2.setZero(n);
  out.c3.setZero(n);
  out.c4.setZero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (omega[i] == 0.0) continue;  // datum contributes nothing anywhere
    const double g1 = link.d1(mu[i]);
    const double g2 = link.d2(mu[i]);
    const double g3 = link.d3(mu[i]);
    const double v = family.variance(mu[i]);
    const double v1 = family.variance_d1(mu[i]);
    const double v2 = family.variance_d2(mu[i]);
    require(std::isfinite(g1) && g1 != 0.0 && v > 0.0, "mean outside the valid range");
    const double r = y[i] - mu[i];
    const double wi = w[i];
    const double w3 = wi * wi * wi;
    out.c1[i] = r * g2 / g1;
    out.c2[i] = r * (g3 / (g1 * g1) - g2 * g2 / (g1 * g1 * g1)) - g2 / (g1 * g1);
    out.c3[i] = w3 * (v1 * g1 + 2.0 * v * g2) / (2.0 * omega[i]);
    out.c4[i] = w3 * (v2 * g1 + 2.0 * g3 * v + 3.0 * g2 * v1) / (2.0 * omega[i] * g1);
  }
  return out;
}

}  // namespace gamfit
