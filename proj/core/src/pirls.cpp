#include "gamfit/pirls.hpp"

#include <cmath>
#include <sstream>

#include "gamfit/errors.hpp"

namespace gamfit {

namespace {

struct WorkingData {
  Eigen::VectorXd w, z;
  bool finite = true;
};

// weights w_i = sqrt(omega_i / V(mu_i)) / g'(mu_i) and pseudodata
// z_i = g'(mu_i) (y_i - mu_i) + eta_i, at clipped means
WorkingData working_data(const AssembledModel& m, const Eigen::VectorXd& mu,
                         const Eigen::VectorXd& eta) {
  const Eigen::Index n = mu.size();
  WorkingData out;
  out.w.resize(n);
  out.z.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (m.omega[i] == 0.0) {
      out.w[i] = 0.0;
      out.z[i] = eta[i];
      continue;
    }
    const double g1 = m.link.d1(mu[i]);
    const double v = m.family.variance(mu[i]);
    // |g'| keeps w positive; every consumer scales consistently with w
    out.w[i] = std::sqrt(m.omega[i] / v) / std::abs(g1);
    out.z[i] = g1 * (m.y[i] - mu[i]) + eta[i];
    if (!std::isfinite(out.w[i]) || !std::isfinite(out.z[i])) out.finite = false;
  }
  return out;
}

double penalized_dev(const AssembledModel& m, const Eigen::VectorXd& beta, double dev,
                     const Eigen::VectorXd& lambda) {
  double pen = 0.0;
  for (std::size_t j = 0; j < m.penalties.size(); ++j) {
    pen += lambda[static_cast<Eigen::Index>(j)] * m.penalties[j].quad_form(beta);
  }
  return dev + pen;
}

}  // namespace

Eigen::VectorXd initialize_mu(const Family& family, const Eigen::VectorXd& y) {
  Eigen::VectorXd mu(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) mu[i] = family.init_mu(y[i]);
  return mu;
}

Eigen::VectorXd clamp_rho(const Eigen::VectorXd& rho, double bound) {
  return rho.array().max(-bound).min(bound).matrix();
}

PirlsState pirls_fit(const AssembledModel& model, const Eigen::VectorXd& rho,
                     const PirlsConfig& config, const Eigen::VectorXd* warm_beta) {
  if (rho.size() != model.M) throw std::invalid_argument("pirls_fit: rho has wrong length");
  if (!rho.allFinite()) throw std::invalid_argument("pirls_fit: non-finite rho");

  PirlsState st;
  st.lambda = clamp_rho(rho, config.rho_bound).array().exp().matrix();

  // initial means
  if (warm_beta && warm_beta->size() == model.q) {
    st.beta = *warm_beta;
    st.eta = model.X * st.beta + model.offset;
    Eigen::VectorXd mu(model.n);
    for (Eigen::Index i = 0; i < model.n; ++i) mu[i] = model.link.inverse(st.eta[i]);
    st.mu = clip_mu(model.family, model.link, mu);
  } else {
    st.beta = Eigen::VectorXd::Zero(model.q);
    st.mu = clip_mu(model.family, model.link, initialize_mu(model.family, model.y));
    st.eta.resize(model.n);
    for (Eigen::Index i = 0; i < model.n; ++i) st.eta[i] = model.link.eval(st.mu[i]);
  }
  if (!st.mu.allFinite() || !st.eta.allFinite()) {
    throw convergence_error("all-data-invalid initialization");
  }

  bool have_prev = false;
  Eigen::VectorXd beta_prev;
  double dp_prev = std::numeric_limits<double>::infinity();
  WorkingData wd = working_data(model, st.mu, st.eta);

  for (int iter = 1; iter <= config.max_iter; ++iter) {
    if (!wd.finite) throw convergence_error("non-finite working data");
    st.decomp = factor(config.method, model.X, wd.w, model.penalties, st.lambda,
                       config.cond_limit);
    st.w = wd.w;
    st.z = wd.z;
    st.zprime = wd.w.cwiseProduct(wd.z - model.offset);
    Eigen::VectorXd beta = st.decomp.solve(st.zprime);
    st.iterations = iter;

    // evaluate the proposal, halving back toward the previous accepted
    // beta until the penalized deviance stops increasing
    Eigen::VectorXd eta, mu;
    double dev = 0.0, dp = 0.0;
    bool ok = false;
    for (int h = 0; h <= config.max_halvings; ++h) {
      eta = model.X * beta + model.offset;
      bool finite = eta.allFinite();
      if (finite) {
        mu.resize(model.n);
        for (Eigen::Index i = 0; i < model.n; ++i) mu[i] = model.link.inverse(eta[i]);
        mu = clip_mu(model.family, model.link, mu);
        dev = deviance(model.family, model.y, mu, model.omega).total;
        dp = penalized_dev(model, beta, dev, st.lambda);
        finite = std::isfinite(dp);
      }
      if (finite && (!have_prev || dp <= dp_prev * (1.0 + 1e-12) + 1e-12)) {
        ok = true;
        break;
      }
      if (!have_prev) {
        beta *= 0.5;  // nothing to retreat toward yet
      } else {
        beta = 0.5 * (beta + beta_prev);
      }
      ++st.halvings;
    }
    if (!ok) {
      std::ostringstream os;
      os << "P-IRLS step halving failed at iteration " << iter
         << " (penalized deviance " << dp_prev << ")";
      throw convergence_error(os.str());
    }

    const double beta_change =
        have_prev ? ((beta - beta_prev).cwiseAbs().maxCoeff() /
                     (beta.cwiseAbs().maxCoeff() + 1e-8))
                  : std::numeric_limits<double>::infinity();
    const bool dev_done = have_prev && std::abs(dp - dp_prev) < config.dev_tol * (std::abs(dp) + 0.1);

    st.beta = beta;
    st.eta = eta;
    st.mu = mu;
    st.deviance = dev;
    st.penalized_deviance = dp;
    st.dp_trace.push_back(dp);
    beta_prev = beta;
    dp_prev = dp;
    have_prev = true;

    // recompute working data at the accepted means; if it is unchanged
    // from what the solve used, beta is already the exact fixed point
    WorkingData wd_new = working_data(model, st.mu, st.eta);
    if (wd_new.finite) {
      const double w_delta = (wd_new.w - st.w).cwiseAbs().maxCoeff() /
                             (st.w.cwiseAbs().maxCoeff() + 1e-12);
      const double z_delta = (wd_new.z - st.z).cwiseAbs().maxCoeff() /
                             (st.z.cwiseAbs().maxCoeff() + 1e-12);
      if (w_delta < 1e-13 && z_delta < 1e-13) {
        st.converged = true;
        return st;
      }
    }
    if (dev_done && beta_change < config.beta_tol) {
      // one refreshing solve at the converged working data so that the
      // stored decomposition matches the final weights exactly
      st.decomp = factor(config.method, model.X, wd_new.w, model.penalties, st.lambda,
                         config.cond_limit);
      st.w = wd_new.w;
      st.z = wd_new.z;
      st.zprime = wd_new.w.cwiseProduct(wd_new.z - model.offset);
      st.beta = st.decomp.solve(st.zprime);
      st.eta = model.X * st.beta + model.offset;
      for (Eigen::Index i = 0; i < model.n; ++i) st.mu[i] = model.link.inverse(st.eta[i]);
      st.mu = clip_mu(model.family, model.link, st.mu);
      st.deviance = deviance(model.family, model.y, st.mu, model.omega).total;
      st.penalized_deviance = penalized_dev(model, st.beta, st.deviance, st.lambda);
      st.dp_trace.push_back(st.penalized_deviance);
      st.iterations = iter + 1;
      st.converged = true;
      return st;
    }
    wd = wd_new;
  }
  throw convergence_error("P-IRLS failed to converge in " + std::to_string(config.max_iter) +
                          " iterations");
}

}  // namespace gamfit
