#include "gamfit/optimizer.hpp"

#include <cmath>
#include <sstream>

#include "gamfit/errors.hpp"

namespace gamfit {

namespace {

constexpr double kBoundSlack = 1e-8;
constexpr double kHessTol = 1e-6;  // PSD tolerance for the certificate

// projected gradient: zero where a bound blocks the descent direction
Eigen::VectorXd projected_gradient(const Eigen::VectorXd& grad, const Eigen::VectorXd& rho,
                                   double bound) {
  Eigen::VectorXd pg = grad;
  for (Eigen::Index k = 0; k < grad.size(); ++k) {
    const bool at_upper = rho[k] >= bound - kBoundSlack;
    const bool at_lower = rho[k] <= -bound + kBoundSlack;
    if (at_upper && grad[k] <= 0.0) pg[k] = 0.0;  // wants to grow, blocked
    if (at_lower && grad[k] >= 0.0) pg[k] = 0.0;
  }
  return pg;
}

}  // namespace

Eigen::VectorXd newton_step(const Eigen::VectorXd& grad, const Eigen::MatrixXd& hess,
                            const std::vector<bool>& active) {
  const int M = static_cast<int>(grad.size());
  std::vector<int> idx;
  for (int k = 0; k < M; ++k) {
    if (active[static_cast<std::size_t>(k)]) idx.push_back(k);
  }
  Eigen::VectorXd step = Eigen::VectorXd::Zero(M);
  const int a = static_cast<int>(idx.size());
  if (a == 0) return step;

  Eigen::VectorXd g(a);
  Eigen::MatrixXd H(a, a);
  for (int i = 0; i < a; ++i) {
    g[i] = grad[idx[static_cast<std::size_t>(i)]];
    for (int j = 0; j < a; ++j) {
      H(i, j) = hess(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H);
  const Eigen::VectorXd& ev = eig.eigenvalues();
  const double max_abs = ev.cwiseAbs().maxCoeff();
  Eigen::VectorXd s(a);
  if (max_abs == 0.0) {
    s = -g;  // flat Hessian: fall back to steepest descent
  } else {
    const double floor = 1e-10 * max_abs;
    const Eigen::VectorXd gt = eig.eigenvectors().transpose() * g;
    Eigen::VectorXd st(a);
    for (int i = 0; i < a; ++i) st[i] = -gt[i] / std::max(std::abs(ev[i]), floor);
    s = eig.eigenvectors() * st;
  }
  for (int i = 0; i < a; ++i) step[idx[static_cast<std::size_t>(i)]] = s[i];
  return step;
}

Eigen::VectorXd initial_rho(const AssembledModel& model) {
  Eigen::VectorXd rho(model.M);
  for (int j = 0; j < model.M; ++j) {
    const PenaltyBlock& pb = model.penalties[static_cast<std::size_t>(j)];
    const double xtx = model.X.middleCols(pb.offset, pb.block.rows()).squaredNorm();
    const double str = pb.block.trace();
    rho[j] = std::log(std::max(xtx, 1e-8) / std::max(str, 1e-8));
  }
  return rho;
}

double criterion_value_at(const AssembledModel& model, const PirlsState& state,
                          CriterionKind kind, double gamma) {
  const double D = state.deviance;
  const double tau = state.decomp.trace_influence();
  const double P = pearson_stat(model.family, model.y, state.mu, model.omega);
  return criterion_value(kind, D, P, tau, gamma, model.family.scale,
                         static_cast<double>(model.n));
}

CriterionValue eval_criterion(const DerivativeBundle& bundle, const PirlsState& state,
                              const AssembledModel& model, CriterionKind kind, double gamma) {
  const double D = state.deviance;
  const double tau = state.decomp.trace_influence();
  const double n = static_cast<double>(model.n);
  switch (kind) {
    case CriterionKind::aic:
      return eval_aic(bundle, D, tau, gamma, model.family.scale);
    case CriterionKind::gcv:
      return eval_gcv(bundle, D, tau, gamma, n);
    case CriterionKind::gacv: {
      const double P = pearson_stat(model.family, model.y, state.mu, model.omega);
      return eval_gacv(bundle, D, P, tau, gamma, n);
    }
  }
  throw std::logic_error("unreachable");
}

TermEdf edf_per_term(const PirlsState& state, const AssembledModel& model) {
  // diag(B W X) = diag(P K' W X) summed over each term's columns
  const Eigen::MatrixXd WX = state.w.asDiagonal() * model.X;
  const Eigen::MatrixXd C = state.decomp.K.transpose() * WX;  // r x q
  Eigen::VectorXd diag(model.q);
  for (int j = 0; j < model.q; ++j) diag[j] = state.decomp.P.row(j).dot(C.col(j));
  TermEdf out;
  out.parametric = diag.head(model.parametric_cols).sum();
  out.per_term.resize(static_cast<Eigen::Index>(model.terms.size()));
  for (std::size_t t = 0; t < model.terms.size(); ++t) {
    const TermBuild& tb = model.terms[t];
    out.per_term[static_cast<Eigen::Index>(t)] = diag.segment(tb.col_start, tb.col_count).sum();
  }
  return out;
}

OptResult optimize(const AssembledModel& model, const OptimizerConfig& config) {
  if (config.criterion == CriterionKind::aic && !model.family.scale_known) {
    throw config_error("aic needs a known scale; use gcv or gacv for this family");
  }
  const int M = model.M;
  OptResult res;

  PirlsConfig pirls_cfg = config.pirls;
  pirls_cfg.rho_bound = config.rho_bound;

  Eigen::VectorXd rho =
      clamp_rho(config.rho_init.size() == M ? config.rho_init : initial_rho(model),
                config.rho_bound);
  PirlsState state = pirls_fit(model, rho, pirls_cfg);
  double value = criterion_value_at(model, state, config.criterion, config.gamma);

  std::vector<bool> active(static_cast<std::size_t>(M), true);
  Eigen::VectorXd rho_prev = rho;
  bool have_prev = false;
  int deriv_retreats = 0;

  auto fit_at = [&](const Eigen::VectorXd& r, const Eigen::VectorXd* warm) -> PirlsState {
    try {
      return pirls_fit(model, r, pirls_cfg, warm);
    } catch (const convergence_error&) {
      if (warm) return pirls_fit(model, r, pirls_cfg);  // cold retry
      throw;
    }
  };

  for (int outer = 1; outer <= config.max_outer; ++outer) {
    res.outer_iterations = outer;
    DerivativeBundle bundle = derivative_iteration(state, model, rho, config.derivs);
    if (!bundle.converged) {
      // retreat half way toward the last accepted point and try again
      if (!have_prev || deriv_retreats >= 2) {
        throw convergence_error("derivative iteration failed to converge at rho=" +
                                [&] {
                                  std::ostringstream os;
                                  os << rho.transpose();
                                  return os.str();
                                }());
      }
      ++deriv_retreats;
      rho = 0.5 * (rho + rho_prev);
      state = fit_at(rho, &state.beta);
      value = criterion_value_at(model, state, config.criterion, config.gamma);
      continue;
    }
    deriv_retreats = 0;
    CriterionValue crit = eval_criterion(bundle, state, model, config.criterion, config.gamma);
    res.bundle = std::move(bundle);
    res.criterion = crit;

    OptIterate it;
    it.rho = rho;
    it.value = crit.value;
    if (config.criterion == CriterionKind::gacv) {
      const double P = pearson_stat(model.family, model.y, state.mu, model.omega);
      it.gacv_gap = std::abs(crit.value - gacv_value_via_scale(state.deviance, P, crit.tau,
                                                               config.gamma,
                                                               static_cast<double>(model.n)));
    }
    res.trace.push_back(it);

    const double scale = 1.0 + std::abs(crit.value);
    const double drop_thr = config.drop_threshold * scale;
    const Eigen::VectorXd pg = projected_gradient(crit.gradient, rho, config.rho_bound);

    // working-infinity handling: parameters parked at a bound with a
    // negligible gradient leave the Newton update; they re-enter when
    // their gradient grows back or blocks convergence
    for (int k = 0; k < M; ++k) {
      const bool at_bound = std::abs(rho[k]) >= config.rho_bound - kBoundSlack;
      if (active[static_cast<std::size_t>(k)]) {
        if (at_bound && std::abs(crit.gradient[k]) < drop_thr) {
          active[static_cast<std::size_t>(k)] = false;
        }
      } else if (std::abs(crit.gradient[k]) > 10.0 * drop_thr ||
                 std::abs(pg[k]) > config.grad_tol * scale) {
        active[static_cast<std::size_t>(k)] = true;
      }
    }

    // certificate pieces at the current point
    std::vector<int> dropped;
    for (int k = 0; k < M; ++k) {
      if (!active[static_cast<std::size_t>(k)]) dropped.push_back(k);
    }
    double min_eig = 0.0;
    {
      std::vector<int> idx;
      for (int k = 0; k < M; ++k) {
        if (active[static_cast<std::size_t>(k)]) idx.push_back(k);
      }
      if (!idx.empty()) {
        Eigen::MatrixXd H(idx.size(), idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
          for (std::size_t j = 0; j < idx.size(); ++j) {
            H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                crit.hessian(idx[i], idx[j]);
          }
        }
        min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(H).eigenvalues().minCoeff();
      }
    }
    res.certificate.grad_norm = pg.cwiseAbs().maxCoeff();
    res.certificate.min_hessian_eig = min_eig;
    res.certificate.dropped = dropped;

    const bool grad_done = res.certificate.grad_norm < config.grad_tol * scale;
    if (grad_done && min_eig > -kHessTol) {
      res.converged = true;
      break;
    }

    // search direction: modified Newton, or the most negative curvature
    // direction when the gradient has already vanished at a saddle
    Eigen::VectorXd step;
    if (!grad_done) {
      step = newton_step(crit.gradient, crit.hessian, active);
    } else {
      std::vector<int> idx;
      for (int k = 0; k < M; ++k) {
        if (active[static_cast<std::size_t>(k)]) idx.push_back(k);
      }
      Eigen::MatrixXd H(idx.size(), idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < idx.size(); ++j) {
          H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
              crit.hessian(idx[i], idx[j]);
        }
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H);
      Eigen::VectorXd dir = Eigen::VectorXd::Zero(M);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        dir[idx[i]] = eig.eigenvectors()(static_cast<Eigen::Index>(i), 0);
      }
      step = dir;  // sign resolved by the halving loop below
    }
    const double sn = step.cwiseAbs().maxCoeff();
    if (sn > config.max_step) step *= config.max_step / sn;

    bool accepted = false;
    Eigen::VectorXd rho_try;
    PirlsState state_try;
    double value_try = 0.0;
    for (int h = 0; h <= config.max_half && !accepted; ++h) {
      for (int sign = 0; sign < (grad_done ? 2 : 1) && !accepted; ++sign) {
        rho_try = clamp_rho(rho + (sign == 0 ? step : Eigen::VectorXd(-step)),
                            config.rho_bound);
        if ((rho_try - rho).cwiseAbs().maxCoeff() < 1e-14) continue;
        try {
          state_try = fit_at(rho_try, &state.beta);
          value_try = criterion_value_at(model, state_try, config.criterion, config.gamma);
        } catch (const convergence_error&) {
          continue;  // treat an inner failure like a non-decreasing step
        }
        if (std::isfinite(value_try) && value_try < value) accepted = true;
      }
      if (!accepted) step *= 0.5;
    }
    if (!accepted) {
      res.converged = false;  // halving exhausted with gradient still live
      break;
    }
    rho_prev = rho;
    have_prev = true;
    rho = rho_try;
    state = std::move(state_try);
    value = value_try;
  }

  // make sure the reported derivatives belong to the final point
  if (!res.trace.empty() && (res.trace.back().rho - rho).cwiseAbs().maxCoeff() > 0.0) {
    DerivativeBundle bundle = derivative_iteration(state, model, rho, config.derivs);
    if (bundle.converged) {
      res.criterion = eval_criterion(bundle, state, model, config.criterion, config.gamma);
      res.bundle = std::move(bundle);
      const Eigen::VectorXd pg = projected_gradient(res.criterion.gradient, rho, config.rho_bound);
      res.certificate.grad_norm = pg.cwiseAbs().maxCoeff();
    }
  }
  res.rho_hat = rho;
  res.fitted = std::move(state);
  const TermEdf edf = edf_per_term(res.fitted, model);
  res.edf_terms = edf.per_term;
  res.edf_parametric = edf.parametric;
  return res;
}

}  // namespace gamfit
