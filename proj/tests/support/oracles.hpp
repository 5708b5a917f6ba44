#ifndef GAMFIT_TEST_ORACLES_HPP
#define GAMFIT_TEST_ORACLES_HPP

// Independent oracles: naive dense-matrix evaluations of the derivative
// operators and finite differences of fully re-fitted quantities. These
// deliberately avoid the K/P factored code paths they are used to check.

#include <Eigen/Dense>
#include <vector>

#include "gamfit/derivs.hpp"
#include "gamfit/optimizer.hpp"
#include "gamfit/pirls.hpp"

namespace testsupport {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Dense versions of B, A, G^{-1} and the derivative formulas written in
// terms of them (the pre-factorization display).
struct DenseOps {
  MatrixXd X;
  VectorXd w;
  std::vector<MatrixXd> S;  // padded, unscaled
  VectorXd lambda;
  MatrixXd Ginv, B, A;

  static DenseOps build(const gamfit::AssembledModel& model, const gamfit::PirlsState& st) {
    DenseOps d;
    d.X = model.X;
    d.w = st.w;
    d.lambda = st.lambda;
    const int q = model.q;
    for (const auto& pb : model.penalties) {
      MatrixXd Sk = MatrixXd::Zero(q, q);
      Sk.block(pb.offset, pb.offset, pb.block.rows(), pb.block.cols()) = pb.block;
      d.S.push_back(Sk);
    }
    const MatrixXd Xw = st.w.asDiagonal() * model.X;
    MatrixXd G = Xw.transpose() * Xw;
    for (std::size_t j = 0; j < d.S.size(); ++j) {
      G += st.lambda[static_cast<Eigen::Index>(j)] * d.S[j];
    }
    d.Ginv = G.inverse();
    d.B = d.Ginv * Xw.transpose();
    d.A = Xw * d.B;
    return d;
  }

  MatrixXd dB(int k, const VectorXd& tk) const {
    const MatrixXd Tk = tk.asDiagonal();
    return -2.0 * B * Tk * A - lambda[k] * Ginv * S[static_cast<std::size_t>(k)] * B + B * Tk;
  }

  MatrixXd dGinv(int m, const VectorXd& tm) const {
    const MatrixXd Tm = tm.asDiagonal();
    return -2.0 * B * Tm * B.transpose() -
           lambda[m] * Ginv * S[static_cast<std::size_t>(m)] * Ginv;
  }

  MatrixXd dA(int m, const VectorXd& tm) const {
    // A = WXB and dW/drho_m = T_m W
    return tm.asDiagonal() * A + (w.asDiagonal() * X) * dB(m, tm);
  }

  MatrixXd d2B(int k, int m, const VectorXd& tk, const VectorXd& tm,
               const VectorXd& tkm) const {
    const MatrixXd Tk = tk.asDiagonal();
    const MatrixXd Tkm = tkm.asDiagonal();
    const MatrixXd dBm = dB(m, tm);
    MatrixXd out = -2.0 * dBm * Tk * A - 2.0 * B * Tkm * A - 2.0 * B * Tk * dA(m, tm) +
                   dBm * Tk + B * Tkm -
                   lambda[k] * (dGinv(m, tm) * S[static_cast<std::size_t>(k)] * B +
                                Ginv * S[static_cast<std::size_t>(k)] * dBm);
    if (k == m) out -= lambda[k] * Ginv * S[static_cast<std::size_t>(k)] * B;
    return out;
  }

  double dtau(int k, const VectorXd& tk) const {
    const MatrixXd Tk = tk.asDiagonal();
    return (Tk * A).trace() - 2.0 * (A * Tk * A).trace() -
           lambda[k] * (B.transpose() * S[static_cast<std::size_t>(k)] * B).trace() +
           (A * Tk).trace();
  }

  gamfit::EdfDerivWorkspace::TraceTerms d2tau_terms(int k, int m, const VectorXd& tk,
                                                    const VectorXd& tm,
                                                    const VectorXd& tkm) const {
    const MatrixXd Tk = tk.asDiagonal();
    const MatrixXd Tm = tm.asDiagonal();
    const MatrixXd Tkm = tkm.asDiagonal();
    const MatrixXd& Sk = S[static_cast<std::size_t>(k)];
    const MatrixXd& Sm = S[static_cast<std::size_t>(m)];
    const double lk = lambda[k];
    const double lm = lambda[m];
    gamfit::EdfDerivWorkspace::TraceTerms t;
    t.tkm_A = 2.0 * (Tkm * A).trace();
    t.tk_tm_A = 4.0 * (Tk * Tm * A).trace();
    t.tkA_tmA = -4.0 * ((Tk * A * Tm * A).trace() + (Tm * A * Tk * A).trace());
    t.A_tmtk_A = -4.0 * (A * Tm * Tk * A).trace();
    t.A_tkm_A = -2.0 * (A * Tkm * A).trace();
    t.A_tkA_tmA = 8.0 * (A * Tk * A * Tm * A).trace();
    t.AT_BSB = 4.0 * (lm * (A * Tk * B.transpose() * Sm * B).trace() +
                      lk * (A * Tm * B.transpose() * Sk * B).trace());
    t.T_BSB = -2.0 * (lm * (Tk * B.transpose() * Sm * B).trace() +
                      lk * (Tm * B.transpose() * Sk * B).trace());
    t.delta_BSB = (k == m) ? -lk * (B.transpose() * Sk * B).trace() : 0.0;
    t.BS_G_SB = 2.0 * lm * lk * (B.transpose() * Sm * Ginv * Sk * B).trace();
    return t;
  }
};

// converged-fit scalars used by the finite-difference oracles
struct RefitValues {
  double D = 0.0, P = 0.0, tau = 0.0;
  double aic = 0.0, gcv = 0.0, gacv = 0.0;
  VectorXd beta;
};

inline gamfit::PirlsConfig tight_pirls() {
  gamfit::PirlsConfig cfg;
  cfg.dev_tol = 1e-11;
  cfg.beta_tol = 1e-9;
  cfg.max_iter = 400;
  return cfg;
}

inline RefitValues refit(const gamfit::AssembledModel& model, const Eigen::VectorXd& rho,
                         double gamma = 1.0) {
  auto st = gamfit::pirls_fit(model, rho, tight_pirls());
  RefitValues rv;
  rv.D = st.deviance;
  rv.P = gamfit::pearson_stat(model.family, model.y, st.mu, model.omega);
  rv.tau = st.decomp.trace_influence();
  const double n = static_cast<double>(model.n);
  rv.aic = rv.D + 2.0 * gamma * rv.tau * model.family.scale;
  rv.gcv = n * rv.D / ((n - gamma * rv.tau) * (n - gamma * rv.tau));
  rv.gacv = rv.D / n + (2.0 * gamma / n) * rv.tau / (n - rv.tau) * rv.P;
  rv.beta = st.beta;
  return rv;
}

// central differences of any scalar drawn from RefitValues
template <typename Pick>
VectorXd fd_gradient(const gamfit::AssembledModel& model, const VectorXd& rho, Pick pick,
                     double h = 1e-4, double gamma = 1.0) {
  const int M = static_cast<int>(rho.size());
  VectorXd g(M);
  for (int k = 0; k < M; ++k) {
    VectorXd rp = rho, rm = rho;
    rp[k] += h;
    rm[k] -= h;
    g[k] = (pick(refit(model, rp, gamma)) - pick(refit(model, rm, gamma))) / (2.0 * h);
  }
  return g;
}

template <typename Pick>
MatrixXd fd_hessian(const gamfit::AssembledModel& model, const VectorXd& rho, Pick pick,
                    double h = 1e-4, double gamma = 1.0) {
  const int M = static_cast<int>(rho.size());
  MatrixXd H(M, M);
  const double f0 = pick(refit(model, rho, gamma));
  for (int k = 0; k < M; ++k) {
    VectorXd rp = rho, rm = rho;
    rp[k] += h;
    rm[k] -= h;
    H(k, k) = (pick(refit(model, rp, gamma)) - 2.0 * f0 + pick(refit(model, rm, gamma))) /
              (h * h);
    for (int m = 0; m < k; ++m) {
      VectorXd rpp = rho, rpm = rho, rmp = rho, rmm = rho;
      rpp[k] += h; rpp[m] += h;
      rpm[k] += h; rpm[m] -= h;
      rmp[k] -= h; rmp[m] += h;
      rmm[k] -= h; rmm[m] -= h;
      const double v = (pick(refit(model, rpp, gamma)) - pick(refit(model, rpm, gamma)) -
                        pick(refit(model, rmp, gamma)) + pick(refit(model, rmm, gamma))) /
                       (4.0 * h * h);
      H(k, m) = v;
      H(m, k) = v;
    }
  }
  return H;
}

inline double rel_err_vec(const VectorXd& got, const VectorXd& want) {
  return (got - want).cwiseAbs().maxCoeff() / std::max(want.cwiseAbs().maxCoeff(), 1e-6);
}

inline double rel_err_mat(const MatrixXd& got, const MatrixXd& want) {
  return (got - want).cwiseAbs().maxCoeff() / std::max(want.cwiseAbs().maxCoeff(), 1e-6);
}

}  // namespace testsupport

#endif
