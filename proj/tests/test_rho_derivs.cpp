#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "gamfit/derivs.hpp"
#include "support/oracles.hpp"
#include "support/sim_models.hpp"
#include "support/test_models.hpp"

using namespace gamfit;
using namespace testsupport;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

AssembledModel binomial_toy(int n, unsigned seed, int smooths = 2) {
  return sim_model(simulate_gam(0, n, seed, smooths >= 3 ? smooths : 3), smooths);
}

}  // namespace

TEST_CASE("gaussian identity: one pass, T vanishes, penalty-only derivative") {
  Rng rng(201);
  DataTable t;
  const VectorXd x = runif(100, rng);
  VectorXd y(100);
  for (int i = 0; i < 100; ++i) y[i] = std::sin(2 * M_PI * x[i]) + 0.25 * rng.normal();
  t.add_numeric("x", x);
  t.add_numeric("y", y);
  TermSpec s;
  s.covariates = {"x"};
  s.dim = 10;
  auto model = assemble({s}, t, Family::gaussian(), Link{LinkKind::identity}, "y");
  VectorXd rho(1);
  rho << 0.7;
  auto st = pirls_fit(model, rho);
  auto b = derivative_iteration(st, model, rho);
  CHECK(b.converged);
  CHECK(b.iterations == 1);
  CHECK(b.T.Tk.cwiseAbs().maxCoeff() == 0.0);
  CHECK(b.T.Tkm.cwiseAbs().maxCoeff() == 0.0);

  // dbeta = -lambda * P P' S_k beta matches the dense -lambda G^{-1} S_k beta
  auto dense = DenseOps::build(model, st);
  const VectorXd want = -st.lambda[0] * dense.Ginv * dense.S[0] * st.beta;
  CHECK(rel_err_vec(b.dbeta.col(0), want) < 1e-8);
}

TEST_CASE("apply_dB matches the dense operator") {
  Rng rng(203);
  for (int rep = 0; rep < 8; ++rep) {
    auto p = random_problem(60 + rep * 5, 2, 7, rng);
    auto d = factor_qr(p.X, p.w, p.penalties, p.lambda);
    REQUIRE(d.rank == p.X.cols());
    // random diagonal T_k and probe vector
    const VectorXd tk = rnorm(60 + rep * 5, rng) * 0.3;
    const VectorXd v = rnorm(60 + rep * 5, rng);

    DenseOps dense;
    dense.X = p.X;
    dense.w = p.w;
    dense.lambda = p.lambda;
    for (const auto& pb : p.penalties) {
      MatrixXd S = MatrixXd::Zero(p.X.cols(), p.X.cols());
      S.block(pb.offset, pb.offset, pb.block.rows(), pb.block.cols()) = pb.block;
      dense.S.push_back(S);
    }
    const MatrixXd Xw = p.w.asDiagonal() * p.X;
    MatrixXd G = Xw.transpose() * Xw;
    for (std::size_t j = 0; j < dense.S.size(); ++j) G += p.lambda[j] * dense.S[j];
    dense.Ginv = G.inverse();
    dense.B = dense.Ginv * Xw.transpose();
    dense.A = Xw * dense.B;

    for (int k = 0; k < 2; ++k) {
      const VectorXd got = apply_dB(d, tk, p.lambda[k], p.penalties[k], v);
      const VectorXd want = dense.dB(k, tk) * v;
      CHECK(rel_err_vec(got, want) < 1e-8);
    }
    // term isolation: T_k = 0 leaves only the penalty term
    const VectorXd zero = VectorXd::Zero(v.size());
    const VectorXd got0 = apply_dB(d, zero, p.lambda[0], p.penalties[0], v);
    const VectorXd u = d.K.transpose() * v;
    const VectorXd want0 = -p.lambda[0] * (d.P * (d.P.transpose() *
                           p.penalties[0].apply_full(d.P * u)));
    CHECK(rel_err_vec(got0, want0) < 1e-12);
    // and lambda_k = 0 with T_k = 0 gives the zero operator
    const VectorXd gotz = apply_dB(d, zero, 0.0, p.penalties[0], v);
    CHECK(gotz.cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("apply_d2B matches the dense operator") {
  Rng rng(207);
  for (int rep = 0; rep < 6; ++rep) {
    const int n = 50 + rep * 8;
    auto p = random_problem(n, 2, 6, rng);
    auto d = factor_qr(p.X, p.w, p.penalties, p.lambda);
    REQUIRE(d.rank == p.X.cols());
    const VectorXd tk = rnorm(n, rng) * 0.2;
    const VectorXd tm = rnorm(n, rng) * 0.2;
    const VectorXd tkm = rnorm(n, rng) * 0.2;
    const VectorXd v = rnorm(n, rng);

    DenseOps dense;
    dense.X = p.X;
    dense.w = p.w;
    dense.lambda = p.lambda;
    for (const auto& pb : p.penalties) {
      MatrixXd S = MatrixXd::Zero(p.X.cols(), p.X.cols());
      S.block(pb.offset, pb.offset, pb.block.rows(), pb.block.cols()) = pb.block;
      dense.S.push_back(S);
    }
    const MatrixXd Xw = p.w.asDiagonal() * p.X;
    MatrixXd G = Xw.transpose() * Xw;
    for (std::size_t j = 0; j < dense.S.size(); ++j) G += p.lambda[j] * dense.S[j];
    dense.Ginv = G.inverse();
    dense.B = dense.Ginv * Xw.transpose();
    dense.A = Xw * dense.B;

    for (auto [k, m] : {std::pair{1, 0}, std::pair{0, 0}, std::pair{1, 1}}) {
      const VectorXd got = apply_d2B(d, tk, tm, tkm, p.lambda[k], p.lambda[m],
                                     p.penalties[static_cast<std::size_t>(k)],
                                     p.penalties[static_cast<std::size_t>(m)], k == m, v);
      const VectorXd want = dense.d2B(k, m, tk, tm, tkm) * v;
      CHECK(rel_err_vec(got, want) < 1e-7);
    }
    // gaussian-identity style isolation: all T zero leaves the three
    // penalty-only terms
    const VectorXd zero = VectorXd::Zero(n);
    const int k = 1, m = 0;
    const VectorXd got0 = apply_d2B(d, zero, zero, zero, p.lambda[k], p.lambda[m],
                                    p.penalties[1], p.penalties[0], false, v);
    const VectorXd u = d.K.transpose() * v;
    const VectorXd w0 = d.P * u;
    const VectorXd pk = d.P * (d.P.transpose() * p.penalties[1].apply_full(w0));
    const VectorXd pm = d.P * (d.P.transpose() * p.penalties[0].apply_full(w0));
    const VectorXd want0 =
        p.lambda[k] * p.lambda[m] *
        (d.P * (d.P.transpose() * (p.penalties[0].apply_full(pk) +
                                   p.penalties[1].apply_full(pm))));
    CHECK(rel_err_vec(got0, want0) < 1e-10);
  }
}

TEST_CASE("derivative iteration against finite-difference refits (binomial, M=2)") {
  auto model = binomial_toy(100, 31);
  REQUIRE(model.q == 19);
  REQUIRE(model.M == 2);
  VectorXd rho(2);
  rho << 0.5, -0.5;
  auto st = pirls_fit(model, rho, tight_pirls());
  auto b = derivative_iteration(st, model, rho);
  REQUIRE(b.converged);

  // coefficient derivatives against refits
  const double h = 1e-4;
  for (int k = 0; k < 2; ++k) {
    VectorXd rp = rho, rm = rho;
    rp[k] += h;
    rm[k] -= h;
    const VectorXd fd = (refit(model, rp).beta - refit(model, rm).beta) / (2.0 * h);
    CHECK(rel_err_vec(b.dbeta.col(k), fd) < 1e-4);
  }
  // second derivatives of beta, diagonal and cross
  const VectorXd beta0 = refit(model, rho).beta;
  for (int k = 0; k < 2; ++k) {
    VectorXd rp = rho, rm = rho;
    rp[k] += h;
    rm[k] -= h;
    const VectorXd fd =
        (refit(model, rp).beta - 2.0 * beta0 + refit(model, rm).beta) / (h * h);
    CHECK(rel_err_vec(b.d2beta.col(pair_index(k, k)), fd) < 1e-3);
  }
  {
    VectorXd rpp = rho, rpm = rho, rmp = rho, rmm = rho;
    rpp[0] += h; rpp[1] += h;
    rpm[0] += h; rpm[1] -= h;
    rmp[0] -= h; rmp[1] += h;
    rmm[0] -= h; rmm[1] -= h;
    const VectorXd fd = (refit(model, rpp).beta - refit(model, rpm).beta -
                         refit(model, rmp).beta + refit(model, rmm).beta) /
                        (4.0 * h * h);
    CHECK(rel_err_vec(b.d2beta.col(pair_index(1, 0)), fd) < 1e-3);
  }

  // deviance, pearson and edf derivatives against refits
  auto pickD = [](const RefitValues& r) { return r.D; };
  auto pickP = [](const RefitValues& r) { return r.P; };
  auto pickT = [](const RefitValues& r) { return r.tau; };
  CHECK(rel_err_vec(b.dD, fd_gradient(model, rho, pickD)) < 1e-4);
  CHECK(rel_err_vec(b.dP, fd_gradient(model, rho, pickP)) < 1e-4);
  CHECK(rel_err_vec(b.dtau, fd_gradient(model, rho, pickT)) < 1e-4);
  CHECK(rel_err_mat(b.d2D, fd_hessian(model, rho, pickD)) < 1e-3);
  CHECK(rel_err_mat(b.d2P, fd_hessian(model, rho, pickP)) < 1e-3);
  CHECK(rel_err_mat(b.d2tau, fd_hessian(model, rho, pickT)) < 1e-3);
}

TEST_CASE("edf derivative traces match the dense oracle") {
  Rng rng(211);
  for (int rep = 0; rep < 5; ++rep) {
    const int n = 60 + 10 * rep;
    auto p = random_problem(n, 3, 6, rng);
    auto d = factor_qr(p.X, p.w, p.penalties, p.lambda);
    REQUIRE(d.rank == p.X.cols());

    DiagonalTerms T;
    T.Tk.resize(n, 3);
    T.Tkm.resize(n, pair_count(3));
    for (int k = 0; k < 3; ++k) T.Tk.col(k) = rnorm(n, rng) * 0.2;
    for (int c = 0; c < pair_count(3); ++c) T.Tkm.col(c) = rnorm(n, rng) * 0.2;

    DenseOps dense;
    dense.X = p.X;
    dense.w = p.w;
    dense.lambda = p.lambda;
    for (const auto& pb : p.penalties) {
      MatrixXd S = MatrixXd::Zero(p.X.cols(), p.X.cols());
      S.block(pb.offset, pb.offset, pb.block.rows(), pb.block.cols()) = pb.block;
      dense.S.push_back(S);
    }
    const MatrixXd Xw = p.w.asDiagonal() * p.X;
    MatrixXd G = Xw.transpose() * Xw;
    for (std::size_t j = 0; j < dense.S.size(); ++j) G += p.lambda[j] * dense.S[j];
    dense.Ginv = G.inverse();
    dense.B = dense.Ginv * Xw.transpose();
    dense.A = Xw * dense.B;

    EdfDerivWorkspace ws(d, T, p.lambda, p.penalties);
    const VectorXd grad = ws.gradient();
    const MatrixXd hess = ws.hessian();
    for (int k = 0; k < 3; ++k) {
      const double want = dense.dtau(k, T.Tk.col(k));
      CHECK(grad[k] == doctest::Approx(want).epsilon(1e-8));
      for (int m = 0; m <= k; ++m) {
        const auto got = ws.hessian_terms(k, m);
        const auto want2 = dense.d2tau_terms(k, m, T.Tk.col(k), T.Tk.col(m),
                                             T.Tkm.col(pair_index(k, m)));
        const auto rel = [](double a, double b) {
          return std::abs(a - b) / std::max(std::abs(b), 1e-6);
        };
        CHECK(rel(got.tkm_A, want2.tkm_A) < 1e-8);
        CHECK(rel(got.tk_tm_A, want2.tk_tm_A) < 1e-8);
        CHECK(rel(got.tkA_tmA, want2.tkA_tmA) < 1e-8);
        CHECK(rel(got.A_tmtk_A, want2.A_tmtk_A) < 1e-8);
        CHECK(rel(got.A_tkm_A, want2.A_tkm_A) < 1e-8);
        CHECK(rel(got.A_tkA_tmA, want2.A_tkA_tmA) < 1e-8);
        CHECK(rel(got.AT_BSB, want2.AT_BSB) < 1e-8);
        CHECK(rel(got.T_BSB, want2.T_BSB) < 1e-8);
        CHECK(rel(got.delta_BSB, want2.delta_BSB) < 1e-8);
        CHECK(rel(got.BS_G_SB, want2.BS_G_SB) < 1e-8);
        CHECK(hess(k, m) == doctest::Approx(want2.total()).epsilon(1e-8));
        CHECK(hess(k, m) == hess(m, k));  // symmetric storage
      }
    }
  }
}

TEST_CASE("edf gradient sign and flatness limits (gaussian)") {
  Rng rng(213);
  DataTable t;
  const VectorXd x = runif(120, rng);
  VectorXd y(120);
  for (int i = 0; i < 120; ++i) y[i] = std::sin(2 * M_PI * x[i]) + 0.3 * rng.normal();
  t.add_numeric("x", x);
  t.add_numeric("y", y);
  TermSpec s;
  s.covariates = {"x"};
  s.dim = 10;
  auto model = assemble({s}, t, Family::gaussian(), Link{LinkKind::identity}, "y");

  SUBCASE("more penalty always means fewer effective degrees of freedom") {
    for (double r : {-3.0, 0.0, 2.0, 5.0}) {
      VectorXd rho(1);
      rho << r;
      auto st = pirls_fit(model, rho);
      auto b = derivative_iteration(st, model, rho);
      CHECK(b.dtau[0] < 0.0);
    }
  }
  SUBCASE("gradient flattens to zero at working infinity (no shrinkage)") {
    VectorXd rho(1);
    rho << 25.0;
    auto st = pirls_fit(model, rho);
    auto b = derivative_iteration(st, model, rho);
    CHECK(std::abs(b.dtau[0]) < 1e-6);
  }
}

TEST_CASE("FD cross-check of the edf Hessian on an M=1 gaussian toy") {
  Rng rng(217);
  DataTable t;
  const VectorXd x = runif(90, rng);
  VectorXd y(90);
  for (int i = 0; i < 90; ++i) y[i] = std::cos(2 * M_PI * x[i]) + 0.2 * rng.normal();
  t.add_numeric("x", x);
  t.add_numeric("y", y);
  TermSpec s;
  s.covariates = {"x"};
  s.dim = 9;
  auto model = assemble({s}, t, Family::gaussian(), Link{LinkKind::identity}, "y");
  VectorXd rho(1);
  rho << 0.3;
  auto st = pirls_fit(model, rho, tight_pirls());
  auto b = derivative_iteration(st, model, rho);
  const double h = 1e-4;
  auto dtau_at = [&](double r) {
    VectorXd rr(1);
    rr << r;
    auto s2 = pirls_fit(model, rr, tight_pirls());
    auto b2 = derivative_iteration(s2, model, rr);
    return b2.dtau[0];
  };
  const double fd = (dtau_at(rho[0] + h) - dtau_at(rho[0] - h)) / (2.0 * h);
  CHECK(b.d2tau(0, 0) == doctest::Approx(fd).epsilon(1e-4));
}

TEST_CASE("saturated toy: zero deviance and pearson derivatives") {
  // equally spaced x makes the knots equally spaced, so a linear truth
  // has linear-in-index coefficients: exactly in the penalty null space
  // and the fit interpolates
  DataTable t;
  VectorXd x(60);
  for (int i = 0; i < 60; ++i) x[i] = static_cast<double>(i) / 59.0;
  VectorXd y(60);
  for (int i = 0; i < 60; ++i) y[i] = 1.0 + 2.0 * x[i];
  t.add_numeric("x", x);
  t.add_numeric("y", y);
  TermSpec s;
  s.covariates = {"x"};
  s.dim = 6;
  auto model = assemble({s}, t, Family::gaussian(), Link{LinkKind::identity}, "y");
  VectorXd rho(1);
  rho << 2.0;
  auto st = pirls_fit(model, rho);
  CHECK(st.deviance < 1e-12);
  auto b = derivative_iteration(st, model, rho);
  CHECK(b.dD.cwiseAbs().maxCoeff() < 1e-8);
  CHECK(b.dP.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("gaussian single-lambda deviance is non-decreasing in rho") {
  Rng rng(223);
  DataTable t;
  const VectorXd x = runif(100, rng);
  VectorXd y(100);
  for (int i = 0; i < 100; ++i) y[i] = std::sin(2 * M_PI * x[i]) + 0.3 * rng.normal();
  t.add_numeric("x", x);
  t.add_numeric("y", y);
  TermSpec s;
  s.covariates = {"x"};
  s.dim = 10;
  auto model = assemble({s}, t, Family::gaussian(), Link{LinkKind::identity}, "y");
  for (double r : {-6.0, -3.0, 0.0, 3.0, 6.0, 10.0}) {
    VectorXd rho(1);
    rho << r;
    auto st = pirls_fit(model, rho);
    auto b = derivative_iteration(st, model, rho);
    CHECK(b.dD[0] >= -1e-10);
  }
}

TEST_CASE("pearson equals deviance derivatives for gaussian identity") {
  Rng rng(227);
  DataTable t;
  const VectorXd x = runif(80, rng);
  VectorXd y(80);
  for (int i = 0; i < 80; ++i) y[i] = x[i] * x[i] + 0.2 * rng.normal();
  t.add_numeric("x", x);
  t.add_numeric("y", y);
  TermSpec s;
  s.covariates = {"x"};
  s.dim = 8;
  auto model = assemble({s}, t, Family::gaussian(), Link{LinkKind::identity}, "y");
  VectorXd rho(1);
  rho << 0.0;
  auto st = pirls_fit(model, rho);
  auto b = derivative_iteration(st, model, rho);
  CHECK(rel_err_vec(b.dP, b.dD) < 1e-10);
  CHECK(rel_err_mat(b.d2P, b.d2D) < 1e-10);
}

TEST_CASE("bundle symmetry is structural") {
  auto model = binomial_toy(80, 37);
  VectorXd rho(2);
  rho << 0.2, 1.0;
  auto st = pirls_fit(model, rho);
  auto b = derivative_iteration(st, model, rho);
  CHECK((b.d2D - b.d2D.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((b.d2P - b.d2P.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((b.d2tau - b.d2tau.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("quasi family with zero prior weights stays consistent") {
  auto data = simulate_gam(3, 90, 41, 3);
  auto model = sim_model(data, 2, 8);
  model.omega[3] = 0.0;
  model.omega[57] = 0.0;
  VectorXd rho(2);
  rho << 0.0, 0.5;
  auto st = pirls_fit(model, rho, tight_pirls());
  auto b = derivative_iteration(st, model, rho);
  REQUIRE(b.converged);
  auto pickD = [](const RefitValues& r) { return r.D; };
  CHECK(rel_err_vec(b.dD, fd_gradient(model, rho, pickD)) < 1e-4);
}
