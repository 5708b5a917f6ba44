#include "gamfit/check.hpp"

#include <cmath>
#include <sstream>

namespace gamfit {

namespace {

struct Point {
  double D, P, tau, V;
};

Point evaluate(const AssembledModel& model, const Eigen::VectorXd& rho, CriterionKind kind,
               double gamma) {
  PirlsConfig cfg;
  cfg.dev_tol = 1e-11;
  cfg.beta_tol = 1e-9;
  cfg.max_iter = 400;
  auto st = pirls_fit(model, rho, cfg);
  Point p;
  p.D = st.deviance;
  p.P = pearson_stat(model.family, model.y, st.mu, model.omega);
  p.tau = st.decomp.trace_influence();
  p.V = criterion_value(kind, p.D, p.P, p.tau, gamma, model.family.scale,
                        static_cast<double>(model.n));
  return p;
}

double rel(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-6);
}

}  // namespace

CheckReport check_derivatives(const AssembledModel& model, const Eigen::VectorXd& rho,
                              CriterionKind criterion, double gamma, double step,
                              double first_threshold, double second_threshold) {
  const int M = model.M;
  PirlsConfig tight;
  tight.dev_tol = 1e-11;
  tight.beta_tol = 1e-9;
  tight.max_iter = 400;
  auto st = pirls_fit(model, rho, tight);
  auto bundle = derivative_iteration(st, model, rho);
  auto crit = eval_criterion(bundle, st, model, criterion, gamma);

  // finite differences of converged refits on the cross stencil
  std::vector<Point> plus(M), minus(M);
  for (int k = 0; k < M; ++k) {
    Eigen::VectorXd rp = rho, rm = rho;
    rp[k] += step;
    rm[k] -= step;
    plus[static_cast<std::size_t>(k)] = evaluate(model, rp, criterion, gamma);
    minus[static_cast<std::size_t>(k)] = evaluate(model, rm, criterion, gamma);
  }
  const Point center = evaluate(model, rho, criterion, gamma);

  CheckReport out;
  auto add_first = [&](const std::string& name, double analytic, double fd) {
    CheckRow row{name, analytic, fd, rel(analytic, fd)};
    out.max_first_rel = std::max(out.max_first_rel, row.rel_err);
    out.rows.push_back(std::move(row));
  };
  auto add_second = [&](const std::string& name, double analytic, double fd) {
    CheckRow row{name, analytic, fd, rel(analytic, fd)};
    out.max_second_rel = std::max(out.max_second_rel, row.rel_err);
    out.rows.push_back(std::move(row));
  };

  for (int k = 0; k < M; ++k) {
    const auto ks = std::to_string(k);
    const auto& pl = plus[static_cast<std::size_t>(k)];
    const auto& mi = minus[static_cast<std::size_t>(k)];
    add_first("dD/drho[" + ks + "]", bundle.dD[k], (pl.D - mi.D) / (2.0 * step));
    add_first("dP/drho[" + ks + "]", bundle.dP[k], (pl.P - mi.P) / (2.0 * step));
    add_first("dtau/drho[" + ks + "]", bundle.dtau[k], (pl.tau - mi.tau) / (2.0 * step));
    add_first("dV/drho[" + ks + "]", crit.gradient[k], (pl.V - mi.V) / (2.0 * step));
  }
  for (int k = 0; k < M; ++k) {
    const auto& pl = plus[static_cast<std::size_t>(k)];
    const auto& mi = minus[static_cast<std::size_t>(k)];
    const auto ks = std::to_string(k);
    const double h2 = step * step;
    add_second("d2D/drho[" + ks + "]2", bundle.d2D(k, k), (pl.D - 2.0 * center.D + mi.D) / h2);
    add_second("d2P/drho[" + ks + "]2", bundle.d2P(k, k), (pl.P - 2.0 * center.P + mi.P) / h2);
    add_second("d2tau/drho[" + ks + "]2", bundle.d2tau(k, k),
               (pl.tau - 2.0 * center.tau + mi.tau) / h2);
    add_second("d2V/drho[" + ks + "]2", crit.hessian(k, k),
               (pl.V - 2.0 * center.V + mi.V) / h2);
  }
  for (int k = 0; k < M; ++k) {
    for (int m = 0; m < k; ++m) {
      Eigen::VectorXd rpp = rho, rpm = rho, rmp = rho, rmm = rho;
      rpp[k] += step; rpp[m] += step;
      rpm[k] += step; rpm[m] -= step;
      rmp[k] -= step; rmp[m] += step;
      rmm[k] -= step; rmm[m] -= step;
      const Point pp = evaluate(model, rpp, criterion, gamma);
      const Point pm = evaluate(model, rpm, criterion, gamma);
      const Point mp = evaluate(model, rmp, criterion, gamma);
      const Point mm = evaluate(model, rmm, criterion, gamma);
      const double h4 = 4.0 * step * step;
      const std::string suffix = "/drho[" + std::to_string(k) + "]drho[" + std::to_string(m) + "]";
      add_second("d2D" + suffix, bundle.d2D(k, m), (pp.D - pm.D - mp.D + mm.D) / h4);
      add_second("d2P" + suffix, bundle.d2P(k, m), (pp.P - pm.P - mp.P + mm.P) / h4);
      add_second("d2tau" + suffix, bundle.d2tau(k, m), (pp.tau - pm.tau - mp.tau + mm.tau) / h4);
      add_second("d2V" + suffix, crit.hessian(k, m), (pp.V - pm.V - mp.V + mm.V) / h4);
    }
  }
  out.passed = out.max_first_rel < first_threshold && out.max_second_rel < second_threshold;
  return out;
}

std::string format_check_report(const CheckReport& report) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-26s %16s %16s %12s\n", "quantity", "analytic",
                "finite-diff", "rel-err");
  os << buf;
  for (const auto& row : report.rows) {
    std::snprintf(buf, sizeof buf, "%-26s %16.8e %16.8e %12.3e\n", row.quantity.c_str(),
                  row.analytic, row.finite_difference, row.rel_err);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "max relative error: first %.3e, second %.3e -> %s\n",
                report.max_first_rel, report.max_second_rel,
                report.passed ? "PASS" : "FAIL");
  os << buf;
  return os.str();
}

}  // namespace gamfit
