#include "gamfit/report.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gamfit/errors.hpp"

namespace gamfit {

namespace {

using json = nlohmann::ordered_json;

json vec_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vec_from_json(const json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

json mat_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd mat_from_json(const json& rows) {
  const auto r = static_cast<Eigen::Index>(rows.size());
  const auto c = r > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) {
      m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<double>();
    }
  }
  return m;
}

std::string basis_name(BasisKind b) {
  switch (b) {
    case BasisKind::bspline: return "spline";
    case BasisKind::tensor_bspline: return "tensor";
    case BasisKind::random_effect: return "random_effect";
  }
  return "?";
}

BasisKind basis_from_name(const std::string& s) {
  if (s == "spline") return BasisKind::bspline;
  if (s == "tensor") return BasisKind::tensor_bspline;
  if (s == "random_effect") return BasisKind::random_effect;
  throw data_error("unknown basis in report: " + s);
}

json term_to_json(const TermBuild& tb) {
  json j;
  j["type"] = basis_name(tb.spec.basis);
  j["covariates"] = tb.spec.covariates;
  j["dim"] = tb.spec.dim;
  j["dim2"] = tb.spec.dim2;
  j["shrinkage"] = tb.spec.shrinkage;
  j["by"] = tb.spec.by;
  j["col_start"] = tb.col_start;
  j["col_count"] = tb.col_count;
  j["penalty_indices"] = tb.penalty_indices;
  j["knots1"] = vec_to_json(tb.knots1);
  j["knots2"] = vec_to_json(tb.knots2);
  j["constraint_v"] = vec_to_json(tb.constraint_v);
  j["levels"] = tb.levels;
  return j;
}

TermBuild term_from_json(const json& j) {
  TermBuild tb;
  tb.spec.basis = basis_from_name(j.at("type").get<std::string>());
  tb.spec.covariates = j.at("covariates").get<std::vector<std::string>>();
  tb.spec.dim = j.at("dim").get<int>();
  tb.spec.dim2 = j.at("dim2").get<int>();
  tb.spec.shrinkage = j.at("shrinkage").get<bool>();
  tb.spec.by = j.at("by").get<std::string>();
  tb.col_start = j.at("col_start").get<int>();
  tb.col_count = j.at("col_count").get<int>();
  tb.penalty_indices = j.at("penalty_indices").get<std::vector<int>>();
  tb.knots1 = vec_from_json(j.at("knots1"));
  tb.knots2 = vec_from_json(j.at("knots2"));
  tb.constraint_v = vec_from_json(j.at("constraint_v"));
  tb.levels = j.at("levels").get<std::vector<std::string>>();
  return tb;
}

}  // namespace

FitReport build_report(const FitConfig& cfg, const AssembledModel& model,
                       const OptResult& res) {
  FitReport r;
  r.response = cfg.response;
  r.family = model.family.name();
  r.link = link_name(model.link.kind);
  r.has_scale = model.family.scale_known;
  r.scale = model.family.scale;
  r.offset_col = cfg.offset_col;
  r.weight_col = cfg.weight_col;
  r.criterion = cfg.criterion;
  r.gamma = cfg.gamma;
  r.n = model.n;
  r.q = model.q;
  r.M = model.M;
  r.beta = res.fitted.beta;
  r.cov_factor = res.fitted.decomp.P;
  r.rho = res.rho_hat;
  r.lambda = res.fitted.lambda;
  r.terms = model.terms;
  for (const auto& tb : model.terms) r.term_labels.push_back(tb.spec.label());
  r.edf_terms = res.edf_terms;
  r.edf_parametric = res.edf_parametric;
  r.edf_total = res.fitted.decomp.trace_influence();
  r.deviance = res.fitted.deviance;
  r.pearson = pearson_stat(model.family, model.y, res.fitted.mu, model.omega);
  r.scale_estimate = model.family.scale_known
                         ? model.family.scale
                         : r.pearson / (static_cast<double>(model.n) - r.edf_total);
  r.criterion_value = res.criterion.value;
  r.grad_norm = res.certificate.grad_norm;
  r.min_hessian_eig = res.certificate.min_hessian_eig;
  r.criterion_gradient = res.criterion.gradient;
  r.converged = res.converged;
  r.outer_iterations = res.outer_iterations;
  r.pirls_iterations = res.fitted.iterations;
  r.dropped_parameters = res.certificate.dropped;
  r.rank_dropped_columns = res.fitted.decomp.dropped;
  r.se.resize(model.q);
  for (int j = 0; j < model.q; ++j) {
    r.se[j] = std::sqrt(r.scale_estimate) * r.cov_factor.row(j).norm();
  }
  return r;
}

std::string report_to_json(const FitReport& r) {
  json j;
  j["response"] = r.response;
  j["family"] = r.family;
  j["link"] = r.link;
  j["has_scale"] = r.has_scale;
  j["scale"] = r.scale;
  j["offset"] = r.offset_col;
  j["weights"] = r.weight_col;
  j["criterion"] = r.criterion;
  j["gamma"] = r.gamma;
  j["n"] = r.n;
  j["q"] = r.q;
  j["M"] = r.M;
  j["converged"] = r.converged;
  j["outer_iterations"] = r.outer_iterations;
  j["pirls_iterations"] = r.pirls_iterations;
  j["deviance"] = r.deviance;
  j["pearson"] = r.pearson;
  j["scale_estimate"] = r.scale_estimate;
  j["criterion_value"] = r.criterion_value;
  j["criterion_gradient"] = vec_to_json(r.criterion_gradient);
  j["grad_norm"] = r.grad_norm;
  j["min_hessian_eig"] = r.min_hessian_eig;
  j["edf_total"] = r.edf_total;
  j["edf_parametric"] = r.edf_parametric;
  j["edf_terms"] = vec_to_json(r.edf_terms);
  j["term_labels"] = r.term_labels;
  j["rho"] = vec_to_json(r.rho);
  j["lambda"] = vec_to_json(r.lambda);
  j["dropped_parameters"] = r.dropped_parameters;
  j["rank_dropped_columns"] = r.rank_dropped_columns;
  j["beta"] = vec_to_json(r.beta);
  j["se"] = vec_to_json(r.se);
  j["cov_factor"] = mat_to_json(r.cov_factor);
  json terms = json::array();
  for (const auto& tb : r.terms) terms.push_back(term_to_json(tb));
  j["terms"] = std::move(terms);
  return j.dump(2) + "\n";
}

FitReport report_from_json(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw data_error(origin + ": " + e.what());
  }
  FitReport r;
  try {
    r.response = j.at("response").get<std::string>();
    r.family = j.at("family").get<std::string>();
    r.link = j.at("link").get<std::string>();
    r.has_scale = j.at("has_scale").get<bool>();
    r.scale = j.at("scale").get<double>();
    r.offset_col = j.at("offset").get<std::string>();
    r.weight_col = j.at("weights").get<std::string>();
    r.criterion = j.at("criterion").get<std::string>();
    r.gamma = j.at("gamma").get<double>();
    r.n = j.at("n").get<int>();
    r.q = j.at("q").get<int>();
    r.M = j.at("M").get<int>();
    r.converged = j.at("converged").get<bool>();
    r.outer_iterations = j.at("outer_iterations").get<int>();
    r.pirls_iterations = j.at("pirls_iterations").get<int>();
    r.deviance = j.at("deviance").get<double>();
    r.pearson = j.at("pearson").get<double>();
    r.scale_estimate = j.at("scale_estimate").get<double>();
    r.criterion_value = j.at("criterion_value").get<double>();
    r.criterion_gradient = vec_from_json(j.at("criterion_gradient"));
    r.grad_norm = j.at("grad_norm").get<double>();
    r.min_hessian_eig = j.at("min_hessian_eig").get<double>();
    r.edf_total = j.at("edf_total").get<double>();
    r.edf_parametric = j.at("edf_parametric").get<double>();
    r.edf_terms = vec_from_json(j.at("edf_terms"));
    r.term_labels = j.at("term_labels").get<std::vector<std::string>>();
    r.rho = vec_from_json(j.at("rho"));
    r.lambda = vec_from_json(j.at("lambda"));
    r.dropped_parameters = j.at("dropped_parameters").get<std::vector<int>>();
    r.rank_dropped_columns = j.at("rank_dropped_columns").get<std::vector<int>>();
    r.beta = vec_from_json(j.at("beta"));
    r.se = vec_from_json(j.at("se"));
    r.cov_factor = mat_from_json(j.at("cov_factor"));
    for (const auto& tj : j.at("terms")) r.terms.push_back(term_from_json(tj));
  } catch (const json::exception& e) {
    throw data_error(origin + ": malformed report (" + std::string(e.what()) + ")");
  }
  return r;
}

void write_report(const std::string& path, const FitReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write " + path);
  out << report_to_json(report);
}

FitReport load_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open report " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return report_from_json(ss.str(), path);
}

Predictions predict(const FitReport& report, const DataTable& table) {
  const Family family = family_from_name(report.family,
                                         report.has_scale
                                             ? std::optional<double>(report.scale)
                                             : std::nullopt);
  const Link link = link_from_name(report.link);
  Predictions out;
  out.eta = Eigen::VectorXd::Constant(table.rows(), report.beta[0]);
  out.extrapolated.assign(static_cast<std::size_t>(table.rows()), false);
  for (const auto& tb : report.terms) {
    std::vector<bool> ex;
    const Eigen::MatrixXd cols = term_columns(tb, table, &ex);
    out.eta.noalias() += cols * report.beta.segment(tb.col_start, tb.col_count);
    for (std::size_t i = 0; i < ex.size(); ++i) {
      if (ex[i]) out.extrapolated[i] = true;
    }
  }
  if (!report.offset_col.empty()) {
    if (!table.has(report.offset_col)) {
      throw data_error("prediction data lacks the offset column '" + report.offset_col + "'");
    }
    out.eta += table.numeric(report.offset_col);
  }
  out.mu.resize(out.eta.size());
  for (Eigen::Index i = 0; i < out.eta.size(); ++i) out.mu[i] = link.inverse(out.eta[i]);
  out.mu = clip_mu(family, link, out.mu);
  return out;
}

std::vector<std::string> write_term_grids(const FitReport& report, const std::string& out_dir,
                                          int points) {
  std::vector<std::string> written;
  for (std::size_t t = 0; t < report.terms.size(); ++t) {
    const TermBuild& tb = report.terms[t];
    const Eigen::VectorXd block = report.beta.segment(tb.col_start, tb.col_count);
    const Eigen::MatrixXd covf = report.cov_factor.middleRows(tb.col_start, tb.col_count);
    std::string label = tb.spec.label();
    for (auto& ch : label) {
      if (ch == '(' || ch == ')' || ch == ',' || ch == ':') ch = '_';
    }
    const std::string path = out_dir + "/term_" + std::to_string(t) + "_" + label + ".csv";

    DataTable grid;
    if (tb.spec.basis == BasisKind::bspline) {
      const double lo = tb.knots1[3];
      const double hi = tb.knots1[tb.spec.dim];
      Eigen::VectorXd x(points);
      for (int i = 0; i < points; ++i) {
        x[i] = lo + (hi - lo) * static_cast<double>(i) / (points - 1);
      }
      grid.add_numeric(tb.spec.covariates[0], x);
      if (!tb.spec.by.empty()) grid.add_numeric(tb.spec.by, Eigen::VectorXd::Ones(points));
    } else if (tb.spec.basis == BasisKind::tensor_bspline) {
      const int side = 20;
      const double lo1 = tb.knots1[3], hi1 = tb.knots1[tb.spec.dim];
      const int k2 = tb.spec.dim2 > 0 ? tb.spec.dim2 : tb.spec.dim;
      const double lo2 = tb.knots2[3], hi2 = tb.knots2[k2];
      Eigen::VectorXd x1(side * side), x2(side * side);
      for (int i = 0; i < side; ++i) {
        for (int j = 0; j < side; ++j) {
          x1[i * side + j] = lo1 + (hi1 - lo1) * static_cast<double>(i) / (side - 1);
          x2[i * side + j] = lo2 + (hi2 - lo2) * static_cast<double>(j) / (side - 1);
        }
      }
      grid.add_numeric(tb.spec.covariates[0], x1);
      grid.add_numeric(tb.spec.covariates[1], x2);
      if (!tb.spec.by.empty()) {
        grid.add_numeric(tb.spec.by, Eigen::VectorXd::Ones(side * side));
      }
    } else {
      grid.add_factor(tb.spec.covariates[0], tb.levels);
    }

    const Eigen::MatrixXd cols = term_columns(tb, grid);
    const Eigen::VectorXd fit = cols * block;
    Eigen::VectorXd se(cols.rows());
    for (Eigen::Index i = 0; i < cols.rows(); ++i) {
      se[i] = std::sqrt(report.scale_estimate) * (cols.row(i) * covf).norm();
    }
    std::vector<std::string> header;
    std::vector<Eigen::VectorXd> columns;
    for (const auto& cov : tb.spec.covariates) {
      header.push_back(cov);
      columns.push_back(grid.column(cov).values);
    }
    header.push_back("fit");
    columns.push_back(fit);
    header.push_back("se");
    columns.push_back(se);
    write_csv(path, header, columns);
    written.push_back(path);
  }
  return written;
}

}  // namespace gamfit
