#include "gamfit/simulate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gamfit/errors.hpp"

namespace gamfit {

namespace {
using json = nlohmann::ordered_json;
}

ScenarioKind scenario_from_name(const std::string& name) {
  if (name == "bench41") return ScenarioKind::bench41;
  if (name == "gamm42") return ScenarioKind::gamm42;
  if (name == "concurvity43") return ScenarioKind::concurvity43;
  throw config_error("unknown scenario: " + name);
}

FamilyCase family_case_from_name(const std::string& name) {
  if (name == "binary") return FamilyCase::binary;
  if (name == "poisson") return FamilyCase::poisson;
  if (name == "gamma") return FamilyCase::gamma;
  if (name == "quasi") return FamilyCase::quasi;
  throw config_error("unknown family case: " + name);
}

std::string scenario_name(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::bench41: return "bench41";
    case ScenarioKind::gamm42: return "gamm42";
    case ScenarioKind::concurvity43: return "concurvity43";
  }
  return "?";
}

std::string family_case_name(FamilyCase c) {
  switch (c) {
    case FamilyCase::binary: return "binary";
    case FamilyCase::poisson: return "poisson";
    case FamilyCase::gamma: return "gamma";
    case FamilyCase::quasi: return "quasi";
  }
  return "?";
}

double bench_f1(double x) { return 2.0 * std::sin(M_PI * x); }
double bench_f2(double x) { return std::exp(2.0 * x); }
double bench_f3(double x) {
  return std::pow(x, 11.0) * std::pow(10.0 * (1.0 - x), 6.0) / 5.0 +
         1e4 * std::pow(x, 3.0) * std::pow(1.0 - x, 10.0);
}
double concurvity_f(double d) { return (d - 0.5 + 10.0 * std::pow(d - 0.5, 3.0)) * 10.0; }

Family case_family(FamilyCase c) {
  switch (c) {
    case FamilyCase::binary: return Family::binomial();
    case FamilyCase::poisson: return Family::poisson();
    case FamilyCase::gamma: return Family::gamma();
    case FamilyCase::quasi: return Family::quasi_var_mu();
  }
  return Family::gaussian();
}

Link case_link(FamilyCase c) {
  return c == FamilyCase::binary ? Link{LinkKind::logit} : Link{LinkKind::log};
}

CriterionKind case_criterion(FamilyCase c) {
  // AIC where the scale is known, GCV otherwise
  return (c == FamilyCase::binary || c == FamilyCase::poisson) ? CriterionKind::aic
                                                               : CriterionKind::gcv;
}

namespace {

// case scaling of the unscaled linear predictor onto the link scale
double case_eta(FamilyCase c, double etat) {
  switch (c) {
    case FamilyCase::binary: return (etat - 5.0) / 2.5;
    case FamilyCase::poisson:
    case FamilyCase::gamma: return etat / 7.0;
    case FamilyCase::quasi: return etat / 6.0;
  }
  return etat;
}

// case-specific mean of the response given the unscaled linear predictor
double case_mu(FamilyCase c, double etat) {
  const double eta = case_eta(c, etat);
  return c == FamilyCase::binary ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta);
}

double case_sample(FamilyCase c, double mu, Rng& rng) {
  switch (c) {
    case FamilyCase::binary: return rng.bernoulli(mu) ? 1.0 : 0.0;
    case FamilyCase::poisson: return static_cast<double>(rng.poisson(mu));
    case FamilyCase::gamma: return rng.exponential(mu);  // shape 1 = scale parameter 1
    case FamilyCase::quasi: return rng.truncated_normal_nonneg(mu, 2.0 * std::sqrt(mu));
  }
  return mu;
}

double case_dev_resid(FamilyCase c, double y, double mu) {
  return case_family(c).dev_resid(y, mu, 1.0);
}

GeneratedData generate(FamilyCase c, int n, Rng& rng, const Eigen::VectorXd* group_effect,
                       const Eigen::VectorXd* group_index) {
  GeneratedData out;
  Eigen::VectorXd x1(n), x2(n), x3(n), x4(n), y(n);
  out.mu_true.resize(n);
  out.eta_true.resize(n);
  for (int i = 0; i < n; ++i) x1[i] = rng.uniform();
  for (int i = 0; i < n; ++i) x2[i] = rng.uniform();
  for (int i = 0; i < n; ++i) x3[i] = rng.uniform();
  for (int i = 0; i < n; ++i) x4[i] = rng.uniform();
  for (int i = 0; i < n; ++i) {
    double etat = bench_f1(x1[i]) + bench_f2(x2[i]) + bench_f3(x3[i]);
    out.eta_true[i] = case_eta(c, etat);  // link-scale truth, group effects excluded
    if (group_effect) etat += (*group_effect)[static_cast<Eigen::Index>((*group_index)[i])];
    const double mu = case_mu(c, etat);
    out.mu_true[i] = mu;
    y[i] = case_sample(c, mu, rng);
  }
  out.table.add_numeric("x1", x1);
  out.table.add_numeric("x2", x2);
  out.table.add_numeric("x3", x3);
  out.table.add_numeric("x4", x4);
  if (group_index) {
    out.table.add_numeric("group", *group_index);
  }
  out.table.add_numeric("y", y);
  return out;
}

}  // namespace

GeneratedData gen_bench41(FamilyCase c, int n, Rng& rng) {
  return generate(c, n, rng, nullptr, nullptr);
}

GeneratedData gen_gamm42(FamilyCase c, int n, Rng& rng, double sigma_b) {
  if (n % 10 != 0) throw config_error("gamm42 needs n divisible by the group size 10");
  const int G = n / 10;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(G);
  if (sigma_b > 0.0) {
    for (int j = 0; j < G; ++j) b[j] = rng.normal(0.0, sigma_b);
  }
  Eigen::VectorXd idx(n);
  for (int i = 0; i < n; ++i) idx[i] = static_cast<double>(i / 10);
  return generate(c, n, rng, &b, &idx);
}

GeneratedData gen_concurvity43(int n, Rng& rng) {
  if (n < 100) throw config_error("concurvity43 needs n >= 100");
  GeneratedData out;
  Eigen::VectorXd x(n), z(n), d(n), y(n);
  out.mu_true.resize(n);
  out.eta_true.resize(n);
  for (int i = 0; i < n; ++i) x[i] = rng.uniform();
  for (int i = 0; i < n; ++i) z[i] = rng.uniform();
  for (int i = 0; i < n; ++i) {
    d[i] = x[i] * x[i] * x[i] + rng.normal() * 0.01;
    const double f = concurvity_f(d[i]);
    const double p = 1.0 / (1.0 + std::exp(-f));
    out.eta_true[i] = f;
    out.mu_true[i] = p;
    y[i] = rng.bernoulli(p) ? 1.0 : 0.0;
  }
  out.table.add_numeric("x", x);
  out.table.add_numeric("z", z);
  out.table.add_numeric("d", d);
  out.table.add_numeric("y", y);
  return out;
}

std::vector<TermSpec> bench41_terms() {
  std::vector<TermSpec> specs;
  for (const char* c : {"x1", "x2", "x3", "x4"}) {
    TermSpec s;
    s.covariates = {c};
    s.dim = 10;
    specs.push_back(s);
  }
  return specs;
}

std::vector<TermSpec> gamm42_terms() {
  auto specs = bench41_terms();
  TermSpec re;
  re.covariates = {"group"};
  re.basis = BasisKind::random_effect;
  specs.push_back(re);
  return specs;
}

std::vector<TermSpec> concurvity43_terms() {
  std::vector<TermSpec> specs;
  TermSpec te;
  te.covariates = {"x", "z"};
  te.basis = BasisKind::tensor_bspline;
  te.dim = 6;
  te.shrinkage = true;
  specs.push_back(te);
  TermSpec s;
  s.covariates = {"d"};
  s.dim = 10;
  s.shrinkage = true;
  specs.push_back(s);
  return specs;
}

Eigen::VectorXd predict_mu(const AssembledModel& model, const Eigen::VectorXd& beta,
                           const DataTable& newdata, bool skip_random_effects) {
  Eigen::VectorXd eta = Eigen::VectorXd::Constant(newdata.rows(), beta[0]);
  for (const auto& tb : model.terms) {
    if (skip_random_effects && tb.spec.basis == BasisKind::random_effect) continue;
    const Eigen::MatrixXd cols = term_columns(tb, newdata);
    eta.noalias() += cols * beta.segment(tb.col_start, tb.col_count);
  }
  Eigen::VectorXd mu(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) mu[i] = model.link.inverse(eta[i]);
  return clip_mu(model.family, model.link, mu);
}

namespace {

DataTable fresh_covariates(int n_test, Rng& rng, Eigen::VectorXd& mu_true, FamilyCase c) {
  DataTable t;
  Eigen::VectorXd x1(n_test), x2(n_test), x3(n_test), x4(n_test);
  mu_true.resize(n_test);
  for (int i = 0; i < n_test; ++i) {
    x1[i] = rng.uniform();
    x2[i] = rng.uniform();
    x3[i] = rng.uniform();
    x4[i] = rng.uniform();
    mu_true[i] = case_mu(c, bench_f1(x1[i]) + bench_f2(x2[i]) + bench_f3(x3[i]));
  }
  t.add_numeric("x1", x1);
  t.add_numeric("x2", x2);
  t.add_numeric("x3", x3);
  t.add_numeric("x4", x4);
  return t;
}

}  // namespace

double predictive_deviance_loss(const AssembledModel& model, const Eigen::VectorXd& beta,
                                FamilyCase c, int n_test, Rng& rng) {
  Eigen::VectorXd mu_true;
  const DataTable t = fresh_covariates(n_test, rng, mu_true, c);
  const Eigen::VectorXd mu_hat = predict_mu(model, beta, t, true);
  double dev_model = 0.0, dev_truth = 0.0;
  for (int i = 0; i < n_test; ++i) {
    const double y = case_sample(c, mu_true[i], rng);
    dev_model += case_dev_resid(c, y, mu_hat[i]);
    dev_truth += case_dev_resid(c, y, mu_true[i]);
  }
  return (dev_model - dev_truth) / static_cast<double>(n_test);
}

double predictive_mean_mse(const AssembledModel& model, const Eigen::VectorXd& beta,
                           FamilyCase c, int n_test, Rng& rng) {
  Eigen::VectorXd mu_true;
  const DataTable t = fresh_covariates(n_test, rng, mu_true, c);
  const Eigen::VectorXd mu_hat = predict_mu(model, beta, t, true);
  return (mu_hat - mu_true).squaredNorm() / static_cast<double>(n_test);
}

MetricSummary summarize(std::vector<double> values) {
  MetricSummary s;
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  auto q = [&](double p) {
    const double idx = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(idx));
    const auto hi = static_cast<std::size_t>(std::ceil(idx));
    return values[lo] + (values[hi] - values[lo]) * (idx - std::floor(idx));
  };
  s.min = values.front();
  s.q25 = q(0.25);
  s.median = q(0.5);
  s.q75 = q(0.75);
  s.max = values.back();
  double acc = 0.0;
  for (double v : values) acc += v;
  s.mean = acc / static_cast<double>(values.size());
  return s;
}

StudyResult run_study(const SimScenario& scenario, const OptimizerConfig& overrides) {
  StudyResult study;
  study.scenario = scenario;

  for (int rep = 0; rep < scenario.replicates; ++rep) {
    Rng data_rng(scenario.rng_seed, 2 * static_cast<std::uint64_t>(rep) + 1);
    Rng test_rng(scenario.rng_seed, 2 * static_cast<std::uint64_t>(rep) + 2);
    ReplicateResult rr;
    rr.replicate = rep;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      GeneratedData data;
      std::vector<TermSpec> specs;
      Family family = case_family(scenario.family_case);
      Link link = case_link(scenario.family_case);
      CriterionKind criterion = case_criterion(scenario.family_case);
      switch (scenario.kind) {
        case ScenarioKind::bench41:
          data = gen_bench41(scenario.family_case, scenario.n, data_rng);
          specs = bench41_terms();
          break;
        case ScenarioKind::gamm42:
          data = gen_gamm42(scenario.family_case, scenario.n, data_rng);
          specs = gamm42_terms();
          break;
        case ScenarioKind::concurvity43:
          data = gen_concurvity43(scenario.n, data_rng);
          specs = concurvity43_terms();
          family = Family::binomial();
          link = Link{LinkKind::logit};
          criterion = CriterionKind::aic;
          break;
      }
      auto model = assemble(specs, data.table, family, link, "y");
      OptimizerConfig cfg = overrides;
      cfg.criterion = criterion;
      cfg.gamma = scenario.gamma;
      auto res = optimize(model, cfg);
      rr.converged = res.converged;
      rr.criterion_value = res.criterion.value;
      rr.edf = res.edf_terms;
      if (study.term_labels.empty()) {
        for (const auto& tb : model.terms) study.term_labels.push_back(tb.spec.label());
      }
      if (scenario.kind != ScenarioKind::concurvity43) {
        rr.predictive_deviance_loss = predictive_deviance_loss(
            model, res.fitted.beta, scenario.family_case, scenario.n_test, test_rng);
        rr.mse = predictive_mean_mse(model, res.fitted.beta, scenario.family_case,
                                     scenario.n_test, test_rng);
      } else {
        // concurvity metric: mean squared error of the centered d-term
        // against the centered truth on the training rows
        const auto& tb = model.terms[1];
        const Eigen::MatrixXd cols = term_columns(tb, data.table);
        Eigen::VectorXd fhat = cols * res.fitted.beta.segment(tb.col_start, tb.col_count);
        Eigen::VectorXd ftrue(model.n);
        for (int i = 0; i < model.n; ++i) ftrue[i] = concurvity_f(data.table.numeric("d")[i]);
        fhat.array() -= fhat.mean();
        ftrue.array() -= ftrue.mean();
        rr.mse = (fhat - ftrue).squaredNorm() / static_cast<double>(model.n);
        rr.predictive_deviance_loss = rr.mse;
      }
      if (!rr.converged) {
        rr.error = "no convergence certificate";
        ++study.failures;
      }
    } catch (const std::exception& e) {
      rr.converged = false;
      rr.error = e.what();
      ++study.failures;
    }
    rr.cpu_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    study.replicates.push_back(std::move(rr));
  }

  std::vector<double> loss, mse, cpu;
  for (const auto& rr : study.replicates) {
    if (!rr.converged) continue;
    loss.push_back(rr.predictive_deviance_loss);
    mse.push_back(rr.mse);
    cpu.push_back(rr.cpu_seconds);
  }
  study.loss = summarize(loss);
  study.mse = summarize(mse);
  study.cpu = summarize(cpu);
  return study;
}

namespace {

json summary_json(const MetricSummary& s) {
  return json{{"min", s.min}, {"q25", s.q25},   {"median", s.median},
              {"q75", s.q75}, {"max", s.max},   {"mean", s.mean}};
}

}  // namespace

void write_study_csv(const std::string& path, const StudyResult& study) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write " + path);
  out << "replicate,converged,predictive_deviance_loss,mse,cpu_seconds,criterion_value";
  for (const auto& label : study.term_labels) out << ",edf_" << label;
  out << ",error\n";
  out.precision(12);
  for (const auto& rr : study.replicates) {
    out << rr.replicate << ',' << (rr.converged ? 1 : 0) << ','
        << rr.predictive_deviance_loss << ',' << rr.mse << ',' << rr.cpu_seconds << ','
        << rr.criterion_value;
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(study.term_labels.size()); ++j) {
      out << ',';
      if (rr.edf.size() > j) out << rr.edf[j];
    }
    out << ',' << rr.error << '\n';
  }
}

void write_study_json(const std::string& path, const StudyResult& study) {
  json j;
  j["scenario"] = scenario_name(study.scenario.kind);
  j["family_case"] = family_case_name(study.scenario.family_case);
  j["n"] = study.scenario.n;
  j["replicates"] = study.scenario.replicates;
  j["seed"] = study.scenario.rng_seed;
  j["failures"] = study.failures;
  j["predictive_deviance_loss"] = summary_json(study.loss);
  j["mse"] = summary_json(study.mse);
  j["cpu_seconds"] = summary_json(study.cpu);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

std::string format_study_table(const StudyResult& study) {
  std::ostringstream os;
  os << "scenario " << scenario_name(study.scenario.kind);
  if (study.scenario.kind != ScenarioKind::concurvity43) {
    os << " / " << family_case_name(study.scenario.family_case);
  }
  os << "  n=" << study.scenario.n << "  replicates=" << study.scenario.replicates
     << "  seed=" << study.scenario.rng_seed << "\n";
  os << "failures: " << study.failures << "\n";
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-26s %10s %10s %10s %10s %10s %10s\n", "metric", "min",
                "q25", "median", "q75", "max", "mean");
  os << buf;
  auto row = [&](const char* name, const MetricSummary& s) {
    std::snprintf(buf, sizeof buf, "%-26s %10.4g %10.4g %10.4g %10.4g %10.4g %10.4g\n", name,
                  s.min, s.q25, s.median, s.q75, s.max, s.mean);
    os << buf;
  };
  row("predictive_deviance_loss", study.loss);
  row("mse", study.mse);
  row("cpu_seconds", study.cpu);
  return os.str();
}

}  // namespace gamfit
