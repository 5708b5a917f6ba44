#ifndef GAMFIT_SIMULATE_HPP
#define GAMFIT_SIMULATE_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "gamfit/optimizer.hpp"
#include "gamfit/rng.hpp"

namespace gamfit {

enum class ScenarioKind { bench41, gamm42, concurvity43 };
enum class FamilyCase { binary, poisson, gamma, quasi };

ScenarioKind scenario_from_name(const std::string& name);
FamilyCase family_case_from_name(const std::string& name);
std::string scenario_name(ScenarioKind kind);
std::string family_case_name(FamilyCase c);

struct SimScenario {
  ScenarioKind kind = ScenarioKind::bench41;
  FamilyCase family_case = FamilyCase::poisson;
  int n = 400;
  int replicates = 1;
  std::uint64_t rng_seed = 1;
  int n_test = 10000;
  double gamma = 1.0;
};

// benchmark truth components on the unscaled linear predictor
double bench_f1(double x);
double bench_f2(double x);
double bench_f3(double x);
// concurvity truth on the logit scale
double concurvity_f(double d);

struct GeneratedData {
  DataTable table;
  Eigen::VectorXd mu_true;   // conditional means on the training rows
  Eigen::VectorXd eta_true;  // link-scale truth (excluding group effects)
};

GeneratedData gen_bench41(FamilyCase c, int n, Rng& rng);
GeneratedData gen_gamm42(FamilyCase c, int n, Rng& rng, double sigma_b = 2.0);
GeneratedData gen_concurvity43(int n, Rng& rng);

// family, link and the selection criterion used for each case (AIC for
// the known-scale cases, GCV otherwise)
Family case_family(FamilyCase c);
Link case_link(FamilyCase c);
CriterionKind case_criterion(FamilyCase c);

// model templates for the scenarios
std::vector<TermSpec> bench41_terms();
std::vector<TermSpec> gamm42_terms();
std::vector<TermSpec> concurvity43_terms();

// mean response on fresh covariates, random-effect terms set to zero
Eigen::VectorXd predict_mu(const AssembledModel& model, const Eigen::VectorXd& beta,
                           const DataTable& newdata, bool skip_random_effects = false);

// mean deviance of fresh test responses under the fitted means minus the
// same under the true means
double predictive_deviance_loss(const AssembledModel& model, const Eigen::VectorXd& beta,
                                FamilyCase c, int n_test, Rng& rng);
// mean squared error against the true conditional mean on fresh data
double predictive_mean_mse(const AssembledModel& model, const Eigen::VectorXd& beta,
                           FamilyCase c, int n_test, Rng& rng);

struct ReplicateResult {
  int replicate = 0;
  bool converged = false;
  double predictive_deviance_loss = 0.0;
  double mse = 0.0;
  double cpu_seconds = 0.0;
  double criterion_value = 0.0;
  Eigen::VectorXd edf;
  std::string error;
};

struct MetricSummary {
  double min = 0, q25 = 0, median = 0, q75 = 0, max = 0, mean = 0;
};
MetricSummary summarize(std::vector<double> values);

struct StudyResult {
  SimScenario scenario;
  std::vector<ReplicateResult> replicates;
  int failures = 0;
  MetricSummary loss, mse, cpu;
  std::vector<std::string> term_labels;
};

StudyResult run_study(const SimScenario& scenario,
                      const OptimizerConfig& overrides = OptimizerConfig());

void write_study_csv(const std::string& path, const StudyResult& study);
void write_study_json(const std::string& path, const StudyResult& study);
std::string format_study_table(const StudyResult& study);

}  // namespace gamfit

#endif
