// gamfit: fit generalized additive models with direct smoothness
// selection, predict from saved fits, run the simulation studies and
// check analytic derivatives against finite differences.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "gamfit/check.hpp"
#include "gamfit/errors.hpp"
#include "gamfit/report.hpp"
#include "gamfit/simulate.hpp"

namespace {

using namespace gamfit;

int cmd_fit(const std::string& config_path, const std::string& output_override,
            const std::string& grid_dir) {
  FitConfig cfg = load_fit_config(config_path);
  if (!output_override.empty()) cfg.output = output_override;
  DataTable table;
  AssembledModel model = model_from_config(cfg, table);
  OptResult res = optimize(model, cfg.optimizer);
  FitReport report = build_report(cfg, model, res);
  write_report(cfg.output, report);

  std::printf("fit: %s family, %s link, criterion %s (gamma %.3g)\n", report.family.c_str(),
              report.link.c_str(), report.criterion.c_str(), report.gamma);
  std::printf("n=%d q=%d M=%d  deviance=%.6g  scale=%.6g\n", report.n, report.q, report.M,
              report.deviance, report.scale_estimate);
  std::printf("criterion value %.8g, |grad| %.3e, min Hessian eig %.3e\n",
              report.criterion_value, report.grad_norm, report.min_hessian_eig);
  for (std::size_t t = 0; t < report.term_labels.size(); ++t) {
    std::printf("  %-18s edf %8.4f  rho %8.4f\n", report.term_labels[t].c_str(),
                report.edf_terms[static_cast<Eigen::Index>(t)],
                report.rho[static_cast<Eigen::Index>(
                    report.terms[t].penalty_indices.front())]);
  }
  if (!report.rank_dropped_columns.empty()) {
    std::printf("rank-dropped columns in the final fit: %zu\n",
                report.rank_dropped_columns.size());
  }
  if (cfg.write_grids) {
    const std::string dir = grid_dir.empty()
                                ? std::filesystem::path(cfg.output).parent_path().string()
                                : grid_dir;
    const auto files = write_term_grids(report, dir.empty() ? "." : dir);
    for (const auto& f : files) std::printf("wrote %s\n", f.c_str());
  }
  std::printf("wrote %s\n", cfg.output.c_str());
  if (!res.converged) {
    std::fprintf(stderr, "fit did not reach the convergence certificate (|grad| %.3e)\n",
                 report.grad_norm);
    return exit_no_convergence;
  }
  return exit_ok;
}

int cmd_predict(const std::string& model_path, const std::string& data_path,
                const std::string& output) {
  const FitReport report = load_report(model_path);
  const DataTable table = read_csv(data_path);
  const Predictions pred = predict(report, table);
  std::vector<std::string> header = {"row", "eta", "mu", "extrapolated"};
  Eigen::VectorXd row(pred.eta.size()), extr(pred.eta.size());
  for (Eigen::Index i = 0; i < pred.eta.size(); ++i) {
    row[i] = static_cast<double>(i);
    extr[i] = pred.extrapolated[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
  }
  write_csv(output, header, {row, pred.eta, pred.mu, extr});
  std::printf("wrote %s (%ld rows)\n", output.c_str(), static_cast<long>(pred.eta.size()));
  return exit_ok;
}

int cmd_simulate(const std::string& scenario, const std::string& family_case, int replicates,
                 std::uint64_t seed, int n, const std::string& out_dir) {
  SimScenario sc;
  sc.kind = scenario_from_name(scenario);
  sc.family_case = family_case_from_name(family_case);
  sc.replicates = replicates;
  sc.rng_seed = seed;
  if (n > 0) sc.n = n;
  const StudyResult study = run_study(sc);
  std::printf("%s", format_study_table(study).c_str());
  if (!study.term_labels.empty() && !study.replicates.empty() &&
      study.replicates.front().converged) {
    std::printf("first replicate edf:");
    for (std::size_t t = 0; t < study.term_labels.size(); ++t) {
      std::printf("  %s=%.3f", study.term_labels[t].c_str(),
                  study.replicates.front().edf[static_cast<Eigen::Index>(t)]);
    }
    std::printf("\n");
  }
  std::filesystem::create_directories(out_dir);
  const std::string stem = out_dir + "/study_" + scenario +
                           (sc.kind == ScenarioKind::concurvity43 ? "" : "_" + family_case);
  write_study_csv(stem + ".csv", study);
  write_study_json(stem + ".json", study);
  std::printf("wrote %s.csv and %s.json\n", stem.c_str(), stem.c_str());
  return study.failures == 0 ? exit_ok : exit_no_convergence;
}

int cmd_check_derivs(const std::string& config_path, const std::vector<double>& rho_in,
                     double step, double first_threshold, double second_threshold) {
  FitConfig cfg = load_fit_config(config_path);
  DataTable table;
  AssembledModel model = model_from_config(cfg, table);
  Eigen::VectorXd rho;
  if (rho_in.empty()) {
    rho = clamp_rho(initial_rho(model), cfg.optimizer.rho_bound);
  } else if (static_cast<int>(rho_in.size()) == model.M) {
    rho = Eigen::Map<const Eigen::VectorXd>(rho_in.data(),
                                            static_cast<Eigen::Index>(rho_in.size()));
  } else {
    throw config_error("--rho needs " + std::to_string(model.M) + " values");
  }
  const CheckReport report =
      check_derivatives(model, rho, cfg.optimizer.criterion, cfg.gamma, step, first_threshold,
                        second_threshold);
  std::printf("%s", format_check_report(report).c_str());
  return report.passed ? exit_ok : exit_check_failure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"generalized additive model fitting with direct smoothness selection"};
  app.require_subcommand(1);

  std::string config_path, output_override, grid_dir;
  auto* fit = app.add_subcommand("fit", "fit a model described by a JSON config");
  fit->add_option("--config", config_path, "JSON fit configuration")->required();
  fit->add_option("--output", output_override, "report path (overrides the config)");
  fit->add_option("--grid-dir", grid_dir, "directory for per-term plot grids");

  std::string model_path, data_path, pred_out = "predictions.csv";
  auto* pred = app.add_subcommand("predict", "evaluate a saved fit on new data");
  pred->add_option("--model", model_path, "fit report JSON")->required();
  pred->add_option("--data", data_path, "CSV with the prediction covariates")->required();
  pred->add_option("--output", pred_out, "output CSV path");

  std::string scenario, family_case = "poisson", sim_out = ".";
  int replicates = 1, sim_n = 0;
  std::uint64_t seed = 1;
  auto* sim = app.add_subcommand("simulate", "run a simulation study scenario");
  sim->add_option("scenario", scenario, "bench41, gamm42 or concurvity43")->required();
  sim->add_option("--case", family_case, "binary, poisson, gamma or quasi");
  sim->add_option("--replicates", replicates, "number of replicates");
  sim->add_option("--seed", seed, "RNG seed");
  sim->add_option("--n", sim_n, "sample size per replicate");
  sim->add_option("--out-dir", sim_out, "directory for study outputs");

  std::string check_config;
  std::vector<double> rho_values;
  double step = 1e-4, thr1 = 1e-4, thr2 = 1e-3;
  auto* chk = app.add_subcommand("check-derivs",
                                 "compare analytic derivatives with finite differences");
  chk->add_option("--config", check_config, "JSON fit configuration")->required();
  chk->add_option("--rho", rho_values, "log smoothing parameters at the probe point")
      ->delimiter(',');
  chk->add_option("--step", step, "finite difference step");
  chk->add_option("--threshold", thr1, "first-derivative relative error threshold");
  chk->add_option("--threshold2", thr2, "second-derivative relative error threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? gamfit::exit_ok : gamfit::exit_config_error;
  }

  try {
    if (*fit) return cmd_fit(config_path, output_override, grid_dir);
    if (*pred) return cmd_predict(model_path, data_path, pred_out);
    if (*sim) return cmd_simulate(scenario, family_case, replicates, seed, sim_n, sim_out);
    if (*chk) return cmd_check_derivs(check_config, rho_values, step, thr1, thr2);
  } catch (const gamfit::config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return gamfit::exit_config_error;
  } catch (const gamfit::data_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return gamfit::exit_data_error;
  } catch (const gamfit::convergence_error& e) {
    std::fprintf(stderr, "convergence failure: %s\n", e.what());
    return gamfit::exit_no_convergence;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return gamfit::exit_data_error;
  }
  return gamfit::exit_config_error;
}
