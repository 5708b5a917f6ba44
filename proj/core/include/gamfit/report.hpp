#ifndef GAMFIT_REPORT_HPP
#define GAMFIT_REPORT_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "gamfit/config.hpp"

namespace gamfit {

// Self-contained description of a fitted model: enough basis metadata
// (knots, constraint vectors, factor levels) to rebuild the design on
// new data without the training file.
struct FitReport {
  std::string response;
  std::string family;
  std::string link;
  bool has_scale = false;
  double scale = 1.0;
  std::string offset_col;
  std::string weight_col;
  std::string criterion;
  double gamma = 1.0;

  int n = 0, q = 0, M = 0;
  Eigen::VectorXd beta;
  Eigen::VectorXd se;
  Eigen::MatrixXd cov_factor;  // covariance = scale_estimate * cov_factor cov_factor'
  Eigen::VectorXd rho;
  Eigen::VectorXd lambda;
  std::vector<TermBuild> terms;
  std::vector<std::string> term_labels;
  Eigen::VectorXd edf_terms;
  double edf_parametric = 0.0;
  double edf_total = 0.0;
  double deviance = 0.0;
  double pearson = 0.0;
  double scale_estimate = 0.0;
  double criterion_value = 0.0;
  double grad_norm = 0.0;
  double min_hessian_eig = 0.0;
  Eigen::VectorXd criterion_gradient;
  bool converged = false;
  int outer_iterations = 0;
  int pirls_iterations = 0;
  std::vector<int> dropped_parameters;   // smoothing parameters at working infinity
  std::vector<int> rank_dropped_columns; // columns rank-dropped in the final fit
};

FitReport build_report(const FitConfig& cfg, const AssembledModel& model,
                       const OptResult& res);

std::string report_to_json(const FitReport& report);
FitReport report_from_json(const std::string& text, const std::string& origin);
void write_report(const std::string& path, const FitReport& report);
FitReport load_report(const std::string& path);

struct Predictions {
  Eigen::VectorXd eta;
  Eigen::VectorXd mu;
  std::vector<bool> extrapolated;
};
// Rebuild the design on new data and evaluate the linear predictor and
// mean. Requires the offset column in the new table when the model was
// fitted with one.
Predictions predict(const FitReport& report, const DataTable& table);

// Per-term evaluation grids with standard-error bands, written as CSV
// files named term_<index>_<label>.csv under out_dir.
std::vector<std::string> write_term_grids(const FitReport& report, const std::string& out_dir,
                                          int points = 200);

}  // namespace gamfit

#endif
