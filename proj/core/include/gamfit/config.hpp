#ifndef GAMFIT_CONFIG_HPP
#define GAMFIT_CONFIG_HPP

#include <string>
#include <vector>

#include "gamfit/optimizer.hpp"

namespace gamfit {

// CLI exit codes (stable, documented in the README)
enum ExitCode {
  exit_ok = 0,
  exit_config_error = 2,
  exit_data_error = 3,
  exit_no_convergence = 4,
  exit_check_failure = 5,
};

struct FitConfig {
  std::string data_path;
  std::string response;
  std::string family = "gaussian";
  std::string link;  // empty: canonical default for the family
  bool has_scale = false;
  double scale = 1.0;
  std::vector<TermSpec> terms;
  std::string offset_col;
  std::string weight_col;
  std::string criterion = "gcv";
  double gamma = 1.0;
  std::string output = "fit.json";
  bool write_grids = true;
  OptimizerConfig optimizer;  // criterion/gamma filled from the fields above
};

// Parse the JSON fit configuration; throws config_error with a message
// naming the offending key.
FitConfig load_fit_config(const std::string& path);
FitConfig parse_fit_config(const std::string& text, const std::string& origin);

std::string default_link_name(const std::string& family);

// Assemble straight from a config (reads the CSV, resolves family/link).
AssembledModel model_from_config(const FitConfig& cfg, DataTable& table_out);

}  // namespace gamfit

#endif
