#ifndef GAMFIT_CHECK_HPP
#define GAMFIT_CHECK_HPP

#include <string>
#include <vector>

#include "gamfit/optimizer.hpp"

namespace gamfit {

// One analytic-versus-finite-difference comparison row.
struct CheckRow {
  std::string quantity;  // e.g. "dD/drho[1]" or "d2V/drho[0]drho[2]"
  double analytic = 0.0;
  double finite_difference = 0.0;
  double rel_err = 0.0;
};

struct CheckReport {
  std::vector<CheckRow> rows;
  double max_first_rel = 0.0;
  double max_second_rel = 0.0;
  bool passed = false;
};

// Compare the analytic first and second derivatives of D, P, tau and the
// selection criterion against central finite differences of full refits
// at the given rho. Thresholds apply to the worst relative error of the
// first and second derivative groups respectively.
CheckReport check_derivatives(const AssembledModel& model, const Eigen::VectorXd& rho,
                              CriterionKind criterion, double gamma, double step = 1e-4,
                              double first_threshold = 1e-4, double second_threshold = 1e-3);

std::string format_check_report(const CheckReport& report);

}  // namespace gamfit

#endif
