#ifndef GAMFIT_SMOOTHS_HPP
#define GAMFIT_SMOOTHS_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "gamfit/data.hpp"
#include "gamfit/families.hpp"

namespace gamfit {

enum class BasisKind { bspline, tensor_bspline, random_effect };

struct TermSpec {
  std::vector<std::string> covariates;  // 1 name, or 2 for tensor terms
  BasisKind basis = BasisKind::bspline;
  int dim = 10;        // basis dimension (per margin for tensors)
  int dim2 = 0;        // second margin; defaults to dim when 0
  bool shrinkage = false;
  std::string by;      // variable-coefficient multiplier, empty if none
  std::string label() const;
};

// One quadratic penalty acting on a contiguous block of coefficients.
// `sqrt` has rank(S) columns and satisfies sqrt * sqrt' = block.
struct PenaltyBlock {
  Eigen::MatrixXd block;
  Eigen::MatrixXd sqrt;
  int offset = 0;
  int rank = 0;

  int dim() const { return static_cast<int>(block.rows()); }
  double quad_form(const Eigen::VectorXd& beta_full) const;
  // S_j v on the full coefficient space (zero outside the block)
  Eigen::VectorXd apply_full(const Eigen::VectorXd& v_full) const;
};

// Everything needed to rebuild a term's columns on new data.
struct TermBuild {
  TermSpec spec;
  int col_start = 0;
  int col_count = 0;
  std::vector<int> penalty_indices;
  Eigen::VectorXd knots1, knots2;       // spline margins
  Eigen::VectorXd constraint_v;         // Householder vector; empty if no constraint
  std::vector<std::string> levels;      // random-effect levels
};

struct AssembledModel {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::VectorXd offset;
  Eigen::VectorXd omega;
  Family family;
  Link link;
  std::vector<PenaltyBlock> penalties;
  std::vector<TermBuild> terms;
  int n = 0, q = 0, M = 0;
  int parametric_cols = 1;  // leading intercept column
};

// Cubic B-spline basis rows for dim basis functions on the given knot
// vector (length dim + 4). x outside the domain is evaluated at the
// clamped boundary; *extrapolated reports whether clamping happened.
Eigen::MatrixXd bspline_basis(const Eigen::VectorXd& knots, int dim, const Eigen::VectorXd& x,
                              std::vector<bool>* extrapolated = nullptr);

// Knot vector with anchors at equally spaced quantiles of x.
Eigen::VectorXd quantile_knots(const Eigen::VectorXd& x, int dim);

// Second-order difference penalty D2' D2, dim x dim, rank dim - 2.
Eigen::MatrixXd difference_penalty(int dim);

// Replace zero eigenvalues of a PSD penalty by epsilon_frac times the
// smallest strictly positive one, making the block positive definite.
PenaltyBlock apply_shrinkage(const PenaltyBlock& block, double epsilon_frac = 1e-2);

struct TermMatrices {
  Eigen::MatrixXd columns;
  std::vector<PenaltyBlock> penalties;  // offsets are block-local (0)
  TermBuild build;
};

TermMatrices build_bspline_term(const TermSpec& spec, const Eigen::VectorXd& x);
TermMatrices build_tensor_term(const TermSpec& spec, const Eigen::VectorXd& x1,
                               const Eigen::VectorXd& x2);
TermMatrices build_random_effect_term(const TermSpec& spec, const Column& group);

// Rebuild one term's columns on new data; used by prediction.
Eigen::MatrixXd term_columns(const TermBuild& build, const DataTable& table,
                             std::vector<bool>* extrapolated = nullptr);

AssembledModel assemble(const std::vector<TermSpec>& specs, const DataTable& table,
                        const Family& family, const Link& link, const std::string& response,
                        const std::string& offset_col = "", const std::string& weight_col = "");

// Eigenvalue square root with rank(S) columns, sqrt * sqrt' = S.
Eigen::MatrixXd penalty_sqrt(const Eigen::MatrixXd& S, int* rank_out = nullptr);

}  // namespace gamfit

#endif
