#ifndef GAMFIT_DECOMP_HPP
#define GAMFIT_DECOMP_HPP

#include <Eigen/Dense>
#include <vector>

#include "gamfit/smooths.hpp"

namespace gamfit {

enum class DecompMethod { cholesky, qr };

inline double default_cond_limit() {
  // inverse square root of machine epsilon, ~6.7e7
  return 1.0 / std::sqrt(std::numeric_limits<double>::epsilon());
}

// Rank-truncated factors of the penalized working system
//   G = X'W^2X + S,   S = sum_j lambda_j S_j.
// K is n x r, P is q x r with rows already in the ORIGINAL column order
// (dropped columns give zero rows), so that
//   G^{-1} = P P',   B = P K',   A = K K'
// hold without further permutation. tr(A) = |K|_F^2.
struct WorkingDecomposition {
  Eigen::MatrixXd K;
  Eigen::MatrixXd P;
  std::vector<int> pivot;    // pivot[i] = original column at pivoted position i
  int rank = 0;
  std::vector<int> dropped;  // original column indices dropped this factorization
  DecompMethod method = DecompMethod::qr;

  // beta = B z' = P (K' z')
  Eigen::VectorXd solve(const Eigen::VectorXd& zprime) const {
    return P * (K.transpose() * zprime);
  }
  double trace_influence() const { return K.squaredNorm(); }
};

// Largest leading r such that the estimated 1-norm condition number of
// tri(1..r,1..r) stays below cond_limit (upper-triangular input).
int estimate_rank(const Eigen::MatrixXd& tri, double cond_limit);

// 1-norm condition estimate of the leading r x r block of an upper
// triangular matrix, classic forward/back solve estimator.
double condition_estimate(const Eigen::MatrixXd& tri, int r);

WorkingDecomposition factor_cholesky(const Eigen::MatrixXd& X, const Eigen::VectorXd& w,
                                     const std::vector<PenaltyBlock>& penalties,
                                     const Eigen::VectorXd& lambda,
                                     double cond_limit = default_cond_limit());

WorkingDecomposition factor_qr(const Eigen::MatrixXd& X, const Eigen::VectorXd& w,
                               const std::vector<PenaltyBlock>& penalties,
                               const Eigen::VectorXd& lambda,
                               double cond_limit = default_cond_limit());

WorkingDecomposition factor(DecompMethod method, const Eigen::MatrixXd& X,
                            const Eigen::VectorXd& w, const std::vector<PenaltyBlock>& penalties,
                            const Eigen::VectorXd& lambda,
                            double cond_limit = default_cond_limit());

// Dense q x q penalty total sum_j lambda_j S_j (test and setup helper).
Eigen::MatrixXd penalty_total(int q, const std::vector<PenaltyBlock>& penalties,
                              const Eigen::VectorXd& lambda);

// Pivoted Cholesky R'R = G[perm,perm] with greedy max-diagonal pivoting;
// returns the upper factor, the pivot order and the step where factoring
// stopped. Throws if G is numerically indefinite.
struct PivotedCholesky {
  Eigen::MatrixXd R;
  std::vector<int> perm;
  int rank = 0;
};
PivotedCholesky pivoted_cholesky(const Eigen::MatrixXd& G);

}  // namespace gamfit

#endif
