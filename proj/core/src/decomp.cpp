#include "gamfit/decomp.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace gamfit {

namespace {

// Stack [WX; E] where E'E = S, built block-wise from the stored penalty
// square roots scaled by sqrt(lambda_j); S itself is never re-factorized.
Eigen::MatrixXd stacked_system(const Eigen::MatrixXd& X, const Eigen::VectorXd& w,
                               const std::vector<PenaltyBlock>& penalties,
                               const Eigen::VectorXd& lambda) {
  const Eigen::Index n = X.rows();
  const Eigen::Index q = X.cols();
  Eigen::Index erows = 0;
  for (const auto& pb : penalties) erows += pb.rank;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n + erows, q);
  M.topRows(n) = w.asDiagonal() * X;
  Eigen::Index row = n;
  for (std::size_t j = 0; j < penalties.size(); ++j) {
    const auto& pb = penalties[j];
    const double s = std::sqrt(lambda[static_cast<Eigen::Index>(j)]);
    M.block(row, pb.offset, pb.rank, pb.block.rows()) = s * pb.sqrt.transpose();
    row += pb.rank;
  }
  return M;
}

}  // namespace

Eigen::MatrixXd penalty_total(int q, const std::vector<PenaltyBlock>& penalties,
                              const Eigen::VectorXd& lambda) {
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(q, q);
  for (std::size_t j = 0; j < penalties.size(); ++j) {
    const auto& pb = penalties[j];
    S.block(pb.offset, pb.offset, pb.block.rows(), pb.block.cols()) +=
        lambda[static_cast<Eigen::Index>(j)] * pb.block;
  }
  return S;
}

double condition_estimate(const Eigen::MatrixXd& tri, int r) {
  if (r <= 0) return 0.0;
  double norm1 = 0.0;
  for (int j = 0; j < r; ++j) {
    norm1 = std::max(norm1, tri.col(j).head(j + 1).cwiseAbs().sum());
  }
  // ||R^{-1}||_1 estimate: solve R'y = d with d_i = +-1 chosen to grow y,
  // then R z = y; the growth ratio ||z||_1 / ||y||_1 estimates the norm.
  Eigen::VectorXd y(r);
  for (int i = 0; i < r; ++i) {
    double acc = 0.0;
    for (int k = 0; k < i; ++k) acc += tri(k, i) * y[k];
    const double rii = tri(i, i);
    if (rii == 0.0) return std::numeric_limits<double>::infinity();
    const double yp = (1.0 - acc) / rii;
    const double ym = (-1.0 - acc) / rii;
    y[i] = std::abs(yp) >= std::abs(ym) ? yp : ym;
  }
  Eigen::VectorXd z = y;
  for (int i = r - 1; i >= 0; --i) {
    for (int k = i + 1; k < r; ++k) z[i] -= tri(i, k) * z[k];
    z[i] /= tri(i, i);
  }
  const double inv_norm = z.cwiseAbs().sum() / y.cwiseAbs().sum();
  return norm1 * inv_norm;
}

int estimate_rank(const Eigen::MatrixXd& tri, double cond_limit) {
  const int q = static_cast<int>(std::min(tri.rows(), tri.cols()));
  int usable = q;
  for (int i = 0; i < q; ++i) {
    if (tri(i, i) == 0.0) {
      usable = i;
      break;
    }
  }
  if (usable == 0) return 0;
  if (condition_estimate(tri, usable) <= cond_limit) return usable;
  // the condition of the leading block grows with its size (pivoted
  // factor), so bisect for the largest acceptable r, then walk down in
  // case of estimator wobble
  int lo = 0, hi = usable;
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    if (condition_estimate(tri, mid) <= cond_limit) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  while (lo > 0 && condition_estimate(tri, lo) > cond_limit) --lo;
  return lo;
}

PivotedCholesky pivoted_cholesky(const Eigen::MatrixXd& G) {
  const int q = static_cast<int>(G.rows());
  Eigen::MatrixXd A = 0.5 * (G + G.transpose());
  PivotedCholesky out;
  out.R = Eigen::MatrixXd::Zero(q, q);
  out.perm.resize(q);
  std::iota(out.perm.begin(), out.perm.end(), 0);
  const double scale = std::max(A.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  const double tol = scale * 1e-14;

  for (int j = 0; j < q; ++j) {
    int p = j;
    for (int i = j + 1; i < q; ++i) {
      if (A(i, i) > A(p, p)) p = i;
    }
    if (A(p, p) < -100.0 * tol) {
      throw std::runtime_error("working matrix numerically indefinite; check penalty inputs");
    }
    if (A(p, p) <= tol) {
      out.rank = j;
      return out;
    }
    if (p != j) {
      A.row(j).swap(A.row(p));
      A.col(j).swap(A.col(p));
      out.R.col(j).head(j).swap(out.R.col(p).head(j));
      std::swap(out.perm[j], out.perm[p]);
    }
    const double d = std::sqrt(A(j, j));
    out.R(j, j) = d;
    for (int c = j + 1; c < q; ++c) out.R(j, c) = A(j, c) / d;
    for (int r = j + 1; r < q; ++r) {
      for (int c = j + 1; c < q; ++c) A(r, c) -= out.R(j, r) * out.R(j, c);
    }
  }
  out.rank = q;
  return out;
}

namespace {

WorkingDecomposition finish(const Eigen::MatrixXd& Xw, const Eigen::MatrixXd& R_upper,
                            const std::vector<int>& perm, int rank, DecompMethod method,
                            const Eigen::MatrixXd* K_qr) {
  const int q = static_cast<int>(R_upper.cols());
  WorkingDecomposition d;
  d.method = method;
  d.rank = rank;
  d.pivot = perm;
  for (int i = rank; i < q; ++i) d.dropped.push_back(perm[i]);

  Eigen::MatrixXd Rinv = Eigen::MatrixXd::Identity(rank, rank);
  R_upper.topLeftCorner(rank, rank).triangularView<Eigen::Upper>().solveInPlace(Rinv);
  // rows of P scattered back to original column order; dropped rows stay zero
  d.P = Eigen::MatrixXd::Zero(q, rank);
  for (int i = 0; i < rank; ++i) d.P.row(perm[i]) = Rinv.row(i);

  if (K_qr) {
    d.K = *K_qr;
  } else {
    // K = W X_piv R^{-1} on the retained columns
    Eigen::MatrixXd Xp(Xw.rows(), rank);
    for (int i = 0; i < rank; ++i) Xp.col(i) = Xw.col(perm[i]);
    d.K = Xp * Rinv;
  }
  return d;
}

}  // namespace

WorkingDecomposition factor_cholesky(const Eigen::MatrixXd& X, const Eigen::VectorXd& w,
                                     const std::vector<PenaltyBlock>& penalties,
                                     const Eigen::VectorXd& lambda, double cond_limit) {
  const Eigen::MatrixXd Xw = w.asDiagonal() * X;
  const Eigen::MatrixXd G = Xw.transpose() * Xw +
                            penalty_total(static_cast<int>(X.cols()), penalties, lambda);
  PivotedCholesky pc = pivoted_cholesky(G);
  const int r = std::min(pc.rank, estimate_rank(pc.R, cond_limit));
  return finish(Xw, pc.R, pc.perm, r, DecompMethod::cholesky, nullptr);
}

WorkingDecomposition factor_qr(const Eigen::MatrixXd& X, const Eigen::VectorXd& w,
                               const std::vector<PenaltyBlock>& penalties,
                               const Eigen::VectorXd& lambda, double cond_limit) {
  const Eigen::Index n = X.rows();
  const Eigen::Index q = X.cols();
  const Eigen::MatrixXd M = stacked_system(X, w, penalties, lambda);
  if (M.rows() < q) throw std::invalid_argument("factor_qr: fewer stacked rows than columns");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(M);

  const Eigen::MatrixXd R = qr.matrixR().topRows(q).triangularView<Eigen::Upper>();
  // derive "pivoted position -> original column" by pushing an index row
  // vector through the same permutation the decomposition applied
  std::vector<int> perm(static_cast<std::size_t>(q));
  {
    Eigen::RowVectorXd idx = Eigen::RowVectorXd::LinSpaced(q, 0.0, static_cast<double>(q - 1));
    Eigen::RowVectorXd pividx = idx * qr.colsPermutation();
    for (Eigen::Index i = 0; i < q; ++i) {
      perm[static_cast<std::size_t>(i)] = static_cast<int>(std::lround(pividx[i]));
    }
  }
  const int r = estimate_rank(R, cond_limit);

  const Eigen::MatrixXd Qthin =
      qr.householderQ() * Eigen::MatrixXd::Identity(M.rows(), r);
  const Eigen::MatrixXd K = Qthin.topRows(n);

  return finish(Eigen::MatrixXd(), R, perm, r, DecompMethod::qr, &K);
}

WorkingDecomposition factor(DecompMethod method, const Eigen::MatrixXd& X,
                            const Eigen::VectorXd& w, const std::vector<PenaltyBlock>& penalties,
                            const Eigen::VectorXd& lambda, double cond_limit) {
  return method == DecompMethod::qr ? factor_qr(X, w, penalties, lambda, cond_limit)
                                    : factor_cholesky(X, w, penalties, lambda, cond_limit);
}

}  // namespace gamfit
