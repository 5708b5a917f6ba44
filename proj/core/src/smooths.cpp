#include "gamfit/smooths.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "gamfit/errors.hpp"

namespace gamfit {

namespace {

constexpr int kOrder = 4;  // cubic

// quantile of sorted values, linear interpolation between order statistics
double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double idx = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(idx));
  const auto hi = static_cast<std::size_t>(std::ceil(idx));
  const double frac = idx - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

// Householder reflection H = I - 2 v v' / v'v mapping c onto a multiple of e1.
Eigen::VectorXd householder_vector(const Eigen::VectorXd& c) {
  Eigen::VectorXd v = c;
  const double nrm = c.norm();
  v[0] += (c[0] >= 0.0 ? nrm : -nrm);
  const double vn = v.norm();
  if (vn > 0.0) v /= vn;
  return v;
}

Eigen::MatrixXd apply_householder_right(const Eigen::MatrixXd& A, const Eigen::VectorXd& v) {
  // A H with H = I - 2 v v'
  return A - 2.0 * (A * v) * v.transpose();
}

Eigen::MatrixXd apply_householder_both(const Eigen::MatrixXd& S, const Eigen::VectorXd& v) {
  Eigen::MatrixXd T = apply_householder_right(S, v);
  return T - 2.0 * v * (v.transpose() * T);
}

PenaltyBlock make_block(const Eigen::MatrixXd& S) {
  PenaltyBlock b;
  b.block = 0.5 * (S + S.transpose());  // enforce exact symmetry
  b.sqrt = penalty_sqrt(b.block, &b.rank);
  return b;
}

}  // namespace

std::string TermSpec::label() const {
  std::string s;
  switch (basis) {
    case BasisKind::bspline: s = "s(" + covariates[0] + ")"; break;
    case BasisKind::tensor_bspline: s = "te(" + covariates[0] + "," + covariates[1] + ")"; break;
    case BasisKind::random_effect: s = "re(" + covariates[0] + ")"; break;
  }
  if (!by.empty()) s += ":" + by;
  return s;
}

double PenaltyBlock::quad_form(const Eigen::VectorXd& beta_full) const {
  const auto seg = beta_full.segment(offset, block.rows());
  return seg.dot(block * seg);
}

Eigen::VectorXd PenaltyBlock::apply_full(const Eigen::VectorXd& v_full) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(v_full.size());
  out.segment(offset, block.rows()) = block * v_full.segment(offset, block.rows());
  return out;
}

Eigen::MatrixXd penalty_sqrt(const Eigen::MatrixXd& S, int* rank_out) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
  const Eigen::VectorXd& ev = eig.eigenvalues();
  const double tol = std::max(ev.cwiseAbs().maxCoeff(), 1e-300) * 1e-12;
  int rank = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] > tol) ++rank;
  }
  Eigen::MatrixXd sqrt(S.rows(), rank);
  int col = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] > tol) sqrt.col(col++) = eig.eigenvectors().col(i) * std::sqrt(ev[i]);
  }
  if (rank_out) *rank_out = rank;
  return sqrt;
}

Eigen::VectorXd quantile_knots(const Eigen::VectorXd& x, int dim) {
  if (dim < 4) throw std::invalid_argument("spline basis dimension must be at least 4");
  std::vector<double> sorted(x.data(), x.data() + x.size());
  std::sort(sorted.begin(), sorted.end());
  const int m = dim - 2;  // anchor count, domain knots t_3 .. t_dim
  std::vector<double> anchors(m);
  for (int j = 0; j < m; ++j) {
    anchors[j] = quantile_sorted(sorted, static_cast<double>(j) / (m - 1));
  }
  for (int j = 1; j < m; ++j) {
    if (!(anchors[j] > anchors[j - 1])) {
      throw data_error("too few distinct covariate values for basis dimension " +
                       std::to_string(dim));
    }
  }
  const double step = (anchors[m - 1] - anchors[0]) / (m - 1);
  Eigen::VectorXd knots(dim + kOrder);
  for (int j = 0; j < 3; ++j) {
    knots[j] = anchors[0] - (3 - j) * step;
    knots[dim + kOrder - 1 - j] = anchors[m - 1] + (3 - j) * step;
  }
  for (int j = 0; j < m; ++j) knots[3 + j] = anchors[j];
  return knots;
}

Eigen::MatrixXd bspline_basis(const Eigen::VectorXd& knots, int dim, const Eigen::VectorXd& x,
                              std::vector<bool>* extrapolated) {
  const double lo = knots[3];
  const double hi = knots[dim];
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(x.size(), dim);
  if (extrapolated) extrapolated->assign(static_cast<std::size_t>(x.size()), false);
  double N[kOrder], left[kOrder], right[kOrder];
  for (Eigen::Index row = 0; row < x.size(); ++row) {
    double xi = x[row];
    if (xi < lo || xi > hi) {
      if (extrapolated) (*extrapolated)[static_cast<std::size_t>(row)] = true;
      xi = std::clamp(xi, lo, hi);
    }
    // knot span: largest i in [3, dim-1] with knots[i] <= xi
    int span = 3;
    while (span < dim - 1 && xi >= knots[span + 1]) ++span;
    // Cox-de Boor triangle for the kOrder non-zero cubic values
    N[0] = 1.0;
    for (int j = 1; j < kOrder; ++j) {
      left[j] = xi - knots[span + 1 - j];
      right[j] = knots[span + j] - xi;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        const double tmp = N[r] / (right[r + 1] + left[j - r]);
        N[r] = saved + right[r + 1] * tmp;
        saved = left[j - r] * tmp;
      }
      N[j] = saved;
    }
    for (int j = 0; j < kOrder; ++j) B(row, span - 3 + j) = N[j];
  }
  return B;
}

Eigen::MatrixXd difference_penalty(int dim) {
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(dim - 2, dim);
  for (int i = 0; i < dim - 2; ++i) {
    D(i, i) = 1.0;
    D(i, i + 1) = -2.0;
    D(i, i + 2) = 1.0;
  }
  return D.transpose() * D;
}

PenaltyBlock apply_shrinkage(const PenaltyBlock& block, double epsilon_frac) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(block.block);
  const Eigen::VectorXd& ev = eig.eigenvalues();
  const double maxev = ev.maxCoeff();
  if (maxev <= 0.0) throw std::invalid_argument("shrinkage needs a non-zero penalty");
  const double tol = maxev * 1e-10;
  double min_pos = maxev;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] > tol) min_pos = std::min(min_pos, ev[i]);
  }
  Eigen::VectorXd floored = ev;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] <= tol) floored[i] = epsilon_frac * min_pos;
  }
  PenaltyBlock out;
  out.offset = block.offset;
  out.block = eig.eigenvectors() * floored.asDiagonal() * eig.eigenvectors().transpose();
  out.block = 0.5 * (out.block + out.block.transpose());
  out.sqrt = penalty_sqrt(out.block, &out.rank);
  return out;
}

TermMatrices build_bspline_term(const TermSpec& spec, const Eigen::VectorXd& x) {
  TermMatrices tm;
  tm.build.spec = spec;
  tm.build.knots1 = quantile_knots(x, spec.dim);
  Eigen::MatrixXd B = bspline_basis(tm.build.knots1, spec.dim, x);
  Eigen::MatrixXd S = difference_penalty(spec.dim);

  if (spec.by.empty()) {
    // absorb the sum-to-zero constraint: one Householder reflection built
    // from the basis column sums, then the first transformed column drops
    const Eigen::VectorXd c = B.colwise().sum();
    const Eigen::VectorXd v = householder_vector(c);
    tm.build.constraint_v = v;
    tm.columns = apply_householder_right(B, v).rightCols(spec.dim - 1);
    S = apply_householder_both(S, v).bottomRightCorner(spec.dim - 1, spec.dim - 1);
  } else {
    tm.columns = B;  // by-terms keep the full basis
  }
  PenaltyBlock pb = make_block(S);
  if (spec.shrinkage) pb = apply_shrinkage(pb);
  tm.penalties.push_back(std::move(pb));
  return tm;
}

TermMatrices build_tensor_term(const TermSpec& spec, const Eigen::VectorXd& x1,
                               const Eigen::VectorXd& x2) {
  const int k1 = spec.dim;
  const int k2 = spec.dim2 > 0 ? spec.dim2 : spec.dim;
  TermMatrices tm;
  tm.build.spec = spec;
  tm.build.knots1 = quantile_knots(x1, k1);
  tm.build.knots2 = quantile_knots(x2, k2);
  const Eigen::MatrixXd B1 = bspline_basis(tm.build.knots1, k1, x1);
  const Eigen::MatrixXd B2 = bspline_basis(tm.build.knots2, k2, x2);

  // row-wise Kronecker product, first margin outermost
  Eigen::MatrixXd B(x1.size(), k1 * k2);
  for (int i = 0; i < k1; ++i) {
    for (int j = 0; j < k2; ++j) {
      B.col(i * k2 + j) = B1.col(i).cwiseProduct(B2.col(j));
    }
  }
  const Eigen::MatrixXd S1 = difference_penalty(k1);
  const Eigen::MatrixXd S2 = difference_penalty(k2);
  Eigen::MatrixXd Srow = Eigen::MatrixXd::Zero(k1 * k2, k1 * k2);
  Eigen::MatrixXd Scol = Eigen::MatrixXd::Zero(k1 * k2, k1 * k2);
  for (int i = 0; i < k1; ++i) {
    for (int i2 = 0; i2 < k1; ++i2) {
      for (int j = 0; j < k2; ++j) Srow(i * k2 + j, i2 * k2 + j) = S1(i, i2);
    }
  }
  for (int i = 0; i < k1; ++i) {
    for (int j = 0; j < k2; ++j) {
      for (int j2 = 0; j2 < k2; ++j2) Scol(i * k2 + j, i * k2 + j2) = S2(j, j2);
    }
  }

  if (spec.by.empty()) {
    const Eigen::VectorXd c = B.colwise().sum();
    const Eigen::VectorXd v = householder_vector(c);
    tm.build.constraint_v = v;
    const int kc = k1 * k2 - 1;
    tm.columns = apply_householder_right(B, v).rightCols(kc);
    Srow = apply_householder_both(Srow, v).bottomRightCorner(kc, kc);
    Scol = apply_householder_both(Scol, v).bottomRightCorner(kc, kc);
  } else {
    tm.columns = B;
  }
  PenaltyBlock pr = make_block(Srow);
  PenaltyBlock pc = make_block(Scol);
  if (spec.shrinkage) {
    pr = apply_shrinkage(pr);
    pc = apply_shrinkage(pc);
  }
  tm.penalties.push_back(std::move(pr));
  tm.penalties.push_back(std::move(pc));
  return tm;
}

TermMatrices build_random_effect_term(const TermSpec& spec, const Column& group) {
  TermMatrices tm;
  tm.build.spec = spec;
  std::vector<std::string> levels;
  Eigen::VectorXd idx;
  if (group.is_factor) {
    levels = group.levels;
    idx = group.values;
  } else {
    std::set<double> distinct(group.values.data(), group.values.data() + group.values.size());
    std::vector<double> lv(distinct.begin(), distinct.end());
    for (double v : lv) {
      std::ostringstream os;
      os.precision(17);
      os << v;
      levels.push_back(os.str());
    }
    idx.resize(group.values.size());
    for (Eigen::Index i = 0; i < group.values.size(); ++i) {
      idx[i] = static_cast<double>(
          std::lower_bound(lv.begin(), lv.end(), group.values[i]) - lv.begin());
    }
  }
  const int G = static_cast<int>(levels.size());
  if (G < 2) throw data_error("random effect grouping factor has a single level");
  tm.build.levels = levels;
  tm.columns = Eigen::MatrixXd::Zero(idx.size(), G);
  for (Eigen::Index i = 0; i < idx.size(); ++i) {
    tm.columns(i, static_cast<Eigen::Index>(idx[i])) = 1.0;
  }
  PenaltyBlock pb;
  pb.block = Eigen::MatrixXd::Identity(G, G);
  pb.sqrt = Eigen::MatrixXd::Identity(G, G);
  pb.rank = G;
  tm.penalties.push_back(std::move(pb));
  return tm;
}

Eigen::MatrixXd term_columns(const TermBuild& build, const DataTable& table,
                             std::vector<bool>* extrapolated) {
  const TermSpec& spec = build.spec;
  Eigen::MatrixXd cols;
  if (spec.basis == BasisKind::bspline) {
    const Eigen::VectorXd& x = table.numeric(spec.covariates[0]);
    Eigen::MatrixXd B = bspline_basis(build.knots1, spec.dim, x, extrapolated);
    if (build.constraint_v.size() > 0) {
      cols = apply_householder_right(B, build.constraint_v).rightCols(spec.dim - 1);
    } else {
      cols = B;
    }
  } else if (spec.basis == BasisKind::tensor_bspline) {
    const int k1 = spec.dim;
    const int k2 = spec.dim2 > 0 ? spec.dim2 : spec.dim;
    const Eigen::VectorXd& x1 = table.numeric(spec.covariates[0]);
    const Eigen::VectorXd& x2 = table.numeric(spec.covariates[1]);
    std::vector<bool> ex1, ex2;
    const Eigen::MatrixXd B1 = bspline_basis(build.knots1, k1, x1, extrapolated ? &ex1 : nullptr);
    const Eigen::MatrixXd B2 = bspline_basis(build.knots2, k2, x2, extrapolated ? &ex2 : nullptr);
    if (extrapolated) {
      extrapolated->assign(ex1.size(), false);
      for (std::size_t i = 0; i < ex1.size(); ++i) (*extrapolated)[i] = ex1[i] || ex2[i];
    }
    Eigen::MatrixXd B(x1.size(), k1 * k2);
    for (int i = 0; i < k1; ++i) {
      for (int j = 0; j < k2; ++j) B.col(i * k2 + j) = B1.col(i).cwiseProduct(B2.col(j));
    }
    if (build.constraint_v.size() > 0) {
      cols = apply_householder_right(B, build.constraint_v).rightCols(k1 * k2 - 1);
    } else {
      cols = B;
    }
  } else {
    const Column& group = table.column(spec.covariates[0]);
    const int G = static_cast<int>(build.levels.size());
    cols = Eigen::MatrixXd::Zero(table.rows(), G);
    if (extrapolated) extrapolated->assign(static_cast<std::size_t>(table.rows()), false);
    for (Eigen::Index i = 0; i < table.rows(); ++i) {
      std::string label;
      if (group.is_factor) {
        label = group.levels[static_cast<std::size_t>(group.values[i])];
      } else {
        std::ostringstream os;
        os.precision(17);
        os << group.values[i];
        label = os.str();
      }
      const auto it = std::find(build.levels.begin(), build.levels.end(), label);
      if (it == build.levels.end()) {
        throw data_error("unseen group level '" + label + "' in " + spec.covariates[0]);
      }
      cols(i, it - build.levels.begin()) = 1.0;
    }
  }
  if (!spec.by.empty()) {
    const Eigen::VectorXd& by = table.numeric(spec.by);
    cols.array().colwise() *= by.array();
  }
  return cols;
}

AssembledModel assemble(const std::vector<TermSpec>& specs, const DataTable& table,
                        const Family& family, const Link& link, const std::string& response,
                        const std::string& offset_col, const std::string& weight_col) {
  AssembledModel model;
  model.family = family;
  model.link = link;
  model.n = static_cast<int>(table.rows());
  model.y = table.numeric(response);
  family.check_support(model.y);

  model.offset = offset_col.empty() ? Eigen::VectorXd::Zero(model.n).eval()
                                    : table.numeric(offset_col);
  model.omega = weight_col.empty() ? Eigen::VectorXd::Ones(model.n).eval()
                                   : table.numeric(weight_col);
  if ((model.omega.array() < 0.0).any()) throw data_error("negative prior weight");

  std::vector<TermMatrices> built;
  built.reserve(specs.size());
  int q = 1;
  int M = 0;
  for (const TermSpec& spec : specs) {
    TermMatrices tm;
    switch (spec.basis) {
      case BasisKind::bspline:
        tm = build_bspline_term(spec, table.numeric(spec.covariates[0]));
        break;
      case BasisKind::tensor_bspline:
        if (spec.covariates.size() != 2) throw config_error("tensor term needs two covariates");
        tm = build_tensor_term(spec, table.numeric(spec.covariates[0]),
                               table.numeric(spec.covariates[1]));
        break;
      case BasisKind::random_effect:
        tm = build_random_effect_term(spec, table.column(spec.covariates[0]));
        break;
    }
    if (!spec.by.empty()) {
      const Eigen::VectorXd& by = table.numeric(spec.by);
      tm.columns.array().colwise() *= by.array();
    }
    q += static_cast<int>(tm.columns.cols());
    M += static_cast<int>(tm.penalties.size());
    built.push_back(std::move(tm));
  }
  if (q >= model.n) {
    throw data_error("model has " + std::to_string(q) + " coefficients but only " +
                     std::to_string(model.n) + " observations");
  }

  model.q = q;
  model.M = M;
  model.X.resize(model.n, q);
  model.X.col(0).setOnes();
  int col = 1;
  for (auto& tm : built) {
    const int nc = static_cast<int>(tm.columns.cols());
    model.X.middleCols(col, nc) = tm.columns;
    tm.build.col_start = col;
    tm.build.col_count = nc;
    for (auto& pb : tm.penalties) {
      pb.offset = col;
      tm.build.penalty_indices.push_back(static_cast<int>(model.penalties.size()));
      model.penalties.push_back(std::move(pb));
    }
    model.terms.push_back(std::move(tm.build));
    col += nc;
  }
  return model;
}

}  // namespace gamfit
