#ifndef GAMFIT_DERIVS_HPP
#define GAMFIT_DERIVS_HPP

#include <Eigen/Dense>
#include <vector>

#include "gamfit/pirls.hpp"

namespace gamfit {

// symmetric pair storage, k >= m
inline int pair_index(int k, int m) {
  if (k < m) std::swap(k, m);
  return k * (k + 1) / 2 + m;
}
inline int pair_count(int M) { return M * (M + 1) / 2; }

// Diagonals T_k = diag((dw_i/drho_k)/w_i) and
// T_km = diag((d2w_i/drho_k drho_m)/w_i - (dw_i/drho_k)(dw_i/drho_m)/w_i^2),
// stored column-wise; zero rows wherever w_i = 0.
struct DiagonalTerms {
  Eigen::MatrixXd Tk;   // n x M
  Eigen::MatrixXd Tkm;  // n x M(M+1)/2
};

struct DerivConfig {
  double tol = 1e-7;    // relative change of the deviance derivatives
  int max_passes = 50;
};

// First and second derivatives, with respect to the log smoothing
// parameters, of the fitted coefficients and of the deviance, Pearson
// statistic and effective degrees of freedom tau = tr(A).
struct DerivativeBundle {
  Eigen::MatrixXd dbeta;            // q x M
  Eigen::MatrixXd d2beta;           // q x M(M+1)/2
  Eigen::MatrixXd deta, d2eta;      // n x M, n x M(M+1)/2
  Eigen::MatrixXd dz, d2z, dw, d2w;
  DiagonalTerms T;
  Eigen::VectorXd dD;
  Eigen::MatrixXd d2D;
  Eigen::VectorXd dP;
  Eigen::MatrixXd d2P;
  Eigen::VectorXd dtau;
  Eigen::MatrixXd d2tau;
  int iterations = 0;
  bool converged = false;
};

// Fixed-point iteration for the coefficient derivatives at a converged
// inner fit, followed by the derived derivatives of D, P and tau. All
// matrix products run through the K/P factors; B and A are never formed.
DerivativeBundle derivative_iteration(const PirlsState& state, const AssembledModel& model,
                                      const Eigen::VectorXd& rho,
                                      const DerivConfig& config = DerivConfig());

// (dB/drho_k) v where B = P K' maps weighted pseudodata to coefficients:
//   dB/drho_k = -2 P K'T_k K K' - lambda_k P P'S_k P K' + P K'T_k.
Eigen::VectorXd apply_dB(const WorkingDecomposition& d, const Eigen::VectorXd& tk,
                         double lambda_k, const PenaltyBlock& Sk, const Eigen::VectorXd& v);

// (d2B/drho_k drho_m) v, the full second-derivative operator.
Eigen::VectorXd apply_d2B(const WorkingDecomposition& d, const Eigen::VectorXd& tk,
                          const Eigen::VectorXd& tm, const Eigen::VectorXd& tkm,
                          double lambda_k, double lambda_m, const PenaltyBlock& Sk,
                          const PenaltyBlock& Sm, bool same_parameter,
                          const Eigen::VectorXd& v);

// Derivatives of tau = tr(A). The workspace pre-computes the shared
// factored products (diag(A), diag(AA), K'T_kK, K P'sqrt(S_m), ...).
class EdfDerivWorkspace {
 public:
  EdfDerivWorkspace(const WorkingDecomposition& d, const DiagonalTerms& T,
                    const Eigen::VectorXd& lambda, const std::vector<PenaltyBlock>& penalties);

  Eigen::VectorXd gradient() const;
  Eigen::MatrixXd hessian() const;

  // the trace groups making up one Hessian entry, for oracle comparison
  struct TraceTerms {
    double tkm_A;        // 2 tr(T_km A)
    double tk_tm_A;      // 4 tr(T_k T_m A)
    double tkA_tmA;      // -4 tr(T_k A T_m A + T_m A T_k A)
    double A_tmtk_A;     // -4 tr(A T_m T_k A)
    double A_tkm_A;      // -2 tr(A T_km A)
    double A_tkA_tmA;    //  8 tr(A T_k A T_m A)
    double AT_BSB;       //  4 tr(lam_m A T_k B'S_mB + lam_k A T_m B'S_kB)
    double T_BSB;        // -2 tr(lam_m T_k B'S_mB + lam_k T_m B'S_kB)
    double delta_BSB;    // -delta_km lam_k tr(B'S_kB)
    double BS_G_SB;      //  2 lam_k lam_m tr(B'S_m G^{-1} S_k B)
    double total() const;
  };
  TraceTerms hessian_terms(int k, int m) const;

 private:
  const DiagonalTerms& T_;
  Eigen::VectorXd lambda_;
  int M_;
  Eigen::VectorXd diagA_, diagAA_;
  Eigen::MatrixXd KtK_;
  std::vector<Eigen::MatrixXd> Mk_, Nk_;        // K'T_kK and its KtK product
  std::vector<Eigen::VectorXd> diagFH_, diagBSB_;
  std::vector<Eigen::MatrixXd> C_, D_;          // P'S_mP and its KtK product
  std::vector<double> trBSB_;
};

Eigen::VectorXd edf_gradient(const WorkingDecomposition& d, const DiagonalTerms& T,
                             const Eigen::VectorXd& lambda,
                             const std::vector<PenaltyBlock>& penalties);
Eigen::MatrixXd edf_hessian(const WorkingDecomposition& d, const DiagonalTerms& T,
                            const Eigen::VectorXd& lambda,
                            const std::vector<PenaltyBlock>& penalties);

// Chain rule through the coefficient derivatives (fills dD/d2D, dP/d2P
// from the bundle's intermediates and the converged state).
void deviance_rho_derivs(DerivativeBundle& bundle, const PirlsState& state,
                         const AssembledModel& model);
void pearson_rho_derivs(DerivativeBundle& bundle, const PirlsState& state,
                        const AssembledModel& model);

}  // namespace gamfit

#endif
