#ifndef FLATREG_REGULARIZER_HPP
#define FLATREG_REGULARIZER_HPP

#include <utility>

#include "flatreg/objective.hpp"
#include "flatreg/spectral.hpp"

namespace flatreg {

// Step size, effective regularization, momentum, and stability margin for
// evaluating the spectral penalty.
struct RegConfig {
    double eta = 0.1;
    double lambda = 0.0;
    double beta = 0.0;
    double nu = 0.1;
    double rank_tol = 1e-10;
};

// lambda = eta sigma^2 / (B (1 - beta)); the 1/(1-beta) factor is what makes
// momentum strengthen the regularization.
double lambda_eff(double eta, double sigma, double batch, double beta = 0.0);

// R(theta) = -((1+beta)/2eta) tr log(I - eta/(2(1+beta)) hess L(theta)),
// summed over eigenvalues. Classification bundles carry an extra 1/alpha.
// Throws EdgeOfStabilityError when some eigenvalue reaches the log's domain
// boundary (eta lam >= 2(1+beta)).
double reg_value(const LossBundle& bundle, const Vector& theta, const RegConfig& cfg);

enum class GradMethod { FiniteDiff, Contraction };

// grad R. Contraction route: (1/2) third_contract(theta, W) with
// W = (2 - eta/(1+beta) hess L)^{-1} applied spectrally; finite-diff route:
// central differences of reg_value per coordinate (the test oracle).
Vector reg_grad(const LossBundle& bundle, const Vector& theta, const RegConfig& cfg,
                GradMethod method = GradMethod::Contraction);

// (Ltilde, grad Ltilde) with Ltilde = L + lambda R.
std::pair<double, Vector> reg_loss(const LossBundle& bundle, const Vector& theta,
                                   const RegConfig& cfg);

struct SharpnessResult {
    double value = 0.0;
    double top_eigenvalue = 0.0;
    bool degenerate_top = false;  // lam1 - lam2 <= 1e-8 lam1: limit becomes k |hess|_2
};

// R at eta = (2 - nu)/lam1, normalized by log(2/nu)/4 so the value converges
// to |hess L(theta)|_2 as nu -> 0.
SharpnessResult normalized_sharpness(const LossBundle& bundle, const Vector& theta, double nu);

struct ShapeMatrix {
    Matrix S;
    double residual = 0.0;  // fixed-point defect, Sigma projected onto span(H)
};

// Unique fixed point of S <- (I - eta H) S (I - eta H) + eta lambda Sigma on
// span(H), via the eigenbasis formula S_ij = lambda Sigma_ij /
// (lam_i + lam_j - eta lam_i lam_j). Throws StepTooLargeError when
// eta lam_max(H) >= 2 and NotPSDError when H is not PSD.
ShapeMatrix shape_matrix(const Matrix& H, const Matrix& Sigma, double eta, double lambda,
                         double rank_tol = 1e-10);

// R_S(theta) = <S, hess L(theta)> and its gradient third_contract(theta, S).
std::pair<double, Vector> reg_S(const LossBundle& bundle, const Vector& theta, const Matrix& S);

}  // namespace flatreg

#endif
