#ifndef FLATREG_COUPLING_HPP
#define FLATREG_COUPLING_HPP

#include <vector>

#include "flatreg/dynamics.hpp"

namespace flatreg {

// A discrete Ornstein-Uhlenbeck companion run: xi_{k+1} = (I - eta G) xi_k
// + eps*_k with xi_0 = 0, where eps*_k re-evaluates the logged label noise
// at the frozen reference point.
struct OUProcess {
    std::vector<Vector> xi;  // xi_0 .. xi_horizon
    Vector reference;
    Matrix g_ref;
};

struct OUReference {
    Vector theta_star;
    long tau = 0;
};

// Linear noise recursion at a fixed reference. When `replay` is null the
// driving (batch, eps) draws come from rng streams identical to an SGD run
// with the same hp; with `replay` they are shared with a logged run, which
// is what couples the processes pathwise.
OUProcess ou_run(const LossBundle& bundle, const Vector& theta_star, const HyperParams& hp,
                 long horizon, const NoiseLog* replay = nullptr);

// Reference-chained variant: G and grad f_i switch to theta*_m on
// [T_m, T_{m+1}) while xi carries over.
OUProcess ou_chained(const LossBundle& bundle, const std::vector<OUReference>& references,
                     const HyperParams& hp, const NoiseLog* replay = nullptr);

// Heavy-ball variant: xi_{k+1} = (I - eta G) xi_k + beta (xi_k - xi_{k-1}) + eps*_k.
OUProcess ou_momentum(const LossBundle& bundle, const Vector& theta_star, const HyperParams& hp,
                      long horizon, const NoiseLog* replay = nullptr);

// Empirical second moment over post-burn-in samples. Throws
// InsufficientSamplesError when nothing survives the burn-in.
Matrix stationary_cov(const std::vector<Vector>& samples, long burn_in);

// Closed-form stationary covariance lambda Pi_G (2 - eta G)^{-1}.
Matrix ou_cov_closed_form(const Matrix& G, double eta, double lambda);

// Top-left block of the fixed point of S <- A S A^T + (1-beta) eta lambda J G J^T
// over the block companion matrix A = [[I - eta G + beta I, -beta I], [I, 0]].
// `lambda` is the momentum-effective value, so the driving term equals the
// per-step noise covariance eta sigma^2/B G.
Matrix ou_momentum_cov_fixed_point(const Matrix& G, double eta, double beta, double lambda,
                                   int max_iters = 200000, double tol = 1e-14);

struct CouplingReport {
    std::vector<double> residual;  // |theta_k - xi_k - Phi_k(theta* + delta0)|
    std::vector<double> xi_norm;
    std::vector<double> phi_dist;  // |theta_k - Phi_k| (no OU removal)
    double max_residual = 0.0;
    double max_phi_dist = 0.0;
    double predicted_scale = 0.0;  // sqrt(lambda) reference scale
    bool loss_warning = false;     // L(theta*) above the lambda^{3/2} scale
};

// Runs label-noise SGD from theta* + delta0, replays the same draws through
// the OU process at theta*, runs Phi from theta* + delta0, and reports the
// pathwise residual series.
CouplingReport coupling_experiment(const LossBundle& bundle, const Vector& theta_star,
                                   const Vector& delta0, const HyperParams& hp, long horizon);

enum class EpsGammaVerdict { Satisfied, NotFound };

struct EpsGammaResult {
    EpsGammaVerdict verdict = EpsGammaVerdict::NotFound;
    Vector witness;
    long steps_used = 0;
};

// Certificate search for an (eps, gamma)-stationary point of (1/lambda) Ltilde:
// descend Ltilde from theta for at most search_budget steps and accept any
// visited point with |grad Ltilde|/lambda <= eps within distance gamma.
// Sufficient, not necessary.
EpsGammaResult eps_gamma_check(const LossBundle& bundle, const Vector& theta, const RegConfig& cfg,
                               double eps, double gamma, long search_budget);

}  // namespace flatreg

#endif
