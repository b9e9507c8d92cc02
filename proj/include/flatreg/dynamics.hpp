#ifndef FLATREG_DYNAMICS_HPP
#define FLATREG_DYNAMICS_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "flatreg/objective.hpp"
#include "flatreg/regularizer.hpp"
#include "flatreg/rng.hpp"

namespace flatreg {

enum class NoiseKind { RademacherLabel, GaussianLabel, LabelFlip, GaussianCov, None };

struct HyperParams {
    double eta = 0.1;
    double sigma = 0.0;
    int batch = 1;
    double beta = 0.0;
    double p = 0.2;  // flip probability for label-flip noise
    long steps = 0;
    double nu = 0.1;
    double rank_tol = 1e-10;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;  // replica stream; replica r runs on (seed, r)
    NoiseKind noise = NoiseKind::RademacherLabel;
};

// Effective lambda of a run: eta sigma^2 / (B (1-beta)), with sigma taken
// from the loss-constants table for label-flip noise.
double run_lambda(const LossBundle& bundle, const HyperParams& hp);

RegConfig reg_config_for(const LossBundle& bundle, const HyperParams& hp);

// Randomness consumed by one step. Batch indices are per-slot (sampling with
// replacement); draws are the per-slot label perturbations, or the standard
// normal vector for gaussian-cov noise.
struct StepRecord {
    std::vector<std::int32_t> batch;
    std::vector<double> draws;
};

struct NoiseLog {
    std::vector<StepRecord> steps;
};

using SigmaFn = std::function<Matrix(const Vector&)>;

// One update of Algorithm "SGD with label noise": sample a batch, perturb
// each sampled label by +-sigma (or N(0, sigma^2) when gaussian is set), and
// step on the perturbed square loss. `replay`, when given, supplies the
// batch and noise draws instead of the generator.
Vector step_label_noise(const LossBundle& bundle, const Vector& theta, const HyperParams& hp,
                        Rng& rng, StepRecord* record = nullptr,
                        const StepRecord* replay = nullptr, bool gaussian = false);

// One update of "SGD with label smoothing": flip each sampled sign with
// probability p and step on l(sign * y_i * f_i).
Vector step_label_smoothing(const LossBundle& bundle, const Vector& theta, const HyperParams& hp,
                            Rng& rng, StepRecord* record = nullptr,
                            const StepRecord* replay = nullptr);

// theta - eta grad L + eps with eps ~ N(0, eta lambda Sigma(theta)), via the
// spectral square root of Sigma.
Vector step_gaussian_cov(const LossBundle& bundle, const Vector& theta, const HyperParams& hp,
                         const SigmaFn& sigma_fn, Rng& rng, StepRecord* record = nullptr,
                         const StepRecord* replay = nullptr);

// Plain minibatch SGD step (no label perturbation).
Vector step_minibatch(const LossBundle& bundle, const Vector& theta, const HyperParams& hp,
                      Rng& rng, StepRecord* record = nullptr,
                      const StepRecord* replay = nullptr);

// Heavy-ball wrapper: base_step(theta) + beta (theta - theta_prev).
Vector step_heavy_ball(const Vector& stepped, const Vector& theta, const Vector& theta_prev,
                       double beta);

struct DiagRow {
    long step = 0;
    double loss = 0.0;
    double reg = 0.0;      // NaN when eta is beyond the edge of stability
    double tr_hess = 0.0;
    double grad_norm = 0.0;
    double top_eig = 0.0;
};

struct Trajectory {
    std::vector<long> recorded_steps;
    std::vector<Vector> iterates;
    std::vector<DiagRow> diagnostics;
    NoiseLog noise_log;
    bool has_noise_log = false;
    Vector final_theta;
};

// Runs T steps of the noise kind selected in hp. Deterministic in
// (seed, hp, theta0); pass `replay` to reproduce a logged run bit-for-bit.
// sigma_fn is consulted only for gaussian-cov noise (default: Gauss-Newton
// covariance at the current iterate).
Trajectory run(const LossBundle& bundle, const Vector& theta0, const HyperParams& hp,
               long record_stride = 1, bool keep_noise_log = false,
               const NoiseLog* replay = nullptr, const SigmaFn& sigma_fn = {});

// Writes a trajectory table: one row per recorded step with columns
// step, loss, R, trH, gradnorm, top_eig, plus theta_0..theta_{d-1} when
// include_theta is set.
void write_trajectory_csv(const std::string& path, const Trajectory& traj,
                          bool include_theta = false);

// One step of gradient descent on the regularized loss Ltilde = L + lambda R.
Vector phi_step(const LossBundle& bundle, const Vector& theta, const RegConfig& cfg);

// k steps of (heavy-ball) gradient descent on Ltilde; returns all k+1 points.
// Phi_{-1} = Phi_0 (zero initial velocity).
std::vector<Vector> run_phi(const LossBundle& bundle, const Vector& theta0, const RegConfig& cfg,
                            long k);

}  // namespace flatreg

#endif
