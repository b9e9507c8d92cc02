#include "flatreg/dynamics.hpp"

#include "flatreg/artifacts.hpp"

#include <cmath>
#include <limits>

#include "flatreg/errors.hpp"

namespace flatreg {

namespace {

std::vector<std::int32_t> sample_batch(int n, int batch, Rng& rng) {
    std::vector<std::int32_t> idx(batch);
    for (int j = 0; j < batch; ++j) {
        idx[j] = static_cast<std::int32_t>(rng.uniform_int(static_cast<std::uint64_t>(n)));
    }
    return idx;
}

const std::vector<std::int32_t>& batch_of(const StepRecord* replay, std::vector<std::int32_t>& own,
                                          int n, int batch, Rng& rng) {
    if (replay != nullptr) return replay->batch;
    if (batch < 1 || batch > n) {
        throw std::invalid_argument("batch size must be in [1, sample_count]");
    }
    own = sample_batch(n, batch, rng);
    return own;
}

}  // namespace

double run_lambda(const LossBundle& bundle, const HyperParams& hp) {
    double sigma = hp.sigma;
    if (hp.noise == NoiseKind::LabelFlip) {
        sigma = std::sqrt(loss_constants(bundle.cls_loss, hp.p).sigma_sq);
    }
    if (hp.noise == NoiseKind::None) sigma = 0.0;
    return lambda_eff(hp.eta, sigma, hp.batch, hp.beta);
}

RegConfig reg_config_for(const LossBundle& bundle, const HyperParams& hp) {
    RegConfig cfg;
    cfg.eta = hp.eta;
    cfg.lambda = run_lambda(bundle, hp);
    cfg.beta = hp.beta;
    cfg.nu = hp.nu;
    cfg.rank_tol = hp.rank_tol;
    return cfg;
}

Vector step_label_noise(const LossBundle& bundle, const Vector& theta, const HyperParams& hp,
                        Rng& rng, StepRecord* record, const StepRecord* replay, bool gaussian) {
    if (bundle.kind != LossKind::RegressionSquare) {
        throw std::invalid_argument("step_label_noise requires a regression bundle");
    }
    const int n = bundle.model->sample_count();
    std::vector<std::int32_t> own;
    const auto& batch = batch_of(replay, own, n, hp.batch, rng);

    Vector g = Vector::Zero(theta.size());
    std::vector<double> draws(batch.size());
    for (std::size_t j = 0; j < batch.size(); ++j) {
        const int i = batch[j];
        const double eps = replay != nullptr
                               ? replay->draws[j]
                               : (gaussian ? hp.sigma * rng.normal() : hp.sigma * rng.rademacher());
        draws[j] = eps;
        const double residual = bundle.model->eval(i, theta) - bundle.data.targets[i] - eps;
        g += residual * bundle.model->grad(i, theta);
    }
    g /= static_cast<double>(batch.size());
    if (record != nullptr) {
        record->batch = batch;
        record->draws = std::move(draws);
    }
    return theta - hp.eta * g;
}

Vector step_label_smoothing(const LossBundle& bundle, const Vector& theta, const HyperParams& hp,
                            Rng& rng, StepRecord* record, const StepRecord* replay) {
    if (bundle.kind != LossKind::Classification) {
        throw std::invalid_argument("step_label_smoothing requires a classification bundle");
    }
    if (std::abs(hp.p - bundle.p) > 1e-15) {
        throw std::invalid_argument("step_label_smoothing: hp.p must match the bundle");
    }
    const int n = bundle.model->sample_count();
    std::vector<std::int32_t> own;
    const auto& batch = batch_of(replay, own, n, hp.batch, rng);

    Vector g = Vector::Zero(theta.size());
    std::vector<double> draws(batch.size());
    for (std::size_t j = 0; j < batch.size(); ++j) {
        const int i = batch[j];
        const double sign = replay != nullptr ? replay->draws[j] : (rng.bernoulli(hp.p) ? -1.0 : 1.0);
        draws[j] = sign;
        const double y = bundle.data.targets[i];
        const double margin = sign * y * bundle.model->eval(i, theta);
        g += sign * y * cls_loss_deriv(bundle.cls_loss, margin) * bundle.model->grad(i, theta);
    }
    g /= static_cast<double>(batch.size());
    if (record != nullptr) {
        record->batch = batch;
        record->draws = std::move(draws);
    }
    return theta - hp.eta * g;
}

Vector step_gaussian_cov(const LossBundle& bundle, const Vector& theta, const HyperParams& hp,
                         const SigmaFn& sigma_fn, Rng& rng, StepRecord* record,
                         const StepRecord* replay) {
    const Eigen::Index d = theta.size();
    const Matrix sigma = sigma_fn(theta);
    const Spectrum spec = eig_sym(sigma);
    if (spec.eigenvalues.minCoeff() < -1e-10 * std::max(1.0, spec.eigenvalues.cwiseAbs().maxCoeff())) {
        throw NotPSDError("step_gaussian_cov: Sigma(theta) is not PSD");
    }
    Vector x(d);
    for (Eigen::Index j = 0; j < d; ++j) x[j] = replay != nullptr ? replay->draws[j] : rng.normal();

    Vector scaled(d);
    const double lambda = run_lambda(bundle, hp);
    const Vector in_basis = spec.basis.transpose() * x;
    for (Eigen::Index j = 0; j < d; ++j) {
        scaled[j] = std::sqrt(hp.eta * lambda * std::max(spec.eigenvalues[j], 0.0)) * in_basis[j];
    }
    const Vector noise = spec.basis * scaled;
    if (record != nullptr) {
        record->batch.clear();
        record->draws.assign(x.data(), x.data() + d);
    }
    return theta - hp.eta * grad(bundle, theta) + noise;
}

Vector step_minibatch(const LossBundle& bundle, const Vector& theta, const HyperParams& hp,
                      Rng& rng, StepRecord* record, const StepRecord* replay) {
    const int n = bundle.model->sample_count();
    std::vector<std::int32_t> own;
    const auto& batch = batch_of(replay, own, n, hp.batch, rng);

    Vector g = Vector::Zero(theta.size());
    for (const std::int32_t i : batch) {
        const double y = bundle.data.targets[i];
        const double f = bundle.model->eval(i, theta);
        const double d1 = bundle.kind == LossKind::RegressionSquare
                              ? f - y
                              : y * smoothed_loss_deriv(bundle.cls_loss, bundle.p, y * f);
        g += d1 * bundle.model->grad(i, theta);
    }
    g /= static_cast<double>(batch.size());
    if (record != nullptr) {
        record->batch = batch;
        record->draws.clear();
    }
    return theta - hp.eta * g;
}

Vector step_heavy_ball(const Vector& stepped, const Vector& theta, const Vector& theta_prev,
                       double beta) {
    if (beta == 0.0) return stepped;
    return stepped + beta * (theta - theta_prev);
}

namespace {

DiagRow diagnostics_at(const LossBundle& bundle, const Vector& theta, const RegConfig& cfg,
                       long step) {
    DiagRow row;
    row.step = step;
    row.loss = loss(bundle, theta);
    row.grad_norm = grad(bundle, theta).norm();
    const Spectrum spec = eig_sym(hessian(bundle, theta));
    row.tr_hess = spec.eigenvalues.sum();
    row.top_eig = spec.eigenvalues[0];
    try {
        row.reg = reg_value(bundle, theta, cfg);
    } catch (const EdgeOfStabilityError&) {
        row.reg = std::numeric_limits<double>::quiet_NaN();
    }
    return row;
}

}  // namespace

Trajectory run(const LossBundle& bundle, const Vector& theta0, const HyperParams& hp,
               long record_stride, bool keep_noise_log, const NoiseLog* replay,
               const SigmaFn& sigma_fn) {
    if (record_stride < 1) throw std::invalid_argument("run: record_stride must be >= 1");
    if (replay != nullptr && static_cast<long>(replay->steps.size()) < hp.steps) {
        throw std::invalid_argument("run: replay log shorter than requested steps");
    }
    const RegConfig cfg = reg_config_for(bundle, hp);
    SigmaFn sigma = sigma_fn;
    if (!sigma && hp.noise == NoiseKind::GaussianCov) {
        sigma = [&bundle](const Vector& t) { return gauss_newton(bundle, t); };
    }

    Rng rng(hp.seed, hp.stream);
    Trajectory traj;
    traj.has_noise_log = keep_noise_log;

    Vector theta = theta0;
    Vector theta_prev = theta0;  // zero initial velocity

    auto record_point = [&](long step) {
        traj.recorded_steps.push_back(step);
        traj.iterates.push_back(theta);
        traj.diagnostics.push_back(diagnostics_at(bundle, theta, cfg, step));
    };
    record_point(0);

    for (long k = 0; k < hp.steps; ++k) {
        StepRecord record;
        StepRecord* rec = keep_noise_log ? &record : nullptr;
        const StepRecord* rep = replay != nullptr ? &replay->steps[k] : nullptr;

        Vector stepped;
        switch (hp.noise) {
            case NoiseKind::RademacherLabel:
                stepped = step_label_noise(bundle, theta, hp, rng, rec, rep, /*gaussian=*/false);
                break;
            case NoiseKind::GaussianLabel:
                stepped = step_label_noise(bundle, theta, hp, rng, rec, rep, /*gaussian=*/true);
                break;
            case NoiseKind::LabelFlip:
                stepped = step_label_smoothing(bundle, theta, hp, rng, rec, rep);
                break;
            case NoiseKind::GaussianCov:
                stepped = step_gaussian_cov(bundle, theta, hp, sigma, rng, rec, rep);
                break;
            case NoiseKind::None:
                stepped = step_minibatch(bundle, theta, hp, rng, rec, rep);
                break;
        }
        Vector next = step_heavy_ball(stepped, theta, theta_prev, hp.beta);
        theta_prev = std::move(theta);
        theta = std::move(next);
        if (keep_noise_log) traj.noise_log.steps.push_back(std::move(record));

        const long step = k + 1;
        if (step % record_stride == 0 || step == hp.steps) record_point(step);
    }
    traj.final_theta = theta;
    return traj;
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj, bool include_theta) {
    std::vector<std::string> header = {"step", "loss", "R", "trH", "gradnorm", "top_eig"};
    const Eigen::Index d = traj.iterates.empty() ? 0 : traj.iterates.front().size();
    if (include_theta) {
        for (Eigen::Index j = 0; j < d; ++j) header.push_back("theta_" + std::to_string(j));
    }
    CsvWriter csv(std::move(header));
    for (std::size_t k = 0; k < traj.diagnostics.size(); ++k) {
        const DiagRow& row = traj.diagnostics[k];
        std::vector<std::string> cells = {std::to_string(row.step), fmt17(row.loss),
                                          fmt17(row.reg),           fmt17(row.tr_hess),
                                          fmt17(row.grad_norm),     fmt17(row.top_eig)};
        if (include_theta) {
            for (Eigen::Index j = 0; j < d; ++j) cells.push_back(fmt17(traj.iterates[k][j]));
        }
        csv.add_row(std::move(cells));
    }
    csv.write(path);
}

Vector phi_step(const LossBundle& bundle, const Vector& theta, const RegConfig& cfg) {
    return theta - cfg.eta * reg_loss(bundle, theta, cfg).second;
}

std::vector<Vector> run_phi(const LossBundle& bundle, const Vector& theta0, const RegConfig& cfg,
                            long k) {
    std::vector<Vector> path;
    path.reserve(k + 1);
    path.push_back(theta0);
    Vector theta = theta0;
    Vector theta_prev = theta0;
    for (long j = 0; j < k; ++j) {
        Vector next = phi_step(bundle, theta, cfg);
        if (cfg.beta != 0.0) next += cfg.beta * (theta - theta_prev);
        theta_prev = std::move(theta);
        theta = std::move(next);
        path.push_back(theta);
    }
    return path;
}

}  // namespace flatreg
