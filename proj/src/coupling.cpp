#include "flatreg/coupling.hpp"

#include <cmath>

#include "flatreg/errors.hpp"

namespace flatreg {

namespace {

struct ReferenceData {
    std::vector<Vector> grads;  // grad f_i(theta*)
    Matrix contraction;         // I - eta G(theta*)
};

ReferenceData prepare_reference(const LossBundle& bundle, const Vector& theta_star, double eta) {
    if (bundle.kind != LossKind::RegressionSquare) {
        throw std::invalid_argument("OU processes are defined for regression bundles");
    }
    ReferenceData ref;
    const int n = bundle.model->sample_count();
    ref.grads.reserve(n);
    for (int i = 0; i < n; ++i) ref.grads.push_back(bundle.model->grad(i, theta_star));
    const Matrix g = gauss_newton(bundle, theta_star);
    ref.contraction = Matrix::Identity(g.rows(), g.cols()) - eta * g;
    return ref;
}

// eps*_k = (eta/B) sum_j eps_j grad f_{i_j}(theta*), with draws either
// replayed or freshly generated exactly as step_label_noise would.
Vector driving_noise(const ReferenceData& ref, const HyperParams& hp, Rng& rng,
                     const StepRecord* replay, int n, Eigen::Index dim) {
    Vector eps = Vector::Zero(dim);
    const bool gaussian = hp.noise == NoiseKind::GaussianLabel;
    if (replay != nullptr) {
        for (std::size_t j = 0; j < replay->batch.size(); ++j) {
            eps += replay->draws[j] * ref.grads[replay->batch[j]];
        }
        eps *= hp.eta / static_cast<double>(replay->batch.size());
        return eps;
    }
    for (int j = 0; j < hp.batch; ++j) {
        const int i = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
        const double draw = gaussian ? hp.sigma * rng.normal() : hp.sigma * rng.rademacher();
        eps += draw * ref.grads[i];
    }
    eps *= hp.eta / static_cast<double>(hp.batch);
    return eps;
}

}  // namespace

OUProcess ou_run(const LossBundle& bundle, const Vector& theta_star, const HyperParams& hp,
                 long horizon, const NoiseLog* replay) {
    std::vector<OUReference> refs{{theta_star, horizon}};
    return ou_chained(bundle, refs, hp, replay);
}

OUProcess ou_chained(const LossBundle& bundle, const std::vector<OUReference>& references,
                     const HyperParams& hp, const NoiseLog* replay) {
    if (references.empty()) throw std::invalid_argument("ou_chained: no references");
    const int n = bundle.model->sample_count();
    const Eigen::Index dim = references.front().theta_star.size();

    long horizon = 0;
    for (const OUReference& r : references) horizon += r.tau;
    if (replay != nullptr && static_cast<long>(replay->steps.size()) < horizon) {
        throw std::invalid_argument("ou_chained: replay log shorter than horizon");
    }

    Rng rng(hp.seed, hp.stream);
    OUProcess out;
    out.xi.reserve(horizon + 1);
    out.xi.push_back(Vector::Zero(dim));

    Vector xi = Vector::Zero(dim);
    long k = 0;
    for (const OUReference& r : references) {
        const ReferenceData ref = prepare_reference(bundle, r.theta_star, hp.eta);
        for (long t = 0; t < r.tau; ++t, ++k) {
            const StepRecord* rep = replay != nullptr ? &replay->steps[k] : nullptr;
            const Vector eps = driving_noise(ref, hp, rng, rep, n, dim);
            xi = ref.contraction * xi + eps;
            out.xi.push_back(xi);
        }
    }
    out.reference = references.back().theta_star;
    out.g_ref = gauss_newton(bundle, references.back().theta_star);
    return out;
}

OUProcess ou_momentum(const LossBundle& bundle, const Vector& theta_star, const HyperParams& hp,
                      long horizon, const NoiseLog* replay) {
    if (!(hp.beta >= 0.0 && hp.beta < 1.0)) {
        throw std::invalid_argument("ou_momentum: beta must be in [0,1)");
    }
    if (replay != nullptr && static_cast<long>(replay->steps.size()) < horizon) {
        throw std::invalid_argument("ou_momentum: replay log shorter than horizon");
    }
    const int n = bundle.model->sample_count();
    const Eigen::Index dim = theta_star.size();
    const ReferenceData ref = prepare_reference(bundle, theta_star, hp.eta);

    Rng rng(hp.seed, hp.stream);
    OUProcess out;
    out.xi.reserve(horizon + 1);
    out.xi.push_back(Vector::Zero(dim));

    Vector xi = Vector::Zero(dim);
    Vector xi_prev = Vector::Zero(dim);
    for (long k = 0; k < horizon; ++k) {
        const StepRecord* rep = replay != nullptr ? &replay->steps[k] : nullptr;
        const Vector eps = driving_noise(ref, hp, rng, rep, n, dim);
        Vector next = ref.contraction * xi + eps;
        if (hp.beta != 0.0) next += hp.beta * (xi - xi_prev);
        xi_prev = std::move(xi);
        xi = std::move(next);
        out.xi.push_back(xi);
    }
    out.reference = theta_star;
    out.g_ref = gauss_newton(bundle, theta_star);
    return out;
}

Matrix stationary_cov(const std::vector<Vector>& samples, long burn_in) {
    if (static_cast<long>(samples.size()) <= burn_in) {
        throw InsufficientSamplesError("stationary_cov: no samples after burn-in");
    }
    const Eigen::Index d = samples.front().size();
    Matrix cov = Matrix::Zero(d, d);
    long count = 0;
    for (std::size_t k = static_cast<std::size_t>(burn_in); k < samples.size(); ++k) {
        cov += samples[k] * samples[k].transpose();
        ++count;
    }
    return cov / static_cast<double>(count);
}

Matrix ou_cov_closed_form(const Matrix& G, double eta, double lambda) {
    const Matrix proj = projector_onto_range(G);
    const Matrix weighted = spectral_apply(G, [eta](double lam) { return 1.0 / (2.0 - eta * lam); });
    return lambda * proj * weighted;
}

Matrix ou_momentum_cov_fixed_point(const Matrix& G, double eta, double beta, double lambda,
                                   int max_iters, double tol) {
    const Eigen::Index d = G.rows();
    Matrix a(2 * d, 2 * d);
    a.topLeftCorner(d, d) = Matrix::Identity(d, d) * (1.0 + beta) - eta * G;
    a.topRightCorner(d, d) = -beta * Matrix::Identity(d, d);
    a.bottomLeftCorner(d, d) = Matrix::Identity(d, d);
    a.bottomRightCorner(d, d) = Matrix::Zero(d, d);

    Matrix q = Matrix::Zero(2 * d, 2 * d);
    q.topLeftCorner(d, d) = (1.0 - beta) * eta * lambda * G;

    Matrix s = Matrix::Zero(2 * d, 2 * d);
    for (int it = 0; it < max_iters; ++it) {
        const Matrix next = a * s * a.transpose() + q;
        const double delta = (next - s).norm();
        s = next;
        if (delta <= tol * std::max(1.0, s.norm())) break;
    }
    return s.topLeftCorner(d, d);
}

CouplingReport coupling_experiment(const LossBundle& bundle, const Vector& theta_star,
                                   const Vector& delta0, const HyperParams& hp, long horizon) {
    if (hp.noise != NoiseKind::RademacherLabel && hp.noise != NoiseKind::GaussianLabel) {
        throw std::invalid_argument("coupling_experiment requires label noise");
    }
    const RegConfig cfg = reg_config_for(bundle, hp);
    CouplingReport report;
    report.predicted_scale = std::sqrt(cfg.lambda);
    report.loss_warning = loss(bundle, theta_star) > std::pow(cfg.lambda, 1.5);

    const ReferenceData ref = prepare_reference(bundle, theta_star, hp.eta);
    const Eigen::Index dim = theta_star.size();

    // All three processes advance in lockstep on the same draws.
    Rng rng(hp.seed, hp.stream);
    Vector theta = theta_star + delta0;
    Vector xi = Vector::Zero(dim);
    Vector phi = theta_star + delta0;

    report.residual.reserve(horizon + 1);
    report.xi_norm.reserve(horizon + 1);
    report.phi_dist.reserve(horizon + 1);

    auto push = [&]() {
        const double r = (theta - xi - phi).norm();
        const double pd = (theta - phi).norm();
        report.residual.push_back(r);
        report.xi_norm.push_back(xi.norm());
        report.phi_dist.push_back(pd);
        report.max_residual = std::max(report.max_residual, r);
        report.max_phi_dist = std::max(report.max_phi_dist, pd);
    };
    push();

    for (long k = 0; k < horizon; ++k) {
        StepRecord record;
        theta = step_label_noise(bundle, theta, hp, rng, &record, nullptr,
                                 hp.noise == NoiseKind::GaussianLabel);
        Vector eps = Vector::Zero(dim);
        for (std::size_t j = 0; j < record.batch.size(); ++j) {
            eps += record.draws[j] * ref.grads[record.batch[j]];
        }
        eps *= hp.eta / static_cast<double>(record.batch.size());
        xi = ref.contraction * xi + eps;
        phi = phi_step(bundle, phi, cfg);
        push();
    }
    return report;
}

EpsGammaResult eps_gamma_check(const LossBundle& bundle, const Vector& theta, const RegConfig& cfg,
                               double eps, double gamma, long search_budget) {
    if (!(eps > 0.0) || !(gamma > 0.0)) {
        throw std::invalid_argument("eps_gamma_check: eps and gamma must be positive");
    }
    if (!(cfg.lambda > 0.0)) {
        throw std::invalid_argument("eps_gamma_check: lambda must be positive");
    }
    EpsGammaResult result;
    Vector point = theta;
    for (long k = 0; k <= search_budget; ++k) {
        const auto [value, gradient] = reg_loss(bundle, point, cfg);
        (void)value;
        result.steps_used = k;
        if (gradient.norm() / cfg.lambda <= eps && (point - theta).norm() <= gamma) {
            result.verdict = EpsGammaVerdict::Satisfied;
            result.witness = point;
            return result;
        }
        if (k == search_budget) break;
        point -= cfg.eta * gradient;
    }
    return result;
}

}  // namespace flatreg
