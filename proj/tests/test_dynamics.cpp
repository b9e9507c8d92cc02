#include <doctest.h>

#include <cmath>

#include "flatreg/dynamics.hpp"
#include "flatreg/rng.hpp"

using namespace flatreg;

namespace {

LossBundle quad_bundle(const Matrix& h) {
    auto [model, data] = make_quadratic(h, Vector::Zero(h.rows()));
    return LossBundle::regression(model, data);
}

LossBundle small_quad_param(Rng& rng, int d = 3, int n = 3) {
    std::vector<Vector> design;
    for (int i = 0; i < n; ++i) {
        Vector x(d);
        for (int j = 0; j < d; ++j) x[j] = rng.normal();
        design.push_back(x);
    }
    Vector w = Vector::Zero(d);
    w[0] = 1.0;
    auto [model, data] = make_quad_param_regression(design, w);
    return LossBundle::regression(model, data);
}

}  // namespace

TEST_CASE("label-noise step: noiseless full batch is a gradient step") {
    Matrix h(2, 2);
    h << 1.0, 0.25, 0.25, 0.5;
    const LossBundle bundle = quad_bundle(h);
    HyperParams hp;
    hp.eta = 0.1;
    hp.sigma = 0.0;
    hp.batch = bundle.model->sample_count();
    Rng rng(1, 0);

    Vector theta(2);
    theta << 1.0, -2.0;
    // With replacement the batch is a multiset; average the sampled gradients
    // by hand from the recorded indices.
    StepRecord record;
    const Vector stepped = step_label_noise(bundle, theta, hp, rng, &record);
    Vector manual = Vector::Zero(2);
    for (const int i : record.batch) {
        manual += (bundle.model->eval(i, theta) - bundle.data.targets[i]) *
                  bundle.model->grad(i, theta);
    }
    manual = theta - hp.eta * manual / static_cast<double>(record.batch.size());
    CHECK((stepped - manual).norm() == 0.0);

    // At the exact minimizer with sigma = 0 the step is a fixed point.
    const Vector zero = Vector::Zero(2);
    const Vector stay = step_label_noise(bundle, zero, hp, rng);
    CHECK(stay.norm() == 0.0);
}

TEST_CASE("label-noise step is unbiased: mean update equals -eta grad L") {
    Rng model_rng(3, 0);
    const LossBundle bundle = small_quad_param(model_rng);
    HyperParams hp;
    hp.eta = 0.05;
    hp.sigma = 0.4;
    hp.batch = 2;
    Rng rng(99, 0);

    Vector theta(3);
    theta << 0.7, -0.3, 0.2;
    const Vector expected = -hp.eta * grad(bundle, theta);

    const int draws = 100000;
    Vector mean = Vector::Zero(3);
    Vector second = Vector::Zero(3);
    for (int k = 0; k < draws; ++k) {
        const Vector delta = step_label_noise(bundle, theta, hp, rng) - theta;
        mean += delta;
        second += delta.cwiseProduct(delta);
    }
    mean /= draws;
    second /= draws;
    for (int j = 0; j < 3; ++j) {
        const double se = std::sqrt((second[j] - mean[j] * mean[j]) / draws);
        CHECK(std::abs(mean[j] - expected[j]) <= 3.0 * se + 1e-12);
    }
}

TEST_CASE("label-noise covariance matches eta lambda G at a minimizer") {
    Rng model_rng(5, 0);
    const LossBundle bundle = small_quad_param(model_rng);
    Vector interp = Vector::Zero(3);
    interp[0] = 1.0;  // zero loss: only label noise remains

    HyperParams hp;
    hp.eta = 0.1;
    hp.sigma = 0.5;
    hp.batch = 1;
    const double lambda = run_lambda(bundle, hp);
    const Matrix target = hp.eta * lambda * gauss_newton(bundle, interp);

    Rng rng(7, 1);
    const int draws = 200000;
    Matrix cov = Matrix::Zero(3, 3);
    for (int k = 0; k < draws; ++k) {
        const Vector delta = step_label_noise(bundle, interp, hp, rng) - interp;
        cov += delta * delta.transpose();
    }
    cov /= draws;
    CHECK((cov - target).norm() <= 0.05 * target.norm());
}

TEST_CASE("label smoothing: zero expected step at the smoothed minimizer") {
    const double p = 0.2;
    const LossConstants k = loss_constants(ClsLoss::Logistic, p);
    std::vector<Vector> design{Vector::Ones(1)};
    auto [model, data] = make_quad_param_regression(design, Vector::Zero(1));
    Dataset labels;
    labels.targets = {1.0};
    const LossBundle bundle = LossBundle::classification(model, labels, ClsLoss::Logistic, p);

    Vector theta(1);
    theta << std::sqrt(k.c);
    HyperParams hp;
    hp.eta = 0.1;
    hp.batch = 1;
    hp.p = p;
    hp.noise = NoiseKind::LabelFlip;
    Rng rng(11, 0);

    const int draws = 100000;
    const double scale = hp.eta * bundle.model->grad(0, theta)[0];
    double mean_eps = 0.0, second_eps = 0.0;
    for (int i = 0; i < draws; ++i) {
        const Vector stepped = step_label_smoothing(bundle, theta, hp, rng);
        // theta' - theta = -eta eps grad f at the minimizer (lbar'(c) = 0).
        const double eps = (theta[0] - stepped[0]) / scale;
        mean_eps += eps;
        second_eps += eps * eps;
    }
    mean_eps /= draws;
    second_eps /= draws;
    const double se_mean = std::sqrt((second_eps - mean_eps * mean_eps) / draws);
    CHECK(std::abs(mean_eps) <= 3.0 * se_mean);
    CHECK(std::abs(second_eps - k.sigma_sq) <= 0.02 * k.sigma_sq);
}

TEST_CASE("label smoothing with flips suppressed is plain smoothed SGD") {
    // p -> 0: the flip probability vanishes, so a single step with any draw
    // where sigma = +1 equals minibatch SGD on l(y f).
    const double p = 1e-12;
    std::vector<Vector> design{Vector::Ones(2)};
    auto [model, data] = make_quad_param_regression(design, Vector::Zero(2));
    Dataset labels;
    labels.targets = {1.0};
    const LossBundle bundle = LossBundle::classification(model, labels, ClsLoss::Logistic, p);
    HyperParams hp;
    hp.eta = 0.1;
    hp.batch = 1;
    hp.p = p;
    Rng rng(3, 0);
    Vector theta(2);
    theta << 0.4, -0.2;
    const Vector stepped = step_label_smoothing(bundle, theta, hp, rng);
    const double margin = bundle.model->eval(0, theta);
    const Vector manual =
        theta - hp.eta * cls_loss_deriv(ClsLoss::Logistic, margin) * bundle.model->grad(0, theta);
    CHECK((stepped - manual).norm() <= 1e-15);
}

TEST_CASE("gaussian covariance step: zero Sigma is gradient descent") {
    Matrix h(2, 2);
    h << 1.0, 0.0, 0.0, 0.5;
    const LossBundle bundle = quad_bundle(h);
    HyperParams hp;
    hp.eta = 0.1;
    hp.sigma = 0.3;
    hp.batch = 1;
    hp.noise = NoiseKind::GaussianCov;
    Rng rng(13, 0);
    Vector theta(2);
    theta << 1.0, 1.0;
    const SigmaFn zero_fn = [](const Vector& t) { return Matrix::Zero(t.size(), t.size()); };
    const Vector stepped = step_gaussian_cov(bundle, theta, hp, zero_fn, rng);
    CHECK((stepped - (theta - hp.eta * grad(bundle, theta))).norm() <= 1e-15);
}

TEST_CASE("gaussian covariance step: empirical covariance matches") {
    Matrix h(2, 2);
    h << 0.8, 0.2, 0.2, 0.6;
    const LossBundle bundle = quad_bundle(h);
    HyperParams hp;
    hp.eta = 0.1;
    hp.sigma = 0.5;
    hp.batch = 1;
    hp.noise = NoiseKind::GaussianCov;
    const double lambda = run_lambda(bundle, hp);
    Rng rng(17, 0);
    const Vector theta = Vector::Zero(2);  // grad L = 0 at the minimizer
    const SigmaFn sig = [&](const Vector& t) { return gauss_newton(bundle, t); };
    const Matrix target = hp.eta * lambda * gauss_newton(bundle, theta);

    Matrix cov = Matrix::Zero(2, 2);
    const int draws = 100000;
    for (int k = 0; k < draws; ++k) {
        const Vector delta = step_gaussian_cov(bundle, theta, hp, sig, rng) - theta;
        cov += delta * delta.transpose();
    }
    cov /= draws;
    CHECK((cov - target).norm() <= 0.05 * target.norm());
}

TEST_CASE("gaussian-cov with Sigma = G matches gaussian-label noise to second moments") {
    Matrix h(2, 2);
    h << 0.9, 0.3, 0.3, 0.5;
    const LossBundle bundle = quad_bundle(h);
    const int n = bundle.model->sample_count();
    // Compare at the minimizer, where the minibatch term vanishes and the
    // label-noise covariance is exactly eta lambda G.
    const Vector theta = Vector::Zero(2);

    HyperParams label_hp;
    label_hp.eta = 0.1;
    label_hp.sigma = 0.4;
    label_hp.batch = n;
    label_hp.noise = NoiseKind::GaussianLabel;

    HyperParams cov_hp = label_hp;
    cov_hp.noise = NoiseKind::GaussianCov;
    const SigmaFn sig = [&](const Vector& t) { return gauss_newton(bundle, t); };

    Rng rng_a(61, 0), rng_b(61, 1);
    const int draws = 100000;
    Vector mean_a = Vector::Zero(2), mean_b = Vector::Zero(2);
    Matrix cov_a = Matrix::Zero(2, 2), cov_b = Matrix::Zero(2, 2);
    for (int k = 0; k < draws; ++k) {
        const Vector da = step_label_noise(bundle, theta, label_hp, rng_a, nullptr, nullptr,
                                           /*gaussian=*/true) - theta;
        const Vector db = step_gaussian_cov(bundle, theta, cov_hp, sig, rng_b) - theta;
        mean_a += da;
        mean_b += db;
        cov_a += da * da.transpose();
        cov_b += db * db.transpose();
    }
    mean_a /= draws;
    mean_b /= draws;
    cov_a = cov_a / draws - mean_a * mean_a.transpose();
    cov_b = cov_b / draws - mean_b * mean_b.transpose();
    const Matrix target = label_hp.eta * run_lambda(bundle, label_hp) *
                          gauss_newton(bundle, theta);
    CHECK(mean_a.norm() <= 3.0 * std::sqrt(target.trace() / draws));
    CHECK(mean_b.norm() <= 3.0 * std::sqrt(target.trace() / draws));
    CHECK((cov_a - cov_b).norm() <= 0.05 * target.norm());
    CHECK((cov_a - target).norm() <= 0.05 * target.norm());
    CHECK((cov_b - target).norm() <= 0.05 * target.norm());
}

TEST_CASE("heavy ball: beta 0 wraps nothing, geometric displacement limit") {
    Vector theta(2), prev(2), stepped(2);
    theta << 1.0, 2.0;
    prev << 0.5, 2.5;
    stepped << 0.9, 1.9;
    CHECK((step_heavy_ball(stepped, theta, prev, 0.0) - stepped).norm() == 0.0);

    // Constant gradient g: x' = x - eta g + beta (x - x_prev) approaches
    // displacement -eta g / (1 - beta) per step.
    const double eta = 0.1, beta = 0.7;
    Vector g(1);
    g << 2.0;
    Vector x(1), x_prev(1);
    x << 0.0;
    x_prev << 0.0;
    for (int k = 0; k < 500; ++k) {
        const Vector next = step_heavy_ball(x - eta * g, x, x_prev, beta);
        x_prev = x;
        x = next;
    }
    const double displacement = (x - x_prev)[0];
    CHECK(displacement == doctest::Approx(-eta * 2.0 / (1.0 - beta)).epsilon(1e-6));
}

TEST_CASE("heavy ball on a quadratic converges below the extended stability bound") {
    Matrix h(2, 2);
    h << 1.0, 0.0, 0.0, 0.4;
    const LossBundle bundle = quad_bundle(h);
    RegConfig cfg;
    cfg.eta = 1.7 * (1.0 + 0.5) / 1.0;  // eta < 2 (1 + beta) / lam_max = 3
    cfg.beta = 0.5;
    cfg.lambda = 0.0;
    Vector theta0(2);
    theta0 << 1.0, -1.0;
    const auto path = run_phi(bundle, theta0, cfg, 1000);
    CHECK(path.back().norm() < 1e-3 * theta0.norm());

    // Plain gradient descent at this eta diverges: the momentum term is what
    // stabilizes the step.
    RegConfig plain = cfg;
    plain.beta = 0.0;
    const auto diverged = run_phi(bundle, theta0, plain, 50);
    CHECK(diverged.back().norm() > 100.0);
}

TEST_CASE("run: T=0, determinism, and bit-exact replay") {
    Rng model_rng(19, 0);
    const LossBundle bundle = small_quad_param(model_rng);
    HyperParams hp;
    hp.eta = 0.05;
    hp.sigma = 0.3;
    hp.batch = 2;
    hp.steps = 0;
    hp.seed = 42;
    Vector theta0(3);
    theta0 << 0.5, 0.2, -0.1;

    const Trajectory empty = run(bundle, theta0, hp);
    CHECK(empty.iterates.size() == 1);
    CHECK((empty.iterates[0] - theta0).norm() == 0.0);

    hp.steps = 50;
    const Trajectory a = run(bundle, theta0, hp, 1, /*keep_noise_log=*/true);
    const Trajectory b = run(bundle, theta0, hp, 1, /*keep_noise_log=*/true);
    REQUIRE(a.iterates.size() == b.iterates.size());
    for (std::size_t k = 0; k < a.iterates.size(); ++k) {
        CHECK((a.iterates[k] - b.iterates[k]).norm() == 0.0);
    }

    // Replay through the log reproduces the trajectory bit for bit, even
    // with a different seed.
    HyperParams hp_replay = hp;
    hp_replay.seed = 777;
    const Trajectory c = run(bundle, theta0, hp_replay, 1, false, &a.noise_log);
    REQUIRE(c.iterates.size() == a.iterates.size());
    for (std::size_t k = 0; k < a.iterates.size(); ++k) {
        CHECK((c.iterates[k] - a.iterates[k]).norm() == 0.0);
    }
}

TEST_CASE("minibatch SGD is pinned at an exact interpolating minimizer") {
    Rng model_rng(23, 0);
    const LossBundle bundle = small_quad_param(model_rng);
    Vector interp = Vector::Zero(3);
    interp[0] = 1.0;
    HyperParams hp;
    hp.eta = 0.1;
    hp.sigma = 0.0;
    hp.batch = 1;
    hp.steps = 2000;
    hp.noise = NoiseKind::None;
    const Trajectory traj = run(bundle, interp, hp, 100);
    for (const Vector& theta : traj.iterates) {
        CHECK((theta - interp).norm() <= 1e-12);
    }
}

TEST_CASE("phi trajectory: closed form at lambda 0 and fixed points") {
    Matrix h(2, 2);
    h << 0.9, 0.2, 0.2, 0.4;
    const LossBundle bundle = quad_bundle(h);
    RegConfig cfg;
    cfg.eta = 0.2;
    cfg.lambda = 0.0;
    Vector theta0(2);
    theta0 << 1.0, -0.5;

    const auto path = run_phi(bundle, theta0, cfg, 25);
    Matrix power = Matrix::Identity(2, 2);
    const Matrix step = Matrix::Identity(2, 2) - cfg.eta * h;
    for (int k = 0; k < 25; ++k) power = step * power;
    CHECK((path.back() - power * theta0).norm() <= 1e-10);

    // grad Ltilde = 0 at the quadratic minimizer (R is constant).
    cfg.lambda = 0.01;
    const Vector fixed = phi_step(bundle, Vector::Zero(2), cfg);
    CHECK(fixed.norm() <= 1e-12);
}

TEST_CASE("phi drifts down the curvature at an interpolating minimizer") {
    Rng model_rng(29, 0);
    const LossBundle bundle = small_quad_param(model_rng);
    Vector interp = Vector::Zero(3);
    interp[0] = 1.0;
    RegConfig cfg;
    cfg.eta = 0.02;
    cfg.lambda = 0.01;
    const auto path = run_phi(bundle, interp, cfg, 200);
    const double before = hessian(bundle, path.front()).trace();
    const double after = hessian(bundle, path.back()).trace();
    CHECK(after < before);
}
