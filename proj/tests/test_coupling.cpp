#include <doctest.h>

#include <cmath>
#include <limits>

#include "flatreg/coupling.hpp"
#include "flatreg/errors.hpp"
#include "flatreg/rng.hpp"

using namespace flatreg;

namespace {

LossBundle scalar_quad(double curvature) {
    Matrix h(1, 1);
    h << curvature;
    auto [model, data] = make_quadratic(h, Vector::Zero(1));
    return LossBundle::regression(model, data);
}

LossBundle quad_bundle(const Matrix& h) {
    auto [model, data] = make_quadratic(h, Vector::Zero(h.rows()));
    return LossBundle::regression(model, data);
}

}  // namespace

TEST_CASE("ou_run: zero noise keeps xi at zero, replay shares draws") {
    const LossBundle bundle = scalar_quad(1.0);
    HyperParams hp;
    hp.eta = 0.1;
    hp.sigma = 0.0;
    hp.batch = 1;
    const OUProcess quiet = ou_run(bundle, Vector::Zero(1), hp, 100);
    for (const Vector& xi : quiet.xi) CHECK(xi.norm() == 0.0);

    // A logged SGD run drives the OU identically under replay.
    hp.sigma = 0.4;
    hp.steps = 50;
    hp.seed = 5;
    const Trajectory traj = run(bundle, Vector::Zero(1), hp, 1, /*keep_noise_log=*/true);
    const OUProcess replayed = ou_run(bundle, Vector::Zero(1), hp, 50, &traj.noise_log);
    // At the reference the SGD deviation and the OU coincide exactly:
    // theta* is a fixed point so theta_k - theta* follows the same recursion.
    for (std::size_t k = 0; k < replayed.xi.size(); ++k) {
        CHECK((traj.iterates[k] - replayed.xi[k]).norm() <= 1e-12);
    }
}

TEST_CASE("ou linear-recursion identity against the power sum") {
    Matrix h(3, 3);
    h << 0.9, 0.1, 0.0, 0.1, 0.5, 0.05, 0.0, 0.05, 0.3;
    const LossBundle bundle = quad_bundle(h);
    HyperParams hp;
    hp.eta = 0.2;
    hp.sigma = 0.5;
    hp.batch = 2;
    hp.seed = 11;
    hp.steps = 40;
    const Vector ref = Vector::Zero(3);
    const Trajectory traj = run(bundle, ref, hp, 1, true);
    const OUProcess ou = ou_run(bundle, ref, hp, 40, &traj.noise_log);

    // Reconstruct eps*_k from the log and check
    // xi_k = sum_{j<k} (I - eta G)^j eps*_{k-j-1}.
    const Matrix g_ref = gauss_newton(bundle, ref);
    const Matrix contraction = Matrix::Identity(3, 3) - hp.eta * g_ref;
    std::vector<Vector> eps;
    for (const StepRecord& record : traj.noise_log.steps) {
        Vector e = Vector::Zero(3);
        for (std::size_t j = 0; j < record.batch.size(); ++j) {
            e += record.draws[j] * bundle.model->grad(record.batch[j], ref);
        }
        eps.push_back(e * hp.eta / static_cast<double>(record.batch.size()));
    }
    for (int k : {1, 5, 17, 40}) {
        Vector direct = Vector::Zero(3);
        Matrix power = Matrix::Identity(3, 3);
        for (int j = 0; j < k; ++j) {
            direct += power * eps[k - j - 1];
            power = contraction * power;
        }
        CHECK((ou.xi[k] - direct).norm() <= 1e-12 * std::max(1.0, direct.norm()));
    }
}

TEST_CASE("ou_chained: single and repeated references reduce to ou_run") {
    Matrix h(2, 2);
    h << 0.8, 0.1, 0.1, 0.4;
    const LossBundle bundle = quad_bundle(h);
    HyperParams hp;
    hp.eta = 0.1;
    hp.sigma = 0.3;
    hp.batch = 1;
    hp.seed = 3;
    const Vector ref = Vector::Zero(2);

    const OUProcess plain = ou_run(bundle, ref, hp, 60);
    const OUProcess single = ou_chained(bundle, {{ref, 60}}, hp);
    const OUProcess twice = ou_chained(bundle, {{ref, 25}, {ref, 35}}, hp);
    REQUIRE(plain.xi.size() == single.xi.size());
    REQUIRE(plain.xi.size() == twice.xi.size());
    for (std::size_t k = 0; k < plain.xi.size(); ++k) {
        CHECK((plain.xi[k] - single.xi[k]).norm() == 0.0);
        CHECK((plain.xi[k] - twice.xi[k]).norm() == 0.0);
    }
}

TEST_CASE("scalar OU stationary variance matches lambda/(2 - eta)") {
    const LossBundle bundle = scalar_quad(1.0);
    HyperParams hp;
    hp.eta = 0.1;
    hp.batch = 1;
    hp.seed = 21;
    const double lambda = 0.01;
    hp.sigma = std::sqrt(lambda * hp.batch / hp.eta);

    const long horizon = 200000;
    const OUProcess ou = ou_run(bundle, Vector::Zero(1), hp, horizon);
    const Matrix cov = stationary_cov(ou.xi, 1000);
    CHECK(std::abs(cov(0, 0) - lambda / 1.9) <= 0.05 * (lambda / 1.9));

    // Mean after burn-in is near zero at the sqrt(stationary variance) scale.
    double mean = 0.0;
    for (std::size_t k = 1000; k < ou.xi.size(); ++k) mean += ou.xi[k][0];
    mean /= static_cast<double>(ou.xi.size() - 1000);
    CHECK(std::abs(mean) <= 3.0 * std::sqrt(lambda / 1.9));
}

TEST_CASE("stationary_cov edge cases") {
    std::vector<Vector> zeros(100, Vector::Zero(2));
    CHECK(stationary_cov(zeros, 10).norm() == 0.0);
    CHECK_THROWS_AS(stationary_cov(zeros, 100), InsufficientSamplesError);

    // Singular direction: G = diag(1, 0) leaves the second coordinate quiet.
    Matrix h = Matrix::Zero(2, 2);
    h(0, 0) = 1.0;
    const LossBundle bundle = quad_bundle(h);
    HyperParams hp;
    hp.eta = 0.1;
    hp.sigma = 0.3;
    hp.batch = 1;
    hp.seed = 9;
    const OUProcess ou = ou_run(bundle, Vector::Zero(2), hp, 20000);
    const Matrix cov = stationary_cov(ou.xi, 500);
    CHECK(std::abs(cov(1, 1)) <= 1e-20);
    CHECK(cov(0, 0) > 0.0);
}

TEST_CASE("chained OU with distinct references stays on the noise scale") {
    Matrix h(3, 3);
    h << 0.9, 0.1, 0.0, 0.1, 0.6, 0.1, 0.0, 0.1, 0.4;
    const LossBundle bundle = quad_bundle(h);
    HyperParams hp;
    hp.eta = 0.2;
    hp.batch = 1;
    hp.seed = 47;
    const double lambda = 1e-3;
    hp.sigma = std::sqrt(lambda * hp.batch / hp.eta);

    Vector other = Vector::Zero(3);
    other[0] = 0.05;  // second reference: G is constant but grads shift
    const OUProcess chained =
        ou_chained(bundle, {{Vector::Zero(3), 4000}, {other, 4000}}, hp);

    // |xi_k| stays below the sqrt(2 lambda n d iota / nu) envelope from the
    // high-probability norm bound, with iota = log(d / (lambda zeta)).
    const double n = bundle.model->sample_count();
    const double d = 3.0;
    const double nu = 2.0 - hp.eta * 0.9;
    const double iota = std::log(d / (lambda * 0.01));
    const double envelope = std::sqrt(2.0 * lambda * n * d * iota / nu);
    double worst = 0.0;
    for (const Vector& xi : chained.xi) worst = std::max(worst, xi.norm());
    CHECK(worst <= envelope);
    CHECK(worst > 0.0);
}

TEST_CASE("momentum OU: beta 0 is bitwise the plain process") {
    Matrix h(2, 2);
    h << 0.7, 0.2, 0.2, 0.5;
    const LossBundle bundle = quad_bundle(h);
    HyperParams hp;
    hp.eta = 0.1;
    hp.sigma = 0.4;
    hp.batch = 1;
    hp.seed = 31;
    hp.beta = 0.0;
    const OUProcess plain = ou_run(bundle, Vector::Zero(2), hp, 200);
    const OUProcess momentum = ou_momentum(bundle, Vector::Zero(2), hp, 200);
    REQUIRE(plain.xi.size() == momentum.xi.size());
    for (std::size_t k = 0; k < plain.xi.size(); ++k) {
        CHECK((plain.xi[k] - momentum.xi[k]).norm() == 0.0);
    }
}

TEST_CASE("momentum OU scalar stationary variance") {
    const LossBundle bundle = scalar_quad(1.0);
    HyperParams hp;
    hp.eta = 0.1;
    hp.batch = 1;
    hp.beta = 0.5;
    hp.seed = 37;
    const double lambda_plain = 0.01;  // eta sigma^2 / B
    hp.sigma = std::sqrt(lambda_plain * hp.batch / hp.eta);

    // Effective lambda carries the 1/(1-beta); stationary variance is
    // lambda_eff / (2 - eta/(1+beta)) = 0.0103448...
    const double expected = (lambda_plain / (1.0 - hp.beta)) / (2.0 - hp.eta / (1.0 + hp.beta));
    CHECK(expected == doctest::Approx(0.010344827586206896).epsilon(1e-12));

    const long horizon = 400000;
    const OUProcess ou = ou_momentum(bundle, Vector::Zero(1), hp, horizon);
    const Matrix cov = stationary_cov(ou.xi, 2000);
    CHECK(std::abs(cov(0, 0) - expected) <= 0.05 * expected);

    // And the block fixed point reproduces the same number.
    const Matrix g = gauss_newton(bundle, Vector::Zero(1));
    const Matrix fp = ou_momentum_cov_fixed_point(g, hp.eta, hp.beta,
                                                  lambda_plain / (1.0 - hp.beta));
    CHECK(fp(0, 0) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("momentum companion matrix stays contractive inside the step bound") {
    // rho(A_i) < 1 whenever 0 < eta lam < 2 (1 + beta) and lam > 0.
    for (const double beta : {0.1, 0.5, 0.9}) {
        for (double ratio = 0.05; ratio < 1.0; ratio += 0.05) {
            const double eta_lam = ratio * 2.0 * (1.0 + beta);
            Matrix a(2, 2);
            a << 1.0 - eta_lam + beta, -beta, 1.0, 0.0;
            const Eigen::EigenSolver<Matrix> solver(a);
            const double rho = solver.eigenvalues().cwiseAbs().maxCoeff();
            CHECK(rho < 1.0 + 1e-12);
        }
    }
}

TEST_CASE("coupling_experiment: all three trajectories coincide without noise") {
    Matrix h(2, 2);
    h << 0.6, 0.1, 0.1, 0.3;
    const LossBundle bundle = quad_bundle(h);
    HyperParams hp;
    hp.eta = 0.1;
    hp.sigma = 0.0;
    hp.batch = 1;
    hp.seed = 17;
    // theta* = 0 is a fixed point of Ltilde (R constant for quadratics).
    const CouplingReport report =
        coupling_experiment(bundle, Vector::Zero(2), Vector::Zero(2), hp, 50);
    CHECK(report.max_residual <= 1e-14);
    for (const double r : report.residual) CHECK(r <= 1e-14);
}

TEST_CASE("coupling_experiment: removing xi shrinks the residual") {
    Rng design_rng(41, 0);
    std::vector<Vector> design;
    for (int i = 0; i < 4; ++i) {
        Vector x(4);
        for (int j = 0; j < 4; ++j) x[j] = design_rng.rademacher();
        design.push_back(x);
    }
    Vector w = Vector::Zero(4);
    w[0] = 1.0;
    w[1] = 1.0;
    auto [model, data] = make_quad_param_regression(design, w);
    const LossBundle bundle = LossBundle::regression(model, data);
    Vector interp = Vector::Zero(4);
    interp[0] = 1.0;
    interp[1] = 1.0;

    HyperParams hp;
    hp.eta = 0.05;
    hp.batch = 1;
    hp.seed = 4;
    hp.sigma = std::sqrt(4e-4 * hp.batch / hp.eta);
    const CouplingReport report =
        coupling_experiment(bundle, interp, Vector::Zero(4), hp, 1500);
    CHECK_FALSE(report.loss_warning);
    CHECK(report.max_residual < report.max_phi_dist);
}

TEST_CASE("eps_gamma_check verdicts") {
    const LossBundle bundle = quad_bundle(Matrix::Identity(2, 2));
    RegConfig cfg;
    cfg.eta = 0.1;
    cfg.lambda = 0.01;

    // Exact stationary point of Ltilde.
    const EpsGammaResult at_min =
        eps_gamma_check(bundle, Vector::Zero(2), cfg, 1e-9, 1e-9, 10);
    CHECK(at_min.verdict == EpsGammaVerdict::Satisfied);

    // Start 0.5 away from the minimizer: gamma = 1 reachable, 0.1 not.
    Vector start(2);
    start << 0.5, 0.0;
    const EpsGammaResult wide = eps_gamma_check(bundle, start, cfg, 1e-4, 1.0, 2000);
    CHECK(wide.verdict == EpsGammaVerdict::Satisfied);
    const EpsGammaResult narrow = eps_gamma_check(bundle, start, cfg, 1e-4, 0.1, 2000);
    CHECK(narrow.verdict == EpsGammaVerdict::NotFound);

    // eps = infinity is trivially satisfied at the start point.
    const EpsGammaResult trivial = eps_gamma_check(
        bundle, start, cfg, std::numeric_limits<double>::infinity(), 0.5, 10);
    CHECK(trivial.verdict == EpsGammaVerdict::Satisfied);

    // Monotone: enlarging (eps, gamma) keeps the verdict satisfied.
    const EpsGammaResult larger = eps_gamma_check(bundle, start, cfg, 1e-3, 2.0, 2000);
    CHECK(larger.verdict == EpsGammaVerdict::Satisfied);
}
