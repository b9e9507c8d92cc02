#include <cmath>
#include <limits>

#include "flatreg/errors.hpp"
#include "flatreg/experiments.hpp"

namespace flatreg {

namespace {

constexpr double kTiny = 1e-12;

double rel_err(const Vector& a, const Vector& b) {
    const double scale = std::max({a.norm(), b.norm(), kTiny});
    return (a - b).norm() / scale;
}

Matrix random_psd(int d, Rng& rng, double eig_lo = 0.1, double eig_hi = 1.0) {
    Matrix a(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
    const Eigen::HouseholderQR<Matrix> qr(a);
    const Matrix q = qr.householderQ();
    Vector eigs(d);
    for (int i = 0; i < d; ++i) eigs[i] = eig_lo + (eig_hi - eig_lo) * rng.uniform();
    Matrix m = q * eigs.asDiagonal() * q.transpose();
    return 0.5 * (m + m.transpose());
}

Vector random_vector(int d, Rng& rng, double scale = 1.0) {
    Vector v(d);
    for (int i = 0; i < d; ++i) v[i] = scale * rng.normal();
    return v;
}

// The zoo the property suites run against: one member per family.
struct ZooMember {
    std::string name;
    LossBundle bundle;
    double theta_scale;
};

std::vector<ZooMember> verify_zoo() {
    std::vector<ZooMember> zoo;
    {
        Matrix h(2, 2);
        h << 1.0, 0.0, 0.0, 0.5;
        auto [model, data] = make_quadratic(h, Vector::Zero(2));
        zoo.push_back({"quadratic", LossBundle::regression(model, data), 1.0});
    }
    {
        Rng rng(2024, 3);
        std::vector<Vector> design;
        for (int i = 0; i < 4; ++i) design.push_back(random_vector(6, rng, 0.5));
        Vector w_star = Vector::Zero(6);
        w_star[0] = 1.0;
        w_star[1] = 0.5;
        auto [model, data] = make_quad_param_regression(design, w_star);
        zoo.push_back({"quad_param", LossBundle::regression(model, data), 0.7});
    }
    {
        auto [model, data] = make_mlp({3, 4, 1}, 6, 77);
        zoo.push_back({"mlp", LossBundle::regression(model, data), 0.6});
    }
    {
        auto [model, data] = make_cycling_model();
        zoo.push_back({"cycling", LossBundle::regression(model, data), 0.5});
    }
    return zoo;
}

Vector fd_grad(const LossBundle& bundle, const Vector& theta) {
    const double h = std::cbrt(std::numeric_limits<double>::epsilon()) * std::max(1.0, theta.norm());
    Vector g(theta.size());
    Vector probe = theta;
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
        probe[j] = theta[j] + h;
        const double plus = loss(bundle, probe);
        probe[j] = theta[j] - h;
        const double minus = loss(bundle, probe);
        probe[j] = theta[j];
        g[j] = (plus - minus) / (2.0 * h);
    }
    return g;
}

Matrix fd_hessian(const LossBundle& bundle, const Vector& theta) {
    const double h = std::sqrt(std::numeric_limits<double>::epsilon()) * std::max(1.0, theta.norm());
    Matrix out(theta.size(), theta.size());
    Vector probe = theta;
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
        probe[j] = theta[j] + h;
        const Vector plus = grad(bundle, probe);
        probe[j] = theta[j] - h;
        const Vector minus = grad(bundle, probe);
        probe[j] = theta[j];
        out.col(j) = (plus - minus) / (2.0 * h);
    }
    return 0.5 * (out + out.transpose());
}

// Plain discrete-Lyapunov iteration, the independent oracle for the
// eigenbasis shape-matrix formula.
Matrix shape_fixed_point_iteration(const Matrix& h, const Matrix& sigma, double eta,
                                   double lambda) {
    const Eigen::Index d = h.rows();
    const Matrix proj = projector_onto_range(h);
    const Matrix contraction = Matrix::Identity(d, d) - eta * h;
    const Matrix q = eta * lambda * proj * sigma * proj;
    Matrix s = Matrix::Zero(d, d);
    for (int it = 0; it < 100000; ++it) {
        const Matrix next = contraction * s * contraction + q;
        const double delta = (next - s).norm();
        s = next;
        if (delta < 1e-16) break;
    }
    return s;
}

class Suite {
public:
    explicit Suite(VerifyResult& result) : result_(result) {}

    void add(const std::string& suite, const std::string& name, double measured, double bound,
             const std::string& note = "") {
        const bool pass = measured <= bound;
        result_.checks.push_back({suite, name, measured, bound, pass, note});
        result_.pass = result_.pass && pass;
    }

    void add_flag(const std::string& suite, const std::string& name, bool ok,
                  const std::string& note = "") {
        result_.checks.push_back({suite, name, ok ? 0.0 : 1.0, 0.5, ok, note});
        result_.pass = result_.pass && ok;
    }

private:
    VerifyResult& result_;
};

void spectral_suite(Suite& suite, const ExperimentConfig& config) {
    Rng rng(config.hp.seed, 101);
    double worst_recon = 0.0, worst_ortho = 0.0, worst_identity = 0.0, worst_proj = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
        const int d = 3 + static_cast<int>(rng.uniform_int(6));
        Matrix m(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j <= i; ++j) m(i, j) = m(j, i) = rng.normal();
        const Spectrum spec = eig_sym(m);
        const double scale = std::max(1.0, m.norm());
        worst_recon = std::max(
            worst_recon,
            (spec.basis * spec.eigenvalues.asDiagonal() * spec.basis.transpose() - m).norm() / scale);
        worst_ortho = std::max(worst_ortho, (spec.basis.transpose() * spec.basis -
                                             Matrix::Identity(d, d)).norm());
        worst_identity =
            std::max(worst_identity,
                     (spectral_apply(m, [](double x) { return x; }) - m).norm() / std::max(1.0, m.norm()));
        const Matrix proj = projector_onto_range(m, 1e-10);
        worst_proj = std::max(worst_proj, (proj * proj - proj).norm());
        worst_proj = std::max(worst_proj, (proj - proj.transpose()).norm());
    }
    suite.add("spectral", "eig_reconstruction", worst_recon, 1e-9);
    suite.add("spectral", "eig_orthonormality", worst_ortho, 1e-10);
    suite.add("spectral", "spectral_apply_identity", worst_identity, 1e-10);
    suite.add("spectral", "projector_idempotent", worst_proj, 1e-10);

    // Weak contraction bounds on fuzzed PSD instances, tau up to 1000.
    double worst_ratio = 0.0;
    long checked = 0;
    for (int rep = 0; rep < config.fuzz; ++rep) {
        const int d = 8, n = 8;
        std::vector<Vector> probes;
        for (int i = 0; i < n; ++i) {
            Vector g(d);
            for (int j = 0; j < d; ++j) g[j] = rng.rademacher() / std::sqrt(static_cast<double>(d));
            probes.push_back(std::move(g));
        }
        Matrix g_mat = Matrix::Zero(d, d);
        for (const Vector& g : probes) g_mat += g * g.transpose();
        g_mat /= static_cast<double>(n);

        double ell = 0.0;
        for (const Vector& g : probes) ell = std::max(ell, g.squaredNorm());
        const double nu = 0.1 + 0.8 * rng.uniform();
        const double eta = (2.0 - nu) / ell * (0.2 + 0.8 * rng.uniform());
        const ContractionReport report = contraction_report(g_mat, eta, nu, 1000, probes);
        for (const ContractionCheck& check : report.checks) {
            worst_ratio = std::max(worst_ratio, check.measured / check.bound);
            ++checked;
        }
    }
    suite.add("spectral", "contraction_lemmas", worst_ratio, 1.0,
              std::to_string(checked) + " inequalities");
}

void objective_suite(Suite& suite, const ExperimentConfig& config) {
    Rng rng(config.hp.seed, 202);
    auto zoo = verify_zoo();

    double worst_grad = 0.0, worst_hess = 0.0, worst_split = 0.0, worst_third = 0.0;
    for (const ZooMember& member : zoo) {
        const int d = member.bundle.model->param_dim();
        for (int probe = 0; probe < 5; ++probe) {
            const Vector theta = random_vector(d, rng, member.theta_scale);
            worst_grad = std::max(worst_grad, rel_err(grad(member.bundle, theta),
                                                      fd_grad(member.bundle, theta)));
            const Matrix h_exact = hessian(member.bundle, theta);
            const Matrix h_fd = fd_hessian(member.bundle, theta);
            const double scale = std::max({h_exact.norm(), h_fd.norm(), kTiny});
            worst_hess = std::max(worst_hess, (h_exact - h_fd).norm() / scale);

            const HessianSplit split = hessian_split(member.bundle, theta);
            worst_split = std::max(worst_split,
                                   (split.gauss_newton + split.residual - h_exact).norm() /
                                       std::max(1.0, h_exact.norm()));

            const Vector v = random_vector(d, rng);
            const Vector t2 = third_form(member.bundle, theta, 2.0 * v);
            const Vector t1 = third_form(member.bundle, theta, v);
            worst_third = std::max(worst_third, rel_err(t2, 4.0 * t1));
        }
    }
    suite.add("objective", "grad_finite_diff", worst_grad, 1e-6);
    suite.add("objective", "hess_finite_diff", worst_hess, 1e-5);
    suite.add("objective", "hessian_split_identity", worst_split, 1e-9);
    suite.add("objective", "third_form_scaling", worst_third, 1e-6);

    // |E| <= sqrt(2 rho_f L) on feature scale <= 1/2, where the bound
    // dominates rho_f sqrt(2 L).
    double worst_excess = 0.0;
    {
        Rng mrng(55, 4);
        std::vector<Vector> design;
        for (int i = 0; i < 5; ++i) {
            Vector x(8);
            for (int j = 0; j < 8; ++j) x[j] = 0.5 * (2.0 * mrng.uniform() - 1.0);
            design.push_back(std::move(x));
        }
        Vector w_star = Vector::Zero(8);
        w_star[0] = 1.0;
        w_star[3] = 0.25;
        auto [model, data] = make_quad_param_regression(design, w_star);
        const LossBundle bundle = LossBundle::regression(model, data);
        for (int probe = 0; probe < 100; ++probe) {
            const Vector theta = random_vector(8, mrng);
            const HessianSplit split = hessian_split(bundle, theta);
            worst_excess = std::max(worst_excess, split.residual_norm - split.bound);
        }
    }
    suite.add("objective", "hessian_split_bound", worst_excess, 0.0, "100 probes");

    double worst_constant = 0.0, worst_square_nu = 0.0;
    bool all_exist = true;
    for (const ClsLoss kind : {ClsLoss::Logistic, ClsLoss::Exponential, ClsLoss::Square}) {
        for (const double p : config.p_grid) {
            const LossConstants closed = loss_constants(kind, p);
            const LossConstants numeric = loss_constants_numeric(kind, p);
            worst_constant = std::max({worst_constant, std::abs(closed.c - numeric.c),
                                       std::abs(closed.sigma_sq - numeric.sigma_sq),
                                       std::abs(closed.alpha - numeric.alpha)});
            const QuadApproxReport quad = verify_quadratic_approx(kind, p);
            all_exist = all_exist && quad.exists;
            if (kind == ClsLoss::Square) {
                worst_square_nu = std::max(worst_square_nu, std::abs(quad.nu - 2.0));
            }
        }
    }
    suite.add("objective", "loss_constants_closed_vs_numeric", worst_constant, 1e-8);
    suite.add_flag("objective", "quadratic_approx_exists", all_exist);
    suite.add("objective", "quadratic_approx_square_nu", worst_square_nu, 1e-6);
}

void regularizer_suite(Suite& suite, const ExperimentConfig& config) {
    Rng rng(config.hp.seed, 303);

    // Frozen scalar-sum oracle for hess L = diag(1, 0.5), eta = 0.1.
    {
        Matrix h(2, 2);
        h << 1.0, 0.0, 0.0, 0.5;
        auto [model, data] = make_quadratic(h, Vector::Zero(2));
        const LossBundle bundle = LossBundle::regression(model, data);
        RegConfig cfg;
        cfg.eta = 0.1;
        const double oracle = -5.0 * (std::log(0.95) + std::log(0.975));
        const double value = reg_value(bundle, Vector::Zero(2), cfg);
        suite.add("regularizer", "reg_value_oracle", std::abs(value - oracle), 1e-9);
    }

    // The two gradient routes agree on the whole zoo.
    double worst_agreement = 0.0;
    for (const ZooMember& member : verify_zoo()) {
        const int d = member.bundle.model->param_dim();
        RegConfig cfg;
        cfg.eta = config.hp.eta;
        cfg.nu = 0.1;
        int accepted = 0;
        int attempts = 0;
        while (accepted < 5 && attempts < 200) {
            ++attempts;
            const Vector theta = random_vector(d, rng, member.theta_scale);
            const Spectrum spec = eig_sym(hessian(member.bundle, theta));
            if (cfg.eta * spec.eigenvalues[0] > 2.0 - cfg.nu) continue;  // margin too thin
            ++accepted;
            const Vector fd = reg_grad(member.bundle, theta, cfg, GradMethod::FiniteDiff);
            const Vector ct = reg_grad(member.bundle, theta, cfg, GradMethod::Contraction);
            if (std::max(fd.norm(), ct.norm()) <= 1e-10) continue;  // both vanish (quadratic)
            worst_agreement = std::max(worst_agreement, rel_err(fd, ct));
        }
    }
    suite.add("regularizer", "reg_grad_two_routes", worst_agreement, 1e-4);

    // Small-eta behavior: the gap to tr/4 halves with eta.
    double worst_ratio_dev = 0.0;
    for (int rep = 0; rep < 10; ++rep) {
        const int d = 5;
        const Matrix h = random_psd(d, rng);
        auto [model, data] = make_quadratic(h, Vector::Zero(d));
        const LossBundle bundle = LossBundle::regression(model, data);
        const double quarter_tr = 0.25 * h.trace();
        RegConfig cfg;
        cfg.eta = 0.05;
        const double gap1 = reg_value(bundle, Vector::Zero(d), cfg) - quarter_tr;
        cfg.eta = 0.025;
        const double gap2 = reg_value(bundle, Vector::Zero(d), cfg) - quarter_tr;
        worst_ratio_dev = std::max(worst_ratio_dev, std::abs(gap1 / gap2 - 2.0));
    }
    suite.add("regularizer", "small_eta_halving", worst_ratio_dev, 0.4);

    // reg_value nondecreasing in eta for PSD Hessians.
    {
        const Matrix h = random_psd(5, rng);
        auto [model, data] = make_quadratic(h, Vector::Zero(5));
        const LossBundle bundle = LossBundle::regression(model, data);
        double prev = -std::numeric_limits<double>::infinity();
        double worst_drop = 0.0;
        for (double eta = 0.05; eta <= 1.5; eta += 0.05) {
            RegConfig cfg;
            cfg.eta = eta;
            const double value = reg_value(bundle, Vector::Zero(5), cfg);
            worst_drop = std::max(worst_drop, prev - value);
            prev = value;
        }
        suite.add("regularizer", "monotone_in_eta", worst_drop, 1e-12);
    }

    // Shape matrix: residual, the Sigma = H closed form, and the
    // fixed-point-iteration oracle.
    {
        Rng srng(404, 9);
        double worst_residual = 0.0, worst_label_case = 0.0, worst_oracle = 0.0;
        for (int rep = 0; rep < 10; ++rep) {
            const int d = 5;
            Matrix h = random_psd(d, srng);
            // Kill two directions to exercise the span(H) restriction.
            const Spectrum spec = eig_sym(h);
            Vector eigs = spec.eigenvalues;
            eigs[d - 1] = 0.0;
            eigs[d - 2] = 0.0;
            h = spec.basis * eigs.asDiagonal() * spec.basis.transpose();
            h = 0.5 * (h + h.transpose());

            const Matrix sigma = random_psd(d, srng);
            const double eta = 0.1, lambda = 0.01;
            const ShapeMatrix shape = shape_matrix(h, sigma, eta, lambda);
            worst_residual = std::max(worst_residual, shape.residual);
            worst_oracle = std::max(
                worst_oracle, (shape.S - shape_fixed_point_iteration(h, sigma, eta, lambda)).norm());

            const ShapeMatrix label_like = shape_matrix(h, h, eta, lambda);
            const Matrix closed = ou_cov_closed_form(h, eta, lambda);
            worst_label_case = std::max(worst_label_case, (label_like.S - closed).norm());
        }
        suite.add("regularizer", "shape_matrix_residual", worst_residual, 1e-10);
        suite.add("regularizer", "shape_matrix_label_noise_case", worst_label_case, 1e-10);
        suite.add("regularizer", "shape_matrix_vs_iteration", worst_oracle, 1e-12);
    }

    // Momentum penalty at beta = 0 is the plain penalty, bitwise.
    {
        const Matrix h = random_psd(4, rng);
        auto [model, data] = make_quadratic(h, Vector::Zero(4));
        const LossBundle bundle = LossBundle::regression(model, data);
        RegConfig cfg;
        cfg.eta = 0.3;
        cfg.beta = 0.0;
        const double momentum_form = reg_value(bundle, Vector::Zero(4), cfg);
        const Spectrum spec = eig_sym(hessian(bundle, Vector::Zero(4)));
        double plain = 0.0;
        for (Eigen::Index i = 0; i < spec.eigenvalues.size(); ++i) {
            plain += -1.0 / (2.0 * cfg.eta) * std::log(1.0 - cfg.eta * spec.eigenvalues[i] / 2.0);
        }
        suite.add_flag("regularizer", "momentum_beta0_bitwise", momentum_form == plain);
    }

    // Configured model must sit inside the stability region at its init.
    {
        const BuiltModel built = build_model(config);
        const Spectrum spec = eig_sym(hessian(built.bundle, built.init));
        const double margin = config.hp.eta * std::max(spec.eigenvalues[0], 0.0) /
                              (2.0 * (1.0 + config.hp.beta));
        std::string note = "eta lam_max / 2(1+beta) = " + std::to_string(margin);
        bool ok = true;
        try {
            reg_value(built.bundle, built.init, reg_config_for(built.bundle, config.hp));
        } catch (const EdgeOfStabilityError& err) {
            ok = false;
            note = err.what();
        }
        suite.add_flag("regularizer", "configured_step_feasible", ok, note);
    }
}

}  // namespace

VerifyResult run_verify(const ExperimentConfig& config) {
    VerifyResult result;
    Suite suite(result);
    for (const std::string& name : config.suites) {
        if (name == "spectral") {
            spectral_suite(suite, config);
        } else if (name == "objective") {
            objective_suite(suite, config);
        } else if (name == "regularizer") {
            regularizer_suite(suite, config);
        } else {
            throw ConfigError("verify: unknown suite '" + name + "'");
        }
    }
    return result;
}

}  // namespace flatreg
