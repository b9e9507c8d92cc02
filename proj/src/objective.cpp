#include "flatreg/objective.hpp"

#include <cmath>
#include <limits>

#include "flatreg/errors.hpp"

namespace flatreg {

namespace {

void check_dim(const LossBundle& bundle, const Vector& theta) {
    if (theta.size() != bundle.model->param_dim()) {
        throw std::invalid_argument("theta dimension does not match model");
    }
}

// lbar(y f) - lbar(c) and derivatives in f, for one sample.
struct PerSample {
    double value, d1, d2;  // l_i, dl_i/df, d2l_i/df2
};

PerSample classification_sample(const LossBundle& bundle, double y, double f, double lbar_c) {
    const double m = y * f;
    PerSample out;
    out.value = smoothed_loss(bundle.cls_loss, bundle.p, m) - lbar_c;
    out.d1 = y * smoothed_loss_deriv(bundle.cls_loss, bundle.p, m);
    out.d2 = y * y * smoothed_loss_curv(bundle.cls_loss, bundle.p, m);
    return out;
}

PerSample regression_sample(double y, double f) {
    const double e = f - y;
    return {0.5 * e * e, e, 1.0};
}

PerSample sample_terms(const LossBundle& bundle, int i, double f, double lbar_c) {
    const double y = bundle.data.targets[static_cast<std::size_t>(i)];
    if (bundle.kind == LossKind::RegressionSquare) return regression_sample(y, f);
    return classification_sample(bundle, y, f, lbar_c);
}

double lbar_at_c(const LossBundle& bundle) {
    if (bundle.kind != LossKind::Classification) return 0.0;
    const LossConstants k = loss_constants(bundle.cls_loss, bundle.p);
    return smoothed_loss(bundle.cls_loss, bundle.p, k.c);
}

}  // namespace

LossBundle LossBundle::regression(ModelPtr m, Dataset d) {
    if (static_cast<int>(d.targets.size()) != m->sample_count()) {
        throw std::invalid_argument("dataset length does not match sample count");
    }
    LossBundle b;
    b.model = std::move(m);
    b.data = std::move(d);
    b.kind = LossKind::RegressionSquare;
    return b;
}

LossBundle LossBundle::classification(ModelPtr m, Dataset d, ClsLoss loss_kind, double p) {
    if (static_cast<int>(d.targets.size()) != m->sample_count()) {
        throw std::invalid_argument("dataset length does not match sample count");
    }
    if (!(p > 0.0 && p < 1.0)) throw InvalidPError("classification bundle requires p in (0,1)");
    for (double y : d.targets) {
        if (y != 1.0 && y != -1.0) {
            throw std::invalid_argument("classification targets must be in {-1,+1}");
        }
    }
    LossBundle b;
    b.model = std::move(m);
    b.data = std::move(d);
    b.kind = LossKind::Classification;
    b.cls_loss = loss_kind;
    b.p = p;
    return b;
}

double loss(const LossBundle& bundle, const Vector& theta) {
    check_dim(bundle, theta);
    const int n = bundle.model->sample_count();
    const double lc = lbar_at_c(bundle);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        acc += sample_terms(bundle, i, bundle.model->eval(i, theta), lc).value;
    }
    return acc / n;
}

Vector grad(const LossBundle& bundle, const Vector& theta) {
    check_dim(bundle, theta);
    const int n = bundle.model->sample_count();
    const double lc = lbar_at_c(bundle);
    Vector g = Vector::Zero(theta.size());
    for (int i = 0; i < n; ++i) {
        const PerSample t = sample_terms(bundle, i, bundle.model->eval(i, theta), lc);
        g += t.d1 * bundle.model->grad(i, theta);
    }
    return g / n;
}

Matrix hessian(const LossBundle& bundle, const Vector& theta) {
    check_dim(bundle, theta);
    const int n = bundle.model->sample_count();
    const double lc = lbar_at_c(bundle);
    Matrix h = Matrix::Zero(theta.size(), theta.size());
    for (int i = 0; i < n; ++i) {
        const PerSample t = sample_terms(bundle, i, bundle.model->eval(i, theta), lc);
        const Vector gi = bundle.model->grad(i, theta);
        h += t.d2 * gi * gi.transpose() + t.d1 * bundle.model->hess(i, theta);
    }
    h /= n;
    return 0.5 * (h + h.transpose());
}

Matrix gauss_newton(const LossBundle& bundle, const Vector& theta) {
    check_dim(bundle, theta);
    const int n = bundle.model->sample_count();
    const double lc = lbar_at_c(bundle);
    Matrix g = Matrix::Zero(theta.size(), theta.size());
    for (int i = 0; i < n; ++i) {
        const PerSample t = sample_terms(bundle, i, bundle.model->eval(i, theta), lc);
        const Vector gi = bundle.model->grad(i, theta);
        g += t.d2 * gi * gi.transpose();
    }
    return g / n;
}

HessianSplit hessian_split(const LossBundle& bundle, const Vector& theta) {
    HessianSplit split;
    split.gauss_newton = gauss_newton(bundle, theta);
    const int n = bundle.model->sample_count();
    const double lc = lbar_at_c(bundle);
    Matrix e = Matrix::Zero(theta.size(), theta.size());
    for (int i = 0; i < n; ++i) {
        const PerSample t = sample_terms(bundle, i, bundle.model->eval(i, theta), lc);
        e += t.d1 * bundle.model->hess(i, theta);
    }
    split.residual = e / n;
    split.residual_norm = split.residual.operatorNorm();
    const Smoothness s = bundle.model->smoothness();
    split.bound = s.has_rho() ? std::sqrt(2.0 * s.rho_f * loss(bundle, theta))
                              : std::numeric_limits<double>::quiet_NaN();
    split.within_bound = s.has_rho() && split.residual_norm <= split.bound + 1e-12;
    return split;
}

Vector third_form(const LossBundle& bundle, const Vector& theta, const Vector& v) {
    check_dim(bundle, theta);
    const double vnorm = v.norm();
    if (vnorm == 0.0) return Vector::Zero(theta.size());
    const double h = std::cbrt(std::numeric_limits<double>::epsilon()) *
                     std::max(1.0, theta.norm()) / std::max(1.0, vnorm);
    const Matrix plus = hessian(bundle, theta + h * v);
    const Matrix minus = hessian(bundle, theta - h * v);
    return (plus - minus) * v / (2.0 * h);
}

Vector third_contract(const LossBundle& bundle, const Vector& theta, const Matrix& M) {
    require_symmetric(M, "third_contract");
    const Spectrum spec = eig_sym(M);
    Vector out = Vector::Zero(theta.size());
    const double top = spec.eigenvalues.cwiseAbs().maxCoeff();
    for (Eigen::Index a = 0; a < spec.eigenvalues.size(); ++a) {
        const double mu = spec.eigenvalues[a];
        if (std::abs(mu) <= 1e-14 * std::max(1.0, top)) continue;
        out += mu * third_form(bundle, theta, spec.basis.col(a));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Smoothed classification losses.
// ---------------------------------------------------------------------------

double cls_loss_value(ClsLoss kind, double x) {
    switch (kind) {
        case ClsLoss::Logistic: return std::log1p(std::exp(-std::abs(x))) + std::max(-x, 0.0);
        case ClsLoss::Exponential: return std::exp(-x);
        case ClsLoss::Square: return 0.5 * (x - 1.0) * (x - 1.0);
    }
    return 0.0;
}

double cls_loss_deriv(ClsLoss kind, double x) {
    switch (kind) {
        case ClsLoss::Logistic: return -1.0 / (1.0 + std::exp(x));
        case ClsLoss::Exponential: return -std::exp(-x);
        case ClsLoss::Square: return x - 1.0;
    }
    return 0.0;
}

namespace {
double cls_loss_curv(ClsLoss kind, double x) {
    switch (kind) {
        case ClsLoss::Logistic: {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 - s);
        }
        case ClsLoss::Exponential: return std::exp(-x);
        case ClsLoss::Square: return 1.0;
    }
    return 0.0;
}
}  // namespace

double smoothed_loss(ClsLoss kind, double p, double x) {
    return p * cls_loss_value(kind, -x) + (1.0 - p) * cls_loss_value(kind, x);
}

double smoothed_loss_deriv(ClsLoss kind, double p, double x) {
    return -p * cls_loss_deriv(kind, -x) + (1.0 - p) * cls_loss_deriv(kind, x);
}

double smoothed_loss_curv(ClsLoss kind, double p, double x) {
    return p * cls_loss_curv(kind, -x) + (1.0 - p) * cls_loss_curv(kind, x);
}

LossConstants loss_constants(ClsLoss kind, double p) {
    if (!(p > 0.0 && p < 1.0)) throw InvalidPError("loss_constants requires p in (0,1)");
    LossConstants k;
    k.p = p;
    switch (kind) {
        case ClsLoss::Logistic:
            k.c = std::log((1.0 - p) / p);
            k.sigma_sq = p * (1.0 - p);
            k.alpha = p * (1.0 - p);
            break;
        case ClsLoss::Exponential:
            k.c = 0.5 * std::log((1.0 - p) / p);
            k.sigma_sq = 1.0;
            k.alpha = 2.0 * std::sqrt(p * (1.0 - p));
            break;
        case ClsLoss::Square:
            k.c = 1.0 - 2.0 * p;
            k.sigma_sq = 4.0 * p * (1.0 - p);
            k.alpha = 1.0;
            break;
    }
    return k;
}

LossConstants loss_constants_numeric(ClsLoss kind, double p) {
    if (!(p > 0.0 && p < 1.0)) throw InvalidPError("loss_constants_numeric requires p in (0,1)");
    // Golden-section search on a bracket that covers the minimizer for every
    // tabled loss and p in (0,1). Function values flatten to machine noise
    // within ~sqrt(eps) of the minimizer, so the bracket is polished by
    // bisecting the sign of the symmetric difference lbar(x+h) - lbar(x-h),
    // which stays derivative-free but resolves c far below that floor.
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = -40.0, hi = 40.0;
    double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
    double f1 = smoothed_loss(kind, p, x1), f2 = smoothed_loss(kind, p, x2);
    while (hi - lo > 1e-12) {
        if (f1 < f2) {
            hi = x2; x2 = x1; f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = smoothed_loss(kind, p, x1);
        } else {
            lo = x1; x1 = x2; f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = smoothed_loss(kind, p, x2);
        }
    }
    const double step = 1e-5;
    auto slope_sign = [&](double x) {
        return smoothed_loss(kind, p, x + step) - smoothed_loss(kind, p, x - step);
    };
    double a = 0.5 * (lo + hi) - 1e-4, b = 0.5 * (lo + hi) + 1e-4;
    for (int it = 0; it < 200 && b - a > 1e-13; ++it) {
        const double mid = 0.5 * (a + b);
        if (slope_sign(mid) > 0.0) {
            b = mid;
        } else {
            a = mid;
        }
    }

    LossConstants k;
    k.p = p;
    k.c = 0.5 * (a + b);
    // Richardson-extrapolated central second difference for the curvature.
    auto second_diff = [&](double h) {
        return (smoothed_loss(kind, p, k.c + h) - 2.0 * smoothed_loss(kind, p, k.c) +
                smoothed_loss(kind, p, k.c - h)) / (h * h);
    };
    const double h = 1e-3;
    k.alpha = (4.0 * second_diff(h / 2.0) - second_diff(h)) / 3.0;
    const double spread = cls_loss_deriv(kind, k.c) + cls_loss_deriv(kind, -k.c);
    k.sigma_sq = p * (1.0 - p) * spread * spread;
    return k;
}

QuadApproxReport verify_quadratic_approx(ClsLoss kind, double p, double eps_q, int grid_points) {
    const LossConstants k = loss_constants(kind, p);
    const double lbar_c = smoothed_loss(kind, p, k.c);
    QuadApproxReport report;
    report.eps_q = eps_q;
    // Walk outward from c until lbar - lbar(c) exceeds eps_q to find the
    // sublevel window, then scan the ratio on a uniform grid.
    double left = k.c, right = k.c;
    const double step = 1e-3;
    while (smoothed_loss(kind, p, left) - lbar_c <= eps_q && k.c - left < 100.0) left -= step;
    while (smoothed_loss(kind, p, right) - lbar_c <= eps_q && right - k.c < 100.0) right += step;

    double worst = 0.0;
    for (int i = 0; i < grid_points; ++i) {
        const double x = left + (right - left) * i / (grid_points - 1);
        const double gap = smoothed_loss(kind, p, x) - lbar_c;
        if (gap > eps_q || gap <= 1e-12) continue;  // skip the flat spot at c
        worst = std::max(worst, (x - k.c) * (x - k.c) / gap);
    }
    report.nu = worst;
    report.exists = std::isfinite(worst) && worst > 0.0;
    return report;
}

}  // namespace flatreg
