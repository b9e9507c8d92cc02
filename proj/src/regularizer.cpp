#include "flatreg/regularizer.hpp"

#include <cmath>
#include <limits>

#include "flatreg/errors.hpp"

namespace flatreg {

namespace {

double classification_scale(const LossBundle& bundle) {
    if (bundle.kind != LossKind::Classification) return 1.0;
    return 1.0 / loss_constants(bundle.cls_loss, bundle.p).alpha;
}

// Per-eigenvalue penalty -( (1+beta)/2eta ) log(1 - eta lam / (2(1+beta))).
// The beta = 0 branch is the same expression, so momentum and plain share
// one code path.
double penalty(double lam, double eta, double beta) {
    const double arg = 1.0 - eta * lam / (2.0 * (1.0 + beta));
    if (arg <= 0.0) {
        throw EdgeOfStabilityError("reg_value: eta * lambda_max >= 2 (1 + beta)");
    }
    return -(1.0 + beta) / (2.0 * eta) * std::log(arg);
}

}  // namespace

double lambda_eff(double eta, double sigma, double batch, double beta) {
    if (batch < 1.0) throw std::invalid_argument("lambda_eff: batch size must be >= 1");
    if (sigma < 0.0) throw std::invalid_argument("lambda_eff: sigma must be >= 0");
    if (!(beta >= 0.0 && beta < 1.0)) throw std::invalid_argument("lambda_eff: beta must be in [0,1)");
    return eta * sigma * sigma / (batch * (1.0 - beta));
}

double reg_value(const LossBundle& bundle, const Vector& theta, const RegConfig& cfg) {
    const Spectrum spec = eig_sym(hessian(bundle, theta));
    double total = 0.0;
    for (Eigen::Index i = 0; i < spec.eigenvalues.size(); ++i) {
        total += penalty(spec.eigenvalues[i], cfg.eta, cfg.beta);
    }
    return classification_scale(bundle) * total;
}

Vector reg_grad(const LossBundle& bundle, const Vector& theta, const RegConfig& cfg,
                GradMethod method) {
    if (method == GradMethod::FiniteDiff) {
        const double h = std::cbrt(std::numeric_limits<double>::epsilon()) *
                         std::max(1.0, theta.norm());
        Vector g(theta.size());
        Vector probe = theta;
        for (Eigen::Index j = 0; j < theta.size(); ++j) {
            probe[j] = theta[j] + h;
            const double plus = reg_value(bundle, probe, cfg);
            probe[j] = theta[j] - h;
            const double minus = reg_value(bundle, probe, cfg);
            probe[j] = theta[j];
            g[j] = (plus - minus) / (2.0 * h);
        }
        return g;
    }
    // grad R = (1/2) d3L[ h'(hess L) ] with h'(x) = 1 / (2 - eta x / (1+beta)).
    const Matrix hess_mat = hessian(bundle, theta);
    const double eta = cfg.eta, beta = cfg.beta;
    const Matrix weight = spectral_apply(hess_mat, [eta, beta](double lam) {
        const double denom = 2.0 - eta * lam / (1.0 + beta);
        if (denom <= 0.0) {
            throw EdgeOfStabilityError("reg_grad: eta * lambda_max >= 2 (1 + beta)");
        }
        return 1.0 / denom;
    });
    return classification_scale(bundle) * 0.5 * third_contract(bundle, theta, weight);
}

std::pair<double, Vector> reg_loss(const LossBundle& bundle, const Vector& theta,
                                   const RegConfig& cfg) {
    double value = loss(bundle, theta);
    Vector g = grad(bundle, theta);
    if (cfg.lambda != 0.0) {
        value += cfg.lambda * reg_value(bundle, theta, cfg);
        g += cfg.lambda * reg_grad(bundle, theta, cfg);
    }
    return {value, std::move(g)};
}

SharpnessResult normalized_sharpness(const LossBundle& bundle, const Vector& theta, double nu) {
    const Spectrum spec = eig_sym(hessian(bundle, theta));
    SharpnessResult out;
    out.top_eigenvalue = spec.eigenvalues[0];
    if (!(out.top_eigenvalue > 0.0)) {
        throw DomainError("normalized_sharpness: top Hessian eigenvalue must be positive");
    }
    if (spec.eigenvalues.size() > 1) {
        out.degenerate_top =
            spec.eigenvalues[0] - spec.eigenvalues[1] <= 1e-8 * spec.eigenvalues[0];
    }
    const double eta = (2.0 - nu) / out.top_eigenvalue;
    double total = 0.0;
    for (Eigen::Index i = 0; i < spec.eigenvalues.size(); ++i) {
        total += penalty(spec.eigenvalues[i], eta, 0.0);
    }
    total *= classification_scale(bundle);
    // R(lam1) = (lam1/4) log(2/nu) (1 + o(1)) at this eta, so log(2/nu)/4 is
    // the normalization under which the value converges to lam1.
    out.value = total / (0.25 * std::log(2.0 / nu));
    return out;
}

ShapeMatrix shape_matrix(const Matrix& H, const Matrix& Sigma, double eta, double lambda,
                         double rank_tol) {
    require_symmetric(H, "shape_matrix H");
    require_symmetric(Sigma, "shape_matrix Sigma");
    const Spectrum spec = eig_sym(H);
    const Eigen::Index d = H.rows();
    const double lam_max = spec.eigenvalues[0];
    if (spec.eigenvalues.minCoeff() < -1e-12 * std::max(1.0, lam_max)) {
        throw NotPSDError("shape_matrix: H must be PSD");
    }
    if (eta * lam_max >= 2.0) {
        throw StepTooLargeError("shape_matrix: eta * lambda_max(H) must be < 2");
    }

    const Matrix sigma_basis = spec.basis.transpose() * Sigma * spec.basis;
    const double cut = rank_tol * std::max(lam_max, 0.0);
    Matrix s_basis = Matrix::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            const double li = spec.eigenvalues[i], lj = spec.eigenvalues[j];
            if (li <= cut || lj <= cut) continue;  // off span(H)
            s_basis(i, j) = lambda * sigma_basis(i, j) / (li + lj - eta * li * lj);
        }
    }
    ShapeMatrix out;
    out.S = spec.basis * s_basis * spec.basis.transpose();
    out.S = 0.5 * (out.S + out.S.transpose());

    const Matrix proj = projector_onto_range(H, rank_tol);
    const Matrix contraction = Matrix::Identity(d, d) - eta * H;
    const Matrix defect =
        contraction * out.S * contraction + eta * lambda * proj * Sigma * proj - out.S;
    out.residual = defect.norm();
    return out;
}

std::pair<double, Vector> reg_S(const LossBundle& bundle, const Vector& theta, const Matrix& S) {
    require_symmetric(S, "reg_S");
    const Matrix hess_mat = hessian(bundle, theta);
    const double value = (S.array() * hess_mat.array()).sum();
    return {value, third_contract(bundle, theta, S)};
}

}  // namespace flatreg
