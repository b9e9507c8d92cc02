#ifndef FLATREG_OBJECTIVE_HPP
#define FLATREG_OBJECTIVE_HPP

#include <utility>
#include <vector>

#include "flatreg/modelzoo.hpp"
#include "flatreg/spectral.hpp"

namespace flatreg {

enum class LossKind { RegressionSquare, Classification };
enum class ClsLoss { Logistic, Exponential, Square };

// Minimizer, noise strength, and curvature of the flip-smoothed loss
// lbar(x) = p l(-x) + (1-p) l(x).
struct LossConstants {
    double c = 0.0;
    double sigma_sq = 0.0;
    double alpha = 0.0;
    double p = 0.0;
};

// A model paired with targets and a loss shape. Regression uses
// l_i = (f_i - y_i)^2 / 2; classification uses l_i = lbar(y_i f_i) - lbar(c)
// with targets in {-1, +1}.
struct LossBundle {
    ModelPtr model;
    Dataset data;
    LossKind kind = LossKind::RegressionSquare;
    ClsLoss cls_loss = ClsLoss::Logistic;
    double p = 0.2;

    static LossBundle regression(ModelPtr m, Dataset d);
    static LossBundle classification(ModelPtr m, Dataset d, ClsLoss loss, double p);
};

double loss(const LossBundle& bundle, const Vector& theta);
Vector grad(const LossBundle& bundle, const Vector& theta);
Matrix hessian(const LossBundle& bundle, const Vector& theta);

// Gauss-Newton curvature: (1/n) sum grad f_i grad f_i^T for regression, with
// the lbar'' weights for classification so that it still matches the Hessian
// at zero-residual points.
Matrix gauss_newton(const LossBundle& bundle, const Vector& theta);

struct HessianSplit {
    Matrix gauss_newton;
    Matrix residual;          // E = hessian - gauss_newton, assembled per sample
    double residual_norm = 0.0;  // |E|_2
    double bound = 0.0;          // sqrt(2 rho_f L)
    bool within_bound = false;
};

HessianSplit hessian_split(const LossBundle& bundle, const Vector& theta);

// result_i = sum_{jk} d_i d_j d_k L(theta) v_j v_k, by central differences of
// the exact Hessian along v.
Vector third_form(const LossBundle& bundle, const Vector& theta, const Vector& v);

// result_i = sum_{jk} d_i d_j d_k L(theta) M_{jk}: eigendecompose M and sum
// third_form over the eigendirections.
Vector third_contract(const LossBundle& bundle, const Vector& theta, const Matrix& M);

// Scalar smoothed-loss helpers (classification).
double cls_loss_value(ClsLoss kind, double x);
double cls_loss_deriv(ClsLoss kind, double x);
double smoothed_loss(ClsLoss kind, double p, double x);        // lbar
double smoothed_loss_deriv(ClsLoss kind, double p, double x);  // lbar'
double smoothed_loss_curv(ClsLoss kind, double p, double x);   // lbar''

// Closed-form table values. Throws InvalidPError outside (0, 1).
LossConstants loss_constants(ClsLoss kind, double p);

// Independent oracle: c by golden-section minimization of lbar (to 1e-12),
// alpha by central second difference, sigma^2 from the flip distribution at
// the numeric c.
LossConstants loss_constants_numeric(ClsLoss kind, double p);

struct QuadApproxReport {
    double eps_q = 0.0;
    double nu = 0.0;       // smallest feasible nu over the grid
    bool exists = false;   // nu finite
};

// Scans (x - c)^2 / (lbar(x) - lbar(c)) over a grid restricted to the
// sublevel set {lbar - lbar(c) <= eps_q}.
QuadApproxReport verify_quadratic_approx(ClsLoss kind, double p, double eps_q = 0.1,
                                         int grid_points = 4001);

}  // namespace flatreg

#endif
