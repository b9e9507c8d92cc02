#ifndef FLATREG_MODELZOO_HPP
#define FLATREG_MODELZOO_HPP

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "flatreg/spectral.hpp"

namespace flatreg {

// Lipschitz constants of f_i, grad f_i, hess f_i. A NaN entry means the
// constant is unbounded over R^d; `measured_ell_f` then carries an empirical
// proxy over the construction probe set.
struct Smoothness {
    double ell_f = 0.0;
    double rho_f = 0.0;
    double kappa_f = 0.0;
    double measured_ell_f = 0.0;

    bool has_rho() const;
};

// Per-sample evaluators f_i, grad f_i, hess f_i. Immutable after
// construction; evaluations are pure and safe to call concurrently.
class Model {
public:
    virtual ~Model() = default;
    virtual int param_dim() const = 0;
    virtual int sample_count() const = 0;
    virtual double eval(int i, const Vector& theta) const = 0;
    virtual Vector grad(int i, const Vector& theta) const = 0;
    virtual Matrix hess(int i, const Vector& theta) const = 0;
    virtual Smoothness smoothness() const = 0;
};

using ModelPtr = std::shared_ptr<const Model>;

struct Dataset {
    std::vector<double> targets;
};

// Canonical quadratic testbed: n = d samples f_i(theta) = sqrt(n) s_i^T theta + b_i
// with s_i the rows of H^{1/2} and y_i = b_i, so L(theta) = theta^T H theta / 2
// exactly and all third derivatives vanish. Throws NotPSDError if H has an
// eigenvalue below -1e-12.
std::pair<ModelPtr, Dataset> make_quadratic(const Matrix& H, const Vector& b);

// Quadratically-parametrized linear regression: f_i(theta) = sum_j theta_j^2 x_{ij},
// y_i = x_i^T w_star. grad and hess are exact closed forms.
std::pair<ModelPtr, Dataset> make_quad_param_regression(const std::vector<Vector>& design,
                                                        const Vector& w_star);

// Scalar-output fully-connected softplus network on fixed synthetic inputs.
// widths = (input_dim, hidden..., 1); softplus is applied at every layer.
// Inputs and targets are frozen by `seed`, so model identity is reproducible.
// Throws TooLargeError above 2000 parameters.
std::pair<ModelPtr, Dataset> make_mlp(const std::vector<int>& widths, int sample_count = 8,
                                      std::uint64_t seed = 1234);

// The thirteen polynomial samples in theta = (x, y, z1, z2, z3, z4) whose
// minibatch SGD trajectory cycles counterclockwise around x^2 + y^2 = 1.
// All targets are zero.
std::pair<ModelPtr, Dataset> make_cycling_model();

}  // namespace flatreg

#endif
