#include "flatreg/modelzoo.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "flatreg/errors.hpp"
#include "flatreg/rng.hpp"

namespace flatreg {

bool Smoothness::has_rho() const { return std::isfinite(rho_f); }

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// ---------------------------------------------------------------------------
// Quadratic family: f_i(theta) = sqrt(n) s_i^T theta + b_i with s_i the rows
// of H^{1/2}, so the square loss is exactly theta^T H theta / 2.
// ---------------------------------------------------------------------------

class QuadraticModel final : public Model {
public:
    QuadraticModel(Matrix rows, Vector offset) : rows_(std::move(rows)), offset_(std::move(offset)) {}

    int param_dim() const override { return static_cast<int>(rows_.cols()); }
    int sample_count() const override { return static_cast<int>(rows_.rows()); }

    double eval(int i, const Vector& theta) const override {
        return rows_.row(i).dot(theta) + offset_[i];
    }
    Vector grad(int i, const Vector& theta) const override {
        (void)theta;
        return rows_.row(i).transpose();
    }
    Matrix hess(int i, const Vector& theta) const override {
        (void)i;
        (void)theta;
        return Matrix::Zero(param_dim(), param_dim());
    }
    Smoothness smoothness() const override {
        Smoothness s;
        s.ell_f = rows_.rowwise().norm().maxCoeff();
        s.rho_f = 0.0;
        s.kappa_f = 0.0;
        s.measured_ell_f = s.ell_f;
        return s;
    }

private:
    Matrix rows_;  // sqrt(n) * H^{1/2}, one sample per row
    Vector offset_;
};

// ---------------------------------------------------------------------------
// Quadratically-parametrized linear regression.
// ---------------------------------------------------------------------------

class QuadParamModel final : public Model {
public:
    explicit QuadParamModel(std::vector<Vector> design) : design_(std::move(design)) {}

    int param_dim() const override { return static_cast<int>(design_.front().size()); }
    int sample_count() const override { return static_cast<int>(design_.size()); }

    double eval(int i, const Vector& theta) const override {
        return theta.cwiseProduct(theta).dot(design_[i]);
    }
    Vector grad(int i, const Vector& theta) const override {
        return 2.0 * theta.cwiseProduct(design_[i]);
    }
    Matrix hess(int i, const Vector& theta) const override {
        (void)theta;
        return Matrix((2.0 * design_[i]).asDiagonal());
    }
    Smoothness smoothness() const override {
        Smoothness s;
        s.ell_f = kNan;  // grad f grows linearly in theta
        double rho = 0.0;
        double ell_probe = 0.0;
        for (const Vector& x : design_) {
            rho = std::max(rho, 2.0 * x.cwiseAbs().maxCoeff());
            ell_probe = std::max(ell_probe, 2.0 * x.norm());  // at |theta|_inf = 1
        }
        s.rho_f = rho;
        s.kappa_f = 0.0;
        s.measured_ell_f = ell_probe;
        return s;
    }

private:
    std::vector<Vector> design_;
};

// ---------------------------------------------------------------------------
// Softplus MLP. Gradients come from reverse mode; Hessian columns from the
// same pass run over dual numbers (forward-over-reverse), so both are exact
// up to rounding.
// ---------------------------------------------------------------------------

struct Dual {
    double v = 0.0;
    double d = 0.0;
};

inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
inline Dual operator*(double a, Dual b) { return {a * b.v, a * b.d}; }

inline double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }
inline double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : 1.0 - 1.0 / (1.0 + std::exp(x)); }
inline double sigmoid_deriv(double x) { const double s = sigmoid(x); return s * (1.0 - s); }

inline double softplus_f(double x) { return softplus(x); }
inline Dual softplus_f(Dual x) { return {softplus(x.v), sigmoid(x.v) * x.d}; }
inline double softplus_d1(double x) { return sigmoid(x); }
inline Dual softplus_d1(Dual x) { return {sigmoid(x.v), sigmoid_deriv(x.v) * x.d}; }

class MlpModel final : public Model {
public:
    MlpModel(std::vector<int> widths, int sample_count, std::uint64_t seed)
        : widths_(std::move(widths)) {
        param_dim_ = 0;
        for (std::size_t l = 1; l < widths_.size(); ++l) {
            param_dim_ += widths_[l] * widths_[l - 1] + widths_[l];
        }
        if (param_dim_ > 2000) {
            throw TooLargeError("make_mlp: parameter budget of 2000 exceeded");
        }
        Rng rng(seed, /*stream=*/0);
        inputs_.reserve(sample_count);
        for (int i = 0; i < sample_count; ++i) {
            Vector x(widths_.front());
            for (Eigen::Index j = 0; j < x.size(); ++j) x[j] = rng.normal();
            inputs_.push_back(std::move(x));
        }
        teacher_ = Vector(param_dim_);
        for (Eigen::Index j = 0; j < teacher_.size(); ++j) teacher_[j] = 0.5 * rng.normal();
    }

    int param_dim() const override { return param_dim_; }
    int sample_count() const override { return static_cast<int>(inputs_.size()); }

    double eval(int i, const Vector& theta) const override {
        std::vector<double> params(theta.data(), theta.data() + theta.size());
        return forward(params, inputs_[i]);
    }

    Vector grad(int i, const Vector& theta) const override {
        std::vector<double> params(theta.data(), theta.data() + theta.size());
        std::vector<double> g(param_dim_, 0.0);
        forward_backward<double>(params.data(), inputs_[i], g.data());
        return Eigen::Map<Vector>(g.data(), param_dim_);
    }

    Matrix hess(int i, const Vector& theta) const override {
        std::vector<Dual> params(param_dim_);
        for (int j = 0; j < param_dim_; ++j) params[j] = {theta[j], 0.0};
        Matrix h(param_dim_, param_dim_);
        std::vector<Dual> g(param_dim_);
        for (int j = 0; j < param_dim_; ++j) {
            params[j].d = 1.0;
            for (auto& e : g) e = Dual{};
            forward_backward<Dual>(params.data(), inputs_[i], g.data());
            for (int r = 0; r < param_dim_; ++r) h(r, j) = g[r].d;
            params[j].d = 0.0;
        }
        return 0.5 * (h + h.transpose());
    }

    Smoothness smoothness() const override {
        Smoothness s;
        s.ell_f = kNan;
        s.rho_f = kNan;
        s.kappa_f = kNan;
        // Empirical proxy: gradient norms at frozen probe points.
        Rng rng(98765, 1);
        double ell = 0.0;
        for (int probe = 0; probe < 8; ++probe) {
            Vector theta(param_dim_);
            for (Eigen::Index j = 0; j < theta.size(); ++j) theta[j] = 0.5 * rng.normal();
            for (int i = 0; i < sample_count(); ++i) ell = std::max(ell, grad(i, theta).norm());
        }
        s.measured_ell_f = ell;
        return s;
    }

    const Vector& teacher() const { return teacher_; }

private:
    double forward(const std::vector<double>& params, const Vector& x) const {
        std::vector<double> act(x.data(), x.data() + x.size());
        std::size_t offset = 0;
        for (std::size_t l = 1; l < widths_.size(); ++l) {
            const int rows = widths_[l], cols = widths_[l - 1];
            std::vector<double> next(rows);
            for (int r = 0; r < rows; ++r) {
                double z = params[offset + static_cast<std::size_t>(rows) * cols + r];  // bias
                for (int c = 0; c < cols; ++c) z += params[offset + static_cast<std::size_t>(r) * cols + c] * act[c];
                next[r] = softplus_f(z);
            }
            act = std::move(next);
            offset += static_cast<std::size_t>(rows) * cols + rows;
        }
        return act[0];
    }

    // Computes df/dparams into grad_out. T is double or Dual; the Dual run
    // carries one tangent direction through both passes.
    template <typename T>
    void forward_backward(const T* params, const Vector& x, T* grad_out) const {
        const std::size_t layers = widths_.size() - 1;
        std::vector<std::vector<T>> activations(layers + 1);
        std::vector<std::vector<T>> preacts(layers);
        activations[0].resize(x.size());
        for (Eigen::Index j = 0; j < x.size(); ++j) activations[0][j] = make_scalar<T>(x[j]);

        std::vector<std::size_t> offsets(layers);
        std::size_t offset = 0;
        for (std::size_t l = 0; l < layers; ++l) {
            offsets[l] = offset;
            const int rows = widths_[l + 1], cols = widths_[l];
            preacts[l].resize(rows);
            activations[l + 1].resize(rows);
            for (int r = 0; r < rows; ++r) {
                T z = params[offset + static_cast<std::size_t>(rows) * cols + r];
                for (int c = 0; c < cols; ++c) {
                    z = z + params[offset + static_cast<std::size_t>(r) * cols + c] * activations[l][c];
                }
                preacts[l][r] = z;
                activations[l + 1][r] = softplus_f(z);
            }
            offset += static_cast<std::size_t>(rows) * cols + rows;
        }

        // Backward pass: delta = df/dz at each layer, starting from f = a_last[0].
        std::vector<T> delta(1);
        delta[0] = softplus_d1(preacts[layers - 1][0]);
        for (std::size_t l = layers; l-- > 0;) {
            const int rows = widths_[l + 1], cols = widths_[l];
            const std::size_t base = offsets[l];
            for (int r = 0; r < rows; ++r) {
                for (int c = 0; c < cols; ++c) {
                    grad_out[base + static_cast<std::size_t>(r) * cols + c] = delta[r] * activations[l][c];
                }
                grad_out[base + static_cast<std::size_t>(rows) * cols + r] = delta[r];
            }
            if (l == 0) break;
            std::vector<T> prev(cols);
            for (int c = 0; c < cols; ++c) {
                T acc{};
                for (int r = 0; r < rows; ++r) {
                    acc = acc + params[base + static_cast<std::size_t>(r) * cols + c] * delta[r];
                }
                prev[c] = acc * softplus_d1(preacts[l - 1][c]);
            }
            delta = std::move(prev);
        }
    }

    template <typename T>
    static T make_scalar(double v);

    std::vector<int> widths_;
    int param_dim_ = 0;
    std::vector<Vector> inputs_;
    Vector teacher_;
};

template <>
double MlpModel::make_scalar<double>(double v) { return v; }
template <>
Dual MlpModel::make_scalar<Dual>(double v) { return {v, 0.0}; }

// ---------------------------------------------------------------------------
// Cycling counterexample. Samples 1..12 share the bilinear shape
// f = (1 + sign * theta[axis]) * theta[zco] + shift; sample 13 is the circle
// constraint x^2 + y^2 - 1. Each z coordinate gets one conflicting -1/+1
// sample pair (its oscillator) and one suppressor among f9..f12, so exactly
// one oscillator is live at each cardinal point of the circle: z1 at (1,0),
// z4 at (0,1), z2 at (-1,0), z3 at (0,-1).
// ---------------------------------------------------------------------------

struct BilinearSample {
    int axis;    // 0 = x, 1 = y
    double sign;
    int zco;     // index of the z coordinate (2..5)
    double shift;
};

class CyclingModel final : public Model {
public:
    CyclingModel() {
        samples_ = {
            {1, -1.0, 2, -1.0},  // f1  = (1-y) z1 - 1
            {1, -1.0, 2, +1.0},  // f2  = (1-y) z1 + 1
            {1, +1.0, 3, -1.0},  // f3  = (1+y) z2 - 1
            {1, +1.0, 3, +1.0},  // f4  = (1+y) z2 + 1
            {0, -1.0, 4, -1.0},  // f5  = (1-x) z3 - 1
            {0, -1.0, 4, +1.0},  // f6  = (1-x) z3 + 1
            {0, +1.0, 5, -1.0},  // f7  = (1+x) z4 - 1
            {0, +1.0, 5, +1.0},  // f8  = (1+x) z4 + 1
            {0, -1.0, 2, 0.0},   // f9  = (1-x) z1
            {0, +1.0, 3, 0.0},   // f10 = (1+x) z2
            {1, +1.0, 4, 0.0},   // f11 = (1+y) z3
            {1, -1.0, 5, 0.0},   // f12 = (1-y) z4
        };
    }

    int param_dim() const override { return 6; }
    int sample_count() const override { return 13; }

    double eval(int i, const Vector& theta) const override {
        if (i == 12) return theta[0] * theta[0] + theta[1] * theta[1] - 1.0;
        const BilinearSample& s = samples_[i];
        return (1.0 + s.sign * theta[s.axis]) * theta[s.zco] + s.shift;
    }

    Vector grad(int i, const Vector& theta) const override {
        Vector g = Vector::Zero(6);
        if (i == 12) {
            g[0] = 2.0 * theta[0];
            g[1] = 2.0 * theta[1];
            return g;
        }
        const BilinearSample& s = samples_[i];
        g[s.axis] = s.sign * theta[s.zco];
        g[s.zco] = 1.0 + s.sign * theta[s.axis];
        return g;
    }

    Matrix hess(int i, const Vector& theta) const override {
        (void)theta;
        Matrix h = Matrix::Zero(6, 6);
        if (i == 12) {
            h(0, 0) = 2.0;
            h(1, 1) = 2.0;
            return h;
        }
        const BilinearSample& s = samples_[i];
        h(s.axis, s.zco) = s.sign;
        h(s.zco, s.axis) = s.sign;
        return h;
    }

    Smoothness smoothness() const override {
        Smoothness s;
        s.ell_f = kNan;
        s.rho_f = 2.0;  // max over samples of |hess f_i|_2
        s.kappa_f = 0.0;
        s.measured_ell_f = 3.0;
        return s;
    }

private:
    std::vector<BilinearSample> samples_;
};

}  // namespace

std::pair<ModelPtr, Dataset> make_quadratic(const Matrix& H, const Vector& b) {
    require_symmetric(H, "make_quadratic");
    const Spectrum spec = eig_sym(H);
    if (spec.eigenvalues.minCoeff() < -1e-12) {
        throw NotPSDError("make_quadratic: H has an eigenvalue below -1e-12");
    }
    const Eigen::Index d = H.rows();
    Vector sqrt_eigs(d);
    for (Eigen::Index i = 0; i < d; ++i) sqrt_eigs[i] = std::sqrt(std::max(spec.eigenvalues[i], 0.0));
    const Matrix root = spec.basis * sqrt_eigs.asDiagonal() * spec.basis.transpose();
    const Matrix rows = std::sqrt(static_cast<double>(d)) * root;

    Dataset data;
    data.targets.assign(b.data(), b.data() + b.size());
    return {std::make_shared<QuadraticModel>(rows, b), std::move(data)};
}

std::pair<ModelPtr, Dataset> make_quad_param_regression(const std::vector<Vector>& design,
                                                        const Vector& w_star) {
    Dataset data;
    data.targets.reserve(design.size());
    for (const Vector& x : design) {
        if (x.size() != w_star.size()) {
            throw std::invalid_argument("make_quad_param_regression: inconsistent dimensions");
        }
        data.targets.push_back(x.dot(w_star));
    }
    return {std::make_shared<QuadParamModel>(design), std::move(data)};
}

std::pair<ModelPtr, Dataset> make_mlp(const std::vector<int>& widths, int sample_count,
                                      std::uint64_t seed) {
    if (widths.size() < 2 || widths.back() != 1) {
        throw std::invalid_argument("make_mlp: widths must end with output width 1");
    }
    auto model = std::make_shared<MlpModel>(widths, sample_count, seed);
    Dataset data;
    data.targets.reserve(sample_count);
    for (int i = 0; i < sample_count; ++i) data.targets.push_back(model->eval(i, model->teacher()));
    return {model, std::move(data)};
}

std::pair<ModelPtr, Dataset> make_cycling_model() {
    Dataset data;
    data.targets.assign(13, 0.0);
    return {std::make_shared<CyclingModel>(), std::move(data)};
}

}  // namespace flatreg
