#ifndef FLATREG_SPECTRAL_HPP
#define FLATREG_SPECTRAL_HPP

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace flatreg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Eigenvalues sorted descending; basis columns are the matching orthonormal
// eigenvectors, so M = basis * eigenvalues.asDiagonal() * basis^T.
struct Spectrum {
    Vector eigenvalues;
    Matrix basis;
};

// Relative symmetry defect |M - M^T|_max / max(1, |M|_F).
double symmetry_defect(const Matrix& m);

// Throws NonSymmetricError if the defect exceeds 1e-12.
void require_symmetric(const Matrix& m, const std::string& context);

Spectrum eig_sym(const Matrix& m);

// U diag(h(lam_i)) U^T. Throws DomainError if h is not finite at some
// eigenvalue.
Matrix spectral_apply(const Matrix& m, const std::function<double(double)>& h);

// Orthogonal projector onto the eigenvectors with |lam| > rank_tol * max|lam|.
Matrix projector_onto_range(const Matrix& m, double rank_tol = 1e-10);

// One contraction lemma evaluated at one horizon tau. `measured` is the
// worst case over the allowed probe-index sequences, `bound` is the lemma's
// right-hand side with every constant explicit.
struct ContractionCheck {
    std::string lemma;
    int tau = 0;
    double measured = 0.0;
    double bound = 0.0;
    bool pass = false;
};

struct ContractionReport {
    std::vector<ContractionCheck> checks;
    bool pass = true;
};

// Checks the six weak-contraction bounds for a PSD G = (1/n) sum g_i g_i^T
// and step size eta <= (2-nu)/lambda_max(G), for every tau in [1, tau_max]:
//
//   power_matrix:  |(I-nG)^t G|_2             <= 1/(e*n*t)   [explicit 1/(eta nu tau)]
//   power_vector:  max_i |(I-nG)^t g_i|       <= sqrt(n d/(eta nu t))
//   sum_norm:      sum_{k<t} max_i |(I-nG)^k g_i|      <= sqrt(n d t/(eta nu))
//   sum_sq:        sum_{k<t} max_i |(I-nG)^k g_i|^2    <= n d/(eta nu)
//   sum_cross:     sum_{k<t} max_{i,j} |..g_i||..g_j|  <= n d/(eta nu)
//   sum_matrix:    sum_{k<t} |(I-nG)^k G|_2            <= 2 d/(eta nu)
//
// Throws StepTooLargeError when eta * lambda_max(G) > 2 - nu.
ContractionReport contraction_report(const Matrix& G, double eta, double nu, int tau_max,
                                     const std::vector<Vector>& probes);

}  // namespace flatreg

#endif
