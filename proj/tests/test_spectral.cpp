#include <doctest.h>

#include <cmath>

#include "flatreg/errors.hpp"
#include "flatreg/rng.hpp"
#include "flatreg/spectral.hpp"

using namespace flatreg;

namespace {

Matrix sym_random(int d, Rng& rng) {
    Matrix m(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j <= i; ++j) m(i, j) = m(j, i) = rng.normal();
    return m;
}

}  // namespace

TEST_CASE("eig_sym on diagonal and identity") {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = 2.0;
    m(1, 1) = 1.0;
    const Spectrum spec = eig_sym(m);
    CHECK(spec.eigenvalues[0] == doctest::Approx(2.0));
    CHECK(spec.eigenvalues[1] == doctest::Approx(1.0));
    // Basis is a signed permutation of the identity.
    CHECK(std::abs(spec.basis(0, 0)) == doctest::Approx(1.0));
    CHECK(std::abs(spec.basis(1, 1)) == doctest::Approx(1.0));

    const Spectrum id3 = eig_sym(Matrix::Identity(3, 3));
    for (int i = 0; i < 3; ++i) CHECK(id3.eigenvalues[i] == doctest::Approx(1.0));
}

TEST_CASE("eig_sym hand-solved 2x2") {
    Matrix m(2, 2);
    m << 2.0, 1.0, 1.0, 2.0;
    const Spectrum spec = eig_sym(m);
    CHECK(spec.eigenvalues[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(spec.eigenvalues[1] == doctest::Approx(1.0).epsilon(1e-12));
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    CHECK(std::abs(spec.basis(0, 0) * spec.basis(1, 0)) == doctest::Approx(0.5));
    CHECK(std::abs(spec.basis(0, 0)) == doctest::Approx(inv_sqrt2));
}

TEST_CASE("eig_sym rejects asymmetry and is deterministic") {
    Matrix m(2, 2);
    m << 1.0, 0.5, -0.5, 1.0;
    CHECK_THROWS_AS(eig_sym(m), NonSymmetricError);

    Rng rng(3, 0);
    const Matrix r = sym_random(5, rng);
    const Spectrum a = eig_sym(r);
    const Spectrum b = eig_sym(r);
    CHECK((a.eigenvalues - b.eigenvalues).norm() == 0.0);
    CHECK((a.basis - b.basis).norm() == 0.0);
}

TEST_CASE("reconstruction and orthonormality invariants") {
    Rng rng(17, 0);
    for (int rep = 0; rep < 10; ++rep) {
        const Matrix m = sym_random(6, rng);
        const Spectrum spec = eig_sym(m);
        const Matrix recon = spec.basis * spec.eigenvalues.asDiagonal() * spec.basis.transpose();
        CHECK((recon - m).norm() <= 1e-9 * std::max(1.0, m.norm()));
        CHECK((spec.basis.transpose() * spec.basis - Matrix::Identity(6, 6)).norm() <= 1e-10);
        for (int i = 1; i < 6; ++i) CHECK(spec.eigenvalues[i - 1] >= spec.eigenvalues[i]);
    }
}

TEST_CASE("spectral_apply examples") {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = 1.0;
    m(1, 1) = 4.0;
    const Matrix root = spectral_apply(m, [](double x) { return std::sqrt(x); });
    CHECK(root(0, 0) == doctest::Approx(1.0));
    CHECK(root(1, 1) == doctest::Approx(2.0));
    CHECK(std::abs(root(0, 1)) < 1e-12);

    const double eta = 0.1;
    const Matrix zero = spectral_apply(Matrix::Zero(3, 3), [eta](double x) {
        return -std::log(1.0 - eta * x / 2.0) / eta;
    });
    CHECK(zero.norm() == doctest::Approx(0.0));

    Matrix d2 = Matrix::Zero(2, 2);
    d2(0, 0) = 1.0;
    d2(1, 1) = 0.5;
    const Matrix mapped = spectral_apply(d2, [](double x) { return 1.0 / (2.0 - 0.1 * x); });
    CHECK(mapped(0, 0) == doctest::Approx(1.0 / 1.9).epsilon(1e-12));
    CHECK(mapped(1, 1) == doctest::Approx(1.0 / 1.95).epsilon(1e-12));
}

TEST_CASE("spectral_apply domain error and composition") {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = -1.0;
    m(1, 1) = 2.0;
    CHECK_THROWS_AS(spectral_apply(m, [](double x) { return std::log(x); }), DomainError);

    Rng rng(5, 0);
    const Matrix r = sym_random(5, rng);
    const Matrix lhs = spectral_apply(r, [](double x) { return std::exp(0.3 * x) * x; });
    const Matrix inner = spectral_apply(r, [](double x) { return 0.3 * x; });
    // h1(h2(x)) with h2 = 0.3x and h1 = e^x * x / 0.3 applied on same eigenbasis
    const Matrix rhs = spectral_apply(inner, [](double x) { return std::exp(x) * (x / 0.3); });
    CHECK((lhs - rhs).norm() <= 1e-9 * std::max(1.0, lhs.norm()));
}

TEST_CASE("projector_onto_range examples") {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = 1.0;
    const Matrix p = projector_onto_range(m, 1e-10);
    CHECK(p(0, 0) == doctest::Approx(1.0));
    CHECK(std::abs(p(1, 1)) < 1e-12);

    m(1, 1) = 1e-14;
    const Matrix q = projector_onto_range(m, 1e-10);
    CHECK(std::abs(q(1, 1)) < 1e-12);

    Vector g(2);
    g << 1.0, 1.0;
    g /= std::sqrt(2.0);
    const Matrix rank1 = g * g.transpose();
    const Matrix pr = projector_onto_range(rank1, 1e-10);
    CHECK((pr - rank1).norm() <= 1e-10);
    CHECK((pr * pr - pr).norm() <= 1e-10);
}

TEST_CASE("contraction report scalar example") {
    Matrix g = Matrix::Identity(1, 1);
    Vector probe(1);
    probe << 1.0;
    const ContractionReport report = contraction_report(g, 0.1, 0.1, 10, {probe});
    CHECK(report.pass);
    // |(1 - 0.1)^10 * 1| = 0.9^10 against 1/(eta nu tau) = 10 at tau = 10.
    bool found = false;
    for (const ContractionCheck& check : report.checks) {
        if (check.lemma == "power_matrix" && check.tau == 10) {
            found = true;
            CHECK(check.measured == doctest::Approx(std::pow(0.9, 10)).epsilon(1e-12));
            CHECK(check.bound == doctest::Approx(10.0).epsilon(1e-12));
        }
    }
    CHECK(found);
}

TEST_CASE("contraction report zero matrix and step guard") {
    const Matrix zero = Matrix::Zero(3, 3);
    Vector probe = Vector::Zero(3);
    const ContractionReport report = contraction_report(zero, 0.5, 0.1, 50, {probe});
    CHECK(report.pass);
    for (const ContractionCheck& check : report.checks) CHECK(check.measured == 0.0);

    const Matrix big = 10.0 * Matrix::Identity(2, 2);
    Vector p2 = Vector::Ones(2);
    CHECK_THROWS_AS(contraction_report(big, 0.5, 0.1, 10, {p2}), StepTooLargeError);
}

TEST_CASE("contraction lemmas on random rank-one sums") {
    Rng rng(23, 0);
    for (int rep = 0; rep < 10; ++rep) {
        const int d = 8, n = 8;
        std::vector<Vector> probes;
        for (int i = 0; i < n; ++i) {
            Vector g(d);
            for (int j = 0; j < d; ++j) g[j] = rng.rademacher() / std::sqrt(double(d));
            probes.push_back(g);
        }
        Matrix gm = Matrix::Zero(d, d);
        for (const Vector& g : probes) gm += g * g.transpose();
        gm /= double(n);
        double ell = 0.0;
        for (const Vector& g : probes) ell = std::max(ell, g.squaredNorm());
        const double nu = 0.2;
        const ContractionReport report = contraction_report(gm, (2.0 - nu) / ell, nu, 1000, probes);
        CHECK(report.pass);
    }
}
