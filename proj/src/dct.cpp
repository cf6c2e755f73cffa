#include "dctattn/dct.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace dctattn {

std::size_t kept_count(std::size_t c, double tau) {
    if (c == 0) throw std::invalid_argument("kept_count: size must be positive");
    if (!(tau > 0.0) || tau > 1.0)
        throw std::invalid_argument("kept_count: tau must be in (0, 1], got " +
                                    std::to_string(tau));
    const long kept = std::lround(tau * static_cast<double>(c));
    if (kept < 1)
        throw std::invalid_argument("kept_count: tau " + std::to_string(tau) +
                                    " keeps no channels of " + std::to_string(c));
    return static_cast<std::size_t>(kept);
}

DctBasis dct_matrix(std::size_t c) {
    if (c == 0) throw std::invalid_argument("dct_matrix: size must be positive");
    DctBasis basis;
    basis.size = c;
    basis.d = Matrix(c, c);
    const double scale = std::sqrt(2.0 / static_cast<double>(c));
    const double g0 = 1.0 / std::sqrt(2.0);
    for (std::size_t k = 0; k < c; ++k) {
        const double gk = (k == 0) ? g0 : 1.0;
        for (std::size_t n = 0; n < c; ++n) {
            const double angle = (2.0 * static_cast<double>(n) + 1.0) *
                                 static_cast<double>(k) * std::numbers::pi /
                                 (2.0 * static_cast<double>(c));
            basis.d(k, n) = scale * gk * std::cos(angle);
        }
    }
    return basis;
}

TruncatedDct truncate(const DctBasis& basis, double tau) {
    if (basis.size == 0 || basis.d.rows() != basis.size || basis.d.cols() != basis.size)
        throw std::invalid_argument("truncate: malformed basis");
    TruncatedDct t;
    t.tau = tau;
    t.kept = kept_count(basis.size, tau);
    t.dbar = Matrix(t.kept, basis.size);
    for (std::size_t k = 0; k < t.kept; ++k)
        for (std::size_t n = 0; n < basis.size; ++n)
            t.dbar(k, n) = basis.d(k, n);
    t.dbar_inv = transpose(t.dbar);
    return t;
}

CoverageReport spectral_coverage(std::size_t c) {
    const DctBasis basis = dct_matrix(c);
    const ComplexMatrix f = unitary_dft(c);
    // Column l of f * d^T is the DFT of basis row l.
    const ComplexMatrix spec = matmul(f, transpose(basis.d));

    CoverageReport report;
    report.coverage.resize(c);
    report.basis_spectra = Matrix(c, c);
    for (std::size_t k = 0; k < c; ++k) {
        double sum = 0.0;
        for (std::size_t l = 0; l < c; ++l) {
            const double mag2 = spec.re(k, l) * spec.re(k, l) +
                                spec.im(k, l) * spec.im(k, l);
            report.basis_spectra(l, k) = std::sqrt(mag2);
            sum += mag2;
        }
        report.coverage[k] = std::sqrt(sum);
    }
    return report;
}

Matrix toeplitz_cov(std::size_t c, double rho) {
    if (c == 0) throw std::invalid_argument("toeplitz_cov: size must be positive");
    if (!(std::abs(rho) < 1.0))
        throw std::invalid_argument("toeplitz_cov: |rho| must be < 1, got " +
                                    std::to_string(rho));
    Matrix cov(c, c);
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < c; ++j)
            cov(i, j) = std::pow(rho, std::abs(static_cast<double>(i) -
                                               static_cast<double>(j)));
    return cov;
}

KltReport klt_compare(std::size_t c, double rho) {
    const Matrix cov = toeplitz_cov(c, rho);
    const DctBasis basis = dct_matrix(c);
    const Matrix proj = matmul(matmul(basis.d, cov), transpose(basis.d));

    KltReport report;
    report.rho = rho;

    double total = 0.0, off = 0.0;
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            const double e = proj(i, j) * proj(i, j);
            total += e;
            if (i != j) off += e;
        }
    report.off_diagonal_ratio = off / total;

    report.dct_variances.resize(c);
    double var_total = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
        report.dct_variances[k] = proj(k, k);
        var_total += proj(k, k);
    }
    report.cumulative_energy.resize(c);
    double run = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
        run += report.dct_variances[k];
        report.cumulative_energy[k] = run / var_total;
    }

    const EighResult eig = jacobi_eigh(cov);
    report.eigenvalues = eig.eigenvalues;
    report.cosines.resize(c);
    for (std::size_t k = 0; k < c; ++k) {
        double dot = 0.0;
        for (std::size_t n = 0; n < c; ++n)
            dot += basis.d(k, n) * eig.eigenvectors(n, k);
        report.cosines[k] = std::abs(dot);
    }
    return report;
}

double energy_compaction(std::size_t c, double rho, double tau) {
    const std::size_t kept = kept_count(c, tau);
    const KltReport report = klt_compare(c, rho);
    return report.cumulative_energy[kept - 1];
}

}  // namespace dctattn
