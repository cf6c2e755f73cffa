#pragma once

#include <cstddef>
#include <vector>

#include "dctattn/linalg.hpp"

namespace dctattn {

// Orthonormal type-II DCT basis.  Row k holds the k-th basis vector:
//   d(k, n) = sqrt(2/c) * g_k * cos((2n + 1) k pi / (2 c)),
// with g_0 = 1/sqrt(2) and g_k = 1 otherwise, so d * d^T = I.
struct DctBasis {
    std::size_t size = 0;
    Matrix d;  // size x size
};

// Low-frequency truncation of a DctBasis.  dbar keeps the first `kept` rows;
// because the basis is orthonormal, the (pseudo-)inverse is just dbar^T.
struct TruncatedDct {
    double tau = 1.0;
    std::size_t kept = 0;
    Matrix dbar;      // kept x size
    Matrix dbar_inv;  // size x kept, equals transpose(dbar)
};

// DFT magnitudes of each basis vector plus the per-bin coverage they add up
// to.  basis_spectra(l, k) = |DFT bin k of basis row l|; coverage[k] is the
// l2 norm across l, which is exactly 1 for every bin of an orthonormal basis
// under a unitary DFT.
struct CoverageReport {
    std::vector<double> coverage;  // length c
    Matrix basis_spectra;          // c x c, indexed (basis l, bin k)
};

// How closely the DCT tracks the optimal decorrelating transform (KLT) of an
// AR(1) process with correlation rho.
struct KltReport {
    double rho = 0.0;
    // Fraction of the squared Frobenius norm of d * cov * d^T that sits off
    // the diagonal; 0 means the DCT diagonalizes the covariance exactly.
    double off_diagonal_ratio = 0.0;
    std::vector<double> dct_variances;      // diag(d * cov * d^T)
    std::vector<double> eigenvalues;        // KLT spectrum, descending
    std::vector<double> cosines;            // |cos| of DCT row k vs eigenvector k
    std::vector<double> cumulative_energy;  // prefix fraction of dct_variances
};

// Number of channels a truncation ratio keeps: round(tau * c), half away
// from zero.  Throws if tau is outside (0, 1] or the result would be zero.
std::size_t kept_count(std::size_t c, double tau);

DctBasis dct_matrix(std::size_t c);

TruncatedDct truncate(const DctBasis& basis, double tau);

CoverageReport spectral_coverage(std::size_t c);

// Covariance of a unit-variance AR(1) chain: cov(i, j) = rho^|i - j|.
// Requires |rho| < 1.
Matrix toeplitz_cov(std::size_t c, double rho);

KltReport klt_compare(std::size_t c, double rho);

// Fraction of total AR(1) signal energy captured by the kept_count(c, tau)
// lowest DCT coefficients.
double energy_compaction(std::size_t c, double rho, double tau);

}  // namespace dctattn
