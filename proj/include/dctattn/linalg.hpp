#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace dctattn {

// Accumulates the number of scalar multiplications performed by counted
// matrix products.  Ops that accept a MulCounter* only add to it when the
// pointer is non-null, so the same code path serves both counted and
// uncounted callers.
struct MulCounter {
    std::uint64_t total = 0;
    void reset() { total = 0; }
};

// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    static Matrix identity(std::size_t n);

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Rank-3 tensor laid out as [windows][tokens][channels], row-major.
class Tensor3 {
public:
    Tensor3() = default;
    Tensor3(std::size_t windows, std::size_t tokens, std::size_t channels)
        : windows_(windows), tokens_(tokens), channels_(channels),
          data_(windows * tokens * channels, 0.0) {}

    std::size_t windows() const { return windows_; }
    std::size_t tokens() const { return tokens_; }
    std::size_t channels() const { return channels_; }

    double& at(std::size_t w, std::size_t t, std::size_t c) {
        return data_[(w * tokens_ + t) * channels_ + c];
    }
    double at(std::size_t w, std::size_t t, std::size_t c) const {
        return data_[(w * tokens_ + t) * channels_ + c];
    }

    // Copies window w out as a tokens x channels matrix (and back in).
    Matrix window(std::size_t w) const;
    void set_window(std::size_t w, const Matrix& m);

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

private:
    std::size_t windows_ = 0;
    std::size_t tokens_ = 0;
    std::size_t channels_ = 0;
    std::vector<double> data_;
};

// Dense complex matrix (split storage); only what the DFT analysis needs.
class ComplexMatrix {
public:
    ComplexMatrix() = default;
    ComplexMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), re_(rows * cols, 0.0), im_(rows * cols, 0.0) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& re(std::size_t i, std::size_t j) { return re_[i * cols_ + j]; }
    double re(std::size_t i, std::size_t j) const { return re_[i * cols_ + j]; }
    double& im(std::size_t i, std::size_t j) { return im_[i * cols_ + j]; }
    double im(std::size_t i, std::size_t j) const { return im_[i * cols_ + j]; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> re_, im_;
};

// c = a * b.  Throws std::invalid_argument on an inner-dimension mismatch.
// When counter is non-null, adds rows(a)*cols(b)*cols(a) to it.
Matrix matmul(const Matrix& a, const Matrix& b, MulCounter* counter = nullptr);

// c = a * b for one real and one complex operand (used by spectral analysis).
ComplexMatrix matmul(const ComplexMatrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

// Adds bias[j] to every row of m in place.  bias.size() must equal cols.
void add_row_bias(Matrix& m, const std::vector<double>& bias);

// Numerically stabilized row-wise softmax: subtracts each row's max before
// exponentiating, so arbitrarily large magnitudes stay finite.
Matrix softmax_rows(const Matrix& m);

// Seeded random source.  All randomness in the library flows through this so
// results are reproducible from a single integer seed.  normal() uses the
// Box-Muller transform on uniform draws from a 64-bit Mersenne twister; this
// avoids the unspecified (implementation-dependent) behaviour of
// std::normal_distribution and keeps streams identical across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform in the open interval (0, 1).
    double uniform();
    // Standard normal.
    double normal();
    // Normal with the given stddev, redrawn until within +/- 2*stddev.
    double trunc_normal(double stddev);
    // Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n);

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// rows x cols matrix of truncated-normal samples (mean 0, clipped at two
// standard deviations), filled row-major from Rng(seed).
Matrix trunc_normal_init(std::size_t rows, std::size_t cols, double stddev,
                         std::uint64_t seed);

// Unitary DFT matrix: F(k, n) = exp(-2*pi*i*k*n/c) / sqrt(c).
ComplexMatrix unitary_dft(std::size_t c);

struct EighResult {
    std::vector<double> eigenvalues;  // descending
    Matrix eigenvectors;              // column j pairs with eigenvalues[j]
};

// Cyclic Jacobi eigendecomposition for symmetric matrices.  Sweeps until the
// off-diagonal Frobenius norm drops below 1e-12 (at most 100 sweeps).
// Throws std::invalid_argument if the input is not square or departs from
// symmetry by more than 1e-12, std::runtime_error if it fails to converge.
EighResult jacobi_eigh(const Matrix& s);

}  // namespace dctattn
