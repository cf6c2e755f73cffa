#include "dctattn/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace dctattn {

namespace {

std::string shape_str(std::size_t r, std::size_t c) {
    return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
}

}  // namespace

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Tensor3::window(std::size_t w) const {
    Matrix m(tokens_, channels_);
    const double* src = data_.data() + w * tokens_ * channels_;
    std::copy(src, src + tokens_ * channels_, m.data().begin());
    return m;
}

void Tensor3::set_window(std::size_t w, const Matrix& m) {
    if (m.rows() != tokens_ || m.cols() != channels_)
        throw std::invalid_argument("set_window: got " + shape_str(m.rows(), m.cols()) +
                                    ", want " + shape_str(tokens_, channels_));
    std::copy(m.data().begin(), m.data().end(),
              data_.begin() + w * tokens_ * channels_);
}

Matrix matmul(const Matrix& a, const Matrix& b, MulCounter* counter) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: inner dimensions differ: " +
                                    shape_str(a.rows(), a.cols()) + " * " +
                                    shape_str(b.rows(), b.cols()));
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j)
                c(i, j) += aik * b(k, j);
        }
    }
    if (counter)
        counter->total += static_cast<std::uint64_t>(a.rows()) * b.cols() * a.cols();
    return c;
}

ComplexMatrix matmul(const ComplexMatrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: inner dimensions differ: " +
                                    shape_str(a.rows(), a.cols()) + " * " +
                                    shape_str(b.rows(), b.cols()));
    ComplexMatrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k)
            for (std::size_t j = 0; j < b.cols(); ++j) {
                c.re(i, j) += a.re(i, k) * b(k, j);
                c.im(i, j) += a.im(i, k) * b(k, j);
            }
    return c;
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
            t(j, i) = m(i, j);
    return t;
}

void add_row_bias(Matrix& m, const std::vector<double>& bias) {
    if (bias.size() != m.cols())
        throw std::invalid_argument("add_row_bias: bias length " +
                                    std::to_string(bias.size()) + " vs " +
                                    std::to_string(m.cols()) + " columns");
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
            m(i, j) += bias[j];
}

Matrix softmax_rows(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double mx = m(i, 0);
        for (std::size_t j = 1; j < m.cols(); ++j) mx = std::max(mx, m(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out(i, j) = std::exp(m(i, j) - mx);
            sum += out(i, j);
        }
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) /= sum;
    }
    return out;
}

double Rng::uniform() {
    // 53-bit mantissa shifted off zero so log() in Box-Muller stays finite.
    return (static_cast<double>(engine_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
}

double Rng::trunc_normal(double stddev) {
    if (!(stddev > 0.0))
        throw std::invalid_argument("trunc_normal: stddev must be positive");
    double z = normal();
    while (std::abs(z) > 2.0) z = normal();
    return stddev * z;
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int: empty range");
    // Rejection keeps the draw unbiased for ranges that do not divide 2^64.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
}

Matrix trunc_normal_init(std::size_t rows, std::size_t cols, double stddev,
                         std::uint64_t seed) {
    if (rows == 0 || cols == 0)
        throw std::invalid_argument("trunc_normal_init: empty shape " +
                                    shape_str(rows, cols));
    Rng rng(seed);
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            m(i, j) = rng.trunc_normal(stddev);
    return m;
}

ComplexMatrix unitary_dft(std::size_t c) {
    if (c == 0) throw std::invalid_argument("unitary_dft: size must be positive");
    ComplexMatrix f(c, c);
    const double scale = 1.0 / std::sqrt(static_cast<double>(c));
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t n = 0; n < c; ++n) {
            const double angle = -2.0 * std::numbers::pi *
                                 static_cast<double>(k * n) / static_cast<double>(c);
            f.re(k, n) = scale * std::cos(angle);
            f.im(k, n) = scale * std::sin(angle);
        }
    return f;
}

EighResult jacobi_eigh(const Matrix& s) {
    if (s.rows() != s.cols())
        throw std::invalid_argument("jacobi_eigh: matrix not square: " +
                                    shape_str(s.rows(), s.cols()));
    const std::size_t n = s.rows();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(s(i, j) - s(j, i)) > 1e-12)
                throw std::invalid_argument("jacobi_eigh: matrix not symmetric at (" +
                                            std::to_string(i) + "," + std::to_string(j) + ")");

    Matrix a = s;
    Matrix v = Matrix::identity(n);

    auto off_norm = [&a, n] {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) sum += a(i, j) * a(i, j);
        return std::sqrt(sum);
    };

    constexpr int kMaxSweeps = 100;
    constexpr double kOffTol = 1e-12;
    int sweep = 0;
    for (; sweep < kMaxSweeps && off_norm() > kOffTol; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;

                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - sn * akq;
                    a(k, q) = sn * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - sn * aqk;
                    a(q, k) = sn * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - sn * vkq;
                    v(k, q) = sn * vkp + c * vkq;
                }
            }
        }
    }
    if (off_norm() > kOffTol)
        throw std::runtime_error("jacobi_eigh: no convergence after " +
                                 std::to_string(kMaxSweeps) + " sweeps");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&a](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

    EighResult res;
    res.eigenvalues.resize(n);
    res.eigenvectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        res.eigenvalues[j] = a(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i)
            res.eigenvectors(i, j) = v(i, order[j]);
    }
    return res;
}

}  // namespace dctattn
