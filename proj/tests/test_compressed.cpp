#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "dctattn/attention.hpp"
#include "dctattn/compressed.hpp"
#include "dctattn/dct.hpp"
#include "test_common.hpp"

using namespace dctattn;

namespace {

CompressedWeights random_compressed(const AttentionConfig& cfg, std::size_t kept,
                                    std::uint64_t seed) {
    CompressedWeights cw = CompressedWeights::init(cfg, kept, 0.5, seed);
    Rng rng(seed + 500);
    for (std::vector<double>* b : {&cw.bq, &cw.bk, &cw.bv, &cw.bo})
        for (double& v : *b) v = 0.1 * rng.normal();
    for (Matrix& table : cw.bias_tables)
        for (double& v : table.data()) v = 0.1 * rng.normal();
    return cw;
}

}  // namespace

TEST_CASE("dct_init replaces the selected projections with the basis") {
    AttentionConfig cfg{1, 2, 8, 2};
    AttentionWeights w = AttentionWeights::init(cfg, 0.02, 3);
    Rng rng(4);
    for (double& v : w.bq) v = rng.normal();
    for (double& v : w.bk) v = rng.normal();
    DctBasis basis = dct_matrix(8);

    DctInitTarget target;
    target.q = true;
    target.k = true;
    AttentionWeights out = dct_init(w, target, basis);

    CHECK(testutil::max_abs_diff(out.wq, basis.d) == 0.0);
    CHECK(testutil::max_abs_diff(out.wk, basis.d) == 0.0);
    for (double v : out.bq) CHECK(v == 0.0);
    for (double v : out.bk) CHECK(v == 0.0);
    // Untouched projections keep their values.
    CHECK(testutil::max_abs_diff(out.wv, w.wv) == 0.0);
    CHECK(testutil::max_abs_diff(out.wo, w.wo) == 0.0);
    CHECK_FALSE(out.frozen_q);  // freeze not requested

    target.freeze = true;
    AttentionWeights frozen = dct_init(w, target, basis);
    CHECK(frozen.frozen_q);
    CHECK(frozen.frozen_k);
    CHECK_FALSE(frozen.frozen_v);
}

TEST_CASE("dct_init is idempotent bit-for-bit") {
    AttentionConfig cfg{1, 2, 8, 2};
    AttentionWeights w = AttentionWeights::init(cfg, 0.02, 5);
    DctBasis basis = dct_matrix(8);
    DctInitTarget target;
    target.v = true;
    AttentionWeights once = dct_init(w, target, basis);
    AttentionWeights twice = dct_init(once, target, basis);
    CHECK(testutil::max_abs_diff(once.wv, twice.wv) == 0.0);
    CHECK(testutil::max_abs_diff(once.wq, twice.wq) == 0.0);
    CHECK(once.bv == twice.bv);
}

TEST_CASE("dct_init rejects empty targets and mismatched basis sizes") {
    AttentionConfig cfg{1, 2, 8, 2};
    AttentionWeights w = AttentionWeights::init(cfg, 0.02, 6);
    CHECK_THROWS_AS(dct_init(w, DctInitTarget{}, dct_matrix(8)), std::invalid_argument);
    DctInitTarget target;
    target.q = true;
    CHECK_THROWS_AS(dct_init(w, target, dct_matrix(4)), std::invalid_argument);
}

TEST_CASE("a DCT-initialized projection computes the channel DCT") {
    AttentionConfig cfg{2, 2, 8, 2};
    AttentionWeights w = AttentionWeights::init(cfg, 0.02, 7);
    DctBasis basis = dct_matrix(8);
    DctInitTarget target;
    target.q = true;
    AttentionWeights init = dct_init(w, target, basis);

    Rng rng(8);
    Tensor3 x = testutil::random_tensor(cfg.windows, cfg.tokens(), cfg.channels, rng);
    MsaCache cache;
    msa_forward(x, init, cfg, &cache);

    for (std::size_t win = 0; win < cfg.windows; ++win)
        for (std::size_t t = 0; t < cfg.tokens(); ++t)
            for (std::size_t k = 0; k < 8; ++k) {
                double coeff = 0.0;
                for (std::size_t n = 0; n < 8; ++n) coeff += basis.d(k, n) * x.at(win, t, n);
                CHECK(std::abs(cache.q.at(win, t, k) - coeff) <= 1e-12);
            }
}

TEST_CASE("CompressedWeights::init sizes against kept and zeroes biases") {
    AttentionConfig cfg{1, 2, 8, 2};
    CompressedWeights cw = CompressedWeights::init(cfg, 4, 0.5, 11);
    cw.validate(cfg);
    CHECK(cw.kept == 4);
    CHECK(cw.wq.rows() == 4);
    CHECK(cw.wq.cols() == 4);
    CHECK(cw.wo.rows() == 8);
    CHECK(cw.wo.cols() == 8);
    CHECK(cw.bq.size() == 4);
    CHECK(cw.bo.size() == 8);
    for (double v : cw.bq) CHECK(v == 0.0);
    for (double v : cw.bo) CHECK(v == 0.0);
    REQUIRE(cw.bias_tables.size() == 2);
    for (const Matrix& table : cw.bias_tables)
        for (double v : table.data()) CHECK(v == 0.0);

    CompressedWeights again = CompressedWeights::init(cfg, 4, 0.5, 11);
    CHECK(testutil::max_abs_diff(cw.wq, again.wq) == 0.0);
    CHECK(testutil::max_abs_diff(cw.wo, again.wo) == 0.0);
}

TEST_CASE("naive and simplified variants compute the same function") {
    std::size_t checked = 0;
    std::uint64_t seed = 100;
    for (std::size_t c : {4u, 8u, 16u})
        for (double tau : {0.25, 0.5, 0.75, 1.0})
            for (std::size_t heads : {1u, 2u}) {
                const std::size_t kept = kept_count(c, tau);
                if (kept % heads != 0) continue;
                AttentionConfig cfg{2, 2, c, heads};
                TruncatedDct trunc = truncate(dct_matrix(c), tau);
                CompressedWeights cw = random_compressed(cfg, kept, ++seed);
                Rng rng(seed + 1000);
                Tensor3 x = testutil::random_tensor(cfg.windows, cfg.tokens(), c, rng);
                Tensor3 naive = compressed_forward(x, cw, cfg, trunc, CompressedVariant::Naive);
                Tensor3 simplified =
                    compressed_forward(x, cw, cfg, trunc, CompressedVariant::Simplified);
                CHECK(testutil::max_abs_diff(naive, simplified) < 1e-10);
                ++checked;
            }
    CHECK(checked >= 20);
}

TEST_CASE("at tau=1 the compressed block conjugates to plain attention") {
    AttentionConfig cfg{2, 2, 8, 2};
    DctBasis basis = dct_matrix(8);
    TruncatedDct trunc = truncate(basis, 1.0);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        CompressedWeights cw = random_compressed(cfg, 8, seed);
        AttentionWeights conj = conjugate_tau1(cw, basis);
        Rng rng(seed + 2000);
        Tensor3 x = testutil::random_tensor(cfg.windows, cfg.tokens(), 8, rng);
        Tensor3 plain = msa_forward(x, conj, cfg);
        for (CompressedVariant variant :
             {CompressedVariant::Naive, CompressedVariant::Simplified}) {
            Tensor3 compressed = compressed_forward(x, cw, cfg, trunc, variant);
            CHECK(testutil::max_abs_diff(compressed, plain) < 1e-10);
        }
    }
}

TEST_CASE("conjugate_tau1 requires a full-size block") {
    AttentionConfig cfg{1, 2, 8, 2};
    CompressedWeights cw = CompressedWeights::init(cfg, 4, 0.5, 3);
    CHECK_THROWS_AS(conjugate_tau1(cw, dct_matrix(8)), std::invalid_argument);
}

TEST_CASE("fuse_output multiplies the output weight by the inverse transform") {
    TruncatedDct trunc = truncate(dct_matrix(8), 0.5);
    Rng rng(13);
    Matrix wo = testutil::random_matrix(8, 8, rng);
    Matrix fused = fuse_output(wo, trunc);
    REQUIRE(fused.rows() == 8);
    REQUIRE(fused.cols() == 4);
    Matrix expected = matmul(wo, trunc.dbar_inv);
    CHECK(testutil::max_abs_diff(fused, expected) == 0.0);
}

TEST_CASE("compressed_forward rejects inconsistent shapes") {
    AttentionConfig cfg{1, 2, 8, 2};
    CompressedWeights cw = CompressedWeights::init(cfg, 4, 0.5, 17);
    Rng rng(18);
    Tensor3 x = testutil::random_tensor(1, 4, 8, rng);

    TruncatedDct wrong = truncate(dct_matrix(8), 0.75);  // kept 6 != weights' 4
    CHECK_THROWS_AS(
        compressed_forward(x, cw, cfg, wrong, CompressedVariant::Naive),
        std::invalid_argument);

    // kept=3 is not divisible by 2 heads: rejected already at construction.
    CHECK_THROWS_AS(CompressedWeights::init(cfg, 3, 0.5, 19), std::invalid_argument);

    // Same weights, but a config whose head count no longer divides kept.
    AttentionConfig one_head{1, 2, 8, 1};
    CompressedWeights odd = CompressedWeights::init(one_head, 3, 0.5, 19);
    TruncatedDct trunc3 = truncate(dct_matrix(8), 0.375);
    CHECK_THROWS_AS(
        compressed_forward(x, odd, cfg, trunc3, CompressedVariant::Naive),
        std::invalid_argument);
}

TEST_CASE("compressed multiplication counts split by variant") {
    // T=4, C=4, M=2, tau=0.5 (kept=2): naive counts transform 32 + qkv 48 +
    // scores 32 + values 32 + expand 32 + output 64 = 240; the simplified
    // variant drops the expansion and projects straight from kept width,
    // 32+48+32+32+32 = 176.  The fused matrix itself is never counted.
    AttentionConfig cfg{1, 2, 4, 1};
    TruncatedDct trunc = truncate(dct_matrix(4), 0.5);
    CompressedWeights cw = CompressedWeights::init(cfg, 2, 0.5, 23);
    Rng rng(24);
    Tensor3 x = testutil::random_tensor(1, 4, 4, rng);

    MulCounter naive, simplified;
    compressed_forward(x, cw, cfg, trunc, CompressedVariant::Naive, nullptr, &naive);
    compressed_forward(x, cw, cfg, trunc, CompressedVariant::Simplified, nullptr,
                       &simplified);
    CHECK(naive.total == 240u);
    CHECK(simplified.total == 176u);
}

TEST_CASE("compressed analytic gradients match central differences") {
    AttentionConfig cfg{1, 2, 8, 2};
    TruncatedDct trunc = truncate(dct_matrix(8), 0.5);
    for (CompressedVariant variant :
         {CompressedVariant::Naive, CompressedVariant::Simplified}) {
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            CompressedWeights cw = random_compressed(cfg, 4, seed + 30);
            Rng rng(seed + 3000);
            Tensor3 x = testutil::random_tensor(cfg.windows, cfg.tokens(), 8, rng);

            CompressedCache cache;
            Tensor3 y = compressed_forward(x, cw, cfg, trunc, variant, &cache);
            Tensor3 dy(cfg.windows, cfg.tokens(), cfg.channels);
            for (std::size_t i = 0; i < dy.data().size(); ++i)
                dy.data()[i] = 2.0 * y.data()[i];
            CompressedGradients g = compressed_backward(cache, dy);

            std::vector<testutil::View> params = testutil::weight_views(cw);
            params.push_back({x.data().data(), x.data().size()});
            std::vector<double> analytic = testutil::flatten(g);
            analytic.insert(analytic.end(), g.x.data().begin(), g.x.data().end());

            auto loss = [&] {
                Tensor3 out = compressed_forward(x, cw, cfg, trunc, variant);
                double s = 0.0;
                for (double v : out.data()) s += v * v;
                return s;
            };
            CHECK(testutil::fd_relative_error(params, analytic, loss) < 1e-5);
        }
    }
}

TEST_CASE("both variants produce the same gradients") {
    AttentionConfig cfg{2, 2, 8, 2};
    TruncatedDct trunc = truncate(dct_matrix(8), 0.5);
    CompressedWeights cw = random_compressed(cfg, 4, 43);
    Rng rng(44);
    Tensor3 x = testutil::random_tensor(cfg.windows, cfg.tokens(), 8, rng);
    Tensor3 dy = testutil::random_tensor(cfg.windows, cfg.tokens(), 8, rng);

    CompressedCache nc, sc;
    compressed_forward(x, cw, cfg, trunc, CompressedVariant::Naive, &nc);
    compressed_forward(x, cw, cfg, trunc, CompressedVariant::Simplified, &sc);
    std::vector<double> gn = testutil::flatten(compressed_backward(nc, dy));
    std::vector<double> gs = testutil::flatten(compressed_backward(sc, dy));
    CHECK(testutil::max_abs_diff(gn, gs) < 1e-10);
}

TEST_CASE("the no-transform ablation at tau=1 is plain attention") {
    AttentionConfig cfg{2, 2, 8, 2};
    CompressedWeights cw = random_compressed(cfg, 8, 53);
    AttentionWeights plain;
    plain.wq = cw.wq;
    plain.wk = cw.wk;
    plain.wv = cw.wv;
    plain.wo = cw.wo;
    plain.bq = cw.bq;
    plain.bk = cw.bk;
    plain.bv = cw.bv;
    plain.bo = cw.bo;
    plain.bias_tables = cw.bias_tables;

    Rng rng(54);
    Tensor3 x = testutil::random_tensor(cfg.windows, cfg.tokens(), 8, rng);
    Tensor3 ablated = truncate_no_dct_forward(x, cw, cfg, 1.0);
    Tensor3 vanilla = msa_forward(x, plain, cfg);
    CHECK(testutil::max_abs_diff(ablated, vanilla) <= 1e-12);
}

TEST_CASE("the no-transform ablation keeps the output shape") {
    AttentionConfig cfg{3, 2, 8, 2};
    CompressedWeights cw = CompressedWeights::init(cfg, 4, 0.5, 57);
    Rng rng(58);
    Tensor3 x = testutil::random_tensor(cfg.windows, cfg.tokens(), 8, rng);
    Tensor3 y = truncate_no_dct_forward(x, cw, cfg, 0.5);
    CHECK(y.windows() == 3);
    CHECK(y.tokens() == 4);
    CHECK(y.channels() == 8);
}

TEST_CASE("no-transform gradients match central differences") {
    AttentionConfig cfg{1, 2, 8, 2};
    CompressedWeights cw = random_compressed(cfg, 4, 63);
    Rng rng(64);
    Tensor3 x = testutil::random_tensor(cfg.windows, cfg.tokens(), 8, rng);

    NoDctCache cache;
    Tensor3 y = truncate_no_dct_forward(x, cw, cfg, 0.5, &cache);
    Tensor3 dy(cfg.windows, cfg.tokens(), cfg.channels);
    for (std::size_t i = 0; i < dy.data().size(); ++i) dy.data()[i] = 2.0 * y.data()[i];
    CompressedGradients g = truncate_no_dct_backward(cache, dy);

    std::vector<testutil::View> params = testutil::weight_views(cw);
    params.push_back({x.data().data(), x.data().size()});
    std::vector<double> analytic = testutil::flatten(g);
    analytic.insert(analytic.end(), g.x.data().begin(), g.x.data().end());

    auto loss = [&] {
        Tensor3 out = truncate_no_dct_forward(x, cw, cfg, 0.5);
        double s = 0.0;
        for (double v : out.data()) s += v * v;
        return s;
    };
    CHECK(testutil::fd_relative_error(params, analytic, loss) < 1e-5);
}

TEST_CASE("dropping raw channels reconstructs worse than dropping DCT tails") {
    // On AR(1)-correlated channels the low-frequency DCT coefficients carry
    // most of the energy, so zeroing the dropped coefficients and inverting
    // loses far less than zeroing the same number of raw channels.
    const std::size_t c = 8, kept = 4, samples = 100;
    const double rho = 0.9;
    TruncatedDct trunc = truncate(dct_matrix(c), 0.5);
    Rng rng(71);
    double err_plain = 0.0, err_dct = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        const std::vector<double> x = testutil::ar1_sample(c, rho, rng);
        for (std::size_t i = kept; i < c; ++i) err_plain += x[i] * x[i];
        std::vector<double> coeff(kept, 0.0);
        for (std::size_t k = 0; k < kept; ++k)
            for (std::size_t n = 0; n < c; ++n) coeff[k] += trunc.dbar(k, n) * x[n];
        for (std::size_t n = 0; n < c; ++n) {
            double rebuilt = 0.0;
            for (std::size_t k = 0; k < kept; ++k) rebuilt += trunc.dbar_inv(n, k) * coeff[k];
            err_dct += (x[n] - rebuilt) * (x[n] - rebuilt);
        }
    }
    err_plain /= static_cast<double>(samples);
    err_dct /= static_cast<double>(samples);
    CHECK(err_dct < err_plain);
    CHECK(err_dct < 0.2 * err_plain);  // the gap is large, not marginal
}
