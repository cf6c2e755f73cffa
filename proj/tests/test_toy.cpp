#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "dctattn/dct.hpp"
#include "dctattn/toy.hpp"
#include "test_common.hpp"

using namespace dctattn;

namespace {

ToyDatasetSpec small_spec(std::size_t samples, std::uint64_t seed) {
    ToyDatasetSpec spec;
    spec.samples = samples;
    spec.seed = seed;
    return spec;  // defaults: 1 window, 2x2 tokens, 8 channels, rho 0.3, margin 2
}

ToyModelConfig mode_config(ToyMode mode, std::uint64_t seed) {
    ToyModelConfig cfg;
    cfg.mode = mode;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("gen_synthetic is deterministic per seed") {
    ToyDataset a = gen_synthetic(small_spec(32, 5));
    ToyDataset b = gen_synthetic(small_spec(32, 5));
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].label == b.samples[i].label);
        CHECK(testutil::max_abs_diff(a.samples[i].x, b.samples[i].x) == 0.0);
    }
    ToyDataset c = gen_synthetic(small_spec(32, 6));
    bool any_differs = false;
    for (std::size_t i = 0; i < a.samples.size() && !any_differs; ++i)
        any_differs = testutil::max_abs_diff(a.samples[i].x, c.samples[i].x) > 0.0;
    CHECK(any_differs);
}

TEST_CASE("gen_synthetic balances the classes exactly") {
    for (std::size_t n : {8u, 9u, 64u}) {
        ToyDataset set = gen_synthetic(small_spec(n, 3));
        REQUIRE(set.samples.size() == n);
        std::size_t ones = 0;
        for (const ToySample& s : set.samples) ones += static_cast<std::size_t>(s.label);
        CHECK(ones == n / 2);
    }
}

TEST_CASE("every label follows the band-energy rule") {
    ToyDataset set = gen_synthetic(small_spec(64, 7));
    const ToyDatasetSpec& spec = set.spec;
    const std::size_t c = spec.channels, band = c / 4;
    const DctBasis basis = dct_matrix(c);
    for (const ToySample& s : set.samples) {
        double e_low = 0.0, e_high = 0.0;
        for (std::size_t w = 0; w < s.x.windows(); ++w)
            for (std::size_t t = 0; t < s.x.tokens(); ++t)
                for (std::size_t k = 0; k < c; ++k) {
                    double z = 0.0;
                    for (std::size_t n = 0; n < c; ++n) z += basis.d(k, n) * s.x.at(w, t, n);
                    if (k < band) e_low += z * z;
                    if (k >= c - band) e_high += z * z;
                }
        const double gap = e_low - e_high;
        if (s.label == 1)
            CHECK(gap > spec.margin);
        else
            CHECK(gap < -spec.margin);
    }
}

TEST_CASE("gen_synthetic works on uncorrelated channels") {
    ToyDatasetSpec spec = small_spec(16, 9);
    spec.rho = 0.0;
    ToyDataset set = gen_synthetic(spec);
    CHECK(set.samples.size() == 16);
}

TEST_CASE("gen_synthetic rejects impossible and malformed specs") {
    ToyDatasetSpec unreachable = small_spec(4, 1);
    unreachable.margin = 1e6;  // no draw ever clears the band
    try {
        gen_synthetic(unreachable);
        FAIL("expected a quota failure");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("draws") != std::string::npos);
    }

    ToyDatasetSpec bad = small_spec(0, 1);
    CHECK_THROWS_AS(gen_synthetic(bad), std::invalid_argument);
    bad = small_spec(4, 1);
    bad.channels = 3;
    CHECK_THROWS_AS(gen_synthetic(bad), std::invalid_argument);
    bad = small_spec(4, 1);
    bad.rho = 1.0;
    CHECK_THROWS_AS(gen_synthetic(bad), std::invalid_argument);
    bad = small_spec(4, 1);
    bad.margin = -1.0;
    CHECK_THROWS_AS(gen_synthetic(bad), std::invalid_argument);
}

TEST_CASE("toy models build per mode with a 2-logit head") {
    for (ToyMode mode : {ToyMode::LinearOnly, ToyMode::Vanilla, ToyMode::DctInit,
                         ToyMode::CompressedNaive, ToyMode::CompressedSimplified,
                         ToyMode::TruncateNoDct}) {
        ToyModelConfig cfg = mode_config(mode, 11);
        if (mode == ToyMode::DctInit) cfg.target.q = true;
        ToyModel model = ToyModel::create(cfg);
        CHECK(model.head_w.rows() == 2);
        CHECK(model.head_w.cols() == 8);
        CHECK(model.head_b.size() == 2);
        CHECK(toy_mode_name(mode) != nullptr);
        if (mode == ToyMode::CompressedNaive || mode == ToyMode::CompressedSimplified) {
            CHECK(model.comp.kept == 4);  // tau 0.5 of 8 channels
            CHECK(model.trunc.kept == 4);
        }
    }
    CHECK_THROWS_AS(ToyModel::create(mode_config(ToyMode::DctInit, 1)),
                    std::invalid_argument);  // DctInit needs a target
}

TEST_CASE("model creation is deterministic per seed") {
    ToyModel a = ToyModel::create(mode_config(ToyMode::Vanilla, 21));
    ToyModel b = ToyModel::create(mode_config(ToyMode::Vanilla, 21));
    CHECK(testutil::max_abs_diff(a.attn.wq, b.attn.wq) == 0.0);
    CHECK(testutil::max_abs_diff(a.head_w, b.head_w) == 0.0);
    ToyModel c = ToyModel::create(mode_config(ToyMode::Vanilla, 22));
    CHECK(testutil::max_abs_diff(a.head_w, c.head_w) > 0.0);
}

TEST_CASE("toy_params covers every learnable array and marks frozen ones") {
    ToyModelConfig cfg = mode_config(ToyMode::DctInit, 31);
    cfg.target.k = true;
    cfg.target.freeze = true;
    ToyModel model = ToyModel::create(cfg);
    std::vector<ParamView> views = toy_params(model);
    REQUIRE(!views.empty());

    std::size_t total = 0, frozen = 0;
    for (const ParamView& v : views) {
        REQUIRE(v.data != nullptr);
        total += v.size;
        if (v.frozen) frozen += v.size;
    }
    // 4 weight matrices + 4 biases + 2 tables + head weight + head bias.
    CHECK(total == 4u * 64 + 4u * 8 + 2u * 9 + 16u + 2u);
    CHECK(frozen == 64u + 8u);  // the frozen key projection and its bias
}

TEST_CASE("LinearOnly logits are the pooled input through the head") {
    ToyModel model = ToyModel::create(mode_config(ToyMode::LinearOnly, 41));
    ToyDataset set = gen_synthetic(small_spec(4, 41));
    const Tensor3& x = set.samples[0].x;

    std::vector<double> pooled(8, 0.0);
    for (std::size_t w = 0; w < x.windows(); ++w)
        for (std::size_t t = 0; t < x.tokens(); ++t)
            for (std::size_t c = 0; c < 8; ++c) pooled[c] += x.at(w, t, c);
    const double count = static_cast<double>(x.windows() * x.tokens());
    for (double& v : pooled) v /= count;

    std::vector<double> expected(2, 0.0);
    for (std::size_t j = 0; j < 2; ++j) {
        expected[j] = model.head_b[j];
        for (std::size_t c = 0; c < 8; ++c) expected[j] += model.head_w(j, c) * pooled[c];
    }
    std::vector<double> logits = toy_logits(model, x);
    REQUIRE(logits.size() == 2);
    CHECK(testutil::max_abs_diff(logits, expected) <= 1e-12);
}

TEST_CASE("uniform logits give a cross-entropy of ln 2") {
    ToyModel model = ToyModel::create(mode_config(ToyMode::LinearOnly, 43));
    for (double& v : model.head_w.data()) v = 0.0;
    for (double& v : model.head_b) v = 0.0;
    ToyDataset set = gen_synthetic(small_spec(4, 43));
    for (const ToySample& s : set.samples)
        CHECK(std::abs(toy_loss(model, s) - std::log(2.0)) <= 1e-12);
}

TEST_CASE("batch gradients average per-sample gradients") {
    ToyModel model = ToyModel::create(mode_config(ToyMode::Vanilla, 51));
    ToyDataset set = gen_synthetic(small_spec(2, 51));
    std::vector<double> ga, gb, gab;
    const double la = toy_batch_grad(model, {set.samples[0]}, ga);
    const double lb = toy_batch_grad(model, {set.samples[1]}, gb);
    const double lab = toy_batch_grad(model, {set.samples[0], set.samples[1]}, gab);
    CHECK(std::abs(lab - 0.5 * (la + lb)) <= 1e-12);
    REQUIRE(ga.size() == gab.size());
    for (std::size_t i = 0; i < gab.size(); ++i)
        CHECK(std::abs(gab[i] - 0.5 * (ga[i] + gb[i])) <= 1e-12);
}

TEST_CASE("single-sample loss agrees between toy_loss and toy_batch_grad") {
    ToyModel model = ToyModel::create(mode_config(ToyMode::CompressedNaive, 53));
    ToyDataset set = gen_synthetic(small_spec(2, 53));
    std::vector<double> g;
    CHECK(toy_batch_grad(model, {set.samples[0]}, g) ==
          doctest::Approx(toy_loss(model, set.samples[0])).epsilon(1e-15));
}

TEST_CASE("gradient check passes in every mode") {
    struct Case {
        ToyMode mode;
        bool q, k, v;
    };
    const Case cases[] = {
        {ToyMode::LinearOnly, false, false, false},
        {ToyMode::Vanilla, false, false, false},
        {ToyMode::DctInit, true, false, false},
        {ToyMode::DctInit, false, true, false},
        {ToyMode::DctInit, false, false, true},
        {ToyMode::DctInit, true, true, true},
        {ToyMode::CompressedNaive, false, false, false},
        {ToyMode::CompressedSimplified, false, false, false},
        {ToyMode::TruncateNoDct, false, false, false},
    };
    ToyDataset set = gen_synthetic(small_spec(2, 61));
    for (const Case& c : cases) {
        for (std::uint64_t seed = 1; seed <= 2; ++seed) {
            ToyModelConfig cfg = mode_config(c.mode, seed);
            cfg.target.q = c.q;
            cfg.target.k = c.k;
            cfg.target.v = c.v;
            ToyModel model = ToyModel::create(cfg);
            const double err = grad_check(model, set.samples[0]);
            CHECK(err < 1e-5);
            if (c.mode == ToyMode::LinearOnly) CHECK(err < 1e-8);
        }
    }
}

TEST_CASE("gradient check skips frozen projections") {
    ToyModelConfig cfg = mode_config(ToyMode::DctInit, 63);
    cfg.target.q = cfg.target.k = cfg.target.v = true;
    cfg.target.freeze = true;
    ToyModel model = ToyModel::create(cfg);
    CHECK(grad_check(model, gen_synthetic(small_spec(2, 63)).samples[0]) < 1e-5);
}

TEST_CASE("zero learning rate leaves the loss constant") {
    ToyModel model = ToyModel::create(mode_config(ToyMode::Vanilla, 71));
    ToyDataset set = gen_synthetic(small_spec(16, 71));
    TrainHistory h = train(model, set, SgdConfig{0.0, 0.9}, 10);
    REQUIRE(h.losses.size() == 10);
    for (double v : h.losses) CHECK(std::abs(v - h.losses.front()) <= 1e-12);
}

TEST_CASE("training is bit-identical across reruns") {
    auto run = [] {
        ToyModel model = ToyModel::create(mode_config(ToyMode::CompressedSimplified, 73));
        ToyDataset set = gen_synthetic(small_spec(32, 73));
        return train(model, set, SgdConfig{}, 40);
    };
    TrainHistory a = run(), b = run();
    REQUIRE(a.losses.size() == b.losses.size());
    for (std::size_t i = 0; i < a.losses.size(); ++i) CHECK(a.losses[i] == b.losses[i]);
    CHECK(a.final_accuracy == b.final_accuracy);
    CHECK(a.config == b.config);
    CHECK(!a.config.empty());
    CHECK(a.seed == 73);
}

TEST_CASE("frozen DCT projections never move during training") {
    ToyModelConfig cfg = mode_config(ToyMode::DctInit, 75);
    cfg.target.k = true;
    cfg.target.freeze = true;
    ToyModel model = ToyModel::create(cfg);
    const DctBasis basis = dct_matrix(8);
    CHECK(testutil::max_abs_diff(model.attn.wk, basis.d) == 0.0);

    ToyDataset set = gen_synthetic(small_spec(32, 75));
    train(model, set, SgdConfig{}, 40);
    CHECK(testutil::max_abs_diff(model.attn.wk, basis.d) == 0.0);  // still bit-exact
    for (double v : model.attn.bk) CHECK(v == 0.0);
    // The unfrozen projections did move.
    ToyModel fresh = ToyModel::create(cfg);
    CHECK(testutil::max_abs_diff(model.attn.wq, fresh.attn.wq) > 0.0);
}

TEST_CASE("training reduces the loss at the default budget scale") {
    ToyModel model = ToyModel::create(mode_config(ToyMode::Vanilla, 77));
    ToyDataset set = gen_synthetic(small_spec(64, 77));
    TrainHistory h = train(model, set, SgdConfig{}, 60);
    CHECK(h.losses.back() < h.losses.front());
    CHECK(h.final_accuracy >= 0.0);
    CHECK(h.final_accuracy <= 1.0);
}

TEST_CASE("divergence aborts with a diagnostic") {
    ToyModel model = ToyModel::create(mode_config(ToyMode::Vanilla, 79));
    ToyDataset set = gen_synthetic(small_spec(16, 79));
    CHECK_THROWS_AS(train(model, set, SgdConfig{1e9, 0.9}, 20), std::runtime_error);
}

TEST_CASE("toy_logits rejects inputs with the wrong channel width") {
    ToyModel model = ToyModel::create(mode_config(ToyMode::Vanilla, 81));
    Tensor3 wrong(1, 4, 6);
    CHECK_THROWS_AS(toy_logits(model, wrong), std::invalid_argument);
}
