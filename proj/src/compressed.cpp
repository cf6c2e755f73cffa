#include "dctattn/compressed.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dctattn {

namespace {

void accumulate(Matrix& into, const Matrix& from) {
    for (std::size_t i = 0; i < into.data().size(); ++i)
        into.data()[i] += from.data()[i];
}

void add_col_sums(std::vector<double>& into, const Matrix& m) {
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
            into[j] += m(i, j);
}

void check_input_shape(const Tensor3& x, const AttentionConfig& cfg, const char* who) {
    if (x.windows() != cfg.windows || x.tokens() != cfg.tokens() ||
        x.channels() != cfg.channels)
        throw std::invalid_argument(std::string(who) + ": input is (" +
                                    std::to_string(x.windows()) + "," +
                                    std::to_string(x.tokens()) + "," +
                                    std::to_string(x.channels()) + "), want (" +
                                    std::to_string(cfg.windows) + "," +
                                    std::to_string(cfg.tokens()) + "," +
                                    std::to_string(cfg.channels) + ")");
}

void check_grad_shape(const Tensor3& dy, const AttentionConfig& cfg, const char* who) {
    if (dy.windows() != cfg.windows || dy.tokens() != cfg.tokens() ||
        dy.channels() != cfg.channels)
        throw std::invalid_argument(std::string(who) + ": dy is (" +
                                    std::to_string(dy.windows()) + "," +
                                    std::to_string(dy.tokens()) + "," +
                                    std::to_string(dy.channels()) + "), want (" +
                                    std::to_string(cfg.windows) + "," +
                                    std::to_string(cfg.tokens()) + "," +
                                    std::to_string(cfg.channels) + ")");
}

}  // namespace

AttentionWeights dct_init(const AttentionWeights& w, const DctInitTarget& target,
                          const DctBasis& basis) {
    if (!target.q && !target.k && !target.v)
        throw std::invalid_argument("dct_init: no projection selected");
    if (basis.size != w.wq.rows())
        throw std::invalid_argument("dct_init: basis size " + std::to_string(basis.size) +
                                    " vs channels " + std::to_string(w.wq.rows()));
    AttentionWeights out = w;
    if (target.q) {
        out.wq = basis.d;
        out.bq.assign(out.bq.size(), 0.0);
        out.frozen_q = target.freeze;
    }
    if (target.k) {
        out.wk = basis.d;
        out.bk.assign(out.bk.size(), 0.0);
        out.frozen_k = target.freeze;
    }
    if (target.v) {
        out.wv = basis.d;
        out.bv.assign(out.bv.size(), 0.0);
        out.frozen_v = target.freeze;
    }
    return out;
}

CompressedWeights CompressedWeights::init(const AttentionConfig& cfg, std::size_t kept,
                                          double stddev, std::uint64_t seed) {
    cfg.validate();
    if (kept == 0 || kept > cfg.channels)
        throw std::invalid_argument("CompressedWeights: kept " + std::to_string(kept) +
                                    " outside [1, " + std::to_string(cfg.channels) + "]");
    if (kept % cfg.heads != 0)
        throw std::invalid_argument("CompressedWeights: heads (" + std::to_string(cfg.heads) +
                                    ") must divide kept (" + std::to_string(kept) + ")");
    Rng rng(seed);
    auto fill = [&rng, stddev](Matrix& m) {
        for (double& v : m.data()) v = rng.trunc_normal(stddev);
    };
    CompressedWeights w;
    w.kept = kept;
    w.wq = Matrix(kept, kept); fill(w.wq);
    w.wk = Matrix(kept, kept); fill(w.wk);
    w.wv = Matrix(kept, kept); fill(w.wv);
    w.wo = Matrix(cfg.channels, cfg.channels); fill(w.wo);
    w.bq.assign(kept, 0.0);
    w.bk.assign(kept, 0.0);
    w.bv.assign(kept, 0.0);
    w.bo.assign(cfg.channels, 0.0);
    // Biases and relative-bias tables start at zero, as in the plain block.
    const std::size_t span = 2 * cfg.window_size - 1;
    w.bias_tables.assign(cfg.heads, Matrix(span, span));
    return w;
}

void CompressedWeights::validate(const AttentionConfig& cfg) const {
    if (kept == 0 || kept > cfg.channels)
        throw std::invalid_argument("CompressedWeights: kept " + std::to_string(kept) +
                                    " outside [1, " + std::to_string(cfg.channels) + "]");
    if (kept % cfg.heads != 0)
        throw std::invalid_argument("CompressedWeights: heads (" + std::to_string(cfg.heads) +
                                    ") must divide kept (" + std::to_string(kept) + ")");
    auto check = [](const Matrix& m, std::size_t r, std::size_t c, const char* name) {
        if (m.rows() != r || m.cols() != c)
            throw std::invalid_argument(std::string("CompressedWeights: ") + name +
                                        " is (" + std::to_string(m.rows()) + "x" +
                                        std::to_string(m.cols()) + "), want (" +
                                        std::to_string(r) + "x" + std::to_string(c) + ")");
    };
    check(wq, kept, kept, "wq");
    check(wk, kept, kept, "wk");
    check(wv, kept, kept, "wv");
    check(wo, cfg.channels, cfg.channels, "wo");
    if (bq.size() != kept || bk.size() != kept || bv.size() != kept)
        throw std::invalid_argument("CompressedWeights: q/k/v bias length mismatch");
    if (bo.size() != cfg.channels)
        throw std::invalid_argument("CompressedWeights: bo length mismatch");
    if (bias_tables.size() != cfg.heads)
        throw std::invalid_argument("CompressedWeights: want " + std::to_string(cfg.heads) +
                                    " bias tables, got " + std::to_string(bias_tables.size()));
    const std::size_t span = 2 * cfg.window_size - 1;
    for (const Matrix& t : bias_tables)
        if (t.rows() != span || t.cols() != span)
            throw std::invalid_argument("CompressedWeights: bias table shape mismatch");
}

Matrix fuse_output(const Matrix& wo, const TruncatedDct& trunc) {
    if (wo.rows() != wo.cols() || wo.rows() != trunc.dbar.cols())
        throw std::invalid_argument("fuse_output: wo is (" + std::to_string(wo.rows()) +
                                    "x" + std::to_string(wo.cols()) + "), want square of " +
                                    std::to_string(trunc.dbar.cols()));
    return matmul(wo, trunc.dbar_inv);
}

Tensor3 compressed_forward(const Tensor3& x, const CompressedWeights& cw,
                           const AttentionConfig& cfg, const TruncatedDct& trunc,
                           CompressedVariant variant, CompressedCache* cache,
                           MulCounter* counter) {
    cfg.validate();
    cw.validate(cfg);
    check_input_shape(x, cfg, "compressed_forward");
    if (trunc.kept != cw.kept)
        throw std::invalid_argument("compressed_forward: truncation keeps " +
                                    std::to_string(trunc.kept) + " but weights expect " +
                                    std::to_string(cw.kept));
    if (trunc.dbar.cols() != cfg.channels)
        throw std::invalid_argument("compressed_forward: truncation built for " +
                                    std::to_string(trunc.dbar.cols()) + " channels, not " +
                                    std::to_string(cfg.channels));

    const std::size_t m2 = cfg.tokens();
    const std::size_t kept = cw.kept;
    const double scale = 1.0 / std::sqrt(static_cast<double>(kept / cfg.heads));

    const Matrix wq_t = transpose(cw.wq);
    const Matrix wk_t = transpose(cw.wk);
    const Matrix wv_t = transpose(cw.wv);
    const Matrix wo_t = transpose(cw.wo);
    std::vector<Matrix> bias(cfg.heads);
    for (std::size_t h = 0; h < cfg.heads; ++h)
        bias[h] = relative_bias(cw.bias_tables[h], cfg.window_size);

    // The fused matrix is a function of the current weights only; it is
    // rebuilt from wo on every call so gradients can flow back through wo.
    Matrix fused, fused_t;
    if (variant == CompressedVariant::Simplified) {
        fused = fuse_output(cw.wo, trunc);
        fused_t = transpose(fused);
    }

    Tensor3 y(cfg.windows, m2, cfg.channels);
    if (cache) {
        cache->cfg = cfg;
        cache->weights = cw;
        cache->trunc = trunc;
        cache->variant = variant;
        cache->x = x;
        cache->xt = Tensor3(cfg.windows, m2, kept);
        cache->q = Tensor3(cfg.windows, m2, kept);
        cache->k = Tensor3(cfg.windows, m2, kept);
        cache->v = Tensor3(cfg.windows, m2, kept);
        cache->concat = Tensor3(cfg.windows, m2, kept);
        cache->decoded = (variant == CompressedVariant::Naive)
                             ? Tensor3(cfg.windows, m2, cfg.channels)
                             : Tensor3();
        cache->fused = fused;
        cache->probs.assign(cfg.windows, {});
    }

    for (std::size_t wi = 0; wi < cfg.windows; ++wi) {
        const Matrix xw = x.window(wi);
        const Matrix xt = matmul(xw, trunc.dbar_inv, counter);  // x * dbar^T

        Matrix q = matmul(xt, wq_t, counter);
        Matrix k = matmul(xt, wk_t, counter);
        Matrix v = matmul(xt, wv_t, counter);
        add_row_bias(q, cw.bq);
        add_row_bias(k, cw.bk);
        add_row_bias(v, cw.bv);

        const Matrix concat = detail::window_attention(
            q, k, v, bias, cfg.heads, scale,
            cache ? &cache->probs[wi] : nullptr, counter);

        Matrix yw;
        if (variant == CompressedVariant::Naive) {
            // Expand kept coefficients back to channels, then project.  The
            // expansion is one tokens x kept by kept x channels product; a
            // zero-padded full-size inverse transform computes the same
            // values with the same number of useful multiplications.
            const Matrix decoded = matmul(concat, trunc.dbar, counter);
            yw = matmul(decoded, wo_t, counter);
            if (cache) cache->decoded.set_window(wi, decoded);
        } else {
            yw = matmul(concat, fused_t, counter);
        }
        add_row_bias(yw, cw.bo);
        y.set_window(wi, yw);

        if (cache) {
            cache->xt.set_window(wi, xt);
            cache->q.set_window(wi, q);
            cache->k.set_window(wi, k);
            cache->v.set_window(wi, v);
            cache->concat.set_window(wi, concat);
        }
    }
    return y;
}

CompressedGradients compressed_backward(const CompressedCache& cache, const Tensor3& dy) {
    const AttentionConfig& cfg = cache.cfg;
    const CompressedWeights& cw = cache.weights;
    check_grad_shape(dy, cfg, "compressed_backward");

    const std::size_t c = cfg.channels;
    const std::size_t kept = cw.kept;
    const std::size_t span = 2 * cfg.window_size - 1;
    const double scale = 1.0 / std::sqrt(static_cast<double>(kept / cfg.heads));

    CompressedGradients g;
    g.wq = Matrix(kept, kept); g.wk = Matrix(kept, kept); g.wv = Matrix(kept, kept);
    g.wo = Matrix(c, c);
    g.bq.assign(kept, 0.0); g.bk.assign(kept, 0.0); g.bv.assign(kept, 0.0);
    g.bo.assign(c, 0.0);
    g.bias_tables.assign(cfg.heads, Matrix(span, span));
    g.x = Tensor3(cfg.windows, cfg.tokens(), c);

    std::vector<Matrix> dbias_logits(cfg.heads, Matrix(cfg.tokens(), cfg.tokens()));
    // Simplified: y = concat * fused^T + bo with fused = wo * dbar_inv, so wo
    // gradients arrive through the fused matrix and are mapped back at the end.
    Matrix dfused(c, kept);

    for (std::size_t wi = 0; wi < cfg.windows; ++wi) {
        const Matrix dyw = dy.window(wi);
        const Matrix concat = cache.concat.window(wi);
        add_col_sums(g.bo, dyw);

        Matrix dconcat;
        if (cache.variant == CompressedVariant::Naive) {
            // y = decoded * wo^T + bo, decoded = concat * dbar
            const Matrix decoded = cache.decoded.window(wi);
            accumulate(g.wo, matmul(transpose(dyw), decoded));
            const Matrix ddecoded = matmul(dyw, cw.wo);
            dconcat = matmul(ddecoded, cache.trunc.dbar_inv);
        } else {
            accumulate(dfused, matmul(transpose(dyw), concat));
            dconcat = matmul(dyw, cache.fused);
        }

        Matrix dq, dk, dv;
        detail::window_attention_backward(cache.q.window(wi), cache.k.window(wi),
                                          cache.v.window(wi), cache.probs[wi], scale,
                                          dconcat, dq, dk, dv, dbias_logits);

        const Matrix xt = cache.xt.window(wi);
        accumulate(g.wq, matmul(transpose(dq), xt));
        accumulate(g.wk, matmul(transpose(dk), xt));
        accumulate(g.wv, matmul(transpose(dv), xt));
        add_col_sums(g.bq, dq);
        add_col_sums(g.bk, dk);
        add_col_sums(g.bv, dv);

        Matrix dxt = matmul(dq, cw.wq);
        accumulate(dxt, matmul(dk, cw.wk));
        accumulate(dxt, matmul(dv, cw.wv));
        // xt = xw * dbar^T
        g.x.set_window(wi, matmul(dxt, cache.trunc.dbar));
    }

    if (cache.variant == CompressedVariant::Simplified)
        g.wo = matmul(dfused, cache.trunc.dbar);  // fused = wo * dbar_inv

    for (std::size_t h = 0; h < cfg.heads; ++h)
        detail::scatter_bias_gradient(dbias_logits[h], cfg.window_size, g.bias_tables[h]);
    return g;
}

AttentionWeights conjugate_tau1(const CompressedWeights& cw, const DctBasis& basis) {
    if (cw.kept != basis.size)
        throw std::invalid_argument("conjugate_tau1: needs kept == channels, got kept " +
                                    std::to_string(cw.kept) + " with basis " +
                                    std::to_string(basis.size));
    if (cw.wo.rows() != basis.size)
        throw std::invalid_argument("conjugate_tau1: wo is " + std::to_string(cw.wo.rows()) +
                                    " channels, basis is " + std::to_string(basis.size));
    AttentionWeights w;
    // x * d^T then * wq^T equals x * (wq d)^T, so folding the transform into
    // each input projection reproduces the compressed block exactly.
    w.wq = matmul(cw.wq, basis.d);
    w.wk = matmul(cw.wk, basis.d);
    w.wv = matmul(cw.wv, basis.d);
    w.wo = matmul(cw.wo, transpose(basis.d));
    w.bq = cw.bq;
    w.bk = cw.bk;
    w.bv = cw.bv;
    w.bo = cw.bo;
    w.bias_tables = cw.bias_tables;
    return w;
}

Tensor3 truncate_no_dct_forward(const Tensor3& x, const CompressedWeights& cw,
                                const AttentionConfig& cfg, double tau,
                                NoDctCache* cache) {
    cfg.validate();
    cw.validate(cfg);
    check_input_shape(x, cfg, "truncate_no_dct_forward");
    const std::size_t kept = kept_count(cfg.channels, tau);
    if (kept != cw.kept)
        throw std::invalid_argument("truncate_no_dct_forward: tau keeps " +
                                    std::to_string(kept) + " but weights expect " +
                                    std::to_string(cw.kept));

    const std::size_t m2 = cfg.tokens();
    const std::size_t c = cfg.channels;
    const double scale = 1.0 / std::sqrt(static_cast<double>(kept / cfg.heads));

    const Matrix wq_t = transpose(cw.wq);
    const Matrix wk_t = transpose(cw.wk);
    const Matrix wv_t = transpose(cw.wv);
    // Only the first `kept` columns of wo can see a signal here.
    Matrix wo_slice(c, kept);
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < kept; ++j)
            wo_slice(i, j) = cw.wo(i, j);
    const Matrix wo_slice_t = transpose(wo_slice);

    std::vector<Matrix> bias(cfg.heads);
    for (std::size_t h = 0; h < cfg.heads; ++h)
        bias[h] = relative_bias(cw.bias_tables[h], cfg.window_size);

    Tensor3 y(cfg.windows, m2, c);
    if (cache) {
        cache->cfg = cfg;
        cache->weights = cw;
        cache->kept = kept;
        cache->x = x;
        cache->xt = Tensor3(cfg.windows, m2, kept);
        cache->q = Tensor3(cfg.windows, m2, kept);
        cache->k = Tensor3(cfg.windows, m2, kept);
        cache->v = Tensor3(cfg.windows, m2, kept);
        cache->concat = Tensor3(cfg.windows, m2, kept);
        cache->probs.assign(cfg.windows, {});
    }

    for (std::size_t wi = 0; wi < cfg.windows; ++wi) {
        Matrix xt(m2, kept);
        for (std::size_t t = 0; t < m2; ++t)
            for (std::size_t j = 0; j < kept; ++j)
                xt(t, j) = x.at(wi, t, j);

        Matrix q = matmul(xt, wq_t);
        Matrix k = matmul(xt, wk_t);
        Matrix v = matmul(xt, wv_t);
        add_row_bias(q, cw.bq);
        add_row_bias(k, cw.bk);
        add_row_bias(v, cw.bv);

        const Matrix concat = detail::window_attention(
            q, k, v, bias, cfg.heads, scale,
            cache ? &cache->probs[wi] : nullptr, nullptr);

        Matrix yw = matmul(concat, wo_slice_t);
        add_row_bias(yw, cw.bo);
        y.set_window(wi, yw);

        if (cache) {
            cache->xt.set_window(wi, xt);
            cache->q.set_window(wi, q);
            cache->k.set_window(wi, k);
            cache->v.set_window(wi, v);
            cache->concat.set_window(wi, concat);
        }
    }
    return y;
}

CompressedGradients truncate_no_dct_backward(const NoDctCache& cache, const Tensor3& dy) {
    const AttentionConfig& cfg = cache.cfg;
    const CompressedWeights& cw = cache.weights;
    check_grad_shape(dy, cfg, "truncate_no_dct_backward");

    const std::size_t c = cfg.channels;
    const std::size_t kept = cache.kept;
    const std::size_t span = 2 * cfg.window_size - 1;
    const double scale = 1.0 / std::sqrt(static_cast<double>(kept / cfg.heads));

    Matrix wo_slice(c, kept);
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < kept; ++j)
            wo_slice(i, j) = cw.wo(i, j);

    CompressedGradients g;
    g.wq = Matrix(kept, kept); g.wk = Matrix(kept, kept); g.wv = Matrix(kept, kept);
    g.wo = Matrix(c, c);
    g.bq.assign(kept, 0.0); g.bk.assign(kept, 0.0); g.bv.assign(kept, 0.0);
    g.bo.assign(c, 0.0);
    g.bias_tables.assign(cfg.heads, Matrix(span, span));
    g.x = Tensor3(cfg.windows, cfg.tokens(), c);

    std::vector<Matrix> dbias_logits(cfg.heads, Matrix(cfg.tokens(), cfg.tokens()));

    for (std::size_t wi = 0; wi < cfg.windows; ++wi) {
        const Matrix dyw = dy.window(wi);
        const Matrix concat = cache.concat.window(wi);
        add_col_sums(g.bo, dyw);

        // y = concat * wo_slice^T + bo
        const Matrix dwo_slice = matmul(transpose(dyw), concat);
        for (std::size_t i = 0; i < c; ++i)
            for (std::size_t j = 0; j < kept; ++j)
                g.wo(i, j) += dwo_slice(i, j);
        const Matrix dconcat = matmul(dyw, wo_slice);

        Matrix dq, dk, dv;
        detail::window_attention_backward(cache.q.window(wi), cache.k.window(wi),
                                          cache.v.window(wi), cache.probs[wi], scale,
                                          dconcat, dq, dk, dv, dbias_logits);

        const Matrix xt = cache.xt.window(wi);
        accumulate(g.wq, matmul(transpose(dq), xt));
        accumulate(g.wk, matmul(transpose(dk), xt));
        accumulate(g.wv, matmul(transpose(dv), xt));
        add_col_sums(g.bq, dq);
        add_col_sums(g.bk, dk);
        add_col_sums(g.bv, dv);

        Matrix dxt = matmul(dq, cw.wq);
        accumulate(dxt, matmul(dk, cw.wk));
        accumulate(dxt, matmul(dv, cw.wv));
        // Dropped channels received no signal, so their gradient is zero.
        for (std::size_t t = 0; t < cfg.tokens(); ++t)
            for (std::size_t j = 0; j < kept; ++j)
                g.x.at(wi, t, j) = dxt(t, j);
    }

    for (std::size_t h = 0; h < cfg.heads; ++h)
        detail::scatter_bias_gradient(dbias_logits[h], cfg.window_size, g.bias_tables[h]);
    return g;
}

}  // namespace dctattn
