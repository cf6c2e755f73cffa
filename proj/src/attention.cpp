#include "dctattn/attention.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dctattn {

namespace {

Matrix col_slice(const Matrix& m, std::size_t j0, std::size_t width) {
    Matrix out(m.rows(), width);
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < width; ++j)
            out(i, j) = m(i, j0 + j);
    return out;
}

void add_col_slice(Matrix& m, std::size_t j0, const Matrix& part) {
    for (std::size_t i = 0; i < part.rows(); ++i)
        for (std::size_t j = 0; j < part.cols(); ++j)
            m(i, j0 + j) += part(i, j);
}

void accumulate(Matrix& into, const Matrix& from) {
    for (std::size_t i = 0; i < into.data().size(); ++i)
        into.data()[i] += from.data()[i];
}

void add_col_sums(std::vector<double>& into, const Matrix& m) {
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
            into[j] += m(i, j);
}

// dLoss/dz for z = softmax input, given probs = softmax(z) and dp = dLoss/dprobs.
Matrix softmax_backward(const Matrix& probs, const Matrix& dp) {
    Matrix dz(probs.rows(), probs.cols());
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        double inner = 0.0;
        for (std::size_t j = 0; j < probs.cols(); ++j)
            inner += dp(i, j) * probs(i, j);
        for (std::size_t j = 0; j < probs.cols(); ++j)
            dz(i, j) = probs(i, j) * (dp(i, j) - inner);
    }
    return dz;
}

}  // namespace

void AttentionConfig::validate() const {
    if (windows == 0 || window_size == 0 || channels == 0 || heads == 0)
        throw std::invalid_argument("AttentionConfig: all sizes must be positive");
    if (channels % heads != 0)
        throw std::invalid_argument("AttentionConfig: heads (" + std::to_string(heads) +
                                    ") must divide channels (" + std::to_string(channels) + ")");
}

AttentionWeights AttentionWeights::init(const AttentionConfig& cfg, double stddev,
                                        std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    const std::size_t c = cfg.channels;
    const std::size_t span = 2 * cfg.window_size - 1;

    AttentionWeights w;
    auto fill = [&rng, stddev](Matrix& m) {
        for (double& v : m.data()) v = rng.trunc_normal(stddev);
    };
    w.wq = Matrix(c, c); fill(w.wq);
    w.wk = Matrix(c, c); fill(w.wk);
    w.wv = Matrix(c, c); fill(w.wv);
    w.wo = Matrix(c, c); fill(w.wo);
    w.bq.assign(c, 0.0);
    w.bk.assign(c, 0.0);
    w.bv.assign(c, 0.0);
    w.bo.assign(c, 0.0);
    // Biases and relative-bias tables start at zero; only projection weights
    // are drawn.
    w.bias_tables.assign(cfg.heads, Matrix(span, span));
    return w;
}

void AttentionWeights::validate(const AttentionConfig& cfg) const {
    const std::size_t c = cfg.channels;
    auto check = [c](const Matrix& m, const char* name) {
        if (m.rows() != c || m.cols() != c)
            throw std::invalid_argument(std::string("AttentionWeights: ") + name +
                                        " is (" + std::to_string(m.rows()) + "x" +
                                        std::to_string(m.cols()) + "), want (" +
                                        std::to_string(c) + "x" + std::to_string(c) + ")");
    };
    check(wq, "wq"); check(wk, "wk"); check(wv, "wv"); check(wo, "wo");
    if (bq.size() != c || bk.size() != c || bv.size() != c || bo.size() != c)
        throw std::invalid_argument("AttentionWeights: bias length mismatch");
    if (bias_tables.size() != cfg.heads)
        throw std::invalid_argument("AttentionWeights: want " + std::to_string(cfg.heads) +
                                    " bias tables, got " + std::to_string(bias_tables.size()));
    const std::size_t span = 2 * cfg.window_size - 1;
    for (const Matrix& t : bias_tables)
        if (t.rows() != span || t.cols() != span)
            throw std::invalid_argument("AttentionWeights: bias table is (" +
                                        std::to_string(t.rows()) + "x" +
                                        std::to_string(t.cols()) + "), want (" +
                                        std::to_string(span) + "x" + std::to_string(span) + ")");
}

Tensor3 partition(const Image& image, std::size_t m) {
    if (m == 0) throw std::invalid_argument("partition: window size must be positive");
    if (image.height() % m != 0 || image.width() % m != 0)
        throw std::invalid_argument("partition: window size " + std::to_string(m) +
                                    " does not divide image " + std::to_string(image.height()) +
                                    "x" + std::to_string(image.width()));
    const std::size_t wy_count = image.height() / m;
    const std::size_t wx_count = image.width() / m;
    Tensor3 out(wy_count * wx_count, m * m, image.channels());
    for (std::size_t wy = 0; wy < wy_count; ++wy)
        for (std::size_t wx = 0; wx < wx_count; ++wx) {
            const std::size_t w = wy * wx_count + wx;
            for (std::size_t ty = 0; ty < m; ++ty)
                for (std::size_t tx = 0; tx < m; ++tx)
                    for (std::size_t c = 0; c < image.channels(); ++c)
                        out.at(w, ty * m + tx, c) = image.at(wy * m + ty, wx * m + tx, c);
        }
    return out;
}

Image reverse_partition(const Tensor3& patches, std::size_t height,
                        std::size_t width, std::size_t m) {
    if (m == 0) throw std::invalid_argument("reverse_partition: window size must be positive");
    if (height % m != 0 || width % m != 0)
        throw std::invalid_argument("reverse_partition: window size " + std::to_string(m) +
                                    " does not divide image " + std::to_string(height) +
                                    "x" + std::to_string(width));
    const std::size_t wy_count = height / m;
    const std::size_t wx_count = width / m;
    if (patches.windows() != wy_count * wx_count || patches.tokens() != m * m)
        throw std::invalid_argument("reverse_partition: tensor is " +
                                    std::to_string(patches.windows()) + " windows of " +
                                    std::to_string(patches.tokens()) + " tokens, want " +
                                    std::to_string(wy_count * wx_count) + " of " +
                                    std::to_string(m * m));
    Image img(height, width, patches.channels());
    for (std::size_t wy = 0; wy < wy_count; ++wy)
        for (std::size_t wx = 0; wx < wx_count; ++wx) {
            const std::size_t w = wy * wx_count + wx;
            for (std::size_t ty = 0; ty < m; ++ty)
                for (std::size_t tx = 0; tx < m; ++tx)
                    for (std::size_t c = 0; c < patches.channels(); ++c)
                        img.at(wy * m + ty, wx * m + tx, c) = patches.at(w, ty * m + tx, c);
        }
    return img;
}

Matrix relative_bias(const Matrix& table, std::size_t m) {
    const std::size_t span = 2 * m - 1;
    if (table.rows() != span || table.cols() != span)
        throw std::invalid_argument("relative_bias: table is (" + std::to_string(table.rows()) +
                                    "x" + std::to_string(table.cols()) + "), want (" +
                                    std::to_string(span) + "x" + std::to_string(span) + ")");
    const std::size_t m2 = m * m;
    Matrix bias(m2, m2);
    for (std::size_t i = 0; i < m2; ++i) {
        const std::size_t yi = i / m, xi = i % m;
        for (std::size_t j = 0; j < m2; ++j) {
            const std::size_t yj = j / m, xj = j % m;
            bias(i, j) = table(yi - yj + m - 1, xi - xj + m - 1);
        }
    }
    return bias;
}

namespace detail {

Matrix window_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                        const std::vector<Matrix>& bias, std::size_t heads,
                        double scale, std::vector<Matrix>* probs_out,
                        MulCounter* counter) {
    const std::size_t width = q.cols();
    const std::size_t dim = width / heads;
    Matrix concat(q.rows(), width);
    if (probs_out) probs_out->resize(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        const Matrix qh = col_slice(q, h * dim, dim);
        const Matrix kh = col_slice(k, h * dim, dim);
        const Matrix vh = col_slice(v, h * dim, dim);
        Matrix scores = matmul(qh, transpose(kh), counter);
        for (std::size_t i = 0; i < scores.rows(); ++i)
            for (std::size_t j = 0; j < scores.cols(); ++j)
                scores(i, j) = scores(i, j) * scale + bias[h](i, j);
        const Matrix probs = softmax_rows(scores);
        const Matrix out = matmul(probs, vh, counter);
        add_col_slice(concat, h * dim, out);
        if (probs_out) (*probs_out)[h] = probs;
    }
    return concat;
}

void window_attention_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                               const std::vector<Matrix>& probs, double scale,
                               const Matrix& dconcat, Matrix& dq, Matrix& dk,
                               Matrix& dv, std::vector<Matrix>& dbias_logits) {
    const std::size_t heads = probs.size();
    const std::size_t width = q.cols();
    const std::size_t dim = width / heads;
    dq = Matrix(q.rows(), width);
    dk = Matrix(q.rows(), width);
    dv = Matrix(q.rows(), width);
    for (std::size_t h = 0; h < heads; ++h) {
        const Matrix qh = col_slice(q, h * dim, dim);
        const Matrix kh = col_slice(k, h * dim, dim);
        const Matrix vh = col_slice(v, h * dim, dim);
        const Matrix dout = col_slice(dconcat, h * dim, dim);

        // out = probs * vh
        const Matrix dvh = matmul(transpose(probs[h]), dout);
        const Matrix dprobs = matmul(dout, transpose(vh));
        // z = scale * qh kh^T + bias
        Matrix dz = softmax_backward(probs[h], dprobs);
        accumulate(dbias_logits[h], dz);
        for (double& x : dz.data()) x *= scale;
        add_col_slice(dq, h * dim, matmul(dz, kh));
        add_col_slice(dk, h * dim, matmul(transpose(dz), qh));
        add_col_slice(dv, h * dim, dvh);
    }
}

void scatter_bias_gradient(const Matrix& dbias_logits, std::size_t m, Matrix& dtable) {
    const std::size_t m2 = m * m;
    for (std::size_t i = 0; i < m2; ++i) {
        const std::size_t yi = i / m, xi = i % m;
        for (std::size_t j = 0; j < m2; ++j) {
            const std::size_t yj = j / m, xj = j % m;
            dtable(yi - yj + m - 1, xi - xj + m - 1) += dbias_logits(i, j);
        }
    }
}

}  // namespace detail

Tensor3 msa_forward(const Tensor3& x, const AttentionWeights& w,
                    const AttentionConfig& cfg, MsaCache* cache, MulCounter* counter) {
    cfg.validate();
    w.validate(cfg);
    if (x.windows() != cfg.windows || x.tokens() != cfg.tokens() ||
        x.channels() != cfg.channels)
        throw std::invalid_argument("msa_forward: input is (" + std::to_string(x.windows()) +
                                    "," + std::to_string(x.tokens()) + "," +
                                    std::to_string(x.channels()) + "), want (" +
                                    std::to_string(cfg.windows) + "," +
                                    std::to_string(cfg.tokens()) + "," +
                                    std::to_string(cfg.channels) + ")");

    const std::size_t m2 = cfg.tokens();
    const std::size_t c = cfg.channels;
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));

    const Matrix wq_t = transpose(w.wq);
    const Matrix wk_t = transpose(w.wk);
    const Matrix wv_t = transpose(w.wv);
    const Matrix wo_t = transpose(w.wo);
    std::vector<Matrix> bias(cfg.heads);
    for (std::size_t h = 0; h < cfg.heads; ++h)
        bias[h] = relative_bias(w.bias_tables[h], cfg.window_size);

    Tensor3 y(cfg.windows, m2, c);
    if (cache) {
        cache->cfg = cfg;
        cache->weights = w;
        cache->x = x;
        cache->q = Tensor3(cfg.windows, m2, c);
        cache->k = Tensor3(cfg.windows, m2, c);
        cache->v = Tensor3(cfg.windows, m2, c);
        cache->concat = Tensor3(cfg.windows, m2, c);
        cache->probs.assign(cfg.windows, {});
    }

    for (std::size_t wi = 0; wi < cfg.windows; ++wi) {
        const Matrix xw = x.window(wi);
        Matrix q = matmul(xw, wq_t, counter);
        Matrix k = matmul(xw, wk_t, counter);
        Matrix v = matmul(xw, wv_t, counter);
        add_row_bias(q, w.bq);
        add_row_bias(k, w.bk);
        add_row_bias(v, w.bv);

        const Matrix concat = detail::window_attention(
            q, k, v, bias, cfg.heads, scale,
            cache ? &cache->probs[wi] : nullptr, counter);

        Matrix yw = matmul(concat, wo_t, counter);
        add_row_bias(yw, w.bo);
        y.set_window(wi, yw);

        if (cache) {
            cache->q.set_window(wi, q);
            cache->k.set_window(wi, k);
            cache->v.set_window(wi, v);
            cache->concat.set_window(wi, concat);
        }
    }
    return y;
}

AttentionGradients msa_backward(const MsaCache& cache, const Tensor3& dy) {
    const AttentionConfig& cfg = cache.cfg;
    if (dy.windows() != cfg.windows || dy.tokens() != cfg.tokens() ||
        dy.channels() != cfg.channels)
        throw std::invalid_argument("msa_backward: dy is (" + std::to_string(dy.windows()) +
                                    "," + std::to_string(dy.tokens()) + "," +
                                    std::to_string(dy.channels()) + "), want (" +
                                    std::to_string(cfg.windows) + "," +
                                    std::to_string(cfg.tokens()) + "," +
                                    std::to_string(cfg.channels) + ")");

    const std::size_t c = cfg.channels;
    const std::size_t span = 2 * cfg.window_size - 1;
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));

    AttentionGradients g;
    g.wq = Matrix(c, c); g.wk = Matrix(c, c); g.wv = Matrix(c, c); g.wo = Matrix(c, c);
    g.bq.assign(c, 0.0); g.bk.assign(c, 0.0); g.bv.assign(c, 0.0); g.bo.assign(c, 0.0);
    g.bias_tables.assign(cfg.heads, Matrix(span, span));
    g.x = Tensor3(cfg.windows, cfg.tokens(), c);

    std::vector<Matrix> dbias_logits(cfg.heads, Matrix(cfg.tokens(), cfg.tokens()));

    for (std::size_t wi = 0; wi < cfg.windows; ++wi) {
        const Matrix dyw = dy.window(wi);
        const Matrix concat = cache.concat.window(wi);
        const Matrix xw = cache.x.window(wi);

        // yw = concat * wo^T + bo
        accumulate(g.wo, matmul(transpose(dyw), concat));
        add_col_sums(g.bo, dyw);
        const Matrix dconcat = matmul(dyw, cache.weights.wo);

        Matrix dq, dk, dv;
        detail::window_attention_backward(cache.q.window(wi), cache.k.window(wi),
                                          cache.v.window(wi), cache.probs[wi], scale,
                                          dconcat, dq, dk, dv, dbias_logits);

        // q = xw * wq^T + bq, and likewise for k, v
        accumulate(g.wq, matmul(transpose(dq), xw));
        accumulate(g.wk, matmul(transpose(dk), xw));
        accumulate(g.wv, matmul(transpose(dv), xw));
        add_col_sums(g.bq, dq);
        add_col_sums(g.bk, dk);
        add_col_sums(g.bv, dv);

        Matrix dxw = matmul(dq, cache.weights.wq);
        accumulate(dxw, matmul(dk, cache.weights.wk));
        accumulate(dxw, matmul(dv, cache.weights.wv));
        g.x.set_window(wi, dxw);
    }

    for (std::size_t h = 0; h < cfg.heads; ++h)
        detail::scatter_bias_gradient(dbias_logits[h], cfg.window_size, g.bias_tables[h]);

    // Frozen projections report zero gradients.
    if (cache.weights.frozen_q) {
        for (double& v : g.wq.data()) v = 0.0;
        g.bq.assign(c, 0.0);
    }
    if (cache.weights.frozen_k) {
        for (double& v : g.wk.data()) v = 0.0;
        g.bk.assign(c, 0.0);
    }
    if (cache.weights.frozen_v) {
        for (double& v : g.wv.data()) v = 0.0;
        g.bv.assign(c, 0.0);
    }
    return g;
}

}  // namespace dctattn
