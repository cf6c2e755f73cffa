#include "dctattn/toy.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dctattn {

namespace {

void append_matrix(std::vector<ParamView>& views, Matrix& m, bool frozen) {
    views.push_back({m.data().data(), m.data().size(), frozen});
}

void append_vector(std::vector<ParamView>& views, std::vector<double>& v, bool frozen) {
    views.push_back({v.data(), v.size(), frozen});
}

bool uses_plain_block(ToyMode mode) {
    return mode == ToyMode::Vanilla || mode == ToyMode::DctInit;
}

bool uses_compressed_block(ToyMode mode) {
    return mode == ToyMode::CompressedNaive || mode == ToyMode::CompressedSimplified ||
           mode == ToyMode::TruncateNoDct;
}

std::vector<double> softmax2(const std::vector<double>& logits) {
    const double mx = std::max(logits[0], logits[1]);
    const double e0 = std::exp(logits[0] - mx);
    const double e1 = std::exp(logits[1] - mx);
    return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

// Flattens block gradients + head gradients in toy_params order.
void flatten_gradients(const ToyModel& model, const AttentionGradients* ag,
                       const CompressedGradients* cg, const Matrix& dhead_w,
                       const std::vector<double>& dhead_b, std::vector<double>& out) {
    out.clear();
    auto push_matrix = [&out](const Matrix& m) {
        out.insert(out.end(), m.data().begin(), m.data().end());
    };
    auto push_vector = [&out](const std::vector<double>& v) {
        out.insert(out.end(), v.begin(), v.end());
    };
    if (ag) {
        push_matrix(ag->wq); push_vector(ag->bq);
        push_matrix(ag->wk); push_vector(ag->bk);
        push_matrix(ag->wv); push_vector(ag->bv);
        push_matrix(ag->wo); push_vector(ag->bo);
        for (const Matrix& t : ag->bias_tables) push_matrix(t);
    } else if (cg) {
        push_matrix(cg->wq); push_vector(cg->bq);
        push_matrix(cg->wk); push_vector(cg->bk);
        push_matrix(cg->wv); push_vector(cg->bv);
        push_matrix(cg->wo); push_vector(cg->bo);
        for (const Matrix& t : cg->bias_tables) push_matrix(t);
    }
    push_matrix(dhead_w);
    push_vector(dhead_b);
    (void)model;
}

}  // namespace

const char* toy_mode_name(ToyMode mode) {
    switch (mode) {
        case ToyMode::LinearOnly: return "linear";
        case ToyMode::Vanilla: return "vanilla";
        case ToyMode::DctInit: return "dct-init";
        case ToyMode::CompressedNaive: return "compressed-naive";
        case ToyMode::CompressedSimplified: return "compressed-simplified";
        case ToyMode::TruncateNoDct: return "truncate-no-dct";
    }
    return "unknown";
}

ToyDataset gen_synthetic(const ToyDatasetSpec& spec) {
    if (spec.samples == 0)
        throw std::invalid_argument("gen_synthetic: sample count must be positive");
    if (spec.windows == 0 || spec.window_size == 0)
        throw std::invalid_argument("gen_synthetic: window shape must be positive");
    if (spec.channels < 4)
        throw std::invalid_argument("gen_synthetic: need at least 4 channels, got " +
                                    std::to_string(spec.channels));
    if (!(std::abs(spec.rho) < 1.0))
        throw std::invalid_argument("gen_synthetic: |rho| must be < 1, got " +
                                    std::to_string(spec.rho));
    if (spec.margin < 0.0)
        throw std::invalid_argument("gen_synthetic: margin must be non-negative");

    const std::size_t c = spec.channels;
    const std::size_t m2 = spec.window_size * spec.window_size;
    const std::size_t band = c / 4;
    const DctBasis basis = dct_matrix(c);
    const double noise = std::sqrt(1.0 - spec.rho * spec.rho);

    Rng rng(spec.seed);
    ToyDataset set;
    set.spec = spec;
    set.samples.reserve(spec.samples);

    // Exact class quotas keep the set balanced by construction.
    std::size_t want1 = spec.samples / 2;
    std::size_t want0 = spec.samples - want1;
    std::size_t have0 = 0, have1 = 0;

    const std::size_t max_attempts = 100 * spec.samples;
    for (std::size_t attempt = 0;
         attempt < max_attempts && set.samples.size() < spec.samples; ++attempt) {
        Tensor3 x(spec.windows, m2, c);
        double e_low = 0.0, e_high = 0.0;
        for (std::size_t w = 0; w < spec.windows; ++w)
            for (std::size_t t = 0; t < m2; ++t) {
                x.at(w, t, 0) = rng.normal();
                for (std::size_t i = 1; i < c; ++i)
                    x.at(w, t, i) = spec.rho * x.at(w, t, i - 1) + noise * rng.normal();
                for (std::size_t k = 0; k < c; ++k) {
                    double z = 0.0;
                    for (std::size_t n = 0; n < c; ++n)
                        z += basis.d(k, n) * x.at(w, t, n);
                    if (k < band) e_low += z * z;
                    if (k >= c - band) e_high += z * z;
                }
            }

        const double gap = e_low - e_high;
        if (gap > spec.margin && have1 < want1) {
            set.samples.push_back({std::move(x), 1});
            ++have1;
        } else if (gap < -spec.margin && have0 < want0) {
            set.samples.push_back({std::move(x), 0});
            ++have0;
        }
    }

    if (set.samples.size() < spec.samples)
        throw std::runtime_error(
            "gen_synthetic: only " + std::to_string(have0) + " class-0 and " +
            std::to_string(have1) + " class-1 samples after " +
            std::to_string(max_attempts) + " draws; want " + std::to_string(want0) +
            " and " + std::to_string(want1) +
            " (margin or rho make the classes too rare)");
    return set;
}

ToyModel ToyModel::create(const ToyModelConfig& cfg) {
    cfg.dims.validate();
    ToyModel model;
    model.cfg = cfg;

    const std::size_t c = cfg.dims.channels;
    if (cfg.mode == ToyMode::Vanilla) {
        model.attn = AttentionWeights::init(cfg.dims, cfg.init_std, cfg.seed);
    } else if (cfg.mode == ToyMode::DctInit) {
        model.attn = dct_init(AttentionWeights::init(cfg.dims, cfg.init_std, cfg.seed),
                              cfg.target, dct_matrix(c));
    } else if (uses_compressed_block(cfg.mode)) {
        const std::size_t kept = kept_count(c, cfg.tau);
        model.comp = CompressedWeights::init(cfg.dims, kept, cfg.init_std, cfg.seed);
        if (cfg.mode != ToyMode::TruncateNoDct)
            model.trunc = truncate(dct_matrix(c), cfg.tau);
    }
    // The classifier head draws from its own stream so block and head weights
    // never alias across modes.
    model.head_w = trunc_normal_init(2, c, cfg.init_std, cfg.seed + 1);
    model.head_b.assign(2, 0.0);
    return model;
}

std::vector<ParamView> toy_params(ToyModel& model) {
    std::vector<ParamView> views;
    if (uses_plain_block(model.cfg.mode)) {
        AttentionWeights& w = model.attn;
        append_matrix(views, w.wq, w.frozen_q);
        append_vector(views, w.bq, w.frozen_q);
        append_matrix(views, w.wk, w.frozen_k);
        append_vector(views, w.bk, w.frozen_k);
        append_matrix(views, w.wv, w.frozen_v);
        append_vector(views, w.bv, w.frozen_v);
        append_matrix(views, w.wo, false);
        append_vector(views, w.bo, false);
        for (Matrix& t : w.bias_tables) append_matrix(views, t, false);
    } else if (uses_compressed_block(model.cfg.mode)) {
        CompressedWeights& w = model.comp;
        append_matrix(views, w.wq, false);
        append_vector(views, w.bq, false);
        append_matrix(views, w.wk, false);
        append_vector(views, w.bk, false);
        append_matrix(views, w.wv, false);
        append_vector(views, w.bv, false);
        append_matrix(views, w.wo, false);
        append_vector(views, w.bo, false);
        for (Matrix& t : w.bias_tables) append_matrix(views, t, false);
    }
    append_matrix(views, model.head_w, false);
    append_vector(views, model.head_b, false);
    return views;
}

namespace {

// Forward through the block for one sample; LinearOnly passes x through.
Tensor3 block_forward(const ToyModel& model, const Tensor3& x, MsaCache* mc,
                      CompressedCache* cc, NoDctCache* nc) {
    switch (model.cfg.mode) {
        case ToyMode::LinearOnly:
            return x;
        case ToyMode::Vanilla:
        case ToyMode::DctInit:
            return msa_forward(x, model.attn, model.cfg.dims, mc);
        case ToyMode::CompressedNaive:
            return compressed_forward(x, model.comp, model.cfg.dims, model.trunc,
                                      CompressedVariant::Naive, cc);
        case ToyMode::CompressedSimplified:
            return compressed_forward(x, model.comp, model.cfg.dims, model.trunc,
                                      CompressedVariant::Simplified, cc);
        case ToyMode::TruncateNoDct:
            return truncate_no_dct_forward(x, model.comp, model.cfg.dims,
                                           model.cfg.tau, nc);
    }
    throw std::invalid_argument("block_forward: unknown mode");
}

std::vector<double> pool_tokens(const Tensor3& y) {
    std::vector<double> pool(y.channels(), 0.0);
    const double inv = 1.0 / static_cast<double>(y.windows() * y.tokens());
    for (std::size_t w = 0; w < y.windows(); ++w)
        for (std::size_t t = 0; t < y.tokens(); ++t)
            for (std::size_t c = 0; c < y.channels(); ++c)
                pool[c] += y.at(w, t, c) * inv;
    return pool;
}

std::vector<double> head_logits(const ToyModel& model, const std::vector<double>& pool) {
    std::vector<double> logits(2, 0.0);
    for (std::size_t l = 0; l < 2; ++l) {
        double acc = model.head_b[l];
        for (std::size_t c = 0; c < pool.size(); ++c)
            acc += model.head_w(l, c) * pool[c];
        logits[l] = acc;
    }
    return logits;
}

}  // namespace

std::vector<double> toy_logits(const ToyModel& model, const Tensor3& x) {
    const Tensor3 y = block_forward(model, x, nullptr, nullptr, nullptr);
    return head_logits(model, pool_tokens(y));
}

double toy_loss(const ToyModel& model, const ToySample& sample) {
    if (sample.label != 0 && sample.label != 1)
        throw std::invalid_argument("toy_loss: label must be 0 or 1, got " +
                                    std::to_string(sample.label));
    const std::vector<double> p = softmax2(toy_logits(model, sample.x));
    return -std::log(p[static_cast<std::size_t>(sample.label)]);
}

double toy_batch_grad(const ToyModel& model, const std::vector<ToySample>& batch,
                      std::vector<double>& grad_out) {
    if (batch.empty())
        throw std::invalid_argument("toy_batch_grad: empty batch");

    const std::size_t c = model.cfg.dims.channels;
    const double inv_batch = 1.0 / static_cast<double>(batch.size());

    AttentionGradients attn_sum;
    CompressedGradients comp_sum;
    bool block_grads_started = false;
    Matrix dhead_w(2, c);
    std::vector<double> dhead_b(2, 0.0);
    double loss = 0.0;

    for (const ToySample& sample : batch) {
        if (sample.label != 0 && sample.label != 1)
            throw std::invalid_argument("toy_batch_grad: label must be 0 or 1, got " +
                                        std::to_string(sample.label));
        MsaCache mc;
        CompressedCache cc;
        NoDctCache nc;
        const Tensor3 y = block_forward(model, sample.x, &mc, &cc, &nc);
        const std::vector<double> pool = pool_tokens(y);
        const std::vector<double> logits = head_logits(model, pool);
        const std::vector<double> p = softmax2(logits);
        loss -= std::log(p[static_cast<std::size_t>(sample.label)]) * inv_batch;

        std::vector<double> dlogits = p;
        dlogits[static_cast<std::size_t>(sample.label)] -= 1.0;
        for (double& v : dlogits) v *= inv_batch;

        std::vector<double> dpool(c, 0.0);
        for (std::size_t l = 0; l < 2; ++l) {
            dhead_b[l] += dlogits[l];
            for (std::size_t ch = 0; ch < c; ++ch) {
                dhead_w(l, ch) += dlogits[l] * pool[ch];
                dpool[ch] += model.head_w(l, ch) * dlogits[l];
            }
        }

        if (model.cfg.mode == ToyMode::LinearOnly) continue;

        Tensor3 dy(y.windows(), y.tokens(), c);
        const double inv_tokens = 1.0 / static_cast<double>(y.windows() * y.tokens());
        for (std::size_t w = 0; w < y.windows(); ++w)
            for (std::size_t t = 0; t < y.tokens(); ++t)
                for (std::size_t ch = 0; ch < c; ++ch)
                    dy.at(w, t, ch) = dpool[ch] * inv_tokens;

        auto add_attn = [&](const AttentionGradients& g) {
            if (!block_grads_started) {
                attn_sum = g;
            } else {
                auto add_m = [](Matrix& a, const Matrix& b) {
                    for (std::size_t i = 0; i < a.data().size(); ++i)
                        a.data()[i] += b.data()[i];
                };
                auto add_v = [](std::vector<double>& a, const std::vector<double>& b) {
                    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
                };
                add_m(attn_sum.wq, g.wq); add_v(attn_sum.bq, g.bq);
                add_m(attn_sum.wk, g.wk); add_v(attn_sum.bk, g.bk);
                add_m(attn_sum.wv, g.wv); add_v(attn_sum.bv, g.bv);
                add_m(attn_sum.wo, g.wo); add_v(attn_sum.bo, g.bo);
                for (std::size_t h = 0; h < attn_sum.bias_tables.size(); ++h)
                    add_m(attn_sum.bias_tables[h], g.bias_tables[h]);
            }
            block_grads_started = true;
        };
        auto add_comp = [&](const CompressedGradients& g) {
            if (!block_grads_started) {
                comp_sum = g;
            } else {
                auto add_m = [](Matrix& a, const Matrix& b) {
                    for (std::size_t i = 0; i < a.data().size(); ++i)
                        a.data()[i] += b.data()[i];
                };
                auto add_v = [](std::vector<double>& a, const std::vector<double>& b) {
                    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
                };
                add_m(comp_sum.wq, g.wq); add_v(comp_sum.bq, g.bq);
                add_m(comp_sum.wk, g.wk); add_v(comp_sum.bk, g.bk);
                add_m(comp_sum.wv, g.wv); add_v(comp_sum.bv, g.bv);
                add_m(comp_sum.wo, g.wo); add_v(comp_sum.bo, g.bo);
                for (std::size_t h = 0; h < comp_sum.bias_tables.size(); ++h)
                    add_m(comp_sum.bias_tables[h], g.bias_tables[h]);
            }
            block_grads_started = true;
        };

        switch (model.cfg.mode) {
            case ToyMode::Vanilla:
            case ToyMode::DctInit:
                add_attn(msa_backward(mc, dy));
                break;
            case ToyMode::CompressedNaive:
            case ToyMode::CompressedSimplified:
                add_comp(compressed_backward(cc, dy));
                break;
            case ToyMode::TruncateNoDct:
                add_comp(truncate_no_dct_backward(nc, dy));
                break;
            default:
                break;
        }
    }

    if (uses_plain_block(model.cfg.mode))
        flatten_gradients(model, &attn_sum, nullptr, dhead_w, dhead_b, grad_out);
    else if (uses_compressed_block(model.cfg.mode))
        flatten_gradients(model, nullptr, &comp_sum, dhead_w, dhead_b, grad_out);
    else
        flatten_gradients(model, nullptr, nullptr, dhead_w, dhead_b, grad_out);
    return loss;
}

double grad_check(ToyModel& model, const ToySample& sample, double step) {
    if (!(step > 0.0))
        throw std::invalid_argument("grad_check: step must be positive");

    std::vector<double> analytic;
    const std::vector<ToySample> batch{sample};
    const double base_loss = toy_batch_grad(model, batch, analytic);
    if (!std::isfinite(base_loss))
        throw std::invalid_argument("grad_check: loss is not finite");

    double worst = 0.0;
    std::size_t offset = 0;
    for (ParamView& view : toy_params(model)) {
        for (std::size_t i = 0; i < view.size; ++i) {
            if (view.frozen) continue;
            double& p = view.data[i];
            const double saved = p;
            p = saved + step;
            const double up = toy_loss(model, sample);
            p = saved - step;
            const double down = toy_loss(model, sample);
            p = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[offset + i];
            // Both sides numerically zero: agreement at the precision the
            // method can resolve (see header).
            if (std::abs(a) < 1e-9 && std::abs(numeric) < 1e-9) continue;
            const double err = std::abs(a - numeric) /
                               std::max({std::abs(a), std::abs(numeric), 1e-8});
            worst = std::max(worst, err);
        }
        offset += view.size;
    }
    return worst;
}

TrainHistory train(ToyModel& model, const ToyDataset& data, const SgdConfig& opt,
                   std::size_t steps) {
    if (data.samples.empty())
        throw std::invalid_argument("train: empty dataset");
    if (steps == 0)
        throw std::invalid_argument("train: step count must be positive");

    std::vector<ParamView> params = toy_params(model);
    std::size_t total = 0;
    for (const ParamView& v : params) total += v.size;
    std::vector<double> velocity(total, 0.0);

    TrainHistory history;
    history.seed = model.cfg.seed;
    {
        std::ostringstream cfg;
        cfg << "mode=" << toy_mode_name(model.cfg.mode)
            << " windows=" << model.cfg.dims.windows
            << " window=" << model.cfg.dims.window_size
            << " channels=" << model.cfg.dims.channels
            << " heads=" << model.cfg.dims.heads
            << " tau=" << model.cfg.tau
            << " init_std=" << model.cfg.init_std
            << " seed=" << model.cfg.seed
            << " lr=" << opt.lr << " momentum=" << opt.momentum
            << " steps=" << steps << " samples=" << data.samples.size();
        history.config = cfg.str();
    }
    history.losses.reserve(steps);

    std::vector<double> grads;
    for (std::size_t step = 0; step < steps; ++step) {
        const double loss = toy_batch_grad(model, data.samples, grads);
        if (!std::isfinite(loss) || loss > 1e6)
            throw std::runtime_error("train: diverged at step " + std::to_string(step) +
                                     " (loss " + std::to_string(loss) + ")");
        history.losses.push_back(loss);

        std::size_t offset = 0;
        for (ParamView& view : params) {
            if (!view.frozen) {
                for (std::size_t i = 0; i < view.size; ++i) {
                    double& v = velocity[offset + i];
                    v = opt.momentum * v - opt.lr * grads[offset + i];
                    view.data[i] += v;
                }
            }
            offset += view.size;
        }
    }

    std::size_t correct = 0;
    for (const ToySample& sample : data.samples) {
        const std::vector<double> logits = toy_logits(model, sample.x);
        const int pred = logits[1] > logits[0] ? 1 : 0;
        if (pred == sample.label) ++correct;
    }
    history.final_accuracy =
        static_cast<double>(correct) / static_cast<double>(data.samples.size());
    return history;
}

}  // namespace dctattn
