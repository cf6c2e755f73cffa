#include "dctattn/cost.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dctattn/dct.hpp"

namespace dctattn {

void BlockShape::validate() const {
    if (tokens == 0 || channels == 0 || window == 0 || heads == 0)
        throw std::invalid_argument("BlockShape: all sizes must be positive");
    if (channels % heads != 0)
        throw std::invalid_argument("BlockShape: heads (" + std::to_string(heads) +
                                    ") must divide channels (" + std::to_string(channels) + ")");
    if (tokens % (window * window) != 0)
        throw std::invalid_argument("BlockShape: window of " +
                                    std::to_string(window * window) +
                                    " tokens must divide token count " +
                                    std::to_string(tokens));
}

void ModelSpec::validate() const {
    if (window == 0)
        throw std::invalid_argument("ModelSpec: window side must be positive");
    if (stages.empty())
        throw std::invalid_argument("ModelSpec: no stages");
    for (const StageSpec& s : stages) {
        if (s.depth == 0)
            throw std::invalid_argument("ModelSpec: stage depth must be positive");
        BlockShape{s.tokens, s.channels, window, s.heads}.validate();
    }
}

CostBreakdown block_mults(const BlockShape& shape, MsaVariant variant, double tau) {
    shape.validate();
    const std::uint64_t t = shape.tokens;
    const std::uint64_t c = shape.channels;
    const std::uint64_t m2 = shape.window * shape.window;

    CostBreakdown b;
    if (variant == MsaVariant::Vanilla) {
        if (!(tau > 0.0) || tau > 1.0)
            throw std::invalid_argument("block_mults: tau must be in (0, 1], got " +
                                        std::to_string(tau));
        b.qkv = 3 * t * c * c;
        b.attn_scores = t * m2 * c;
        b.attn_values = t * m2 * c;
        b.out_proj = t * c * c;
        return b;
    }

    const std::uint64_t kept = kept_count(shape.channels, tau);
    b.dct = t * kept * c;
    b.qkv = 3 * t * kept * kept;
    b.attn_scores = t * m2 * kept;
    b.attn_values = t * m2 * kept;
    if (variant == MsaVariant::Naive) {
        b.idct = t * kept * c;
        b.out_proj = t * c * c;
    } else {
        b.out_proj = t * kept * c;
    }
    return b;
}

ParamBreakdown block_params(std::size_t channels, std::size_t window,
                            std::size_t heads, MsaVariant variant, double tau) {
    BlockShape{window * window, channels, window, heads}.validate();
    if (!(tau > 0.0) || tau > 1.0)
        throw std::invalid_argument("block_params: tau must be in (0, 1], got " +
                                    std::to_string(tau));
    const std::uint64_t c = channels;
    const std::uint64_t span = 2 * static_cast<std::uint64_t>(window) - 1;
    const std::uint64_t width =
        (variant == MsaVariant::Vanilla) ? c : kept_count(channels, tau);

    ParamBreakdown p;
    p.qkv_weights = 3 * width * width;
    p.qkv_biases = 3 * width;
    p.out_weight = c * c;
    p.out_bias = c;
    p.bias_tables = static_cast<std::uint64_t>(heads) * span * span;
    return p;
}

ModelSpec builtin_model(const std::string& name) {
    ModelSpec spec;
    spec.name = name;
    spec.window = 7;
    if (name == "swin-t") {
        spec.stages = {{3136, 96, 3, 2}, {784, 192, 6, 2}, {196, 384, 12, 6}, {49, 768, 24, 2}};
    } else if (name == "swin-s") {
        spec.stages = {{3136, 96, 3, 2}, {784, 192, 6, 2}, {196, 384, 12, 18}, {49, 768, 24, 2}};
    } else {
        throw std::invalid_argument("builtin_model: unknown model '" + name + "'");
    }
    return spec;
}

ModelSpec load_model_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::invalid_argument("load_model_spec: cannot open '" + path + "'");

    ModelSpec spec;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key) || key[0] == '#') continue;
        const std::string where = path + ":" + std::to_string(lineno);
        if (key == "name") {
            if (!(ls >> spec.name))
                throw std::invalid_argument("load_model_spec: " + where + ": missing name");
        } else if (key == "window") {
            if (!(ls >> spec.window))
                throw std::invalid_argument("load_model_spec: " + where + ": bad window");
        } else if (key == "stage") {
            StageSpec stage;
            bool got_tokens = false, got_channels = false, got_heads = false, got_depth = false;
            std::string kv;
            while (ls >> kv) {
                const std::size_t eq = kv.find('=');
                if (eq == std::string::npos)
                    throw std::invalid_argument("load_model_spec: " + where +
                                                ": expected key=value, got '" + kv + "'");
                const std::string k = kv.substr(0, eq);
                std::size_t v = 0;
                try {
                    v = std::stoull(kv.substr(eq + 1));
                } catch (const std::exception&) {
                    throw std::invalid_argument("load_model_spec: " + where +
                                                ": bad value in '" + kv + "'");
                }
                if (k == "tokens") { stage.tokens = v; got_tokens = true; }
                else if (k == "channels") { stage.channels = v; got_channels = true; }
                else if (k == "heads") { stage.heads = v; got_heads = true; }
                else if (k == "depth") { stage.depth = v; got_depth = true; }
                else
                    throw std::invalid_argument("load_model_spec: " + where +
                                                ": unknown stage key '" + k + "'");
            }
            if (!got_tokens || !got_channels || !got_heads || !got_depth)
                throw std::invalid_argument("load_model_spec: " + where +
                                            ": stage needs tokens, channels, heads, depth");
            spec.stages.push_back(stage);
        } else {
            throw std::invalid_argument("load_model_spec: " + where +
                                        ": unknown keyword '" + key + "'");
        }
    }
    spec.validate();
    return spec;
}

ModelTotals model_totals(const ModelSpec& spec, double tau, MsaVariant variant) {
    spec.validate();
    ModelTotals totals;
    for (const StageSpec& s : spec.stages) {
        const BlockShape shape{s.tokens, s.channels, spec.window, s.heads};
        const std::uint64_t base_p =
            block_params(s.channels, spec.window, s.heads, MsaVariant::Vanilla, tau).total();
        const std::uint64_t var_p =
            block_params(s.channels, spec.window, s.heads, variant, tau).total();
        const std::uint64_t base_m = block_mults(shape, MsaVariant::Vanilla, tau).total();
        const std::uint64_t var_m = block_mults(shape, variant, tau).total();
        totals.baseline_params += s.depth * base_p;
        totals.variant_params += s.depth * var_p;
        totals.baseline_mults += s.depth * base_m;
        totals.variant_mults += s.depth * var_m;
    }
    // Deltas report savings and saturate at zero: at tau = 1 the compressed
    // block still pays for the transform itself, so its raw multiplication
    // total exceeds the baseline; the totals fields keep the true numbers.
    totals.param_delta = totals.baseline_params >= totals.variant_params
                             ? totals.baseline_params - totals.variant_params
                             : 0;
    totals.mult_delta = totals.baseline_mults >= totals.variant_mults
                            ? totals.baseline_mults - totals.variant_mults
                            : 0;
    return totals;
}

FusionCost fusion_break_even(double tau) {
    if (!(tau > 0.0) || tau > 1.0)
        throw std::invalid_argument("fusion_break_even: tau must be in (0, 1], got " +
                                    std::to_string(tau));
    FusionCost cost;
    cost.separate_coeff = tau + 3.0 * tau * tau;
    cost.fused_coeff = 3.0 * tau;
    if (cost.separate_coeff < cost.fused_coeff)
        cost.winner = "separate";
    else if (cost.fused_coeff < cost.separate_coeff)
        cost.winner = "fused";
    else
        cost.winner = "tie";
    return cost;
}

}  // namespace dctattn
