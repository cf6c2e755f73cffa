#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dctattn {

// Which attention block a cost query refers to.
enum class MsaVariant { Vanilla, Naive, Simplified };

// Shape of one attention block as the cost model sees it.
struct BlockShape {
    std::size_t tokens = 0;    // total tokens T processed by the block
    std::size_t channels = 0;  // C
    std::size_t window = 0;    // window side M
    std::size_t heads = 0;     // P

    void validate() const;
};

// Multiplication counts per pipeline row of one block's forward pass.
// Rows that a variant does not execute are zero.
struct CostBreakdown {
    std::uint64_t dct = 0;          // input transform x * dbar^T
    std::uint64_t qkv = 0;          // the three input projections
    std::uint64_t attn_scores = 0;  // q k^T across heads
    std::uint64_t attn_values = 0;  // probs v across heads
    std::uint64_t idct = 0;         // expansion back to channels (naive only)
    std::uint64_t out_proj = 0;     // final projection

    std::uint64_t total() const {
        return dct + qkv + attn_scores + attn_values + idct + out_proj;
    }
};

// Learnable-parameter counts of one block.
struct ParamBreakdown {
    std::uint64_t qkv_weights = 0;
    std::uint64_t qkv_biases = 0;
    std::uint64_t out_weight = 0;
    std::uint64_t out_bias = 0;
    std::uint64_t bias_tables = 0;

    std::uint64_t total() const {
        return qkv_weights + qkv_biases + out_weight + out_bias + bias_tables;
    }
};

struct StageSpec {
    std::size_t tokens = 0;
    std::size_t channels = 0;
    std::size_t heads = 0;
    std::size_t depth = 0;  // attention blocks in the stage
};

struct ModelSpec {
    std::string name;
    std::size_t window = 0;
    std::vector<StageSpec> stages;

    void validate() const;
};

// Whole-model attention-block totals for a plain baseline versus the
// compressed variant at the given truncation ratio.  The deltas are savings,
// saturated at zero: when the variant costs more than the baseline (the
// transform overhead at tau = 1) the delta reads 0 and the raw totals carry
// the comparison.
struct ModelTotals {
    std::uint64_t baseline_params = 0;
    std::uint64_t variant_params = 0;
    std::uint64_t param_delta = 0;
    std::uint64_t baseline_mults = 0;
    std::uint64_t variant_mults = 0;
    std::uint64_t mult_delta = 0;
};

// Per-token coefficients (in units of T*C^2) of the two ways to produce the
// kept-dimensional q/k/v: transform once then apply three kept x kept
// projections (separate, tau + 3 tau^2) versus folding the transform into
// each projection as a kept x channels matrix (fused, 3 tau).
struct FusionCost {
    double separate_coeff = 0.0;
    double fused_coeff = 0.0;
    std::string winner;  // "separate", "fused" or "tie"
};

// Exact multiplication counts of one forward pass: every linear layer costs
// tokens * in_width * out_width, every attention product tokens_per_window *
// tokens_per_window * head_dim summed over heads and windows.  Matches the
// instrumented MulCounter of the corresponding forward with integer equality.
CostBreakdown block_mults(const BlockShape& shape, MsaVariant variant, double tau);

// Exact parameter counts.  Both compressed variants count the same: q/k/v
// shrink to kept x kept while the output projection stays channels x channels
// (the fused matrix is derived at runtime, never a parameter).
ParamBreakdown block_params(std::size_t channels, std::size_t window,
                            std::size_t heads, MsaVariant variant, double tau);

// "swin-t" or "swin-s" (attention-block structure only).
ModelSpec builtin_model(const std::string& name);

// Plain-text spec: optional `name <string>`, one `window <int>`, and one
// `stage tokens=<int> channels=<int> heads=<int> depth=<int>` line per stage.
// Blank lines and lines starting with '#' are ignored.
ModelSpec load_model_spec(const std::string& path);

// Sums block_params/block_mults over all stages and depths; the multiplier
// baseline is the vanilla block, the parameter comparison is vanilla versus
// compressed.  One multiplication is one FLOP (multiply-accumulate
// convention; softmax and additions excluded).
ModelTotals model_totals(const ModelSpec& spec, double tau, MsaVariant variant);

// Which q/k/v production strategy is cheaper at this truncation ratio.  The
// coefficients cross at exactly tau = 2/3.
FusionCost fusion_break_even(double tau);

}  // namespace dctattn
