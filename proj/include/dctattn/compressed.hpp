#pragma once

#include <cstdint>
#include <vector>

#include "dctattn/attention.hpp"
#include "dctattn/dct.hpp"
#include "dctattn/linalg.hpp"

namespace dctattn {

// Which projections dct_init replaces with the DCT matrix.
struct DctInitTarget {
    bool q = false, k = false, v = false;
    // When set, the replaced projections are additionally marked frozen.
    bool freeze = false;
};

// Returns a copy of w with every selected projection set to the DCT basis
// matrix and its bias zeroed.  Requires basis.size == channels and a
// non-empty target.  Applying it twice with the same target is a no-op.
AttentionWeights dct_init(const AttentionWeights& w, const DctInitTarget& target,
                          const DctBasis& basis);

// How the compressed block maps attention output back to channel space.
// Naive first expands the kept coefficients through the inverse transform and
// then applies the full output projection; Simplified applies the two as one
// pre-fused kept-to-channels matrix (recomputed from the current wo every
// forward, so training the two variants stays equivalent).
enum class CompressedVariant { Naive, Simplified };

// Parameters of a compressed attention block.  q/k/v act on the kept
// transform coefficients and are therefore kept x kept; the output projection
// stays channels x channels so either variant can reconstruct full channels.
struct CompressedWeights {
    std::size_t kept = 0;
    Matrix wq, wk, wv;                   // kept x kept
    std::vector<double> bq, bk, bv;      // length kept
    Matrix wo;                           // channels x channels
    std::vector<double> bo;              // length channels
    std::vector<Matrix> bias_tables;     // one per head, (2M-1) x (2M-1)

    static CompressedWeights init(const AttentionConfig& cfg, std::size_t kept,
                                  double stddev, std::uint64_t seed);
    void validate(const AttentionConfig& cfg) const;
};

struct CompressedCache {
    AttentionConfig cfg;
    CompressedWeights weights;  // snapshot taken at forward time
    TruncatedDct trunc;
    CompressedVariant variant = CompressedVariant::Naive;
    Tensor3 x;
    Tensor3 xt;                              // transformed + truncated input
    Tensor3 q, k, v;                         // kept-width projections
    std::vector<std::vector<Matrix>> probs;  // [window][head]
    Tensor3 concat;                          // kept-width attention output
    Tensor3 decoded;                         // Naive only: concat * dbar
    Matrix fused;                            // Simplified only: wo * dbar_inv
};

struct CompressedGradients {
    Matrix wq, wk, wv, wo;
    std::vector<double> bq, bk, bv, bo;
    std::vector<Matrix> bias_tables;
    Tensor3 x;
};

// wo * dbar_inv: the kept-to-channels matrix the Simplified variant applies.
// Deliberately never counted — it depends only on weights, not on data, so a
// deployed block computes it once, not per token.
Matrix fuse_output(const Matrix& wo, const TruncatedDct& trunc);

// Attention over the truncated transform of the input.  Per window the input
// is mapped to kept coefficients (x * dbar^T), attended with kept/heads-wide
// heads, and mapped back per the variant.  Requires trunc.kept == cw.kept
// and heads | kept.
Tensor3 compressed_forward(const Tensor3& x, const CompressedWeights& cw,
                           const AttentionConfig& cfg, const TruncatedDct& trunc,
                           CompressedVariant variant,
                           CompressedCache* cache = nullptr,
                           MulCounter* counter = nullptr);

CompressedGradients compressed_backward(const CompressedCache& cache,
                                        const Tensor3& dy);

// Folds a full-size (kept == channels) compressed block into plain attention
// weights that make msa_forward reproduce compressed_forward exactly:
// wq' = wq * d (and k, v alike), wo' = wo * d^T, biases and tables unchanged.
AttentionWeights conjugate_tau1(const CompressedWeights& cw, const DctBasis& basis);

// Ablation twin of compressed_forward that keeps the first `kept` raw
// channels instead of transform coefficients (no basis change anywhere).
// The output projection then uses only its first `kept` columns.
struct NoDctCache {
    AttentionConfig cfg;
    CompressedWeights weights;
    std::size_t kept = 0;
    Tensor3 x;
    Tensor3 xt;
    Tensor3 q, k, v;
    std::vector<std::vector<Matrix>> probs;
    Tensor3 concat;
};

Tensor3 truncate_no_dct_forward(const Tensor3& x, const CompressedWeights& cw,
                                const AttentionConfig& cfg, double tau,
                                NoDctCache* cache = nullptr);

CompressedGradients truncate_no_dct_backward(const NoDctCache& cache,
                                             const Tensor3& dy);

}  // namespace dctattn
