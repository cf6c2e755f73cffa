#pragma once

#include <cstdint>
#include <vector>

#include "dctattn/linalg.hpp"

namespace dctattn {

// Shape parameters for windowed multi-head self-attention.
struct AttentionConfig {
    std::size_t windows = 0;      // windows processed per forward pass
    std::size_t window_size = 0;  // side length M; every window holds M*M tokens
    std::size_t channels = 0;
    std::size_t heads = 0;

    std::size_t tokens() const { return window_size * window_size; }
    std::size_t head_dim() const { return channels / heads; }

    // Throws std::invalid_argument unless all sizes are positive and heads
    // divides channels.
    void validate() const;
};

// Parameters of one windowed attention block.  Projections are applied with
// tokens as rows: q = x * wq^T + bq, and likewise for k, v and the output.
// bias_tables[h] is the (2M-1) x (2M-1) table of learnable logit offsets for
// head h, indexed by relative token displacement.
struct AttentionWeights {
    Matrix wq, wk, wv, wo;               // channels x channels
    std::vector<double> bq, bk, bv, bo;  // length channels
    std::vector<Matrix> bias_tables;     // one per head

    // Projections replaced by a fixed transform can be frozen; training then
    // leaves them untouched and their gradients are reported as zero.
    bool frozen_q = false, frozen_k = false, frozen_v = false;

    // Truncated-normal weights (clipped at 2 stddev), zero biases; all draws
    // come from a single stream seeded with `seed`.
    static AttentionWeights init(const AttentionConfig& cfg, double stddev,
                                 std::uint64_t seed);
    void validate(const AttentionConfig& cfg) const;
};

// Dense H x W x C feature map, row-major.
class Image {
public:
    Image() = default;
    Image(std::size_t height, std::size_t width, std::size_t channels)
        : height_(height), width_(width), channels_(channels),
          data_(height * width * channels, 0.0) {}

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t channels() const { return channels_; }

    double& at(std::size_t y, std::size_t x, std::size_t c) {
        return data_[(y * width_ + x) * channels_ + c];
    }
    double at(std::size_t y, std::size_t x, std::size_t c) const {
        return data_[(y * width_ + x) * channels_ + c];
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

private:
    std::size_t height_ = 0, width_ = 0, channels_ = 0;
    std::vector<double> data_;
};

// Splits an image into non-overlapping m x m windows.  Windows are ordered
// row-major over the window grid and tokens row-major within each window.
// Requires m to divide both image dimensions.
Tensor3 partition(const Image& image, std::size_t m);

// Inverse of partition; `patches` must hold height/m * width/m windows of
// m*m tokens.
Image reverse_partition(const Tensor3& patches, std::size_t height,
                        std::size_t width, std::size_t m);

// Expands a (2m-1) x (2m-1) relative-displacement table into the full
// m^2 x m^2 logit bias: entry (i, j) is table(yi - yj + m - 1, xi - xj + m - 1)
// for raster-ordered tokens i, j.
Matrix relative_bias(const Matrix& table, std::size_t m);

// Everything msa_backward needs from the forward pass.
struct MsaCache {
    AttentionConfig cfg;
    AttentionWeights weights;  // snapshot taken at forward time
    Tensor3 x;
    Tensor3 q, k, v;                        // post-projection, bias included
    std::vector<std::vector<Matrix>> probs;  // [window][head] softmax outputs
    Tensor3 concat;                          // heads re-joined, pre output proj
};

// Gradients of a scalar loss with respect to every block parameter and the
// block input.  Frozen projections come back as zeros.
struct AttentionGradients {
    Matrix wq, wk, wv, wo;
    std::vector<double> bq, bk, bv, bo;
    std::vector<Matrix> bias_tables;
    Tensor3 x;
};

// Windowed multi-head self-attention over x ([windows][tokens][channels]).
// Per head: softmax(q k^T / sqrt(head_dim) + bias) v, heads concatenated and
// passed through the output projection.  Fills *cache when non-null; adds
// every data-path multiplication to *counter when non-null.
Tensor3 msa_forward(const Tensor3& x, const AttentionWeights& w,
                    const AttentionConfig& cfg, MsaCache* cache = nullptr,
                    MulCounter* counter = nullptr);

// Reverse-mode gradients for msa_forward given dLoss/dy.
AttentionGradients msa_backward(const MsaCache& cache, const Tensor3& dy);

namespace detail {

// Core of one window of multi-head attention on pre-projected q/k/v
// (tokens x width each, width split evenly across heads).  bias[h] is the
// additive logit matrix for head h, scale multiplies q k^T before the bias.
// When probs_out is non-null it receives the per-head softmax matrices.
Matrix window_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                        const std::vector<Matrix>& bias, std::size_t heads,
                        double scale, std::vector<Matrix>* probs_out,
                        MulCounter* counter);

// Reverse-mode counterpart; dq/dk/dv are overwritten, dbias_logits[h] is
// accumulated into (callers sum over windows before scattering to tables).
void window_attention_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                               const std::vector<Matrix>& probs, double scale,
                               const Matrix& dconcat, Matrix& dq, Matrix& dk,
                               Matrix& dv, std::vector<Matrix>& dbias_logits);

// Scatter-add of a full m^2 x m^2 logit-bias gradient back onto the
// (2m-1) x (2m-1) table (adjoint of relative_bias).
void scatter_bias_gradient(const Matrix& dbias_logits, std::size_t m,
                           Matrix& dtable);

}  // namespace detail

}  // namespace dctattn
