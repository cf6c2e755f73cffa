#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dctattn/attention.hpp"
#include "dctattn/compressed.hpp"
#include "dctattn/dct.hpp"
#include "dctattn/linalg.hpp"

namespace dctattn {

// Synthetic two-class task: every channel vector is an AR(1) draw, and the
// class is decided by whether low-frequency DCT energy beats high-frequency
// energy by `margin` (label 1) or loses by it (label 0).  Draws inside the
// margin band are rejected, and each class is capped at half the requested
// count, so generated sets are balanced exactly.
struct ToyDatasetSpec {
    std::size_t samples = 512;
    std::size_t windows = 1;
    std::size_t window_size = 2;
    std::size_t channels = 8;  // at least 4, so the C/4 frequency bands exist
    double rho = 0.3;          // AR(1) correlation across channels
    double margin = 2.0;       // rejection band half-width on the energy gap
    std::uint64_t seed = 1;
};

struct ToySample {
    Tensor3 x;
    int label = 0;
};

struct ToyDataset {
    ToyDatasetSpec spec;
    std::vector<ToySample> samples;
};

// Deterministic per seed.  Throws std::runtime_error if the class quotas
// cannot be filled within 100x oversampling.
ToyDataset gen_synthetic(const ToyDatasetSpec& spec);

// What sits between the input and the mean-pool + linear classifier.
enum class ToyMode {
    LinearOnly,            // no block at all: pool the raw input
    Vanilla,               // plain windowed attention
    DctInit,               // plain attention with DCT-initialized projections
    CompressedNaive,       // compressed attention, expand-then-project output
    CompressedSimplified,  // compressed attention, fused output
    TruncateNoDct,         // ablation: keep raw channels, no transform
};

const char* toy_mode_name(ToyMode mode);

struct ToyModelConfig {
    ToyMode mode = ToyMode::Vanilla;
    AttentionConfig dims{1, 2, 8, 2};
    DctInitTarget target;   // DctInit only: which projections, frozen or not
    double tau = 0.5;       // compressed and no-transform modes
    double init_std = 0.5;
    std::uint64_t seed = 1;
};

// One block (per mode), mean-pool over all tokens, linear map to 2 logits,
// cross-entropy loss.
struct ToyModel {
    ToyModelConfig cfg;
    AttentionWeights attn;   // Vanilla / DctInit
    CompressedWeights comp;  // compressed and no-transform modes
    TruncatedDct trunc;      // compressed modes
    Matrix head_w;           // 2 x channels
    std::vector<double> head_b;

    static ToyModel create(const ToyModelConfig& cfg);
};

// Mutable view of one learnable parameter block.
struct ParamView {
    double* data = nullptr;
    std::size_t size = 0;
    bool frozen = false;
};

// Every learnable parameter of the model in a fixed order; the flat gradient
// vectors below use the same order.
std::vector<ParamView> toy_params(ToyModel& model);

std::vector<double> toy_logits(const ToyModel& model, const Tensor3& x);

double toy_loss(const ToyModel& model, const ToySample& sample);

// Mean cross-entropy over the batch; grad_out is resized and filled with the
// loss gradient for every parameter in toy_params order (zeros for frozen
// parameters).
double toy_batch_grad(const ToyModel& model, const std::vector<ToySample>& batch,
                      std::vector<double>& grad_out);

// Worst relative error |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
// between the analytic gradient and central differences of the loss, over
// every trainable parameter.  Frozen parameters are pinned constants and are
// excluded.  Entries where both magnitudes fall below 1e-9 count as matched:
// central differences of an O(1) loss at this step have an absolute noise
// floor near 1e-11, so structurally flat directions (for example the key
// bias, which softmax shift-invariance removes from the loss exactly) would
// otherwise report pure rounding noise.  Every genuine gradient in these
// models sits orders of magnitude above the guard.  Throws
// std::invalid_argument if the loss is not finite.
double grad_check(ToyModel& model, const ToySample& sample, double step = 1e-5);

struct SgdConfig {
    double lr = 0.05;
    double momentum = 0.9;
};

struct TrainHistory {
    std::vector<double> losses;  // batch loss at each step, before its update
    double final_accuracy = 0.0;
    std::uint64_t seed = 0;
    std::string config;
};

// Full-batch SGD with momentum.  Deterministic given the model seed and
// dataset; frozen parameters are never touched.  Throws std::runtime_error if
// the loss diverges (non-finite or above 1e6).
TrainHistory train(ToyModel& model, const ToyDataset& data, const SgdConfig& opt,
                   std::size_t steps);

}  // namespace dctattn
