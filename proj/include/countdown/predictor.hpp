// Trained mask predictors for practical dc sparsity: a low-rank linear model
// (logits = x @ theta_a @ theta_b) and a ternary model whose f32 shadow
// weights quantize to {-gamma, 0, +gamma} each step (straight-through
// gradients). Training is mini-batch BCE with AdamW, fully seeded.
#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "countdown/sparsity.hpp"

namespace countdown {

struct LowRankPredictor {
    int64_t d_model = 0;
    int64_t d_rank = 0;
    int64_t d_inter = 0;
    Mat32 theta_a;  // (d_model x d_rank)
    Mat32 theta_b;  // (d_rank x d_inter)
};

struct TernaryPredictor {
    int64_t d_model = 0;
    int64_t d_inter = 0;
    Mat32 shadow;  // (d_model x d_inter), f32 master weights

    // Quantization scale: mean |shadow|, floored away from zero.
    float gamma() const;
    // clamp(round(shadow/gamma), -1, +1) per entry.
    std::vector<int8_t> quantized() const;
};

enum class PredictorKind { LowRank, Ternary };

struct Predictor {
    std::variant<LowRankPredictor, TernaryPredictor> impl;

    PredictorKind kind() const;
    int64_t d_model() const;
    int64_t d_inter() const;
    const LowRankPredictor& lowrank() const;
    const TernaryPredictor& ternary() const;
};

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init, seeded.
Predictor make_lowrank_predictor(int64_t d_model, int64_t d_rank, int64_t d_inter, Rng& rng);
Predictor make_ternary_predictor(int64_t d_model, int64_t d_inter, Rng& rng);

struct TrainConfig {
    double lr = 1e-3;
    int64_t batch = 16;
    int64_t epochs = 80;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    uint64_t seed = 42;
    double k = 0.7;
};

// Binary teacher masks: top-m of |s| per sample at sparsity k.
std::vector<std::vector<uint8_t>> build_targets(const GatedMlpLayer& layer,
                                                const std::vector<Vec32>& xs, double k);

Vec32 predict_logits(const Predictor& p, const Vec32& x);

// Alive where logit > 0; recorded tau is 0.
ActivationMask predict_mask(const Predictor& p, const Vec32& x);

struct TrainResult {
    std::vector<double> epoch_loss;  // mean BCE per epoch
};

// Core loop on explicit targets. Throws NumericError if the loss goes
// non-finite. epochs == 0 leaves the predictor untouched.
TrainResult train_on_targets(Predictor& p, const std::vector<Vec32>& xs,
                             const std::vector<std::vector<uint8_t>>& targets,
                             const TrainConfig& cfg);

// Teacher-driven wrapper: targets come from build_targets(layer, xs, cfg.k).
TrainResult train(Predictor& p, const GatedMlpLayer& layer, const std::vector<Vec32>& xs,
                  const TrainConfig& cfg);

struct MaskMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double realized_sparsity = 0.0;
};

// Per-sample precision/recall/F1 averaged over samples. Zero-positive
// samples contribute 0 to the affected ratio.
MaskMetrics evaluate_masks(const std::vector<ActivationMask>& predicted,
                           const std::vector<std::vector<uint8_t>>& reference);

// Predicted masks vs ideal dc masks of the layer at sparsity k.
MaskMetrics evaluate(const Predictor& p, const GatedMlpLayer& layer,
                     const std::vector<Vec32>& xs, double k);

// Deployment size: low-rank stores both factors as f16; ternary packs 2 bits
// per weight (rounded up to whole bytes) plus one f16 scale.
uint64_t footprint_bytes(const Predictor& p);

} // namespace countdown
