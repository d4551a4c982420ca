// Threshold-based activation sparsity. Three criteria share one skeleton:
// keep lane i when |indicator[i]| clears a threshold, where the indicator is
// h (cats), u (mc), or s (dc). Ideal mode draws the threshold from the
// current input's exact top-m; practical mode uses a calibrated constant
// (cats/mc) or a trained predictor (dc).
#pragma once

#include <optional>
#include <vector>

#include "countdown/gated_mlp.hpp"

namespace countdown {

struct Predictor;

enum class SparsityMethod { Cats, MCountdown, DCountdown };
enum class SparsityMode { Ideal, Practical };

struct SparsityConfig {
    SparsityMethod method = SparsityMethod::DCountdown;
    SparsityMode mode = SparsityMode::Ideal;
    double k = 0.7;  // target sparsity, fraction of lanes dropped
};

const char* method_name(SparsityMethod m);

// Number of lanes kept at sparsity k: floor((1-k) * d_inter). k in (0,1).
int64_t alive_count_for(double k, int64_t d_inter);

// Exact per-input mask: top-m magnitudes of the configured indicator.
ActivationMask threshold_ideal(const ForwardTrace& trace, const SparsityConfig& cfg);

// Computes u, h, s only for alive lanes, then the ascending-i weighted sum.
// Equals the dense path with dead s entries zeroed.
Vec32 forward_sparse(const GatedMlpLayer& layer, const Vec32& x, const ActivationMask& mask);

// Elementwise AND of per-matrix index sets; tau is not meaningful here.
ActivationMask unified_index(const ActivationMask& up, const ActivationMask& gate,
                             const ActivationMask& down);

// Practical-mode inputs: cats/mc need a calibrated threshold, dc a predictor.
struct PracticalContext {
    std::optional<float> tau_hat;
    const Predictor* predictor = nullptr;
};

struct PracticalResult {
    Vec32 y;
    ActivationMask mask;
};

PracticalResult forward_practical(const GatedMlpLayer& layer, const Vec32& x,
                                  const SparsityConfig& cfg, const PracticalContext& ctx);

// Fraction of lanes dropped by the mask.
double realized_sparsity(const ActivationMask& mask);

} // namespace countdown
