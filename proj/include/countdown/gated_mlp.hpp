// Gated-MLP layer (SwiGLU-style): y = (u ⊙ act(gate)) @ W_down^T with
// u = W_up x, gate = W_gate x. This is the serial reference path; the
// blocked executor reproduces it with masked loads and instrumented traffic.
#pragma once

#include <vector>

#include "countdown/numerics.hpp"

namespace countdown {

struct GatedMlpLayer {
    int64_t d_model = 0;
    int64_t d_inter = 0;
    Activation activation = Activation::Silu;
    // All three stored transposed: (d_inter x d_model), one lane per row.
    Mat32 w_up;
    Mat32 w_gate;
    Mat32 w_down;

    // Throws DataError if any matrix shape disagrees with d_model/d_inter.
    void validate() const;
};

// Every intermediate of one dense forward pass.
struct ForwardTrace {
    Vec32 u;  // up projection, length d_inter
    Vec32 h;  // post-activation gate, length d_inter
    Vec32 s;  // u ⊙ h, length d_inter
    Vec32 y;  // output, length d_model
};

ForwardTrace forward_dense(const GatedMlpLayer& layer, const Vec32& x);

// y[j] = sum over alive i ascending of s[i] * w_down[i][j]. The ascending-i
// fold is the accumulation order every other execution path reproduces.
Vec32 weighted_sum(const GatedMlpLayer& layer, const Vec32& s, const ActivationMask& idx);

// Gaussian(0, 1/sqrt(d_model)) weights, filled row-major W_up, W_gate, W_down.
GatedMlpLayer make_random_layer(int64_t d_model, int64_t d_inter, Activation act, Rng& rng);

} // namespace countdown
