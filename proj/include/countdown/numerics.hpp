// Core f32 types and kernels: matrices, seeded RNG, GEMV, activations,
// and magnitude top-m selection. Everything here is deterministic: fixed
// accumulation order, counter-based RNG, no platform-dependent paths.
#pragma once

#include <cstdint>
#include <vector>

#include "countdown/errors.hpp"

namespace countdown {

using Vec32 = std::vector<float>;

// Row-major f32 matrix. Weight matrices are stored transposed
// (d_inter x d_model) so one intermediate index is one contiguous row.
struct Mat32 {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<float> data;

    Mat32() = default;
    Mat32(int64_t r, int64_t c) : rows(r), cols(c), data(static_cast<size_t>(r * c), 0.0f) {}

    float* row(int64_t i) { return data.data() + i * cols; }
    const float* row(int64_t i) const { return data.data() + i * cols; }
    float& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * cols + j)]; }
    float at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * cols + j)]; }
};

// Counter-based 64-bit generator (splitmix64): the output is a hash of an
// advancing counter, so a seed fully determines the stream on any platform.
struct Rng {
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; the second value of each pair is cached.
    double normal();

    float normal_f(float mean = 0.0f, float stddev = 1.0f) {
        return mean + stddev * static_cast<float>(normal());
    }

    // Independent child stream derived from this one's state.
    Rng fork() { return Rng(next_u64()); }

  private:
    uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Boolean mask over intermediate lanes plus the threshold that produced it.
struct ActivationMask {
    std::vector<uint8_t> alive;
    int64_t alive_count = 0;
    float tau = 0.0f;

    int64_t size() const { return static_cast<int64_t>(alive.size()); }
    bool is_alive(int64_t i) const { return alive[static_cast<size_t>(i)] != 0; }

    static ActivationMask all_alive(int64_t n);
    static ActivationMask none_alive(int64_t n);
    // Rebuilds alive_count from the bytes (for masks assembled by hand).
    void recount();
};

enum class Activation { Silu, GeluTanh };

// Scalar activations, evaluated in double and rounded once to f32.
float silu(float x);
float gelu_tanh(float x);
float apply_activation(Activation act, float x);
Vec32 apply_activation(Activation act, const Vec32& v);

// out[i] = sum_j w[i][j] * x[j], j ascending. w is (n x m), x has length m.
Vec32 gemv(const Mat32& w, const Vec32& x);

// out[j] = sum_i w[i][j] * x[i], i ascending. w is (m x n), x has length m.
Vec32 gemv_t(const Mat32& w, const Vec32& x);

struct TopM {
    float tau = 0.0f;
    ActivationMask mask;
};

// Selects the m entries of largest |v[i]|, ties broken lower-index-first.
// tau is the (m+1)-th largest magnitude (+inf when m == 0, -inf when m == n).
TopM top_m_threshold(const Vec32& v, int64_t m);

} // namespace countdown
