// Blocked, OpenMP-parallel execution of the gated MLP with lane-masked
// loads: a dead lane's weight row is never touched (it may hold NaN).
// DeterministicOrdered keeps every accumulation a plain ascending-index
// fold, so results are bitwise identical for any block shape and thread
// count; UnorderedAccumulate mimics atomic block accumulation instead.
// Traffic counters record touched f32 elements at lane granularity and
// reproduce the cost model's closed forms term for term.
#pragma once

#include <cstdint>
#include <string>

#include "countdown/costmodel.hpp"
#include "countdown/predictor.hpp"

namespace countdown {

enum class Reduction { DeterministicOrdered, UnorderedAccumulate };

struct BlockConfig {
    int64_t blk_m = 16;   // lanes per block (over d_inter)
    int64_t blk_n = 256;  // columns per tile (over d_model)
    Reduction reduction = Reduction::DeterministicOrdered;
};

struct TrafficCounter {
    int64_t weight_reads = 0;
    int64_t vector_reads = 0;
    int64_t writes = 0;
    int64_t total() const { return weight_reads + vector_reads + writes; }
};

// Dense three-GEMV pipeline with full instrumentation.
Vec32 exec_dense(const GatedMlpLayer& layer, const Vec32& x, const BlockConfig& cfg,
                 TrafficCounter* tc);

// mc kernel: masked gate GEMV fused with act(gate)*u, then masked down
// projection. u comes from the caller's dense up pass (counted separately).
Vec32 exec_mc(const GatedMlpLayer& layer, const Vec32& x, const Vec32& u,
              const ActivationMask& mask, const BlockConfig& cfg, TrafficCounter* tc);

// cats kernel: masked up GEMV times precomputed act(gate), then masked down.
Vec32 exec_cats(const GatedMlpLayer& layer, const Vec32& x, const Vec32& act_gate,
                const ActivationMask& mask, const BlockConfig& cfg, TrafficCounter* tc);

// dc kernel: fused masked dual GEMV (up and gate), then masked down.
Vec32 exec_dc(const GatedMlpLayer& layer, const Vec32& x, const ActivationMask& mask,
              const BlockConfig& cfg, TrafficCounter* tc);

// End-to-end instrumented pipelines, mask production included, so the
// counters cover every stream the cost model's traffic tables account for.
struct PipelineResult {
    Vec32 y;
    ActivationMask mask;
    TrafficCounter traffic;
};

PipelineResult pipeline_dense(const GatedMlpLayer& layer, const Vec32& x, const BlockConfig& cfg);
// Mask from |u[i]| > tau after an instrumented dense up pass.
PipelineResult pipeline_mc(const GatedMlpLayer& layer, const Vec32& x, float tau,
                           const BlockConfig& cfg);
// Mask from |act(gate)[i]| > tau after an instrumented dense gate pass.
PipelineResult pipeline_cats(const GatedMlpLayer& layer, const Vec32& x, float tau,
                             const BlockConfig& cfg);
// Low-rank predictor pass (instrumented) produces the mask; mask_override
// substitutes an oracle mask while keeping the predictor's cost in band.
PipelineResult pipeline_dc(const GatedMlpLayer& layer, const Vec32& x, const Predictor& p,
                           const BlockConfig& cfg, const ActivationMask* mask_override = nullptr);

struct BenchStats {
    std::string method;
    double k = 0.0;
    int64_t d_model = 0;
    int64_t d_inter = 0;
    int64_t iters = 0;
    int64_t p50_ns = 0;
    int64_t p95_ns = 0;
    int64_t traffic_elements = 0;
    double element_read_ratio = 0.0;  // pipeline traffic / dense traffic
};

// Seeded layer + input at the given shape; sparse methods run at the exact
// target alive count (per-input ideal thresholds), so measured traffic lines
// up with the cost model at k. Warmup is max(10, iters/10).
BenchStats bench(CostMethod method, const ShapeSpec& shape, double k, int64_t iters,
                 const BlockConfig& cfg, uint64_t seed);

// Serial reference timing of the same dense forward, for kernel comparison.
BenchStats bench_reference_dense(const ShapeSpec& shape, int64_t iters, uint64_t seed);

} // namespace countdown
