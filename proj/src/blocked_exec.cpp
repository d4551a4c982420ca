#include "countdown/blocked_exec.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

namespace countdown {

namespace {

struct Clamped {
    int64_t blk_m;
    int64_t blk_n;
};

Clamped clamp_blocks(const BlockConfig& cfg, int64_t d_inter, int64_t d_model) {
    Clamped c;
    c.blk_m = std::clamp<int64_t>(cfg.blk_m, 1, d_inter);
    c.blk_n = std::clamp<int64_t>(cfg.blk_n, 1, d_model);
    return c;
}

void check_exec_inputs(const GatedMlpLayer& layer, const Vec32& x, const ActivationMask* mask,
                       const char* who) {
    if (static_cast<int64_t>(x.size()) != layer.d_model) {
        std::ostringstream oss;
        oss << who << ": x has length " << x.size() << ", layer d_model " << layer.d_model;
        throw DataError(oss.str());
    }
    if (mask && mask->size() != layer.d_inter) {
        std::ostringstream oss;
        oss << who << ": mask has " << mask->size() << " lanes, layer d_inter " << layer.d_inter;
        throw DataError(oss.str());
    }
}

// Per-lane dot products over row blocks. Dead lanes produce 0 and read
// nothing. The j loop is tiled by blk_n but folds one ascending chain, so
// the result is independent of the tile width.
Vec32 blocked_rows_gemv(const Mat32& w, const Vec32& x, const ActivationMask* mask,
                        int64_t blk_m, int64_t blk_n, TrafficCounter* tc) {
    const int64_t rows = w.rows, cols = w.cols;
    Vec32 out(static_cast<size_t>(rows), 0.0f);
    const int64_t nblocks = (rows + blk_m - 1) / blk_m;
    int64_t wreads = 0;
#pragma omp parallel for schedule(static) reduction(+ : wreads)
    for (int64_t ib = 0; ib < nblocks; ++ib) {
        const int64_t i0 = ib * blk_m;
        const int64_t i1 = std::min(rows, i0 + blk_m);
        for (int64_t i = i0; i < i1; ++i) {
            if (mask && !mask->is_alive(i)) continue;
            const float* wr = w.row(i);
            float acc = 0.0f;
            for (int64_t j0 = 0; j0 < cols; j0 += blk_n) {
                const int64_t j1 = std::min(cols, j0 + blk_n);
                for (int64_t j = j0; j < j1; ++j) acc += wr[j] * x[static_cast<size_t>(j)];
            }
            out[static_cast<size_t>(i)] = acc;
            wreads += cols;
        }
    }
    if (tc) tc->weight_reads += wreads;
    return out;
}

// y[j] = sum over alive i ascending of s[i] * w_down[i][j].
//
// DeterministicOrdered parallelizes over disjoint j tiles; every tile folds
// the alive lanes in the same ascending order, so y is bitwise identical for
// any block shape and thread count. UnorderedAccumulate instead accumulates
// per-lane-block partials into y as blocks finish, the CPU analogue of an
// atomic-add epilogue: same values up to f32 reassociation.
Vec32 down_projection(const GatedMlpLayer& layer, const Vec32& s, const ActivationMask& mask,
                      int64_t blk_m, int64_t blk_n, Reduction red, TrafficCounter* tc) {
    const int64_t d_model = layer.d_model, d_inter = layer.d_inter;
    Vec32 y(static_cast<size_t>(d_model), 0.0f);

    std::vector<int32_t> alive;
    alive.reserve(static_cast<size_t>(mask.alive_count));
    for (int64_t i = 0; i < d_inter; ++i)
        if (mask.is_alive(i)) alive.push_back(static_cast<int32_t>(i));

    int64_t wreads = 0;
    if (red == Reduction::DeterministicOrdered) {
        const int64_t ntiles = (d_model + blk_n - 1) / blk_n;
#pragma omp parallel for schedule(static) reduction(+ : wreads)
        for (int64_t tile = 0; tile < ntiles; ++tile) {
            const int64_t j0 = tile * blk_n;
            const int64_t j1 = std::min(d_model, j0 + blk_n);
            for (int32_t i : alive) {
                const float si = s[static_cast<size_t>(i)];
                const float* wr = layer.w_down.row(i);
                for (int64_t j = j0; j < j1; ++j) y[static_cast<size_t>(j)] += si * wr[j];
                wreads += j1 - j0;
            }
        }
    } else {
        const int64_t nblocks = (d_inter + blk_m - 1) / blk_m;
#pragma omp parallel
        {
            Vec32 partial(static_cast<size_t>(d_model));
#pragma omp for schedule(static) reduction(+ : wreads)
            for (int64_t ib = 0; ib < nblocks; ++ib) {
                const int64_t i0 = ib * blk_m;
                const int64_t i1 = std::min(d_inter, i0 + blk_m);
                bool any = false;
                for (int64_t i = i0; i < i1; ++i) {
                    if (!mask.is_alive(i)) continue;
                    if (!any) std::fill(partial.begin(), partial.end(), 0.0f);
                    any = true;
                    const float si = s[static_cast<size_t>(i)];
                    const float* wr = layer.w_down.row(i);
                    for (int64_t j = 0; j < d_model; ++j)
                        partial[static_cast<size_t>(j)] += si * wr[j];
                    wreads += d_model;
                }
                if (any) {
                    for (int64_t j = 0; j < d_model; ++j) {
#pragma omp atomic
                        y[static_cast<size_t>(j)] += partial[static_cast<size_t>(j)];
                    }
                }
            }
        }
    }
    if (tc) {
        tc->weight_reads += wreads;
        tc->vector_reads += d_inter;  // read s
        tc->writes += d_model;        // write y
    }
    return y;
}

} // namespace

Vec32 exec_dense(const GatedMlpLayer& layer, const Vec32& x, const BlockConfig& cfg,
                 TrafficCounter* tc) {
    layer.validate();
    check_exec_inputs(layer, x, nullptr, "exec_dense");
    const auto [blk_m, blk_n] = clamp_blocks(cfg, layer.d_inter, layer.d_model);
    const int64_t d_inter = layer.d_inter, d_model = layer.d_model;

    Vec32 u = blocked_rows_gemv(layer.w_up, x, nullptr, blk_m, blk_n, tc);
    if (tc) {
        tc->vector_reads += d_model;  // read x
        tc->writes += d_inter;        // write u
    }
    Vec32 gate = blocked_rows_gemv(layer.w_gate, x, nullptr, blk_m, blk_n, tc);
    if (tc) {
        tc->vector_reads += d_model;  // read x
        tc->writes += d_inter;        // write gate
    }
    Vec32 act(static_cast<size_t>(d_inter));
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < d_inter; ++i)
        act[static_cast<size_t>(i)] = apply_activation(layer.activation, gate[static_cast<size_t>(i)]);
    if (tc) {
        tc->vector_reads += d_inter;  // read gate
        tc->writes += d_inter;        // write act
    }
    Vec32 s(static_cast<size_t>(d_inter));
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < d_inter; ++i)
        s[static_cast<size_t>(i)] = u[static_cast<size_t>(i)] * act[static_cast<size_t>(i)];
    if (tc) {
        tc->vector_reads += 2 * d_inter;  // read act, read u
        tc->writes += d_inter;            // write s
    }
    return down_projection(layer, s, ActivationMask::all_alive(d_inter), blk_m, blk_n,
                           cfg.reduction, tc);
}

Vec32 exec_mc(const GatedMlpLayer& layer, const Vec32& x, const Vec32& u,
              const ActivationMask& mask, const BlockConfig& cfg, TrafficCounter* tc) {
    layer.validate();
    check_exec_inputs(layer, x, &mask, "exec_mc");
    if (static_cast<int64_t>(u.size()) != layer.d_inter)
        throw DataError("exec_mc: u length does not match d_inter");
    const auto [blk_m, blk_n] = clamp_blocks(cfg, layer.d_inter, layer.d_model);
    const int64_t d_inter = layer.d_inter, d_model = layer.d_model;

    // Phase 1: masked gate GEMV fused with act(gate) * u. Dead lanes write 0
    // and load neither their W_gate row nor their u element.
    Vec32 s(static_cast<size_t>(d_inter), 0.0f);
    const int64_t nblocks = (d_inter + blk_m - 1) / blk_m;
    int64_t wreads = 0, ureads = 0;
#pragma omp parallel for schedule(static) reduction(+ : wreads, ureads)
    for (int64_t ib = 0; ib < nblocks; ++ib) {
        const int64_t i0 = ib * blk_m;
        const int64_t i1 = std::min(d_inter, i0 + blk_m);
        for (int64_t i = i0; i < i1; ++i) {
            if (!mask.is_alive(i)) continue;
            const float* wr = layer.w_gate.row(i);
            float acc = 0.0f;
            for (int64_t j0 = 0; j0 < d_model; j0 += blk_n) {
                const int64_t j1 = std::min(d_model, j0 + blk_n);
                for (int64_t j = j0; j < j1; ++j) acc += wr[j] * x[static_cast<size_t>(j)];
            }
            s[static_cast<size_t>(i)] =
                apply_activation(layer.activation, acc) * u[static_cast<size_t>(i)];
            wreads += d_model;
            ureads += 1;
        }
    }
    if (tc) {
        tc->weight_reads += wreads;
        tc->vector_reads += d_model + d_inter + ureads;  // x, mask flags, alive u lanes
        tc->writes += d_inter;                           // store s (full length)
    }
    return down_projection(layer, s, mask, blk_m, blk_n, cfg.reduction, tc);
}

Vec32 exec_cats(const GatedMlpLayer& layer, const Vec32& x, const Vec32& act_gate,
                const ActivationMask& mask, const BlockConfig& cfg, TrafficCounter* tc) {
    layer.validate();
    check_exec_inputs(layer, x, &mask, "exec_cats");
    if (static_cast<int64_t>(act_gate.size()) != layer.d_inter)
        throw DataError("exec_cats: act_gate length does not match d_inter");
    const auto [blk_m, blk_n] = clamp_blocks(cfg, layer.d_inter, layer.d_model);
    const int64_t d_inter = layer.d_inter, d_model = layer.d_model;

    // Phase 1: masked up GEMV times the precomputed activated gate.
    Vec32 s(static_cast<size_t>(d_inter), 0.0f);
    const int64_t nblocks = (d_inter + blk_m - 1) / blk_m;
    int64_t wreads = 0, greads = 0;
#pragma omp parallel for schedule(static) reduction(+ : wreads, greads)
    for (int64_t ib = 0; ib < nblocks; ++ib) {
        const int64_t i0 = ib * blk_m;
        const int64_t i1 = std::min(d_inter, i0 + blk_m);
        for (int64_t i = i0; i < i1; ++i) {
            if (!mask.is_alive(i)) continue;
            const float* wr = layer.w_up.row(i);
            float acc = 0.0f;
            for (int64_t j0 = 0; j0 < d_model; j0 += blk_n) {
                const int64_t j1 = std::min(d_model, j0 + blk_n);
                for (int64_t j = j0; j < j1; ++j) acc += wr[j] * x[static_cast<size_t>(j)];
            }
            s[static_cast<size_t>(i)] = acc * act_gate[static_cast<size_t>(i)];
            wreads += d_model;
            greads += 1;
        }
    }
    if (tc) {
        tc->weight_reads += wreads;
        tc->vector_reads += d_model + d_inter + greads;  // x, mask flags, alive act lanes
        tc->writes += d_inter;
    }
    return down_projection(layer, s, mask, blk_m, blk_n, cfg.reduction, tc);
}

Vec32 exec_dc(const GatedMlpLayer& layer, const Vec32& x, const ActivationMask& mask,
              const BlockConfig& cfg, TrafficCounter* tc) {
    layer.validate();
    check_exec_inputs(layer, x, &mask, "exec_dc");
    const auto [blk_m, blk_n] = clamp_blocks(cfg, layer.d_inter, layer.d_model);
    const int64_t d_inter = layer.d_inter, d_model = layer.d_model;

    // Phase 1: fused dual GEMV, up and gate rows only for alive lanes.
    Vec32 s(static_cast<size_t>(d_inter), 0.0f);
    const int64_t nblocks = (d_inter + blk_m - 1) / blk_m;
    int64_t wreads = 0;
#pragma omp parallel for schedule(static) reduction(+ : wreads)
    for (int64_t ib = 0; ib < nblocks; ++ib) {
        const int64_t i0 = ib * blk_m;
        const int64_t i1 = std::min(d_inter, i0 + blk_m);
        for (int64_t i = i0; i < i1; ++i) {
            if (!mask.is_alive(i)) continue;
            const float* wu = layer.w_up.row(i);
            const float* wg = layer.w_gate.row(i);
            float up = 0.0f, gate = 0.0f;
            for (int64_t j0 = 0; j0 < d_model; j0 += blk_n) {
                const int64_t j1 = std::min(d_model, j0 + blk_n);
                for (int64_t j = j0; j < j1; ++j) {
                    up += wu[j] * x[static_cast<size_t>(j)];
                    gate += wg[j] * x[static_cast<size_t>(j)];
                }
            }
            s[static_cast<size_t>(i)] = up * apply_activation(layer.activation, gate);
            wreads += 2 * d_model;
        }
    }
    if (tc) {
        tc->weight_reads += wreads;
        tc->vector_reads += d_model + d_inter;  // x, mask flags
        tc->writes += d_inter;
    }
    return down_projection(layer, s, mask, blk_m, blk_n, cfg.reduction, tc);
}

PipelineResult pipeline_dense(const GatedMlpLayer& layer, const Vec32& x, const BlockConfig& cfg) {
    PipelineResult r;
    r.mask = ActivationMask::all_alive(layer.d_inter);
    r.y = exec_dense(layer, x, cfg, &r.traffic);
    return r;
}

// Shared tail of the threshold pipelines: abs pass + compare, with the
// stream accounting of both temporaries.
static ActivationMask threshold_mask(const Vec32& v, float tau, TrafficCounter& tc) {
    const int64_t n = static_cast<int64_t>(v.size());
    Vec32 mag(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) mag[static_cast<size_t>(i)] = std::fabs(v[static_cast<size_t>(i)]);
    tc.vector_reads += n;  // read v
    tc.writes += n;        // write |v|
    ActivationMask mask = ActivationMask::none_alive(n);
    for (int64_t i = 0; i < n; ++i)
        if (mag[static_cast<size_t>(i)] > tau) mask.alive[static_cast<size_t>(i)] = 1;
    tc.vector_reads += n;  // read |v|
    tc.writes += n;        // write mask
    mask.recount();
    mask.tau = tau;
    return mask;
}

PipelineResult pipeline_mc(const GatedMlpLayer& layer, const Vec32& x, float tau,
                           const BlockConfig& cfg) {
    layer.validate();
    check_exec_inputs(layer, x, nullptr, "pipeline_mc");
    const auto [blk_m, blk_n] = clamp_blocks(cfg, layer.d_inter, layer.d_model);
    PipelineResult r;
    Vec32 u = blocked_rows_gemv(layer.w_up, x, nullptr, blk_m, blk_n, &r.traffic);
    r.traffic.vector_reads += layer.d_model;  // read x
    r.traffic.writes += layer.d_inter;        // write u
    r.mask = threshold_mask(u, tau, r.traffic);
    r.y = exec_mc(layer, x, u, r.mask, cfg, &r.traffic);
    return r;
}

PipelineResult pipeline_cats(const GatedMlpLayer& layer, const Vec32& x, float tau,
                             const BlockConfig& cfg) {
    layer.validate();
    check_exec_inputs(layer, x, nullptr, "pipeline_cats");
    const auto [blk_m, blk_n] = clamp_blocks(cfg, layer.d_inter, layer.d_model);
    PipelineResult r;
    Vec32 gate = blocked_rows_gemv(layer.w_gate, x, nullptr, blk_m, blk_n, &r.traffic);
    r.traffic.vector_reads += layer.d_model;  // read x
    r.traffic.writes += layer.d_inter;        // write gate
    Vec32 act(static_cast<size_t>(layer.d_inter));
    for (int64_t i = 0; i < layer.d_inter; ++i)
        act[static_cast<size_t>(i)] =
            apply_activation(layer.activation, gate[static_cast<size_t>(i)]);
    r.traffic.vector_reads += layer.d_inter;  // read gate
    r.traffic.writes += layer.d_inter;        // write act
    r.mask = threshold_mask(act, tau, r.traffic);
    r.y = exec_cats(layer, x, act, r.mask, cfg, &r.traffic);
    return r;
}

PipelineResult pipeline_dc(const GatedMlpLayer& layer, const Vec32& x, const Predictor& p,
                           const BlockConfig& cfg, const ActivationMask* mask_override) {
    layer.validate();
    check_exec_inputs(layer, x, mask_override, "pipeline_dc");
    if (p.kind() != PredictorKind::LowRank)
        throw DataError("pipeline_dc: the blocked pipeline models the low-rank predictor");
    const LowRankPredictor& lp = p.lowrank();
    if (lp.d_model != layer.d_model || lp.d_inter != layer.d_inter)
        throw DataError("pipeline_dc: predictor shape does not match the layer");

    PipelineResult r;
    const Vec32 logits = predict_logits(p, x);
    r.traffic.weight_reads += lp.d_model * lp.d_rank + lp.d_rank * lp.d_inter;
    r.traffic.vector_reads += lp.d_model + lp.d_rank;  // read x, read latent
    r.traffic.writes += lp.d_rank + lp.d_inter;        // write latent, write logits

    if (mask_override) {
        r.mask = *mask_override;
    } else {
        r.mask = ActivationMask::none_alive(layer.d_inter);
        for (int64_t i = 0; i < layer.d_inter; ++i)
            if (logits[static_cast<size_t>(i)] > 0.0f) r.mask.alive[static_cast<size_t>(i)] = 1;
        r.mask.recount();
        r.mask.tau = 0.0f;
    }
    r.traffic.vector_reads += layer.d_inter;  // read logits
    r.traffic.writes += layer.d_inter;        // write mask
    r.y = exec_dc(layer, x, r.mask, cfg, &r.traffic);
    return r;
}

namespace {

int64_t percentile_ns(std::vector<int64_t>& sorted, double q) {
    const size_t n = sorted.size();
    const size_t idx = static_cast<size_t>(std::llround(q * static_cast<double>(n - 1)));
    return sorted[idx];
}

} // namespace

BenchStats bench(CostMethod method, const ShapeSpec& shape, double k, int64_t iters,
                 const BlockConfig& cfg, uint64_t seed) {
    if (iters <= 0) throw DataError("bench: iters must be positive");
    using clock = std::chrono::steady_clock;

    Rng rng(seed);
    GatedMlpLayer layer = make_random_layer(shape.d_model, shape.d_inter, Activation::Silu, rng);
    Vec32 x(static_cast<size_t>(shape.d_model));
    for (auto& v : x) v = rng.normal_f();

    // Setup: per-input ideal thresholds so sparse runs hit the target alive
    // count exactly, making measured traffic comparable to the cost model.
    const ForwardTrace trace = forward_dense(layer, x);
    float tau_u = 0.0f, tau_h = 0.0f;
    ActivationMask ideal_s;
    Predictor predictor;
    if (method != CostMethod::Dense) {
        const int64_t m = alive_count_for(k, shape.d_inter);
        tau_u = top_m_threshold(trace.u, m).tau;
        tau_h = top_m_threshold(trace.h, m).tau;
        ideal_s = top_m_threshold(trace.s, m).mask;
        if (method == CostMethod::DC) {
            Rng prng = rng.fork();
            predictor = make_lowrank_predictor(shape.d_model, shape.d_rank, shape.d_inter, prng);
        }
    }

    auto run_once = [&]() -> PipelineResult {
        switch (method) {
            case CostMethod::Dense: return pipeline_dense(layer, x, cfg);
            case CostMethod::Cats: return pipeline_cats(layer, x, tau_h, cfg);
            case CostMethod::MC: return pipeline_mc(layer, x, tau_u, cfg);
            default: return pipeline_dc(layer, x, predictor, cfg, &ideal_s);
        }
    };

    const int64_t warmup = std::max<int64_t>(10, iters / 10);
    for (int64_t i = 0; i < warmup; ++i) (void)run_once();

    std::vector<int64_t> ns(static_cast<size_t>(iters));
    TrafficCounter last;
    for (int64_t i = 0; i < iters; ++i) {
        const auto t0 = clock::now();
        PipelineResult r = run_once();
        const auto t1 = clock::now();
        ns[static_cast<size_t>(i)] =
            std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count();
        last = r.traffic;
    }
    std::sort(ns.begin(), ns.end());

    const int64_t dense_total = pipeline_dense(layer, x, cfg).traffic.total();

    BenchStats st;
    st.method = cost_method_name(method);
    st.k = method == CostMethod::Dense ? 0.0 : k;
    st.d_model = shape.d_model;
    st.d_inter = shape.d_inter;
    st.iters = iters;
    st.p50_ns = percentile_ns(ns, 0.50);
    st.p95_ns = percentile_ns(ns, 0.95);
    st.traffic_elements = last.total();
    st.element_read_ratio = static_cast<double>(last.total()) / static_cast<double>(dense_total);
    return st;
}

BenchStats bench_reference_dense(const ShapeSpec& shape, int64_t iters, uint64_t seed) {
    if (iters <= 0) throw DataError("bench: iters must be positive");
    using clock = std::chrono::steady_clock;

    Rng rng(seed);
    GatedMlpLayer layer = make_random_layer(shape.d_model, shape.d_inter, Activation::Silu, rng);
    Vec32 x(static_cast<size_t>(shape.d_model));
    for (auto& v : x) v = rng.normal_f();

    const int64_t warmup = std::max<int64_t>(10, iters / 10);
    for (int64_t i = 0; i < warmup; ++i) (void)forward_dense(layer, x);

    std::vector<int64_t> ns(static_cast<size_t>(iters));
    for (int64_t i = 0; i < iters; ++i) {
        const auto t0 = clock::now();
        (void)forward_dense(layer, x);
        const auto t1 = clock::now();
        ns[static_cast<size_t>(i)] =
            std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count();
    }
    std::sort(ns.begin(), ns.end());

    BenchStats st;
    st.method = "dense-ref";
    st.k = 0.0;
    st.d_model = shape.d_model;
    st.d_inter = shape.d_inter;
    st.iters = iters;
    st.p50_ns = percentile_ns(ns, 0.50);
    st.p95_ns = percentile_ns(ns, 0.95);
    st.traffic_elements = traffic_dense(shape);
    st.element_read_ratio = 1.0;
    return st;
}

} // namespace countdown
