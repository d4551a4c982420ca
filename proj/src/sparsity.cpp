#include "countdown/sparsity.hpp"

#include <cmath>
#include <sstream>

#include "countdown/predictor.hpp"

namespace countdown {

const char* method_name(SparsityMethod m) {
    switch (m) {
        case SparsityMethod::Cats: return "cats";
        case SparsityMethod::MCountdown: return "mc";
        case SparsityMethod::DCountdown: return "dc";
    }
    return "?";
}

int64_t alive_count_for(double k, int64_t d_inter) {
    if (!(k > 0.0 && k < 1.0)) {
        std::ostringstream oss;
        oss << "alive_count_for: k = " << k << " outside (0, 1)";
        throw DataError(oss.str());
    }
    if (d_inter <= 0) throw DataError("alive_count_for: d_inter must be positive");
    return static_cast<int64_t>(std::floor((1.0 - k) * static_cast<double>(d_inter)));
}

static const Vec32& indicator_of(const ForwardTrace& trace, SparsityMethod m) {
    switch (m) {
        case SparsityMethod::Cats: return trace.h;
        case SparsityMethod::MCountdown: return trace.u;
        case SparsityMethod::DCountdown: return trace.s;
    }
    return trace.s;
}

ActivationMask threshold_ideal(const ForwardTrace& trace, const SparsityConfig& cfg) {
    const Vec32& v = indicator_of(trace, cfg.method);
    const int64_t m = alive_count_for(cfg.k, static_cast<int64_t>(v.size()));
    return top_m_threshold(v, m).mask;
}

Vec32 forward_sparse(const GatedMlpLayer& layer, const Vec32& x, const ActivationMask& mask) {
    if (mask.size() != layer.d_inter) {
        std::ostringstream oss;
        oss << "forward_sparse: mask has " << mask.size() << " lanes, layer d_inter "
            << layer.d_inter;
        throw DataError(oss.str());
    }
    if (static_cast<int64_t>(x.size()) != layer.d_model) {
        std::ostringstream oss;
        oss << "forward_sparse: x has length " << x.size() << ", layer d_model " << layer.d_model;
        throw DataError(oss.str());
    }
    Vec32 y(static_cast<size_t>(layer.d_model), 0.0f);
    for (int64_t i = 0; i < layer.d_inter; ++i) {
        if (!mask.is_alive(i)) continue;
        const float* up = layer.w_up.row(i);
        const float* gate = layer.w_gate.row(i);
        float u = 0.0f, g = 0.0f;
        for (int64_t j = 0; j < layer.d_model; ++j) {
            u += up[j] * x[static_cast<size_t>(j)];
            g += gate[j] * x[static_cast<size_t>(j)];
        }
        const float s = u * apply_activation(layer.activation, g);
        const float* down = layer.w_down.row(i);
        for (int64_t j = 0; j < layer.d_model; ++j) y[static_cast<size_t>(j)] += s * down[j];
    }
    return y;
}

ActivationMask unified_index(const ActivationMask& up, const ActivationMask& gate,
                             const ActivationMask& down) {
    if (up.size() != gate.size() || up.size() != down.size()) {
        std::ostringstream oss;
        oss << "unified_index: mask sizes differ (" << up.size() << ", " << gate.size() << ", "
            << down.size() << ")";
        throw DataError(oss.str());
    }
    ActivationMask out;
    out.alive.resize(up.alive.size());
    for (size_t i = 0; i < up.alive.size(); ++i)
        out.alive[i] = (up.alive[i] && gate.alive[i] && down.alive[i]) ? 1 : 0;
    out.recount();
    out.tau = 0.0f;
    return out;
}

PracticalResult forward_practical(const GatedMlpLayer& layer, const Vec32& x,
                                  const SparsityConfig& cfg, const PracticalContext& ctx) {
    PracticalResult r;
    switch (cfg.method) {
        case SparsityMethod::Cats: {
            if (!ctx.tau_hat) throw DataError("forward_practical: cats needs a calibrated tau_hat");
            const Vec32 h = apply_activation(layer.activation, gemv(layer.w_gate, x));
            r.mask = ActivationMask::none_alive(layer.d_inter);
            r.mask.tau = *ctx.tau_hat;
            for (int64_t i = 0; i < layer.d_inter; ++i)
                if (std::fabs(h[static_cast<size_t>(i)]) > *ctx.tau_hat) r.mask.alive[static_cast<size_t>(i)] = 1;
            break;
        }
        case SparsityMethod::MCountdown: {
            if (!ctx.tau_hat) throw DataError("forward_practical: mc needs a calibrated tau_hat");
            const Vec32 u = gemv(layer.w_up, x);
            r.mask = ActivationMask::none_alive(layer.d_inter);
            r.mask.tau = *ctx.tau_hat;
            for (int64_t i = 0; i < layer.d_inter; ++i)
                if (std::fabs(u[static_cast<size_t>(i)]) > *ctx.tau_hat) r.mask.alive[static_cast<size_t>(i)] = 1;
            break;
        }
        case SparsityMethod::DCountdown: {
            if (!ctx.predictor) throw DataError("forward_practical: dc needs a trained predictor");
            r.mask = predict_mask(*ctx.predictor, x);
            break;
        }
    }
    r.mask.recount();
    r.y = forward_sparse(layer, x, r.mask);
    return r;
}

double realized_sparsity(const ActivationMask& mask) {
    if (mask.size() == 0) throw DataError("realized_sparsity: empty mask");
    return 1.0 - static_cast<double>(mask.alive_count) / static_cast<double>(mask.size());
}

} // namespace countdown
