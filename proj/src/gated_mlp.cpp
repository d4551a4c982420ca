#include "countdown/gated_mlp.hpp"

#include <cmath>
#include <sstream>

namespace countdown {

void GatedMlpLayer::validate() const {
    auto check = [&](const Mat32& m, const char* name) {
        if (m.rows != d_inter || m.cols != d_model ||
            m.data.size() != static_cast<size_t>(d_inter * d_model)) {
            std::ostringstream oss;
            oss << "layer: " << name << " is " << m.rows << "x" << m.cols << ", expected "
                << d_inter << "x" << d_model;
            throw DataError(oss.str());
        }
    };
    if (d_model <= 0 || d_inter <= 0) {
        std::ostringstream oss;
        oss << "layer: bad dims d_model=" << d_model << " d_inter=" << d_inter;
        throw DataError(oss.str());
    }
    check(w_up, "w_up");
    check(w_gate, "w_gate");
    check(w_down, "w_down");
}

Vec32 weighted_sum(const GatedMlpLayer& layer, const Vec32& s, const ActivationMask& idx) {
    if (static_cast<int64_t>(s.size()) != layer.d_inter ||
        idx.size() != layer.d_inter) {
        std::ostringstream oss;
        oss << "weighted_sum: s has length " << s.size() << ", mask " << idx.size()
            << ", layer d_inter " << layer.d_inter;
        throw DataError(oss.str());
    }
    Vec32 y(static_cast<size_t>(layer.d_model), 0.0f);
    for (int64_t i = 0; i < layer.d_inter; ++i) {
        if (!idx.is_alive(i)) continue;
        const float si = s[static_cast<size_t>(i)];
        const float* wr = layer.w_down.row(i);
        for (int64_t j = 0; j < layer.d_model; ++j) y[static_cast<size_t>(j)] += si * wr[j];
    }
    return y;
}

ForwardTrace forward_dense(const GatedMlpLayer& layer, const Vec32& x) {
    if (static_cast<int64_t>(x.size()) != layer.d_model) {
        std::ostringstream oss;
        oss << "forward_dense: x has length " << x.size() << ", layer d_model " << layer.d_model;
        throw DataError(oss.str());
    }
    ForwardTrace t;
    t.u = gemv(layer.w_up, x);
    t.h = apply_activation(layer.activation, gemv(layer.w_gate, x));
    t.s.resize(t.u.size());
    for (size_t i = 0; i < t.u.size(); ++i) t.s[i] = t.u[i] * t.h[i];
    t.y = weighted_sum(layer, t.s, ActivationMask::all_alive(layer.d_inter));
    return t;
}

GatedMlpLayer make_random_layer(int64_t d_model, int64_t d_inter, Activation act, Rng& rng) {
    GatedMlpLayer layer;
    layer.d_model = d_model;
    layer.d_inter = d_inter;
    layer.activation = act;
    const float std = 1.0f / std::sqrt(static_cast<float>(d_model));
    auto fill = [&](Mat32& m) {
        m = Mat32(d_inter, d_model);
        for (auto& v : m.data) v = rng.normal_f(0.0f, std);
    };
    fill(layer.w_up);
    fill(layer.w_gate);
    fill(layer.w_down);
    return layer;
}

} // namespace countdown
