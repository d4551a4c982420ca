#include "countdown/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace countdown {

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // u1 in (0, 1] so the log is finite.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

ActivationMask ActivationMask::all_alive(int64_t n) {
    ActivationMask m;
    m.alive.assign(static_cast<size_t>(n), 1);
    m.alive_count = n;
    m.tau = -std::numeric_limits<float>::infinity();
    return m;
}

ActivationMask ActivationMask::none_alive(int64_t n) {
    ActivationMask m;
    m.alive.assign(static_cast<size_t>(n), 0);
    m.alive_count = 0;
    m.tau = std::numeric_limits<float>::infinity();
    return m;
}

void ActivationMask::recount() {
    alive_count = 0;
    for (uint8_t b : alive) alive_count += (b != 0);
}

float silu(float x) {
    double xd = x;
    return static_cast<float>(xd / (1.0 + std::exp(-xd)));
}

float gelu_tanh(float x) {
    // tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
    double xd = x;
    double inner = 0.7978845608028653558798921198687 * (xd + 0.044715 * xd * xd * xd);
    return static_cast<float>(0.5 * xd * (1.0 + std::tanh(inner)));
}

float apply_activation(Activation act, float x) {
    return act == Activation::Silu ? silu(x) : gelu_tanh(x);
}

Vec32 apply_activation(Activation act, const Vec32& v) {
    Vec32 out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = apply_activation(act, v[i]);
    return out;
}

static void check_gemv_dims(int64_t wr, int64_t wc, size_t xn, const char* name) {
    if (wc != static_cast<int64_t>(xn) || wr <= 0 || wc <= 0) {
        std::ostringstream oss;
        oss << name << ": shape mismatch, W is " << wr << "x" << wc << ", x has length " << xn;
        throw DataError(oss.str());
    }
}

Vec32 gemv(const Mat32& w, const Vec32& x) {
    check_gemv_dims(w.rows, w.cols, x.size(), "gemv");
    Vec32 out(static_cast<size_t>(w.rows));
    for (int64_t i = 0; i < w.rows; ++i) {
        const float* wr = w.row(i);
        float acc = 0.0f;
        for (int64_t j = 0; j < w.cols; ++j) acc += wr[j] * x[static_cast<size_t>(j)];
        out[static_cast<size_t>(i)] = acc;
    }
    return out;
}

Vec32 gemv_t(const Mat32& w, const Vec32& x) {
    if (w.rows != static_cast<int64_t>(x.size()) || w.rows <= 0 || w.cols <= 0) {
        std::ostringstream oss;
        oss << "gemv_t: shape mismatch, W is " << w.rows << "x" << w.cols << ", x has length "
            << x.size();
        throw DataError(oss.str());
    }
    Vec32 out(static_cast<size_t>(w.cols), 0.0f);
    for (int64_t i = 0; i < w.rows; ++i) {
        const float* wr = w.row(i);
        const float xi = x[static_cast<size_t>(i)];
        for (int64_t j = 0; j < w.cols; ++j) out[static_cast<size_t>(j)] += wr[j] * xi;
    }
    return out;
}

TopM top_m_threshold(const Vec32& v, int64_t m) {
    const int64_t n = static_cast<int64_t>(v.size());
    if (n == 0) throw DataError("top_m_threshold: empty vector");
    if (m < 0 || m > n) {
        std::ostringstream oss;
        oss << "top_m_threshold: m = " << m << " outside [0, " << n << "]";
        throw DataError(oss.str());
    }
    TopM r;
    r.mask.alive.assign(static_cast<size_t>(n), 0);
    r.mask.alive_count = m;
    if (m == 0) {
        r.tau = std::numeric_limits<float>::infinity();
        r.mask.tau = r.tau;
        return r;
    }
    std::vector<int32_t> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    // Total order: larger magnitude first, then lower index. The tie-break
    // makes the selected set unique.
    auto before = [&v](int32_t a, int32_t b) {
        float ma = std::fabs(v[static_cast<size_t>(a)]);
        float mb = std::fabs(v[static_cast<size_t>(b)]);
        if (ma != mb) return ma > mb;
        return a < b;
    };
    if (m == n) {
        r.tau = -std::numeric_limits<float>::infinity();
        for (auto& b : r.mask.alive) b = 1;
        r.mask.tau = r.tau;
        return r;
    }
    std::nth_element(idx.begin(), idx.begin() + m, idx.end(), before);
    r.tau = std::fabs(v[static_cast<size_t>(idx[static_cast<size_t>(m)])]);
    for (int64_t i = 0; i < m; ++i) r.mask.alive[static_cast<size_t>(idx[static_cast<size_t>(i)])] = 1;
    r.mask.tau = r.tau;
    return r;
}

} // namespace countdown
