#include "countdown/calibration.hpp"

#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace countdown {

CalibrationStats calibrate(const GatedMlpLayer& layer, const std::vector<Vec32>& xs,
                           double k, SparsityMethod indicator) {
    if (indicator == SparsityMethod::DCountdown)
        throw DataError("calibrate: dc uses a trained predictor, not a constant threshold");
    if (xs.empty()) throw DataError("calibrate: no calibration samples");
    const int64_t m = alive_count_for(k, layer.d_inter);

    CalibrationStats stats;
    stats.k = k;
    stats.indicator = indicator;
    stats.t_samples = static_cast<int64_t>(xs.size());
    stats.per_sample_taus.resize(xs.size());

    const int64_t n = static_cast<int64_t>(xs.size());
#pragma omp parallel for schedule(static)
    for (int64_t t = 0; t < n; ++t) {
        const ForwardTrace trace = forward_dense(layer, xs[static_cast<size_t>(t)]);
        const Vec32& v = indicator == SparsityMethod::Cats ? trace.h : trace.u;
        stats.per_sample_taus[static_cast<size_t>(t)] = top_m_threshold(v, m).tau;
    }

    // Fixed ascending-order mean so the result is independent of thread count.
    double sum = 0.0;
    for (float tau : stats.per_sample_taus) sum += static_cast<double>(tau);
    stats.tau_hat = sum / static_cast<double>(n);
    return stats;
}

} // namespace countdown
