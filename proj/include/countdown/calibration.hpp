// Offline threshold calibration for practical cats/mc: tau_hat is the mean
// over calibration samples of each sample's exact top-m indicator threshold.
#pragma once

#include <vector>

#include "countdown/sparsity.hpp"

namespace countdown {

struct CalibrationStats {
    double tau_hat = 0.0;
    double k = 0.0;
    SparsityMethod indicator = SparsityMethod::MCountdown;
    int64_t t_samples = 0;
    std::vector<float> per_sample_taus;
};

// indicator selects |h| (Cats) or |u| (MCountdown); DCountdown uses a trained
// predictor instead of a constant and is rejected here.
CalibrationStats calibrate(const GatedMlpLayer& layer, const std::vector<Vec32>& xs,
                           double k, SparsityMethod indicator);

} // namespace countdown
