#include "countdown/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace countdown {

float TernaryPredictor::gamma() const {
    double sum = 0.0;
    for (float v : shadow.data) sum += std::fabs(static_cast<double>(v));
    double g = sum / static_cast<double>(shadow.data.size());
    // Guard against an all-zero shadow; keeps the quantizer well-defined.
    if (!(g > 0.0)) g = 1e-12;
    return static_cast<float>(g);
}

std::vector<int8_t> TernaryPredictor::quantized() const {
    const float g = gamma();
    std::vector<int8_t> q(shadow.data.size());
    for (size_t i = 0; i < shadow.data.size(); ++i) {
        float r = std::round(shadow.data[i] / g);
        q[i] = static_cast<int8_t>(std::clamp(r, -1.0f, 1.0f));
    }
    return q;
}

PredictorKind Predictor::kind() const {
    return std::holds_alternative<LowRankPredictor>(impl) ? PredictorKind::LowRank
                                                          : PredictorKind::Ternary;
}

int64_t Predictor::d_model() const {
    return kind() == PredictorKind::LowRank ? lowrank().d_model : ternary().d_model;
}

int64_t Predictor::d_inter() const {
    return kind() == PredictorKind::LowRank ? lowrank().d_inter : ternary().d_inter;
}

const LowRankPredictor& Predictor::lowrank() const {
    if (kind() != PredictorKind::LowRank) throw DataError("predictor: not low-rank");
    return std::get<LowRankPredictor>(impl);
}

const TernaryPredictor& Predictor::ternary() const {
    if (kind() != PredictorKind::Ternary) throw DataError("predictor: not ternary");
    return std::get<TernaryPredictor>(impl);
}

static void fill_uniform(Mat32& m, int64_t fan_in, Rng& rng) {
    const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
    for (auto& v : m.data) v = bound * static_cast<float>(2.0 * rng.uniform() - 1.0);
}

Predictor make_lowrank_predictor(int64_t d_model, int64_t d_rank, int64_t d_inter, Rng& rng) {
    if (d_model <= 0 || d_rank <= 0 || d_inter <= 0)
        throw DataError("make_lowrank_predictor: dims must be positive");
    LowRankPredictor p;
    p.d_model = d_model;
    p.d_rank = d_rank;
    p.d_inter = d_inter;
    p.theta_a = Mat32(d_model, d_rank);
    p.theta_b = Mat32(d_rank, d_inter);
    fill_uniform(p.theta_a, d_model, rng);
    fill_uniform(p.theta_b, d_rank, rng);
    return Predictor{p};
}

Predictor make_ternary_predictor(int64_t d_model, int64_t d_inter, Rng& rng) {
    if (d_model <= 0 || d_inter <= 0)
        throw DataError("make_ternary_predictor: dims must be positive");
    TernaryPredictor p;
    p.d_model = d_model;
    p.d_inter = d_inter;
    p.shadow = Mat32(d_model, d_inter);
    fill_uniform(p.shadow, d_model, rng);
    return Predictor{p};
}

std::vector<std::vector<uint8_t>> build_targets(const GatedMlpLayer& layer,
                                                const std::vector<Vec32>& xs, double k) {
    const int64_t m = alive_count_for(k, layer.d_inter);
    std::vector<std::vector<uint8_t>> targets(xs.size());
    for (size_t t = 0; t < xs.size(); ++t) {
        const ForwardTrace trace = forward_dense(layer, xs[t]);
        targets[t] = top_m_threshold(trace.s, m).mask.alive;
    }
    return targets;
}

// x @ theta_a, m ascending: the same fold the training forward uses.
static Vec32 lowrank_latent(const LowRankPredictor& p, const Vec32& x) {
    Vec32 latent(static_cast<size_t>(p.d_rank), 0.0f);
    for (int64_t i = 0; i < p.d_model; ++i) {
        const float xi = x[static_cast<size_t>(i)];
        const float* ar = p.theta_a.row(i);
        for (int64_t r = 0; r < p.d_rank; ++r) latent[static_cast<size_t>(r)] += xi * ar[r];
    }
    return latent;
}

static Vec32 lowrank_logits(const LowRankPredictor& p, const Vec32& x) {
    const Vec32 latent = lowrank_latent(p, x);
    Vec32 z(static_cast<size_t>(p.d_inter), 0.0f);
    for (int64_t r = 0; r < p.d_rank; ++r) {
        const float lr = latent[static_cast<size_t>(r)];
        const float* br = p.theta_b.row(r);
        for (int64_t j = 0; j < p.d_inter; ++j) z[static_cast<size_t>(j)] += lr * br[j];
    }
    return z;
}

// Ternary forward on the quantized view: z = x @ (gamma * Q).
static Vec32 ternary_logits_quantized(const TernaryPredictor& p, const std::vector<int8_t>& q,
                                      float gamma, const Vec32& x) {
    Vec32 z(static_cast<size_t>(p.d_inter), 0.0f);
    for (int64_t i = 0; i < p.d_model; ++i) {
        const float xi = x[static_cast<size_t>(i)] * gamma;
        const int8_t* qr = q.data() + i * p.d_inter;
        for (int64_t j = 0; j < p.d_inter; ++j)
            z[static_cast<size_t>(j)] += xi * static_cast<float>(qr[j]);
    }
    return z;
}

Vec32 predict_logits(const Predictor& p, const Vec32& x) {
    if (static_cast<int64_t>(x.size()) != p.d_model()) {
        std::ostringstream oss;
        oss << "predict_logits: x has length " << x.size() << ", predictor d_model "
            << p.d_model();
        throw DataError(oss.str());
    }
    if (p.kind() == PredictorKind::LowRank) return lowrank_logits(p.lowrank(), x);
    const TernaryPredictor& t = p.ternary();
    return ternary_logits_quantized(t, t.quantized(), t.gamma(), x);
}

ActivationMask predict_mask(const Predictor& p, const Vec32& x) {
    const Vec32 z = predict_logits(p, x);
    ActivationMask mask = ActivationMask::none_alive(static_cast<int64_t>(z.size()));
    mask.tau = 0.0f;
    for (size_t i = 0; i < z.size(); ++i)
        if (z[i] > 0.0f) mask.alive[i] = 1;
    mask.recount();
    return mask;
}

// AdamW with decoupled weight decay over one flat parameter vector.
struct AdamState {
    std::vector<float> m, v;
    int64_t step = 0;

    explicit AdamState(size_t n) : m(n, 0.0f), v(n, 0.0f) {}

    void update(std::vector<float>& param, const std::vector<float>& grad, const TrainConfig& cfg) {
        ++step;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
        for (size_t i = 0; i < param.size(); ++i) {
            const double g = grad[i];
            const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            const double p = param[i];
            param[i] = static_cast<float>(
                p - cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * p));
        }
    }
};

// Numerically stable BCE on logits: max(z,0) - z*t + log1p(exp(-|z|)).
static double bce_loss(float z, uint8_t t) {
    const double zd = z;
    return std::max(zd, 0.0) - zd * static_cast<double>(t) + std::log1p(std::exp(-std::fabs(zd)));
}

static double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

TrainResult train_on_targets(Predictor& p, const std::vector<Vec32>& xs,
                             const std::vector<std::vector<uint8_t>>& targets,
                             const TrainConfig& cfg) {
    if (xs.size() != targets.size())
        throw DataError("train_on_targets: sample/target count mismatch");
    if (xs.empty()) throw DataError("train_on_targets: no samples");
    const int64_t n = static_cast<int64_t>(xs.size());
    const int64_t d_inter = p.d_inter();
    const int64_t d_model = p.d_model();
    for (const auto& t : targets)
        if (static_cast<int64_t>(t.size()) != d_inter)
            throw DataError("train_on_targets: target length mismatch");
    if (cfg.batch <= 0 || cfg.epochs < 0) throw DataError("train_on_targets: bad batch/epochs");

    TrainResult result;
    if (cfg.epochs == 0) return result;

    Rng rng(cfg.seed);
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    const bool low = p.kind() == PredictorKind::LowRank;
    LowRankPredictor* lp = low ? &std::get<LowRankPredictor>(p.impl) : nullptr;
    TernaryPredictor* tp = low ? nullptr : &std::get<TernaryPredictor>(p.impl);

    AdamState adam_a(low ? lp->theta_a.data.size() : 0);
    AdamState adam_b(low ? lp->theta_b.data.size() : 0);
    AdamState adam_s(low ? 0 : tp->shadow.data.size());

    std::vector<float> grad_a(low ? lp->theta_a.data.size() : 0);
    std::vector<float> grad_b(low ? lp->theta_b.data.size() : 0);
    std::vector<float> grad_s(low ? 0 : tp->shadow.data.size());

    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Seeded Fisher-Yates shuffle; batches are consecutive chunks.
        for (int64_t i = n - 1; i > 0; --i) {
            const int64_t j = static_cast<int64_t>(rng.next_u64() % static_cast<uint64_t>(i + 1));
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
        }
        double epoch_loss = 0.0;

        for (int64_t start = 0; start < n; start += cfg.batch) {
            const int64_t end = std::min(n, start + cfg.batch);
            const int64_t b = end - start;
            const double scale = 1.0 / (static_cast<double>(b) * static_cast<double>(d_inter));

            if (low) {
                std::fill(grad_a.begin(), grad_a.end(), 0.0f);
                std::fill(grad_b.begin(), grad_b.end(), 0.0f);
                for (int64_t bi = start; bi < end; ++bi) {
                    const Vec32& x = xs[static_cast<size_t>(order[static_cast<size_t>(bi)])];
                    const auto& tgt = targets[static_cast<size_t>(order[static_cast<size_t>(bi)])];
                    const Vec32 latent = lowrank_latent(*lp, x);
                    Vec32 z(static_cast<size_t>(d_inter), 0.0f);
                    for (int64_t r = 0; r < lp->d_rank; ++r) {
                        const float lr = latent[static_cast<size_t>(r)];
                        const float* br = lp->theta_b.row(r);
                        for (int64_t j = 0; j < d_inter; ++j)
                            z[static_cast<size_t>(j)] += lr * br[j];
                    }
                    // g = (sigmoid(z) - t) * scale, then backprop through both factors.
                    Vec32 gz(static_cast<size_t>(d_inter));
                    for (int64_t j = 0; j < d_inter; ++j) {
                        const float zj = z[static_cast<size_t>(j)];
                        epoch_loss += bce_loss(zj, tgt[static_cast<size_t>(j)]);
                        gz[static_cast<size_t>(j)] = static_cast<float>(
                            (sigmoid(zj) - static_cast<double>(tgt[static_cast<size_t>(j)])) * scale);
                    }
                    // grad_b[r][j] += latent[r] * gz[j]
                    for (int64_t r = 0; r < lp->d_rank; ++r) {
                        const float lr = latent[static_cast<size_t>(r)];
                        float* gb = grad_b.data() + r * d_inter;
                        for (int64_t j = 0; j < d_inter; ++j)
                            gb[j] += lr * gz[static_cast<size_t>(j)];
                    }
                    // glatent[r] = sum_j theta_b[r][j] * gz[j]; grad_a[i][r] += x[i] * glatent[r]
                    Vec32 glatent(static_cast<size_t>(lp->d_rank), 0.0f);
                    for (int64_t r = 0; r < lp->d_rank; ++r) {
                        const float* br = lp->theta_b.row(r);
                        float acc = 0.0f;
                        for (int64_t j = 0; j < d_inter; ++j)
                            acc += br[j] * gz[static_cast<size_t>(j)];
                        glatent[static_cast<size_t>(r)] = acc;
                    }
                    for (int64_t i = 0; i < d_model; ++i) {
                        const float xi = x[static_cast<size_t>(i)];
                        float* ga = grad_a.data() + i * lp->d_rank;
                        for (int64_t r = 0; r < lp->d_rank; ++r)
                            ga[r] += xi * glatent[static_cast<size_t>(r)];
                    }
                }
                adam_a.update(lp->theta_a.data, grad_a, cfg);
                adam_b.update(lp->theta_b.data, grad_b, cfg);
            } else {
                std::fill(grad_s.begin(), grad_s.end(), 0.0f);
                // gamma and the quantized view are refreshed every step.
                const float gamma = tp->gamma();
                const std::vector<int8_t> q = tp->quantized();
                for (int64_t bi = start; bi < end; ++bi) {
                    const Vec32& x = xs[static_cast<size_t>(order[static_cast<size_t>(bi)])];
                    const auto& tgt = targets[static_cast<size_t>(order[static_cast<size_t>(bi)])];
                    const Vec32 z = ternary_logits_quantized(*tp, q, gamma, x);
                    Vec32 gz(static_cast<size_t>(d_inter));
                    for (int64_t j = 0; j < d_inter; ++j) {
                        const float zj = z[static_cast<size_t>(j)];
                        epoch_loss += bce_loss(zj, tgt[static_cast<size_t>(j)]);
                        gz[static_cast<size_t>(j)] = static_cast<float>(
                            (sigmoid(zj) - static_cast<double>(tgt[static_cast<size_t>(j)])) * scale);
                    }
                    // Straight-through: treat the quantizer as identity.
                    for (int64_t i = 0; i < d_model; ++i) {
                        const float xi = x[static_cast<size_t>(i)];
                        float* gs = grad_s.data() + i * d_inter;
                        for (int64_t j = 0; j < d_inter; ++j)
                            gs[j] += xi * gz[static_cast<size_t>(j)];
                    }
                }
                adam_s.update(tp->shadow.data, grad_s, cfg);
            }
        }

        const double mean_loss =
            epoch_loss / (static_cast<double>(n) * static_cast<double>(d_inter));
        if (!std::isfinite(mean_loss)) {
            std::ostringstream oss;
            oss << "train: non-finite loss at epoch " << epoch;
            throw NumericError(oss.str());
        }
        result.epoch_loss.push_back(mean_loss);
    }
    return result;
}

TrainResult train(Predictor& p, const GatedMlpLayer& layer, const std::vector<Vec32>& xs,
                  const TrainConfig& cfg) {
    if (p.d_model() != layer.d_model || p.d_inter() != layer.d_inter) {
        std::ostringstream oss;
        oss << "train: predictor is " << p.d_model() << "->" << p.d_inter() << ", layer is "
            << layer.d_model << "->" << layer.d_inter;
        throw DataError(oss.str());
    }
    return train_on_targets(p, xs, build_targets(layer, xs, cfg.k), cfg);
}

MaskMetrics evaluate_masks(const std::vector<ActivationMask>& predicted,
                           const std::vector<std::vector<uint8_t>>& reference) {
    if (predicted.size() != reference.size() || predicted.empty())
        throw DataError("evaluate_masks: sample count mismatch or empty");
    double psum = 0.0, rsum = 0.0, fsum = 0.0, ssum = 0.0;
    for (size_t t = 0; t < predicted.size(); ++t) {
        const auto& pm = predicted[t];
        const auto& ref = reference[t];
        if (pm.alive.size() != ref.size())
            throw DataError("evaluate_masks: mask length mismatch");
        int64_t tp = 0, fp = 0, fn = 0;
        for (size_t i = 0; i < ref.size(); ++i) {
            const bool pi = pm.alive[i] != 0;
            const bool ri = ref[i] != 0;
            tp += (pi && ri);
            fp += (pi && !ri);
            fn += (!pi && ri);
        }
        const double prec = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        const double rec = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        const double f1 = (prec + rec) > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
        psum += prec;
        rsum += rec;
        fsum += f1;
        ssum += realized_sparsity(pm);
    }
    const double n = static_cast<double>(predicted.size());
    return MaskMetrics{psum / n, rsum / n, fsum / n, ssum / n};
}

MaskMetrics evaluate(const Predictor& p, const GatedMlpLayer& layer,
                     const std::vector<Vec32>& xs, double k) {
    std::vector<ActivationMask> predicted;
    predicted.reserve(xs.size());
    for (const auto& x : xs) predicted.push_back(predict_mask(p, x));
    return evaluate_masks(predicted, build_targets(layer, xs, k));
}

uint64_t footprint_bytes(const Predictor& p) {
    if (p.kind() == PredictorKind::LowRank) {
        const LowRankPredictor& lp = p.lowrank();
        const uint64_t params = static_cast<uint64_t>(lp.d_model) * lp.d_rank +
                                static_cast<uint64_t>(lp.d_rank) * lp.d_inter;
        return params * 2;  // f16 per parameter
    }
    const TernaryPredictor& tp = p.ternary();
    const uint64_t bits = static_cast<uint64_t>(tp.d_model) * tp.d_inter * 2;
    return (bits + 7) / 8 + 2;  // packed 2-bit weights + one f16 scale
}

} // namespace countdown
