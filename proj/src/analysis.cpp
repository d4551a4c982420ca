#include "countdown/analysis.hpp"

#include <sstream>

namespace countdown {

// The metrics only need equal lengths; equal alive counts are a property of
// triples built by make_triple (one m for all three), not a precondition.
static void check_triple(const MaskTriple& t) {
    if (t.s_mask.size() == 0 || t.s_mask.size() != t.u_mask.size() ||
        t.s_mask.size() != t.h_mask.size()) {
        std::ostringstream oss;
        oss << "mask triple: sizes differ (" << t.s_mask.size() << ", " << t.u_mask.size()
            << ", " << t.h_mask.size() << ")";
        throw DataError(oss.str());
    }
}

MaskTriple make_triple_from_vectors(const Vec32& s, const Vec32& u, const Vec32& h, int64_t m) {
    if (s.size() != u.size() || s.size() != h.size())
        throw DataError("make_triple_from_vectors: vector lengths differ");
    MaskTriple t;
    t.s_mask = top_m_threshold(s, m).mask;
    t.u_mask = top_m_threshold(u, m).mask;
    t.h_mask = top_m_threshold(h, m).mask;
    return t;
}

MaskTriple make_triple(const ForwardTrace& trace, double k) {
    const int64_t m = alive_count_for(k, static_cast<int64_t>(trace.s.size()));
    return make_triple_from_vectors(trace.s, trace.u, trace.h, m);
}

// Agreement counts between the s mask and the chosen indicator masks.
// "mine" is the indicator being scored, "other" the remaining one.
double cif(const MaskTriple& t, Which which, Polarity pol) {
    check_triple(t);
    const ActivationMask& other = which == Which::U ? t.h_mask : t.u_mask;
    const int64_t n = t.s_mask.size();
    int64_t denom = 0, num = 0;
    for (int64_t i = 0; i < n; ++i) {
        const bool s = t.s_mask.is_alive(i);
        const bool o = other.is_alive(i);
        if (pol == Polarity::Alive) {
            // Lanes s keeps that the other indicator would drop.
            denom += s;
            num += (s && !o);
        } else {
            // Lanes s drops that the other indicator would keep.
            denom += !s;
            num += (!s && o);
        }
    }
    if (denom == 0) throw DataError("cif: empty denominator");
    return static_cast<double>(num) / static_cast<double>(denom);
}

double caf(const MaskTriple& t, Which which, Polarity pol) {
    check_triple(t);
    const ActivationMask& mine = which == Which::U ? t.u_mask : t.h_mask;
    const ActivationMask& other = which == Which::U ? t.h_mask : t.u_mask;
    const int64_t n = t.s_mask.size();
    int64_t denom = 0, num = 0;
    for (int64_t i = 0; i < n; ++i) {
        const bool s = t.s_mask.is_alive(i);
        const bool m = mine.is_alive(i);
        const bool o = other.is_alive(i);
        if (pol == Polarity::Alive) {
            // As cif, but the scored indicator must actually keep the lane.
            denom += s;
            num += (s && !o && m);
        } else {
            denom += !s;
            num += (!s && o && !m);
        }
    }
    if (denom == 0) throw DataError("caf: empty denominator");
    return static_cast<double>(num) / static_cast<double>(denom);
}

std::vector<SweepRow> sweep(const GatedMlpLayer& layer, const std::vector<Vec32>& xs,
                            const std::vector<double>& ks) {
    if (xs.empty()) throw DataError("sweep: no samples");
    if (ks.empty()) throw DataError("sweep: no k values");
    std::vector<SweepRow> rows;
    for (double k : ks) {
        const int64_t m = alive_count_for(k, layer.d_inter);
        if (m < 1 || m >= layer.d_inter) {
            std::ostringstream oss;
            oss << "sweep: k = " << k << " leaves no lanes on one side at d_inter = "
                << layer.d_inter;
            throw DataError(oss.str());
        }
        // means[metric][which][polarity]
        double sums[2][2][2] = {};
        for (const auto& x : xs) {
            const MaskTriple t = make_triple(forward_dense(layer, x), k);
            for (int wi = 0; wi < 2; ++wi) {
                for (int pi = 0; pi < 2; ++pi) {
                    const Which w = wi == 0 ? Which::U : Which::H;
                    const Polarity p = pi == 0 ? Polarity::Alive : Polarity::Dead;
                    sums[0][wi][pi] += cif(t, w, p);
                    sums[1][wi][pi] += caf(t, w, p);
                }
            }
        }
        const double n = static_cast<double>(xs.size());
        for (int mi = 0; mi < 2; ++mi)
            for (int wi = 0; wi < 2; ++wi)
                for (int pi = 0; pi < 2; ++pi)
                    rows.push_back(SweepRow{k, mi == 0 ? "cif" : "caf", wi == 0 ? "u" : "h",
                                            pi == 0 ? "alive" : "dead",
                                            sums[mi][wi][pi] / n});
    }
    return rows;
}

} // namespace countdown
