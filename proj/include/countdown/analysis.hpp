// Mask-agreement analysis between the three indicators. With S/U/H the
// equal-size top-m masks of |s|, |u|, |h|:
//   cif(U, alive) = |S ∧ ¬H| / |S|   (u rescues lanes h would drop)
//   caf(U, alive) = |S ∧ ¬H ∧ U| / |S|   (and u actually keeps them)
// Dead polarity swaps the roles of kept and dropped lanes; which = H
// swaps u and h. sweep averages all eight metrics over inputs per k.
#pragma once

#include <string>
#include <vector>

#include "countdown/sparsity.hpp"

namespace countdown {

struct MaskTriple {
    ActivationMask s_mask;
    ActivationMask u_mask;
    ActivationMask h_mask;
};

enum class Which { U, H };
enum class Polarity { Alive, Dead };

// Top-m masks of |s|, |u|, |h| from one trace; m = alive_count_for(k).
MaskTriple make_triple(const ForwardTrace& trace, double k);
MaskTriple make_triple_from_vectors(const Vec32& s, const Vec32& u, const Vec32& h, int64_t m);

double cif(const MaskTriple& t, Which which, Polarity pol);
double caf(const MaskTriple& t, Which which, Polarity pol);

struct SweepRow {
    double k = 0.0;
    std::string metric;    // "cif" | "caf"
    std::string which;     // "u" | "h"
    std::string polarity;  // "alive" | "dead"
    double value = 0.0;
};

// Row order: for each k, metric (cif, caf) x which (u, h) x polarity
// (alive, dead), giving a byte-stable CSV.
std::vector<SweepRow> sweep(const GatedMlpLayer& layer, const std::vector<Vec32>& xs,
                            const std::vector<double>& ks);

} // namespace countdown
