#include "countdown/costmodel.hpp"

#include <sstream>

namespace countdown {

ShapeSpec llama3_8b_shape() { return ShapeSpec{4096, 14336, 512, 5, 0}; }

ShapeSpec shape_at_k(const ShapeSpec& base, double k) {
    ShapeSpec s = base;
    s.s_alive = alive_count_for(k, base.d_inter);
    return s;
}

static void check_shape(const ShapeSpec& s, bool needs_rank, bool needs_alive, const char* who) {
    if (s.d_model <= 0 || s.d_inter <= 0 || s.c_act < 0 ||
        (needs_rank && s.d_rank <= 0) || (needs_alive && s.s_alive < 0)) {
        std::ostringstream oss;
        oss << who << ": bad shape d_model=" << s.d_model << " d_inter=" << s.d_inter
            << " d_rank=" << s.d_rank << " s_alive=" << s.s_alive;
        throw DataError(oss.str());
    }
}

// FLOPs per token: one dense GEMV is 2*rows*cols (multiply + add), the
// activation costs c_act per evaluation, elementwise product one per lane.
int64_t flops_dense(const ShapeSpec& s) {
    check_shape(s, false, false, "flops_dense");
    return 6 * s.d_model * s.d_inter + s.c_act * s.d_inter + s.d_inter;
}

// Full gate pass + activation + |.| and compare, then sparse up and down.
int64_t flops_cats(const ShapeSpec& s) {
    check_shape(s, false, true, "flops_cats");
    return 2 * s.d_model * s.d_inter + s.c_act * s.d_inter + 2 * s.d_inter +
           4 * s.d_model * s.s_alive + s.s_alive;
}

// Full up pass + |.| and compare, then sparse gate (activation only on
// surviving lanes) and sparse down.
int64_t flops_mc(const ShapeSpec& s) {
    check_shape(s, false, true, "flops_mc");
    return 2 * s.d_model * s.d_inter + 2 * s.d_inter + 4 * s.d_model * s.s_alive +
           s.c_act * s.s_alive + s.s_alive;
}

// Low-rank predictor pass + compare, then sparse up, gate and down.
int64_t flops_dc(const ShapeSpec& s) {
    check_shape(s, true, true, "flops_dc");
    return 2 * s.d_model * s.d_rank + 2 * s.d_rank * s.d_inter + s.d_inter +
           6 * s.d_model * s.s_alive + s.c_act * s.s_alive + s.s_alive;
}

int64_t flops_dc_oracle(const ShapeSpec& s) {
    check_shape(s, false, true, "flops_dc_oracle");
    return s.d_inter + 6 * s.d_model * s.s_alive + s.c_act * s.s_alive + s.s_alive;
}

TrafficSplit traffic_dense_split(const ShapeSpec& s) {
    check_shape(s, false, false, "traffic_dense");
    TrafficSplit t;
    t.weight_reads = 3 * s.d_model * s.d_inter;
    t.vector_reads = 2 * s.d_model + 4 * s.d_inter;
    t.writes = 4 * s.d_inter + s.d_model;
    return t;
}

TrafficSplit traffic_cats_split(const ShapeSpec& s) {
    check_shape(s, false, true, "traffic_cats");
    TrafficSplit t;
    t.weight_reads = s.d_model * s.d_inter + 2 * s.d_model * s.s_alive;
    t.vector_reads = 2 * s.d_model + 5 * s.d_inter + s.s_alive;
    t.writes = 5 * s.d_inter + s.d_model;
    return t;
}

TrafficSplit traffic_mc_split(const ShapeSpec& s) {
    check_shape(s, false, true, "traffic_mc");
    TrafficSplit t;
    t.weight_reads = s.d_model * s.d_inter + 2 * s.d_model * s.s_alive;
    t.vector_reads = 2 * s.d_model + 4 * s.d_inter + s.s_alive;
    t.writes = 4 * s.d_inter + s.d_model;
    return t;
}

TrafficSplit traffic_dc_split(const ShapeSpec& s) {
    check_shape(s, true, true, "traffic_dc");
    TrafficSplit t;
    t.weight_reads = s.d_model * s.d_rank + s.d_rank * s.d_inter + 3 * s.d_model * s.s_alive;
    t.vector_reads = 2 * s.d_model + s.d_rank + 3 * s.d_inter;
    t.writes = 3 * s.d_inter + s.d_rank + s.d_model;
    return t;
}

int64_t traffic_dense(const ShapeSpec& s) { return traffic_dense_split(s).total(); }
int64_t traffic_cats(const ShapeSpec& s) { return traffic_cats_split(s).total(); }
int64_t traffic_mc(const ShapeSpec& s) { return traffic_mc_split(s).total(); }
int64_t traffic_dc(const ShapeSpec& s) { return traffic_dc_split(s).total(); }

int64_t traffic_dc_oracle(const ShapeSpec& s) {
    check_shape(s, false, true, "traffic_dc_oracle");
    return 3 * s.d_model * s.s_alive + 2 * s.d_model + 3 * s.d_inter + 3 * s.d_inter + s.d_model;
}

double elements_to_mb(int64_t elements) {
    return static_cast<double>(elements) / 1048576.0;
}

const char* cost_method_name(CostMethod m) {
    switch (m) {
        case CostMethod::Dense: return "dense";
        case CostMethod::Cats: return "cats";
        case CostMethod::MC: return "mc";
        case CostMethod::DC: return "dc";
    }
    return "?";
}

CostMethod cost_method_from_name(const std::string& name) {
    if (name == "dense") return CostMethod::Dense;
    if (name == "cats") return CostMethod::Cats;
    if (name == "mc") return CostMethod::MC;
    if (name == "dc") return CostMethod::DC;
    throw DataError("unknown method '" + name + "' (expected dense|cats|mc|dc)");
}

CostReport cost_report(CostMethod method, const ShapeSpec& base, double k) {
    CostReport r;
    r.method = cost_method_name(method);
    if (method == CostMethod::Dense) {
        r.k = 0.0;
        r.s_alive = 0;
        r.flops = flops_dense(base);
        r.traffic_elements = traffic_dense(base);
    } else {
        const ShapeSpec s = shape_at_k(base, k);
        r.k = k;
        r.s_alive = s.s_alive;
        switch (method) {
            case CostMethod::Cats:
                r.flops = flops_cats(s);
                r.traffic_elements = traffic_cats(s);
                break;
            case CostMethod::MC:
                r.flops = flops_mc(s);
                r.traffic_elements = traffic_mc(s);
                break;
            default:
                r.flops = flops_dc(s);
                r.traffic_elements = traffic_dc(s);
                break;
        }
    }
    r.flops_m = static_cast<double>(r.flops) / 1e6;
    r.traffic_mb = elements_to_mb(r.traffic_elements);
    return r;
}

std::vector<CostReport> cost_table(const ShapeSpec& base, const std::vector<double>& ks) {
    std::vector<CostReport> rows;
    rows.push_back(cost_report(CostMethod::Dense, base, 0.0));
    for (double k : ks) {
        rows.push_back(cost_report(CostMethod::Cats, base, k));
        rows.push_back(cost_report(CostMethod::MC, base, k));
        rows.push_back(cost_report(CostMethod::DC, base, k));
    }
    return rows;
}

} // namespace countdown
