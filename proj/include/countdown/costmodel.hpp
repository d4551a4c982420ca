// Analytical per-token FLOPs and memory-traffic model for one gated-MLP
// layer under each execution method. Traffic is counted in f32 elements;
// the MB figure is elements / 2^20. s_alive is the kept-lane count.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "countdown/sparsity.hpp"

namespace countdown {

struct ShapeSpec {
    int64_t d_model = 0;
    int64_t d_inter = 0;
    int64_t d_rank = 0;
    int64_t c_act = 5;    // FLOPs per activation evaluation
    int64_t s_alive = 0;  // kept lanes; derived from k via alive_count_for
};

ShapeSpec llama3_8b_shape();  // 4096 / 14336 / 512

// Copy of base with s_alive = alive_count_for(k, d_inter).
ShapeSpec shape_at_k(const ShapeSpec& base, double k);

int64_t flops_dense(const ShapeSpec& s);
int64_t flops_cats(const ShapeSpec& s);
int64_t flops_mc(const ShapeSpec& s);
int64_t flops_dc(const ShapeSpec& s);
// dc with the predictor pass excluded (oracle masks, no d_rank needed):
// every d_rank term of the dc forms drops out.
int64_t flops_dc_oracle(const ShapeSpec& s);

// Traffic split by stream class; categories match the instrumented executor.
struct TrafficSplit {
    int64_t weight_reads = 0;
    int64_t vector_reads = 0;
    int64_t writes = 0;
    int64_t total() const { return weight_reads + vector_reads + writes; }
};

TrafficSplit traffic_dense_split(const ShapeSpec& s);
TrafficSplit traffic_cats_split(const ShapeSpec& s);
TrafficSplit traffic_mc_split(const ShapeSpec& s);
TrafficSplit traffic_dc_split(const ShapeSpec& s);

int64_t traffic_dense(const ShapeSpec& s);
int64_t traffic_cats(const ShapeSpec& s);
int64_t traffic_mc(const ShapeSpec& s);
int64_t traffic_dc(const ShapeSpec& s);
int64_t traffic_dc_oracle(const ShapeSpec& s);

double elements_to_mb(int64_t elements);

enum class CostMethod { Dense, Cats, MC, DC };

const char* cost_method_name(CostMethod m);
CostMethod cost_method_from_name(const std::string& name);

struct CostReport {
    std::string method;
    double k = 0.0;  // 0 for dense
    int64_t s_alive = 0;
    int64_t flops = 0;
    int64_t traffic_elements = 0;
    double flops_m = 0.0;
    double traffic_mb = 0.0;
};

CostReport cost_report(CostMethod method, const ShapeSpec& base, double k);

// Dense row followed by cats/mc/dc at each k, in the given k order.
std::vector<CostReport> cost_table(const ShapeSpec& base, const std::vector<double>& ks);

} // namespace countdown
