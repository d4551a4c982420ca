// countdown CLI: model/input generation, threshold calibration, predictor
// training, sparse-vs-dense inference reports, analytic cost tables, kernel
// benchmarks, and mask-agreement sweeps. All outputs are deterministic for a
// fixed flag set; --timestamps opts in to a wall-clock field where supported.
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "countdown/analysis.hpp"
#include "countdown/blocked_exec.hpp"
#include "countdown/calibration.hpp"
#include "countdown/costmodel.hpp"
#include "countdown/errors.hpp"
#include "countdown/gated_mlp.hpp"
#include "countdown/model_io.hpp"
#include "countdown/predictor.hpp"
#include "countdown/sparsity.hpp"

using nlohmann::json;
using namespace countdown;

namespace {

std::string fmt(const char* f, ...) {
    char buf[256];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return std::string(buf);
}

void emit(const std::string& out_path, const std::string& text) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + out_path + "' for writing");
    out << text;
    if (!out) throw DataError("write to '" + out_path + "' failed");
}

std::vector<Vec32> gaussian_inputs(int64_t n, int64_t d_model, Rng& rng) {
    if (n <= 0) throw DataError("sample count must be >= 1");
    std::vector<Vec32> xs(n);
    for (auto& x : xs) {
        x.resize(d_model);
        for (auto& v : x) v = rng.normal_f();
    }
    return xs;
}

std::vector<Vec32> load_inputs(const std::string& path, int64_t d_model) {
    RawMatrix m = read_matrix_file(path);
    if (m.cols != d_model) {
        throw DataError(fmt("%s: input width %lld does not match model d_model %lld",
                            path.c_str(), (long long)m.cols, (long long)d_model));
    }
    std::vector<Vec32> xs(m.rows);
    for (int64_t i = 0; i < m.rows; ++i) xs[i] = m.row_vec(i);
    return xs;
}

std::string utc_now() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return std::string(buf);
}

// ---- gen-model ----

struct GenModelArgs {
    int64_t d_model = 0, d_inter = 0;
    std::string activation = "silu";
    uint64_t seed = 42;
    std::string out;
};

void cmd_gen_model(const GenModelArgs& a) {
    Rng rng(a.seed);
    ModelFile mf;
    mf.layer = make_random_layer(a.d_model, a.d_inter, activation_from_name(a.activation), rng);
    mf.seed = a.seed;
    write_model(a.out, mf);
}

// ---- gen-inputs ----

struct GenInputsArgs {
    int64_t n = 0, d_model = 0;
    uint64_t seed = 42;
    std::string out;
};

void cmd_gen_inputs(const GenInputsArgs& a) {
    if (a.n <= 0 || a.d_model <= 0) throw DataError("gen-inputs: n and d-model must be >= 1");
    Rng rng(a.seed);
    std::vector<float> data(static_cast<size_t>(a.n) * a.d_model);
    for (auto& v : data) v = rng.normal_f();
    write_matrix_file(a.out, a.n, a.d_model, data.data());
}

// ---- calibrate ----

struct CalibrateArgs {
    std::string model, inputs, out;
    double k = 0.0;
    int64_t samples = 512;
    std::string indicator = "u";
    uint64_t seed = 42;
};

void cmd_calibrate(const CalibrateArgs& a) {
    ModelFile mf = read_model(a.model);
    std::vector<Vec32> xs;
    if (!a.inputs.empty()) {
        xs = load_inputs(a.inputs, mf.layer.d_model);
    } else {
        Rng rng(a.seed);
        xs = gaussian_inputs(a.samples, mf.layer.d_model, rng);
    }
    const SparsityMethod ind =
        a.indicator == "u" ? SparsityMethod::MCountdown : SparsityMethod::Cats;
    CalibrationStats stats = calibrate(mf.layer, xs, a.k, ind);
    write_calibration_json(a.out, stats);
}

// ---- train-predictor ----

struct TrainArgs {
    std::string model, out;
    double k = 0.7;
    std::string kind = "lowrank";
    int64_t rank = 16;
    int64_t epochs = 80;
    double lr = 1e-3;
    int64_t batch = 16;
    int64_t n_samples = 2048;
    uint64_t seed = 42;
};

void cmd_train_predictor(const TrainArgs& a) {
    ModelFile mf = read_model(a.model);
    Rng root(a.seed);
    Rng data_rng = root.fork();
    Rng init_rng = root.fork();
    std::vector<Vec32> xs = gaussian_inputs(a.n_samples, mf.layer.d_model, data_rng);

    Predictor p = a.kind == "lowrank"
                      ? make_lowrank_predictor(mf.layer.d_model, a.rank, mf.layer.d_inter, init_rng)
                      : make_ternary_predictor(mf.layer.d_model, mf.layer.d_inter, init_rng);

    TrainConfig cfg;
    cfg.lr = a.lr;
    cfg.batch = a.batch;
    cfg.epochs = a.epochs;
    cfg.seed = a.seed;
    cfg.k = a.k;
    TrainResult tr = train(p, mf.layer, xs, cfg);
    MaskMetrics mm = evaluate(p, mf.layer, xs, a.k);

    mf.predictor = std::move(p);
    mf.predictor_k = a.k;
    write_model(a.out, mf);

    std::ostringstream loss_csv;
    loss_csv << "epoch,loss\n";
    for (size_t e = 0; e < tr.epoch_loss.size(); ++e)
        loss_csv << (e + 1) << "," << fmt("%.10g", tr.epoch_loss[e]) << "\n";
    emit(a.out + ".loss.csv", loss_csv.str());

    json mj;
    mj["schema"] = "v1";
    mj["kind"] = a.kind;
    mj["k"] = a.k;
    mj["epochs"] = a.epochs;
    mj["n_samples"] = a.n_samples;
    mj["precision"] = mm.precision;
    mj["recall"] = mm.recall;
    mj["f1"] = mm.f1;
    mj["realized_sparsity"] = mm.realized_sparsity;
    mj["footprint_bytes"] = footprint_bytes(*mf.predictor);
    emit(a.out + ".metrics.json", mj.dump(2) + "\n");
}

// ---- infer ----

struct InferArgs {
    std::string model, inputs, report, calibration;
    std::string method = "dense";
    std::string mode = "ideal";
    double k = 0.7;
    bool timestamps = false;
};

SparsityMethod sparsity_method_from_name(const std::string& s) {
    if (s == "cats") return SparsityMethod::Cats;
    if (s == "mc") return SparsityMethod::MCountdown;
    if (s == "dc") return SparsityMethod::DCountdown;
    throw DataError("unknown sparsity method '" + s + "'");
}

void cmd_infer(const InferArgs& a) {
    ModelFile mf = read_model(a.model);
    const std::vector<Vec32> xs = load_inputs(a.inputs, mf.layer.d_model);
    const bool dense = a.method == "dense";
    const bool practical = a.mode == "practical";

    std::optional<CalibrationStats> cal;
    if (!dense && practical && a.method != "dc") {
        if (a.calibration.empty())
            throw DataError("practical " + a.method + " requires --calibration");
        cal = read_calibration_json(a.calibration);
        const SparsityMethod want = sparsity_method_from_name(a.method);
        if (cal->indicator != want)
            throw DataError(a.calibration + ": calibration indicator does not match --method " +
                            a.method);
        if (std::abs(cal->k - a.k) > 1e-9)
            throw DataError(fmt("%s: calibration k=%.4f does not match --k %.4f",
                                a.calibration.c_str(), cal->k, a.k));
    }
    if (!dense && practical && a.method == "dc" && !mf.predictor)
        throw DataError(a.model + ": practical dc requires an embedded predictor");

    json samples = json::array();
    double dev_sum = 0.0, dev_max = 0.0, sp_sum = 0.0, alive_sum = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        const ForwardTrace trace = forward_dense(mf.layer, xs[i]);
        Vec32 y;
        double realized = 0.0;
        int64_t alive = mf.layer.d_inter;
        if (dense) {
            y = trace.y;
        } else {
            SparsityConfig cfg{sparsity_method_from_name(a.method),
                               practical ? SparsityMode::Practical : SparsityMode::Ideal, a.k};
            ActivationMask mask;
            if (practical) {
                PracticalContext ctx;
                if (cal) ctx.tau_hat = static_cast<float>(cal->tau_hat);
                if (a.method == "dc") ctx.predictor = &*mf.predictor;
                PracticalResult pr = forward_practical(mf.layer, xs[i], cfg, ctx);
                y = std::move(pr.y);
                mask = std::move(pr.mask);
            } else {
                mask = threshold_ideal(trace, cfg);
                y = forward_sparse(mf.layer, xs[i], mask);
            }
            realized = realized_sparsity(mask);
            alive = mask.alive_count;
        }
        double num = 0.0, den = 0.0;
        for (size_t j = 0; j < y.size(); ++j) {
            const double d = static_cast<double>(trace.y[j]) - static_cast<double>(y[j]);
            num += d * d;
            den += static_cast<double>(trace.y[j]) * trace.y[j];
        }
        const double dev = den > 0.0 ? std::sqrt(num) / std::sqrt(den) : (num > 0.0 ? 1.0 : 0.0);
        dev_sum += dev;
        dev_max = std::max(dev_max, dev);
        sp_sum += realized;
        alive_sum += static_cast<double>(alive);

        json row;
        row["index"] = i;
        row["checksum"] = checksum_hex(y.data(), y.size() * 4);
        row["realized_sparsity"] = realized;
        row["deviation"] = dev;
        samples.push_back(row);
    }

    const double n = static_cast<double>(xs.size());
    const int64_t mean_alive = static_cast<int64_t>(std::llround(alive_sum / n));

    ShapeSpec base;
    base.d_model = mf.layer.d_model;
    base.d_inter = mf.layer.d_inter;
    bool predictor_costed = false;
    if (a.method == "dc" && mf.predictor && mf.predictor->kind() == PredictorKind::LowRank) {
        base.d_rank = mf.predictor->lowrank().d_rank;
        predictor_costed = true;
    }
    ShapeSpec at = base;
    at.s_alive = dense ? 0 : mean_alive;
    const CostMethod cm = cost_method_from_name(a.method);
    int64_t flops = 0, traffic = 0;
    switch (cm) {
        case CostMethod::Dense: flops = flops_dense(at); traffic = traffic_dense(at); break;
        case CostMethod::Cats: flops = flops_cats(at); traffic = traffic_cats(at); break;
        case CostMethod::MC: flops = flops_mc(at); traffic = traffic_mc(at); break;
        case CostMethod::DC:
            // Without an embedded low-rank predictor (ideal mode, or a
            // ternary predictor) the mask is costed as free: oracle forms.
            flops = predictor_costed ? flops_dc(at) : flops_dc_oracle(at);
            traffic = predictor_costed ? traffic_dc(at) : traffic_dc_oracle(at);
            break;
    }

    json rep;
    rep["schema"] = "v1";
    json cfgj;
    cfgj["model"] = a.model;
    cfgj["inputs"] = a.inputs;
    cfgj["method"] = a.method;
    cfgj["mode"] = dense ? "n/a" : a.mode;
    cfgj["k"] = dense ? 0.0 : a.k;
    cfgj["n_samples"] = xs.size();
    cfgj["d_model"] = mf.layer.d_model;
    cfgj["d_inter"] = mf.layer.d_inter;
    cfgj["activation"] = activation_name(mf.layer.activation);
    if (!a.calibration.empty()) cfgj["calibration"] = a.calibration;
    rep["config"] = cfgj;
    rep["samples"] = samples;
    json sum;
    sum["mean_deviation"] = dev_sum / n;
    sum["max_deviation"] = dev_max;
    sum["mean_realized_sparsity"] = sp_sum / n;
    sum["mean_alive"] = mean_alive;
    rep["summary"] = sum;
    json cj;
    cj["method"] = a.method;
    cj["k"] = dense ? 0.0 : a.k;
    cj["s_alive"] = at.s_alive;
    cj["flops"] = flops;
    cj["flops_m"] = static_cast<double>(flops) / 1e6;
    cj["traffic_elements"] = traffic;
    cj["traffic_mb"] = elements_to_mb(traffic);
    if (a.method == "dc") cj["predictor_cost_included"] = predictor_costed;
    rep["cost"] = cj;
    if (a.timestamps) rep["generated_at"] = utc_now();
    emit(a.report, rep.dump(2) + "\n");
}

// ---- cost ----

struct CostArgs {
    std::string preset;
    int64_t d_model = 0, d_inter = 0, d_rank = 0;
    std::vector<double> k_list{0.7, 0.8, 0.9};
    std::string format = "csv";
    std::string out;
};

ShapeSpec shape_from_flags(const std::string& preset, int64_t d_model, int64_t d_inter,
                           int64_t d_rank) {
    if (!preset.empty()) return llama3_8b_shape();
    if (d_model <= 0 || d_inter <= 0)
        throw DataError("either --preset or positive --d-model/--d-inter is required");
    ShapeSpec s;
    s.d_model = d_model;
    s.d_inter = d_inter;
    s.d_rank = d_rank;
    return s;
}

void cmd_cost(const CostArgs& a) {
    const ShapeSpec base = shape_from_flags(a.preset, a.d_model, a.d_inter, a.d_rank);
    const std::vector<CostReport> table = cost_table(base, a.k_list);
    if (a.format == "csv") {
        std::ostringstream csv;
        csv << "method,k,flops_m,mem_mb\n";
        for (const auto& r : table)
            csv << r.method << "," << fmt("%.2f", r.k) << "," << fmt("%.2f", r.flops_m) << ","
                << fmt("%.3f", r.traffic_mb) << "\n";
        emit(a.out, csv.str());
    } else {
        json rows = json::array();
        for (const auto& r : table) {
            json j;
            j["method"] = r.method;
            j["k"] = r.k;
            j["s_alive"] = r.s_alive;
            j["flops"] = r.flops;
            j["flops_m"] = r.flops_m;
            j["traffic_elements"] = r.traffic_elements;
            j["traffic_mb"] = r.traffic_mb;
            rows.push_back(j);
        }
        emit(a.out, rows.dump(2) + "\n");
    }
}

// ---- bench ----

struct BenchArgs {
    std::string model, preset, out;
    std::string method = "dense";
    double k = 0.7;
    int64_t iters = 50;
    int64_t blk_m = 16, blk_n = 256;
    std::string reduction = "ordered";
    uint64_t seed = 42;
    bool seed_given = false;
    bool compare_reference = false;
};

void cmd_bench(const BenchArgs& a) {
    ShapeSpec shape;
    uint64_t seed = a.seed;
    if (!a.model.empty()) {
        ModelFile mf = read_model(a.model);
        shape.d_model = mf.layer.d_model;
        shape.d_inter = mf.layer.d_inter;
        if (mf.predictor && mf.predictor->kind() == PredictorKind::LowRank)
            shape.d_rank = mf.predictor->lowrank().d_rank;
        if (!a.seed_given) seed = mf.seed;
    } else if (!a.preset.empty()) {
        shape = llama3_8b_shape();
    } else {
        throw DataError("bench requires --model or --preset");
    }

    BlockConfig cfg;
    cfg.blk_m = a.blk_m;
    cfg.blk_n = a.blk_n;
    cfg.reduction = a.reduction == "unordered" ? Reduction::UnorderedAccumulate
                                               : Reduction::DeterministicOrdered;
    std::vector<BenchStats> rows;
    rows.push_back(bench(cost_method_from_name(a.method), shape, a.k, a.iters, cfg, seed));
    if (a.compare_reference) rows.push_back(bench_reference_dense(shape, a.iters, seed));

    std::ostringstream csv;
    csv << "method,k,d_model,d_inter,p50_ns,p95_ns,element_read_ratio\n";
    for (const auto& r : rows)
        csv << r.method << "," << fmt("%.2f", r.k) << "," << r.d_model << "," << r.d_inter << ","
            << r.p50_ns << "," << r.p95_ns << "," << fmt("%.6f", r.element_read_ratio) << "\n";
    emit(a.out, csv.str());
}

// ---- analyze ----

struct AnalyzeArgs {
    std::string model, out;
    std::vector<double> k_list{0.7, 0.8, 0.9};
    int64_t n_samples = 64;
    uint64_t seed = 7;
};

void cmd_analyze(const AnalyzeArgs& a) {
    ModelFile mf = read_model(a.model);
    Rng rng(a.seed);
    const std::vector<Vec32> xs = gaussian_inputs(a.n_samples, mf.layer.d_model, rng);
    const std::vector<SweepRow> rows = sweep(mf.layer, xs, a.k_list);
    std::ostringstream csv;
    csv << "k,metric,which,polarity,value\n";
    for (const auto& r : rows)
        csv << fmt("%.2f", r.k) << "," << r.metric << "," << r.which << "," << r.polarity << ","
            << fmt("%.6f", r.value) << "\n";
    emit(a.out, csv.str());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"countdown: sparse gated-MLP activation toolkit"};
    app.require_subcommand(1);

    GenModelArgs gm;
    auto* sgm = app.add_subcommand("gen-model", "generate a random gated-MLP layer file");
    sgm->add_option("--d-model", gm.d_model)->required()->check(CLI::PositiveNumber);
    sgm->add_option("--d-inter", gm.d_inter)->required()->check(CLI::PositiveNumber);
    sgm->add_option("--activation", gm.activation)->check(CLI::IsMember({"silu", "gelu"}));
    sgm->add_option("--seed", gm.seed);
    sgm->add_option("--out", gm.out)->required();
    sgm->callback([&] { cmd_gen_model(gm); });

    GenInputsArgs gi;
    auto* sgi = app.add_subcommand("gen-inputs", "generate a Gaussian input matrix file");
    sgi->add_option("--n", gi.n)->required();
    sgi->add_option("--d-model", gi.d_model)->required();
    sgi->add_option("--seed", gi.seed);
    sgi->add_option("--out", gi.out)->required();
    sgi->callback([&] { cmd_gen_inputs(gi); });

    CalibrateArgs ca;
    auto* sca = app.add_subcommand("calibrate", "estimate a layerwise threshold tau_hat");
    sca->add_option("--model", ca.model)->required();
    sca->add_option("--k", ca.k)->required();
    sca->add_option("--samples", ca.samples);
    sca->add_option("--indicator", ca.indicator)->check(CLI::IsMember({"u", "h"}));
    sca->add_option("--inputs", ca.inputs);
    sca->add_option("--seed", ca.seed);
    sca->add_option("--out", ca.out)->required();
    sca->callback([&] { cmd_calibrate(ca); });

    TrainArgs ta;
    auto* sta = app.add_subcommand("train-predictor", "train a dc mask predictor");
    sta->add_option("--model", ta.model)->required();
    sta->add_option("--k", ta.k);
    sta->add_option("--kind", ta.kind)->check(CLI::IsMember({"lowrank", "ternary"}));
    sta->add_option("--rank", ta.rank)->check(CLI::PositiveNumber);
    sta->add_option("--epochs", ta.epochs);
    sta->add_option("--lr", ta.lr);
    sta->add_option("--batch", ta.batch)->check(CLI::PositiveNumber);
    sta->add_option("--n-samples", ta.n_samples)->check(CLI::PositiveNumber);
    sta->add_option("--seed", ta.seed);
    sta->add_option("--out", ta.out)->required();
    sta->callback([&] { cmd_train_predictor(ta); });

    InferArgs ia;
    auto* sia = app.add_subcommand("infer", "run forwards and write a deviation report");
    sia->add_option("--model", ia.model)->required();
    sia->add_option("--method", ia.method)
        ->required()
        ->check(CLI::IsMember({"dense", "cats", "mc", "dc"}));
    sia->add_option("--k", ia.k);
    sia->add_option("--mode", ia.mode)->check(CLI::IsMember({"ideal", "practical"}));
    sia->add_option("--inputs", ia.inputs)->required();
    sia->add_option("--report", ia.report)->required();
    sia->add_option("--calibration", ia.calibration);
    sia->add_flag("--timestamps", ia.timestamps);
    sia->callback([&] { cmd_infer(ia); });

    CostArgs co;
    auto* sco = app.add_subcommand("cost", "emit the analytic FLOPs/traffic table");
    sco->add_option("--preset", co.preset)->check(CLI::IsMember({"llama3-8b"}));
    sco->add_option("--d-model", co.d_model);
    sco->add_option("--d-inter", co.d_inter);
    sco->add_option("--d-rank", co.d_rank);
    sco->add_option("--k-list", co.k_list)->delimiter(',');
    sco->add_option("--format", co.format)->check(CLI::IsMember({"csv", "json"}));
    sco->add_option("--out", co.out);
    sco->callback([&] { cmd_cost(co); });

    BenchArgs ba;
    auto* sba = app.add_subcommand("bench", "time the blocked kernels");
    sba->add_option("--model", ba.model);
    sba->add_option("--preset", ba.preset)->check(CLI::IsMember({"llama3-8b"}));
    sba->add_option("--method", ba.method)
        ->required()
        ->check(CLI::IsMember({"dense", "cats", "mc", "dc"}));
    sba->add_option("--k", ba.k);
    sba->add_option("--iters", ba.iters)->check(CLI::PositiveNumber);
    sba->add_option("--blk-m", ba.blk_m)->check(CLI::PositiveNumber);
    sba->add_option("--blk-n", ba.blk_n)->check(CLI::PositiveNumber);
    sba->add_option("--reduction", ba.reduction)->check(CLI::IsMember({"ordered", "unordered"}));
    auto* seed_opt = sba->add_option("--seed", ba.seed);
    sba->add_flag("--compare-reference", ba.compare_reference);
    sba->add_option("--out", ba.out);
    sba->callback([&] {
        ba.seed_given = seed_opt->count() > 0;
        cmd_bench(ba);
    });

    AnalyzeArgs an;
    auto* san = app.add_subcommand("analyze", "emit the cif/caf mask-agreement sweep");
    san->add_option("--model", an.model)->required();
    san->add_option("--k-list", an.k_list)->delimiter(',');
    san->add_option("--n-samples", an.n_samples)->check(CLI::PositiveNumber);
    san->add_option("--seed", an.seed);
    san->add_option("--out", an.out);
    san->callback([&] { cmd_analyze(an); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const NumericError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
