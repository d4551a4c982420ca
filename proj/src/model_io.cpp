#include "countdown/model_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace countdown {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian and read/written without swapping");

using nlohmann::json;

namespace {

constexpr char kMagic[5] = {'C', 'D', 'W', 'N', '1'};

void write_bytes(std::ofstream& out, const void* p, size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "' for reading");
    std::ostringstream oss;
    oss << in.rdbuf();
    return oss.str();
}

void check_finite(const float* p, size_t n, const std::string& path, const char* what) {
    for (size_t i = 0; i < n; ++i) {
        if (!std::isfinite(p[i])) {
            std::ostringstream oss;
            oss << path << ": " << what << " contains a non-finite value at index " << i;
            throw DataError(oss.str());
        }
    }
}

json parse_header(const std::string& buf, size_t header_off, const std::string& path,
                  size_t* payload_off) {
    if (buf.size() < header_off + 4) throw DataError(path + ": truncated header length");
    uint32_t hlen = 0;
    std::memcpy(&hlen, buf.data() + header_off, 4);
    if (buf.size() < header_off + 4 + hlen) throw DataError(path + ": truncated header");
    json h;
    try {
        h = json::parse(buf.substr(header_off + 4, hlen));
    } catch (const json::exception& e) {
        throw DataError(path + ": bad header JSON: " + e.what());
    }
    *payload_off = header_off + 4 + hlen;
    return h;
}

void expect_payload(const std::string& buf, size_t payload_off, size_t expected,
                    const std::string& path) {
    const size_t actual = buf.size() - payload_off;
    if (actual != expected) {
        std::ostringstream oss;
        oss << path << ": payload is " << actual << " bytes, expected " << expected;
        throw DataError(oss.str());
    }
}

} // namespace

const char* activation_name(Activation a) {
    return a == Activation::Silu ? "silu" : "gelu";
}

Activation activation_from_name(const std::string& name) {
    if (name == "silu") return Activation::Silu;
    if (name == "gelu") return Activation::GeluTanh;
    throw DataError("unknown activation '" + name + "' (expected silu|gelu)");
}

std::string checksum_hex(const void* bytes, size_t n) {
    const uint8_t* p = static_cast<const uint8_t*>(bytes);
    uint64_t h = 14695981039346656037ull;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

void write_model(const std::string& path, const ModelFile& mf) {
    mf.layer.validate();
    json header;
    header["schema"] = "v1";
    header["d_model"] = mf.layer.d_model;
    header["d_inter"] = mf.layer.d_inter;
    header["activation"] = activation_name(mf.layer.activation);
    header["seed"] = mf.seed;
    if (mf.predictor) {
        json pd;
        pd["k"] = mf.predictor_k;
        if (mf.predictor->kind() == PredictorKind::LowRank) {
            pd["kind"] = "lowrank";
            pd["d_rank"] = mf.predictor->lowrank().d_rank;
        } else {
            pd["kind"] = "ternary";
        }
        header["predictor"] = pd;
    } else {
        header["predictor"] = nullptr;
    }
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    write_bytes(out, kMagic, sizeof kMagic);
    const uint32_t hlen = static_cast<uint32_t>(hs.size());
    write_bytes(out, &hlen, 4);
    write_bytes(out, hs.data(), hs.size());
    auto blob = [&](const Mat32& m) { write_bytes(out, m.data.data(), m.data.size() * 4); };
    blob(mf.layer.w_up);
    blob(mf.layer.w_gate);
    blob(mf.layer.w_down);
    if (mf.predictor) {
        if (mf.predictor->kind() == PredictorKind::LowRank) {
            blob(mf.predictor->lowrank().theta_a);
            blob(mf.predictor->lowrank().theta_b);
        } else {
            const float g = mf.predictor->ternary().gamma();
            write_bytes(out, &g, 4);
            blob(mf.predictor->ternary().shadow);
        }
    }
    if (!out) throw DataError("write to '" + path + "' failed");
}

ModelFile read_model(const std::string& path) {
    const std::string buf = read_file(path);
    if (buf.size() < sizeof kMagic || std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0)
        throw DataError(path + ": not a model file (bad magic, expected CDWN1)");
    size_t off = 0;
    const json h = parse_header(buf, sizeof kMagic, path, &off);

    ModelFile mf;
    try {
        if (h.at("schema").get<std::string>() != "v1")
            throw DataError(path + ": unsupported schema");
        mf.layer.d_model = h.at("d_model").get<int64_t>();
        mf.layer.d_inter = h.at("d_inter").get<int64_t>();
        mf.layer.activation = activation_from_name(h.at("activation").get<std::string>());
        mf.seed = h.at("seed").get<uint64_t>();
    } catch (const json::exception& e) {
        throw DataError(path + ": bad header field: " + e.what());
    }
    if (mf.layer.d_model <= 0 || mf.layer.d_inter <= 0)
        throw DataError(path + ": non-positive dimensions in header");

    const size_t mat_bytes =
        static_cast<size_t>(mf.layer.d_model) * static_cast<size_t>(mf.layer.d_inter) * 4;
    size_t expected = 3 * mat_bytes;

    std::string pkind;
    int64_t prank = 0;
    double pk = 0.0;
    if (h.contains("predictor") && !h.at("predictor").is_null()) {
        try {
            const json& pd = h.at("predictor");
            pkind = pd.at("kind").get<std::string>();
            pk = pd.at("k").get<double>();
            if (pkind == "lowrank") {
                prank = pd.at("d_rank").get<int64_t>();
                if (prank <= 0) throw DataError(path + ": non-positive predictor rank");
                expected += (static_cast<size_t>(mf.layer.d_model) * prank +
                             static_cast<size_t>(prank) * mf.layer.d_inter) * 4;
            } else if (pkind == "ternary") {
                expected += 4 + mat_bytes;
            } else {
                throw DataError(path + ": unknown predictor kind '" + pkind + "'");
            }
        } catch (const json::exception& e) {
            throw DataError(path + ": bad predictor descriptor: " + e.what());
        }
    }
    expect_payload(buf, off, expected, path);

    const char* p = buf.data() + off;
    auto take = [&](Mat32& m, int64_t rows, int64_t cols, const char* what) {
        m = Mat32(rows, cols);
        std::memcpy(m.data.data(), p, m.data.size() * 4);
        check_finite(m.data.data(), m.data.size(), path, what);
        p += m.data.size() * 4;
    };
    take(mf.layer.w_up, mf.layer.d_inter, mf.layer.d_model, "w_up");
    take(mf.layer.w_gate, mf.layer.d_inter, mf.layer.d_model, "w_gate");
    take(mf.layer.w_down, mf.layer.d_inter, mf.layer.d_model, "w_down");
    mf.layer.validate();

    if (!pkind.empty()) {
        mf.predictor_k = pk;
        if (pkind == "lowrank") {
            LowRankPredictor lp;
            lp.d_model = mf.layer.d_model;
            lp.d_rank = prank;
            lp.d_inter = mf.layer.d_inter;
            take(lp.theta_a, lp.d_model, lp.d_rank, "theta_a");
            take(lp.theta_b, lp.d_rank, lp.d_inter, "theta_b");
            mf.predictor = Predictor{std::move(lp)};
        } else {
            TernaryPredictor tp;
            tp.d_model = mf.layer.d_model;
            tp.d_inter = mf.layer.d_inter;
            float g = 0.0f;
            std::memcpy(&g, p, 4);
            p += 4;
            if (!std::isfinite(g)) throw DataError(path + ": non-finite ternary scale");
            take(tp.shadow, tp.d_model, tp.d_inter, "shadow");
            mf.predictor = Predictor{std::move(tp)};
        }
    }
    return mf;
}

void write_matrix_file(const std::string& path, int64_t rows, int64_t cols, const float* data) {
    if (rows <= 0 || cols <= 0) throw DataError("write_matrix_file: non-positive shape");
    json header;
    header["schema"] = "v1";
    header["rows"] = rows;
    header["cols"] = cols;
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    const uint32_t hlen = static_cast<uint32_t>(hs.size());
    write_bytes(out, &hlen, 4);
    write_bytes(out, hs.data(), hs.size());
    write_bytes(out, data, static_cast<size_t>(rows) * static_cast<size_t>(cols) * 4);
    if (!out) throw DataError("write to '" + path + "' failed");
}

RawMatrix read_matrix_file(const std::string& path) {
    const std::string buf = read_file(path);
    size_t off = 0;
    const json h = parse_header(buf, 0, path, &off);
    RawMatrix m;
    try {
        if (h.at("schema").get<std::string>() != "v1")
            throw DataError(path + ": unsupported schema");
        m.rows = h.at("rows").get<int64_t>();
        m.cols = h.at("cols").get<int64_t>();
    } catch (const json::exception& e) {
        throw DataError(path + ": bad header field: " + e.what());
    }
    if (m.rows <= 0 || m.cols <= 0)
        throw DataError(path + ": non-positive shape in header");
    expect_payload(buf, off, static_cast<size_t>(m.rows) * static_cast<size_t>(m.cols) * 4, path);
    m.data.resize(static_cast<size_t>(m.rows * m.cols));
    std::memcpy(m.data.data(), buf.data() + off, m.data.size() * 4);
    check_finite(m.data.data(), m.data.size(), path, "matrix");
    return m;
}

void write_calibration_json(const std::string& path, const CalibrationStats& stats) {
    json j;
    j["schema"] = "v1";
    j["tau_hat"] = stats.tau_hat;
    j["k"] = stats.k;
    j["indicator"] = stats.indicator == SparsityMethod::MCountdown ? "u" : "h";
    j["t_samples"] = stats.t_samples;
    j["per_sample_taus"] = stats.per_sample_taus;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << j.dump(2) << "\n";
    if (!out) throw DataError("write to '" + path + "' failed");
}

CalibrationStats read_calibration_json(const std::string& path) {
    const std::string buf = read_file(path);
    json j;
    try {
        j = json::parse(buf);
    } catch (const json::exception& e) {
        throw DataError(path + ": bad JSON: " + e.what());
    }
    CalibrationStats stats;
    try {
        if (j.at("schema").get<std::string>() != "v1")
            throw DataError(path + ": unsupported schema");
        stats.tau_hat = j.at("tau_hat").get<double>();
        stats.k = j.at("k").get<double>();
        const std::string ind = j.at("indicator").get<std::string>();
        if (ind == "h") stats.indicator = SparsityMethod::Cats;
        else if (ind == "u") stats.indicator = SparsityMethod::MCountdown;
        else throw DataError(path + ": bad indicator '" + ind + "' (expected u|h)");
        stats.t_samples = j.at("t_samples").get<int64_t>();
        if (j.contains("per_sample_taus"))
            stats.per_sample_taus = j.at("per_sample_taus").get<std::vector<float>>();
    } catch (const json::exception& e) {
        throw DataError(path + ": bad field: " + e.what());
    }
    if (!std::isfinite(stats.tau_hat))
        throw DataError(path + ": non-finite tau_hat");
    return stats;
}

} // namespace countdown
