// On-disk formats. Model file: magic "CDWN1", u32 little-endian header
// length, JSON header (dims, activation, seed provenance, optional predictor
// descriptor), then raw little-endian f32 blobs W_up, W_gate, W_down and the
// optional predictor weights. Raw-matrix file: u32 header length + JSON
// {rows, cols} + f32 blob. All readers validate byte counts exactly and
// reject non-finite values.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "countdown/calibration.hpp"
#include "countdown/predictor.hpp"

namespace countdown {

struct ModelFile {
    GatedMlpLayer layer;
    uint64_t seed = 0;  // provenance of the weight draw
    std::optional<Predictor> predictor;
    double predictor_k = 0.0;  // sparsity the predictor was trained for
};

void write_model(const std::string& path, const ModelFile& mf);
ModelFile read_model(const std::string& path);

struct RawMatrix {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<float> data;  // row-major

    Vec32 row_vec(int64_t i) const {
        return Vec32(data.begin() + i * cols, data.begin() + (i + 1) * cols);
    }
};

void write_matrix_file(const std::string& path, int64_t rows, int64_t cols, const float* data);
RawMatrix read_matrix_file(const std::string& path);

void write_calibration_json(const std::string& path, const CalibrationStats& stats);
CalibrationStats read_calibration_json(const std::string& path);

// FNV-1a 64 over the raw bytes, as a 16-digit hex string (report checksums).
std::string checksum_hex(const void* bytes, size_t n);

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

} // namespace countdown
