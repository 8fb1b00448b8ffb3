#pragma once

#include "cmtad/datastore.hpp"
#include "cmtad/model.hpp"
#include "cmtad/scoring.hpp"
#include "cmtad/training.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cmtad {

inline constexpr int kCheckpointFormatVersion = 1;

// Everything needed to resume inference: architecture, weights, the
// normalization fitted on the training split, optional calibrated
// thresholds, and provenance (seed, config text + hash, training history).
struct Checkpoint {
    int format_version = kCheckpointFormatVersion;
    ModelParams<float> params;  // carries the ModelConfig
    Normalizer normalizer;
    std::vector<std::string> kpi_names;
    std::optional<Thresholds> thresholds;
    std::vector<EpochStats> history;
    std::uint64_t seed = 0;
    std::string config_text;
    std::uint64_t config_hash = 0;
    double split_train = 0.7;
    double split_val = 0.15;

    const ModelConfig& model() const { return params.config; }
};

// Container layout: "CMAD" magic, u32 LE header byte length, UTF-8 JSON
// header, raw little-endian f32 row-major tensor payload, u32 LE CRC-32 of
// the payload.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace cmtad
