#pragma once

#include "cmtad/datastore.hpp"
#include "cmtad/model.hpp"
#include "cmtad/synth.hpp"
#include "cmtad/training.hpp"

#include <cstdint>
#include <string>

namespace cmtad {

// Whole-pipeline configuration, parsed from a sectioned key = value file.
// Unknown keys are rejected; the canonical serialization below is embedded in
// checkpoints and reports as provenance.
struct RunConfig {
    std::uint64_t seed = 1;

    // [datastore]
    std::int64_t dt = 0;  // 0 = infer from the file
    GapPolicy gap_policy = GapPolicy::Strict;
    double split_train = 0.7;
    double split_val = 0.15;
    double split_test = 0.15;

    // [model]
    int window = 100;
    int horizon = 3;
    int conv_channels = 64;
    int kernel_size = 7;
    int gru_hidden = 768;
    double leaky_slope = 0.2;
    bool context_enabled = true;

    // [context] plus per-feature subsections. Static features carry their
    // value here because one config describes one monitored element.
    bool calendar = true;  // auto-derive hour + weekday dynamic features
    int real_proj_dim = 0;
    std::vector<CatFeature> static_cat;
    std::vector<CatFeature> dynamic_cat;
    std::vector<std::string> static_real;
    std::vector<int> static_cat_values;      // parallel to static_cat
    std::vector<double> static_real_values;  // parallel to static_real

    // [training]
    int epochs = 100;
    int batch_size = 64;
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    int patience = 10;
    double clip_norm = 5.0;
    int stride = 1;
    int threads = 0;

    // [scoring]
    double gamma = 1.0;
    double threshold_c = 4.0;

    // [synth] (seed follows the run seed)
    SynthConfig synth;

    // [evaluation]
    std::string eval_mode = "all";
    std::string eval_metric = "all";

    void validate() const;

    // Declared features plus, with calendar on, hour and weekday columns.
    ContextSchema context_schema() const;
    // Static values from the config, hour/weekday derived from the frame.
    ContextData context_data(const TimeSeriesFrame& frame) const;
    ModelConfig model_config(int kpis) const;
    TrainConfig train_config() const;
    WindowSpec window_spec() const { return {window, horizon, stride}; }
};

RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::string& path);

// Fixed section and key order, shortest round-trip float formatting.
std::string canonical_config_text(const RunConfig& cfg);
std::uint64_t config_hash(const RunConfig& cfg);

}  // namespace cmtad
