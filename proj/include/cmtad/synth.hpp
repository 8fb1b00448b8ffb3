#pragma once

#include "cmtad/datastore.hpp"
#include "cmtad/evaluation.hpp"

#include <cstdint>

namespace cmtad {

// Seasonal multi-KPI generator with injected, labeled anomalies. Values are
// daily + weekly sinusoids plus AR(1) noise; anomalies are additive on the
// per-KPI sigma scale except dropouts, which clamp to the series minimum.
struct SynthConfig {
    int kpis = 12;
    Eigen::Index length = 20000;
    std::int64_t dt = 300;
    std::int64_t start_timestamp = 1577836800;

    int daily_period = 288;
    int weekly_period = 2016;
    double daily_amp_min = 0.5, daily_amp_max = 1.5;
    double weekly_amp_min = 0.2, weekly_amp_max = 0.6;
    double ar_coeff = 0.7;
    double ar_scale = 0.3;

    // Fraction of timestamps made anomalous per KPI; 0 disables injection.
    double prevalence = 0.01;
    double spike_weight = 0.5;
    double shift_weight = 0.25;
    double dropout_weight = 0.25;
    int min_events = 1;
    int max_events = 35;

    std::uint64_t seed = 1;

    void validate() const;
    bool anomalies_enabled() const {
        return prevalence > 0.0 && spike_weight + shift_weight + dropout_weight > 0.0;
    }
};

struct SynthResult {
    TimeSeriesFrame frame;          // values and labels, no imputation
    std::vector<EventList> events;  // ground truth per KPI
};

SynthResult generate_synthetic(const SynthConfig& cfg);

}  // namespace cmtad
