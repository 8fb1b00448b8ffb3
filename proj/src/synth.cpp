#include "cmtad/synth.hpp"

#include "cmtad/rng.hpp"

#include <algorithm>
#include <cmath>

namespace cmtad {

void SynthConfig::validate() const {
    if (kpis < 1) throw ValidationError("synth: kpis must be >= 1");
    if (length < 2) throw ValidationError("synth: length must be >= 2");
    if (dt < 1) throw ValidationError("synth: dt must be >= 1");
    if (daily_period < 1 || weekly_period < 1)
        throw ValidationError("synth: seasonal periods must be positive");
    if (prevalence < 0.0 || prevalence > 1.0)
        throw ValidationError("synth: prevalence must be in [0,1]");
    if (spike_weight < 0 || shift_weight < 0 || dropout_weight < 0)
        throw ValidationError("synth: anomaly weights must be non-negative");
    if (min_events < 1 || max_events < min_events)
        throw ValidationError("synth: event count range must satisfy 1 <= min <= max");
    if (ar_coeff <= -1.0 || ar_coeff >= 1.0)
        throw ValidationError("synth: AR(1) coefficient must lie in (-1,1)");
}

namespace {

enum class AnomalyType { Spike, Shift, Dropout };

struct PlannedEvent {
    AnomalyType type;
    Eigen::Index duration;
    Eigen::Index start = 0;
};

constexpr Eigen::Index kSpikeMin = 1, kSpikeMax = 3;
constexpr Eigen::Index kShiftMin = 20, kShiftMax = 100;
constexpr Eigen::Index kDropMin = 5, kDropMax = 50;

Eigen::Index type_min(AnomalyType t) {
    switch (t) {
        case AnomalyType::Spike: return kSpikeMin;
        case AnomalyType::Shift: return kShiftMin;
        case AnomalyType::Dropout: return kDropMin;
    }
    return 1;
}

Eigen::Index type_max(AnomalyType t) {
    switch (t) {
        case AnomalyType::Spike: return kSpikeMax;
        case AnomalyType::Shift: return kShiftMax;
        case AnomalyType::Dropout: return kDropMax;
    }
    return 1;
}

AnomalyType draw_type(Rng& rng, const SynthConfig& cfg) {
    const double total = cfg.spike_weight + cfg.shift_weight + cfg.dropout_weight;
    const double u = rng.uniform(0.0, total);
    if (u < cfg.spike_weight) return AnomalyType::Spike;
    if (u < cfg.spike_weight + cfg.shift_weight) return AnomalyType::Shift;
    return AnomalyType::Dropout;
}

// Durations that sum to exactly `budget`; remainders a drawn type cannot
// absorb become spikes.
std::vector<PlannedEvent> plan_durations(Rng& rng, const SynthConfig& cfg, Eigen::Index budget) {
    std::vector<PlannedEvent> events;
    Eigen::Index remaining = budget;
    while (remaining > 0) {
        AnomalyType type;
        Eigen::Index dur;
        if (remaining <= kSpikeMax) {
            type = AnomalyType::Spike;
            dur = remaining;
        } else {
            type = draw_type(rng, cfg);
            dur = std::min<Eigen::Index>(rng.uniform_int(type_min(type), type_max(type)), remaining);
            if (dur < type_min(type)) {
                type = AnomalyType::Spike;
                dur = std::min(remaining, kSpikeMax);
            }
        }
        events.push_back({type, dur});
        remaining -= dur;
    }
    return events;
}

// Starts with at least one clean step between consecutive events, drawn by
// distributing the free slack uniformly.
bool place_events(Rng& rng, std::vector<PlannedEvent>& events, Eigen::Index T,
                  Eigen::Index budget) {
    const Eigen::Index k = static_cast<Eigen::Index>(events.size());
    const Eigen::Index slack = T - budget - (k - 1);
    if (slack < 0) return false;
    std::vector<Eigen::Index> offsets(static_cast<std::size_t>(k));
    for (auto& o : offsets) o = rng.uniform_int(0, slack);
    std::sort(offsets.begin(), offsets.end());
    Eigen::Index consumed = 0;
    for (Eigen::Index j = 0; j < k; ++j) {
        events[static_cast<std::size_t>(j)].start = offsets[static_cast<std::size_t>(j)] + consumed;
        consumed += events[static_cast<std::size_t>(j)].duration + 1;
    }
    return true;
}

}  // namespace

SynthResult generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    const Eigen::Index T = cfg.length, F = cfg.kpis;

    SynthResult out;
    out.frame.values.resize(T, F);
    out.frame.labels = MatU8::Zero(T, F);
    out.frame.imputed = MatU8::Zero(T, F);
    out.frame.timestamps.resize(static_cast<std::size_t>(T));
    for (Eigen::Index t = 0; t < T; ++t)
        out.frame.timestamps[static_cast<std::size_t>(t)] = cfg.start_timestamp + cfg.dt * t;
    out.frame.kpi_names.resize(static_cast<std::size_t>(F));
    out.events.resize(static_cast<std::size_t>(F));

    for (Eigen::Index i = 0; i < F; ++i) {
        char name[16];
        std::snprintf(name, sizeof(name), "kpi_%02d", static_cast<int>(i));
        out.frame.kpi_names[static_cast<std::size_t>(i)] = name;

        Rng series = Rng::sub_stream(cfg.seed, 0x73657269ull + static_cast<std::uint64_t>(i));
        const double amp_d = series.uniform(cfg.daily_amp_min, cfg.daily_amp_max);
        const double phase = series.uniform(0.0, 2.0 * M_PI);
        const double amp_w = series.uniform(cfg.weekly_amp_min, cfg.weekly_amp_max);
        double ar = 0.0;
        for (Eigen::Index t = 0; t < T; ++t) {
            ar = cfg.ar_coeff * ar + cfg.ar_scale * series.normal();
            out.frame.values(t, i) =
                amp_d * std::sin(2.0 * M_PI * double(t) / double(cfg.daily_period) + phase) +
                amp_w * std::sin(2.0 * M_PI * double(t) / double(cfg.weekly_period)) + ar;
        }

        if (!cfg.anomalies_enabled()) continue;

        const double mean = out.frame.values.col(i).mean();
        const double sigma =
            std::sqrt((out.frame.values.col(i).array() - mean).square().sum() / double(T));
        const double floor_value = out.frame.values.col(i).minCoeff();

        const Eigen::Index budget =
            std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::llround(cfg.prevalence * double(T))));

        std::vector<PlannedEvent> plan;
        bool planned = false;
        for (int attempt = 0; attempt < 200; ++attempt) {
            Rng rng = Rng::sub_stream(cfg.seed, 0x706c616eull + (static_cast<std::uint64_t>(i) << 20) +
                                                    static_cast<std::uint64_t>(attempt));
            plan = plan_durations(rng, cfg, budget);
            const auto count = static_cast<int>(plan.size());
            if (count < cfg.min_events || count > cfg.max_events) continue;
            if (!place_events(rng, plan, T, budget)) continue;

            for (auto& e : plan) {
                auto& col = out.frame.values;
                switch (e.type) {
                    case AnomalyType::Spike: {
                        const double mag = rng.uniform(4.0, 8.0) * sigma;
                        const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
                        for (Eigen::Index t = e.start; t < e.start + e.duration; ++t)
                            col(t, i) += sign * mag;
                        break;
                    }
                    case AnomalyType::Shift: {
                        const double mag = rng.uniform(2.0, 4.0) * sigma;
                        const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
                        for (Eigen::Index t = e.start; t < e.start + e.duration; ++t)
                            col(t, i) += sign * mag;
                        break;
                    }
                    case AnomalyType::Dropout:
                        for (Eigen::Index t = e.start; t < e.start + e.duration; ++t)
                            col(t, i) = floor_value;
                        break;
                }
                for (Eigen::Index t = e.start; t < e.start + e.duration; ++t)
                    out.frame.labels(t, i) = 1;
                out.events[static_cast<std::size_t>(i)].push_back(
                    {e.start, e.start + e.duration - 1});
            }
            planned = true;
            break;
        }
        if (!planned)
            throw ValidationError(
                "synth: cannot plan an anomaly budget of " + std::to_string(budget) +
                " steps as " + std::to_string(cfg.min_events) + ".." + std::to_string(cfg.max_events) +
                " events; the configured rate is infeasible for this stream length");
    }

    out.frame.validate();
    return out;
}

}  // namespace cmtad
