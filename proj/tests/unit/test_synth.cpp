#include <doctest.h>

#include "cmtad/synth.hpp"

#include <cmath>

using namespace cmtad;

TEST_CASE("generation is bit-identical for a fixed seed") {
    SynthConfig cfg;
    cfg.kpis = 4;
    cfg.length = 4000;
    cfg.seed = 9;
    const SynthResult a = generate_synthetic(cfg);
    const SynthResult b = generate_synthetic(cfg);
    CHECK(a.frame.values == b.frame.values);
    CHECK(a.frame.labels == b.frame.labels);
    CHECK(a.frame.timestamps == b.frame.timestamps);
    for (std::size_t i = 0; i < a.events.size(); ++i) CHECK(a.events[i] == b.events[i]);

    cfg.seed = 10;
    const SynthResult c = generate_synthetic(cfg);
    CHECK(a.frame.values != c.frame.values);
}

TEST_CASE("zero anomaly rates produce clean labels") {
    SynthConfig cfg;
    cfg.kpis = 3;
    cfg.length = 2000;
    cfg.prevalence = 0.0;
    const SynthResult r = generate_synthetic(cfg);
    CHECK(r.frame.labels.maxCoeff() == 0);
    for (const auto& ev : r.events) CHECK(ev.empty());

    cfg.prevalence = 0.01;
    cfg.spike_weight = cfg.shift_weight = cfg.dropout_weight = 0.0;
    const SynthResult w = generate_synthetic(cfg);
    CHECK(w.frame.labels.maxCoeff() == 0);
}

TEST_CASE("prevalence lands in the target band at acceptance scale") {
    SynthConfig cfg;  // 12 KPIs, T = 20000, 1% by default
    const SynthResult r = generate_synthetic(cfg);
    const double T = double(cfg.length);
    for (Eigen::Index i = 0; i < cfg.kpis; ++i) {
        double positives = 0;
        for (Eigen::Index t = 0; t < cfg.length; ++t) positives += r.frame.labels(t, i);
        const double frac = positives / T;
        CHECK(frac >= 0.008);
        CHECK(frac <= 0.012);
    }
}

TEST_CASE("per-KPI event counts respect the configured range") {
    SynthConfig cfg;
    cfg.length = 20000;
    const SynthResult r = generate_synthetic(cfg);
    for (const auto& ev : r.events) {
        CHECK(int(ev.size()) >= cfg.min_events);
        CHECK(int(ev.size()) <= cfg.max_events);
    }
}

TEST_CASE("label support equals the injected intervals exactly") {
    SynthConfig cfg;
    cfg.kpis = 6;
    cfg.length = 9000;
    cfg.seed = 21;
    const SynthResult r = generate_synthetic(cfg);
    for (Eigen::Index i = 0; i < cfg.kpis; ++i) {
        BinaryStream col(static_cast<std::size_t>(cfg.length), 0);
        for (Eigen::Index t = 0; t < cfg.length; ++t) col[std::size_t(t)] = r.frame.labels(t, i);
        CHECK(merge_events(col) == r.events[std::size_t(i)]);
    }
}

TEST_CASE("clean output is stationary-seasonal across daily periods") {
    SynthConfig cfg;
    cfg.kpis = 2;
    cfg.length = 288 * 20;
    cfg.prevalence = 0.0;
    cfg.seed = 33;
    const SynthResult r = generate_synthetic(cfg);
    for (Eigen::Index i = 0; i < cfg.kpis; ++i) {
        std::vector<double> period_means;
        for (Eigen::Index p = 0; p < 20; ++p)
            period_means.push_back(r.frame.values.col(i).segment(p * 288, 288).mean());
        for (double m : period_means) CHECK(std::abs(m) < 0.6);  // AR noise bound, amplitude <= 1.5
    }
}

TEST_CASE("anomalous steps are visibly displaced") {
    SynthConfig cfg;
    cfg.kpis = 3;
    cfg.length = 8000;
    cfg.seed = 41;
    cfg.dropout_weight = 0.0;  // spikes and shifts displace by >= 2 sigma
    const SynthResult clean_ref = [&] {
        SynthConfig c = cfg;
        c.prevalence = 0.0;
        return generate_synthetic(c);
    }();
    const SynthResult r = generate_synthetic(cfg);
    for (Eigen::Index i = 0; i < cfg.kpis; ++i) {
        const double mean = clean_ref.frame.values.col(i).mean();
        const double sigma = std::sqrt(
            (clean_ref.frame.values.col(i).array() - mean).square().sum() / double(cfg.length));
        for (const auto& e : r.events[std::size_t(i)])
            for (Eigen::Index t = e.start; t <= e.end; ++t) {
                const double delta =
                    std::abs(r.frame.values(t, i) - clean_ref.frame.values(t, i));
                CHECK(delta >= 2.0 * sigma * 0.99);
            }
    }
}

TEST_CASE("infeasible budgets are rejected") {
    SynthConfig cfg;
    cfg.kpis = 1;
    cfg.length = 100;
    cfg.prevalence = 0.9;  // 90 steps of 1-3-step spikes need >= 30 events
    cfg.shift_weight = cfg.dropout_weight = 0.0;
    cfg.max_events = 2;
    CHECK_THROWS_AS(generate_synthetic(cfg), ValidationError);

    SynthConfig big;
    big.kpis = 1;
    big.length = 500000;
    big.prevalence = 0.5;  // budget 250000 > 35 events x 100 steps
    CHECK_THROWS_AS(generate_synthetic(big), ValidationError);
}

TEST_CASE("frame is well-formed and round-trips through CSV") {
    SynthConfig cfg;
    cfg.kpis = 3;
    cfg.length = 1200;
    cfg.seed = 55;
    const SynthResult r = generate_synthetic(cfg);
    CHECK(r.frame.step() == 300);
    CHECK(r.frame.has_labels());

    const std::string data = "/tmp/cmtad_synth_data.csv", labels = "/tmp/cmtad_synth_labels.csv";
    write_series_csv(r.frame, data, labels);
    const TimeSeriesFrame back = load_series_csv(data, labels);
    CHECK(back.kpi_names == r.frame.kpi_names);
    CHECK(back.labels == r.frame.labels);
    CHECK((back.values - r.frame.values).cwiseAbs().maxCoeff() < 1e-9);
    std::remove(data.c_str());
    std::remove(labels.c_str());
}
