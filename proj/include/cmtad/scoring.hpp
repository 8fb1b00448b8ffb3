#pragma once

#include "cmtad/common.hpp"
#include "cmtad/datastore.hpp"
#include "cmtad/model.hpp"

#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

namespace cmtad {

// Per-timestamp, per-KPI anomaly scores. Rows below `window` have no
// forecast available and stay uncovered; their cells are zero-filled and
// must never be read as scores.
struct ScoreSeries {
    std::vector<std::int64_t> timestamps;
    std::vector<std::string> kpi_names;
    Matd scores;             // T x F
    Matd forecast_comp;      // T x F, squared 1-step forecast residual
    Matd recon_comp;         // T x F, squared reconstruction residual
    std::vector<std::uint8_t> covered;  // per timestamp
    MatU8 imputed;           // T x F, carried from the source frame
    double gamma = 1.0;

    Eigen::Index length() const { return scores.rows(); }
    Eigen::Index kpis() const { return scores.cols(); }
};

struct Thresholds {
    std::vector<std::string> kpi_names;
    Eigen::VectorXd tau;     // c * mu_val
    Eigen::VectorXd mu_val;  // mean covered validation score per KPI
    double c = 4.0;
};

// score(t,i) = (x[t,i] - f1[t,i])^2 + gamma * (x[t,i] - r[t,i])^2 where f1
// comes from the window ending at t-1 (1-step forecast) and r is the last
// decoder position of the window ending at t. The frame must already be on
// the normalized scale the parameters were trained on.
inline ScoreSeries residual_scores(const ModelParams<float>& params,
                                   const std::vector<std::string>& expected_kpis,
                                   const TimeSeriesFrame& frame, const ContextData& context,
                                   double gamma = 1.0, int threads = 0) {
    const ModelConfig& cfg = params.config;
    const Eigen::Index T = frame.length();
    const int W = cfg.window;
    if (T < W + 1)
        throw ValidationError("residual_scores: frame length " + std::to_string(T) +
                              " < window + 1 = " + std::to_string(W + 1));
    if (static_cast<int>(frame.kpis()) != cfg.kpis)
        throw ValidationError("residual_scores: frame has " + std::to_string(frame.kpis()) +
                              " KPIs, model expects " + std::to_string(cfg.kpis));
    if (!expected_kpis.empty()) {
        if (frame.kpi_names.size() != expected_kpis.size())
            throw ValidationError("residual_scores: KPI set mismatch with checkpoint");
        for (std::size_t i = 0; i < expected_kpis.size(); ++i)
            if (frame.kpi_names[i] != expected_kpis[i])
                throw ValidationError("residual_scores: KPI '" + frame.kpi_names[i] +
                                      "' does not match checkpoint KPI '" + expected_kpis[i] + "'");
    }
    if (cfg.context_active()) context.validate_against(cfg.context, T);

    ScoreSeries out;
    out.timestamps = frame.timestamps;
    out.kpi_names = frame.kpi_names;
    out.gamma = gamma;
    out.scores.setZero(T, cfg.kpis);
    out.forecast_comp.setZero(T, cfg.kpis);
    out.recon_comp.setZero(T, cfg.kpis);
    out.covered.assign(static_cast<std::size_t>(T), 0);
    out.imputed = frame.imputed.size() != 0 ? frame.imputed : MatU8::Zero(T, cfg.kpis);

    // One forward per window start j in [0, T-W]; window j contributes the
    // forecast residual of t = j+W and the reconstruction residual of
    // t = j+W-1. Slots are per-j, so parallel evaluation stays ordered.
    const Eigen::Index n_windows = T - W + 1;
    std::vector<Eigen::Matrix<float, 1, Eigen::Dynamic>> fore_rows(
        static_cast<std::size_t>(n_windows));
    std::vector<Eigen::Matrix<float, 1, Eigen::Dynamic>> recon_rows(
        static_cast<std::size_t>(n_windows));
    parallel_for(n_windows, threads, [&](Eigen::Index j) {
        Matf window = frame.values.middleRows(j, W).cast<float>();
        WindowContext ctx;
        if (cfg.context_active()) {
            ctx.static_cat = context.static_cat_values;
            ctx.static_real = context.static_real_values;
            if (context.dynamic_cat.size() != 0)
                ctx.dynamic_cat = context.dynamic_cat.middleRows(j, W);
        }
        auto vals = forward_values(params, window, ctx);
        fore_rows[static_cast<std::size_t>(j)] = vals.forecast.row(0);
        recon_rows[static_cast<std::size_t>(j)] = vals.reconstruction.row(W - 1);
    });

    for (Eigen::Index t = W; t < T; ++t) {
        const auto& f1 = fore_rows[static_cast<std::size_t>(t - W)];
        const auto& rc = recon_rows[static_cast<std::size_t>(t - W + 1)];
        for (int i = 0; i < cfg.kpis; ++i) {
            double x = frame.values(t, i);
            double fe = x - static_cast<double>(f1(0, i));
            double re = x - static_cast<double>(rc(0, i));
            out.forecast_comp(t, i) = fe * fe;
            out.recon_comp(t, i) = re * re;
            out.scores(t, i) = fe * fe + gamma * re * re;
        }
        out.covered[static_cast<std::size_t>(t)] = 1;
    }
    return out;
}

// tau_i = c * mean of score(., i) over covered, non-imputed validation
// cells. Labels never enter: the signature has nowhere to put them.
inline Thresholds calibrate_thresholds(const ScoreSeries& val_scores, double c = 4.0) {
    const Eigen::Index T = val_scores.length(), F = val_scores.kpis();
    Thresholds th;
    th.kpi_names = val_scores.kpi_names;
    th.c = c;
    th.tau.resize(F);
    th.mu_val.resize(F);
    for (Eigen::Index i = 0; i < F; ++i) {
        double acc = 0.0;
        std::int64_t n = 0;
        for (Eigen::Index t = 0; t < T; ++t) {
            if (!val_scores.covered[static_cast<std::size_t>(t)]) continue;
            if (val_scores.imputed.size() != 0 && val_scores.imputed(t, i)) continue;
            acc += val_scores.scores(t, i);
            ++n;
        }
        if (n == 0)
            throw ValidationError("calibrate_thresholds: KPI '" + val_scores.kpi_names[static_cast<std::size_t>(i)] +
                                  "' has no covered validation scores");
        th.mu_val(i) = acc / static_cast<double>(n);
        th.tau(i) = c * th.mu_val(i);
    }
    return th;
}

// pred(t,i) = 1 iff score(t,i) > tau_i, strictly; uncovered rows stay 0.
inline MatU8 flag_anomalies(const ScoreSeries& scores, const Thresholds& thresholds) {
    if (scores.kpis() != thresholds.tau.size() || scores.kpi_names != thresholds.kpi_names)
        throw ValidationError("flag_anomalies: KPI set mismatch with thresholds");
    const Eigen::Index T = scores.length(), F = scores.kpis();
    MatU8 pred = MatU8::Zero(T, F);
    for (Eigen::Index t = 0; t < T; ++t) {
        if (!scores.covered[static_cast<std::size_t>(t)]) continue;
        for (Eigen::Index i = 0; i < F; ++i)
            if (scores.scores(t, i) > thresholds.tau(i)) pred(t, i) = 1;
    }
    return pred;
}

struct ArtifactStamp {
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
};

inline void write_scores_csv(const ScoreSeries& s, const std::string& path,
                             const ArtifactStamp& stamp) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open '" + path + "' for writing");
    char head[64];
    std::snprintf(head, sizeof(head), "# config_hash=%016llx seed=%llu",
                  static_cast<unsigned long long>(stamp.config_hash),
                  static_cast<unsigned long long>(stamp.seed));
    out << head << "\n";
    out << "timestamp,kpi,score,forecast_component,recon_component,covered\n";
    char buf[160];
    for (Eigen::Index t = 0; t < s.length(); ++t)
        for (Eigen::Index i = 0; i < s.kpis(); ++i) {
            int cov = s.covered[static_cast<std::size_t>(t)] ? 1 : 0;
            std::snprintf(buf, sizeof(buf), "%lld,%s,%.9g,%.9g,%.9g,%d\n",
                          static_cast<long long>(s.timestamps[static_cast<std::size_t>(t)]),
                          s.kpi_names[static_cast<std::size_t>(i)].c_str(), s.scores(t, i),
                          s.forecast_comp(t, i), s.recon_comp(t, i), cov);
            out << buf;
        }
    if (!out) throw ValidationError("failed writing '" + path + "'");
}

// Only covered rows appear; a (timestamp, kpi) pair absent from the file was
// never scored, which downstream evaluation treats as out of scope.
inline void write_flags_csv(const ScoreSeries& s, const MatU8& pred, const std::string& path,
                            const ArtifactStamp& stamp) {
    if (pred.rows() != s.length() || pred.cols() != s.kpis())
        throw ValidationError("write_flags_csv: prediction shape mismatch");
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open '" + path + "' for writing");
    char head[64];
    std::snprintf(head, sizeof(head), "# config_hash=%016llx seed=%llu",
                  static_cast<unsigned long long>(stamp.config_hash),
                  static_cast<unsigned long long>(stamp.seed));
    out << head << "\n";
    out << "timestamp,kpi,flag\n";
    for (Eigen::Index t = 0; t < s.length(); ++t) {
        if (!s.covered[static_cast<std::size_t>(t)]) continue;
        for (Eigen::Index i = 0; i < s.kpis(); ++i)
            out << s.timestamps[static_cast<std::size_t>(t)] << ','
                << s.kpi_names[static_cast<std::size_t>(i)] << ',' << int(pred(t, i)) << '\n';
    }
    if (!out) throw ValidationError("failed writing '" + path + "'");
}

}  // namespace cmtad
