#include "cmtad/pipeline.hpp"

namespace cmtad {

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    if (s == "all") return Split::All;
    throw ValidationError("unknown split '" + s + "' (train, val, test, all)");
}

TimeSeriesFrame take_split(const TimeSeriesFrame& frame, double train_frac, double val_frac,
                           Split which, Eigen::Index min_len) {
    if (which == Split::All) return frame;
    auto parts =
        split_time_ordered(frame, {train_frac, val_frac, 1.0 - train_frac - val_frac}, min_len);
    return parts[static_cast<std::size_t>(which)];
}

Checkpoint train_pipeline(const RunConfig& cfg, const TimeSeriesFrame& frame,
                          const std::function<void(const EpochStats&)>& on_epoch) {
    cfg.validate();
    const Eigen::Index min_len = cfg.window + cfg.horizon;
    auto parts =
        split_time_ordered(frame, {cfg.split_train, cfg.split_val, cfg.split_test}, min_len);

    Normalizer norm = fit_normalizer(parts[0]);
    TimeSeriesFrame train_frame = apply_normalizer(parts[0], norm);
    TimeSeriesFrame val_frame = apply_normalizer(parts[1], norm);
    ContextData train_ctx = cfg.context_data(train_frame);
    ContextData val_ctx = cfg.context_data(val_frame);

    WindowSet train_windows(train_frame, train_ctx, cfg.window_spec());
    WindowSet val_windows(val_frame, val_ctx, cfg.window_spec());

    ModelConfig model_cfg = cfg.model_config(static_cast<int>(frame.kpis()));
    TrainResult result = train(model_cfg, cfg.train_config(), train_windows, val_windows, on_epoch);

    Checkpoint ckpt;
    ckpt.params = std::move(result.params);
    ckpt.normalizer = norm;
    ckpt.kpi_names = frame.kpi_names;
    ckpt.history = result.history;
    ckpt.seed = cfg.seed;
    ckpt.config_text = canonical_config_text(cfg);
    ckpt.config_hash = config_hash(cfg);
    ckpt.split_train = cfg.split_train;
    ckpt.split_val = cfg.split_val;
    return ckpt;
}

ScoreSeries score_split(const Checkpoint& ckpt, const TimeSeriesFrame& frame, Split which) {
    RunConfig cfg = parse_config(ckpt.config_text);
    TimeSeriesFrame part =
        take_split(frame, ckpt.split_train, ckpt.split_val, which, cfg.window + cfg.horizon);
    TimeSeriesFrame normed = apply_normalizer(part, ckpt.normalizer);
    ContextData ctx = cfg.context_data(normed);
    return residual_scores(ckpt.params, ckpt.kpi_names, normed, ctx, cfg.gamma, cfg.threads);
}

const Thresholds& calibrate_split(Checkpoint& ckpt, const TimeSeriesFrame& frame, Split which,
                                  double c) {
    if (c <= 0) throw ValidationError("calibrate: c must be > 0");
    ScoreSeries scores = score_split(ckpt, frame, which);
    ckpt.thresholds = calibrate_thresholds(scores, c);
    return *ckpt.thresholds;
}

}  // namespace cmtad
