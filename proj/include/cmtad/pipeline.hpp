#pragma once

#include "cmtad/checkpoint.hpp"
#include "cmtad/config.hpp"
#include "cmtad/scoring.hpp"
#include "cmtad/training.hpp"

#include <functional>
#include <string>

namespace cmtad {

// Which time-ordered slice of a data file a command operates on. Train owns
// the first fraction; calibrate defaults to Val, score to Test, so threshold
// fitting and reporting never touch rows the optimizer saw.
enum class Split { Train, Val, Test, All };

Split split_from_string(const std::string& s);

// Cuts the requested fraction using the ratios stored in the checkpoint.
TimeSeriesFrame take_split(const TimeSeriesFrame& frame, double train_frac, double val_frac,
                           Split which, Eigen::Index min_len);

// Full training pass over one frame: split, normalize on train, window, fit.
// The returned checkpoint carries everything inference needs except
// thresholds, which calibrate_split adds.
Checkpoint train_pipeline(const RunConfig& cfg, const TimeSeriesFrame& frame,
                          const std::function<void(const EpochStats&)>& on_epoch = {});

// Scores the selected split with the checkpoint's normalizer and weights.
ScoreSeries score_split(const Checkpoint& ckpt, const TimeSeriesFrame& frame, Split which);

// Fits tau = c * mu on the selected split and stores it in the checkpoint.
const Thresholds& calibrate_split(Checkpoint& ckpt, const TimeSeriesFrame& frame, Split which,
                                  double c);

}  // namespace cmtad
