#pragma once

#include "cmtad/common.hpp"
#include "cmtad/context.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cmtad {

// Timestamp-indexed matrix of F real-valued KPI channels. Timestamps are
// strictly increasing with a constant step; labels and the imputed-cell mask
// are optional and row-aligned with values.
struct TimeSeriesFrame {
    std::vector<std::int64_t> timestamps;
    Matd values;  // T x F
    std::vector<std::string> kpi_names;
    MatU8 labels;   // T x F or empty
    MatU8 imputed;  // T x F, 1 where the cell was filled in

    Eigen::Index length() const { return values.rows(); }
    Eigen::Index kpis() const { return values.cols(); }
    bool has_labels() const { return labels.size() != 0; }

    std::int64_t step() const {
        if (timestamps.size() < 2) return 0;
        return timestamps[1] - timestamps[0];
    }

    void validate() const;
};

enum class GapPolicy { Strict, Fill };

struct LoadOptions {
    std::int64_t dt = 0;  // 0 = infer from the first consecutive pair
    GapPolicy gaps = GapPolicy::Strict;
};

TimeSeriesFrame load_series_csv(const std::string& path, const std::string& label_path = "",
                                const LoadOptions& opts = {});

void write_series_csv(const TimeSeriesFrame& frame, const std::string& data_path,
                      const std::string& label_path = "");

// Hour-of-day and weekday (Monday = 0) per timestep, UTC.
MatI32 derive_calendar_context(const TimeSeriesFrame& frame);

// Contiguous, order-preserving partition. Boundary indices are cumulative
// floor(fraction * T). Each split must reach min_len timesteps.
std::array<TimeSeriesFrame, 3> split_time_ordered(const TimeSeriesFrame& frame,
                                                  const std::array<double, 3>& fractions,
                                                  Eigen::Index min_len = 0);

// Explicit-boundary variant: split 0 takes t < t1, split 1 takes t1 <= t < t2.
std::array<TimeSeriesFrame, 3> split_at_timestamps(const TimeSeriesFrame& frame, std::int64_t t1,
                                                   std::int64_t t2, Eigen::Index min_len = 0);

TimeSeriesFrame slice_frame(const TimeSeriesFrame& frame, Eigen::Index start, Eigen::Index len);

// Per-KPI z-score statistics, fitted on the train split only.
struct Normalizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd stddev;                   // constant channels get 1
    std::vector<std::uint8_t> constant_flag;  // 1 where the train channel was constant
};

Normalizer fit_normalizer(const TimeSeriesFrame& train);
TimeSeriesFrame apply_normalizer(const TimeSeriesFrame& frame, const Normalizer& n);
TimeSeriesFrame invert_normalizer(const TimeSeriesFrame& frame, const Normalizer& n);

struct WindowSpec {
    int window = 100;  // W
    int horizon = 3;   // H
    int stride = 1;

    void validate() const {
        if (window < 1 || horizon < 1 || stride < 1)
            throw ValidationError("window spec: W, H, stride must all be >= 1");
    }
};

// One training/inference unit, materialized in the requested scalar type.
template <class S>
struct WindowSample {
    Mat<S> input;        // W x F
    Mat<S> target;       // H x F
    Mat<S> input_mask;   // 1 = cell participates in the loss
    Mat<S> target_mask;
    MatI32 dynamic_cat;  // W x #dynamic
};

// Lightweight view over a frame + context: samples are cut on demand.
class WindowSet {
public:
    WindowSet(const TimeSeriesFrame& frame, const ContextData& context, const WindowSpec& spec)
        : frame_(&frame), context_(&context), spec_(spec) {
        spec_.validate();
        if (frame.length() < spec_.window + spec_.horizon)
            throw ValidationError("frame length " + std::to_string(frame.length()) +
                                  " < W + H = " + std::to_string(spec_.window + spec_.horizon));
    }

    Eigen::Index count() const {
        return (frame_->length() - spec_.window - spec_.horizon) / spec_.stride + 1;
    }

    const WindowSpec& spec() const { return spec_; }
    const TimeSeriesFrame& frame() const { return *frame_; }
    const ContextData& context() const { return *context_; }

    Eigen::Index input_start(Eigen::Index j) const { return j * spec_.stride; }

    template <class S>
    WindowSample<S> sample(Eigen::Index j) const {
        const Eigen::Index s = input_start(j);
        const int W = spec_.window, H = spec_.horizon;
        WindowSample<S> out;
        out.input = frame_->values.middleRows(s, W).template cast<S>();
        out.target = frame_->values.middleRows(s + W, H).template cast<S>();
        if (frame_->imputed.size() != 0) {
            out.input_mask = (frame_->imputed.middleRows(s, W).template cast<S>() * S(-1)).array() + S(1);
            out.target_mask =
                (frame_->imputed.middleRows(s + W, H).template cast<S>() * S(-1)).array() + S(1);
        } else {
            out.input_mask = Mat<S>::Ones(W, frame_->kpis());
            out.target_mask = Mat<S>::Ones(H, frame_->kpis());
        }
        if (context_->dynamic_cat.size() != 0)
            out.dynamic_cat = context_->dynamic_cat.middleRows(s, W);
        return out;
    }

private:
    const TimeSeriesFrame* frame_;
    const ContextData* context_;
    WindowSpec spec_;
};

}  // namespace cmtad
