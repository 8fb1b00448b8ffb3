#include "cmtad/datastore.hpp"

#include "cmtad/calendar.hpp"
#include "cmtad/csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <unordered_set>

namespace cmtad {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

double parse_cell(const std::string& cell, Eigen::Index row, const std::string& kpi) {
    if (cell.empty()) return kMissing;
    std::size_t used = 0;
    double v;
    try {
        v = std::stod(cell, &used);
    } catch (const std::exception&) {
        throw ValidationError("non-numeric cell '" + cell + "' at row " + std::to_string(row) +
                              ", kpi '" + kpi + "'");
    }
    if (used != cell.size())
        throw ValidationError("non-numeric cell '" + cell + "' at row " + std::to_string(row) +
                              ", kpi '" + kpi + "'");
    return v;
}

double channel_median(const Matd& values, Eigen::Index col) {
    std::vector<double> obs;
    obs.reserve(static_cast<std::size_t>(values.rows()));
    for (Eigen::Index r = 0; r < values.rows(); ++r)
        if (!std::isnan(values(r, col))) obs.push_back(values(r, col));
    if (obs.empty()) return 0.0;
    std::sort(obs.begin(), obs.end());
    std::size_t n = obs.size();
    return n % 2 == 1 ? obs[n / 2] : 0.5 * (obs[n / 2 - 1] + obs[n / 2]);
}

}  // namespace

void TimeSeriesFrame::validate() const {
    if (kpis() < 1) throw ValidationError("frame must have at least one KPI");
    if (static_cast<Eigen::Index>(timestamps.size()) != length())
        throw ValidationError("timestamp count does not match value rows");
    if (static_cast<Eigen::Index>(kpi_names.size()) != kpis())
        throw ValidationError("kpi name count does not match value columns");
    std::unordered_set<std::string> seen;
    for (const auto& n : kpi_names)
        if (!seen.insert(n).second) throw ValidationError("duplicate kpi name '" + n + "'");
    std::int64_t dt = step();
    for (std::size_t i = 1; i < timestamps.size(); ++i) {
        std::int64_t d = timestamps[i] - timestamps[i - 1];
        if (d <= 0) throw ValidationError("timestamps not strictly increasing at index " + std::to_string(i));
        if (d != dt) throw ValidationError("timestamp step changes at index " + std::to_string(i));
    }
    if (!values.allFinite()) throw ValidationError("frame has non-finite values after imputation");
    if (has_labels()) {
        if (labels.rows() != length() || labels.cols() != kpis())
            throw ValidationError("label matrix shape mismatch");
        for (Eigen::Index r = 0; r < labels.rows(); ++r)
            for (Eigen::Index c = 0; c < labels.cols(); ++c)
                if (labels(r, c) > 1) throw ValidationError("labels must be 0/1");
    }
}

TimeSeriesFrame load_series_csv(const std::string& path, const std::string& label_path,
                                const LoadOptions& opts) {
    CsvTable table = read_csv(path);
    if (table.header.size() < 2)
        throw ValidationError("'" + path + "': need a timestamp column and at least one KPI");
    if (table.rows.empty()) throw ValidationError("'" + path + "': no data rows");

    TimeSeriesFrame frame;
    frame.kpi_names.assign(table.header.begin() + 1, table.header.end());
    const Eigen::Index F = static_cast<Eigen::Index>(frame.kpi_names.size());
    const Eigen::Index raw_T = static_cast<Eigen::Index>(table.rows.size());

    std::vector<std::int64_t> raw_ts(raw_T);
    Matd raw_values(raw_T, F);
    for (Eigen::Index r = 0; r < raw_T; ++r) {
        raw_ts[r] = parse_timestamp(table.rows[r][0]);
        for (Eigen::Index c = 0; c < F; ++c)
            raw_values(r, c) = parse_cell(table.rows[r][c + 1], r, frame.kpi_names[c]);
    }
    for (Eigen::Index r = 1; r < raw_T; ++r)
        if (raw_ts[r] <= raw_ts[r - 1])
            throw ValidationError("'" + path + "': timestamps not strictly increasing at index " +
                                  std::to_string(r));

    std::int64_t dt = opts.dt;
    if (dt == 0) dt = raw_T >= 2 ? raw_ts[1] - raw_ts[0] : 1;
    if (dt <= 0) throw ValidationError("declared step must be positive");

    // Map raw rows onto the regular grid; gaps become missing rows in fill
    // mode and errors in strict mode.
    std::vector<std::int64_t> grid_ts;
    std::vector<Eigen::Index> src_row;  // -1 for inserted rows
    for (Eigen::Index r = 0; r < raw_T; ++r) {
        if (r > 0) {
            std::int64_t gap = raw_ts[r] - raw_ts[r - 1];
            if (gap % dt != 0)
                throw ValidationError("'" + path + "': step at index " + std::to_string(r) +
                                      " is not a multiple of dt=" + std::to_string(dt));
            if (gap != dt) {
                if (opts.gaps == GapPolicy::Strict)
                    throw ValidationError("'" + path + "': gap at index " + std::to_string(r));
                for (std::int64_t t = raw_ts[r - 1] + dt; t < raw_ts[r]; t += dt) {
                    grid_ts.push_back(t);
                    src_row.push_back(-1);
                }
            }
        }
        grid_ts.push_back(raw_ts[r]);
        src_row.push_back(r);
    }

    const Eigen::Index T = static_cast<Eigen::Index>(grid_ts.size());
    frame.timestamps = std::move(grid_ts);
    frame.values.resize(T, F);
    frame.imputed = MatU8::Zero(T, F);
    for (Eigen::Index r = 0; r < T; ++r)
        for (Eigen::Index c = 0; c < F; ++c)
            frame.values(r, c) = src_row[r] >= 0 ? raw_values(src_row[r], c) : kMissing;

    // Carry-forward imputation; leading missing cells get the channel median.
    for (Eigen::Index c = 0; c < F; ++c) {
        double median = channel_median(frame.values, c);
        double last = median;
        bool seen = false;
        for (Eigen::Index r = 0; r < T; ++r) {
            if (std::isnan(frame.values(r, c))) {
                frame.values(r, c) = seen ? last : median;
                frame.imputed(r, c) = 1;
            } else {
                last = frame.values(r, c);
                seen = true;
            }
        }
    }

    if (!label_path.empty()) {
        CsvTable lt = read_csv(label_path);
        if (lt.header.size() != table.header.size())
            throw ValidationError("'" + label_path + "': label column count " +
                                  std::to_string(lt.header.size()) + " != data column count " +
                                  std::to_string(table.header.size()));
        if (static_cast<Eigen::Index>(lt.rows.size()) != raw_T)
            throw ValidationError("'" + label_path + "': label row count " +
                                  std::to_string(lt.rows.size()) + " != data row count " +
                                  std::to_string(raw_T));
        frame.labels = MatU8::Zero(T, F);
        Eigen::Index out_r = 0;
        for (Eigen::Index r = 0; r < T; ++r) {
            if (src_row[r] < 0) continue;  // inserted rows keep label 0
            const auto& cells = lt.rows[src_row[r]];
            std::int64_t lts = parse_timestamp(cells[0]);
            if (lts != frame.timestamps[r])
                throw ValidationError("'" + label_path + "': timestamp mismatch at row " +
                                      std::to_string(src_row[r]));
            for (Eigen::Index c = 0; c < F; ++c) {
                const std::string& cell = cells[c + 1];
                if (cell == "0" || cell.empty())
                    frame.labels(r, c) = 0;
                else if (cell == "1")
                    frame.labels(r, c) = 1;
                else
                    throw ValidationError("'" + label_path + "': label cell '" + cell +
                                          "' is not 0/1");
            }
            ++out_r;
        }
        (void)out_r;
    }

    frame.validate();
    return frame;
}

void write_series_csv(const TimeSeriesFrame& frame, const std::string& data_path,
                      const std::string& label_path) {
    std::ofstream out(data_path);
    if (!out) throw ValidationError("cannot write '" + data_path + "'");
    out << "timestamp";
    for (const auto& n : frame.kpi_names) out << ',' << n;
    out << '\n';
    out.precision(10);
    for (Eigen::Index r = 0; r < frame.length(); ++r) {
        out << frame.timestamps[r];
        for (Eigen::Index c = 0; c < frame.kpis(); ++c) out << ',' << frame.values(r, c);
        out << '\n';
    }
    if (!label_path.empty()) {
        if (!frame.has_labels()) throw ValidationError("frame has no labels to write");
        std::ofstream lout(label_path);
        if (!lout) throw ValidationError("cannot write '" + label_path + "'");
        lout << "timestamp";
        for (const auto& n : frame.kpi_names) lout << ',' << n;
        lout << '\n';
        for (Eigen::Index r = 0; r < frame.length(); ++r) {
            lout << frame.timestamps[r];
            for (Eigen::Index c = 0; c < frame.kpis(); ++c)
                lout << ',' << static_cast<int>(frame.labels(r, c));
            lout << '\n';
        }
    }
}

MatI32 derive_calendar_context(const TimeSeriesFrame& frame) {
    MatI32 out(frame.length(), 2);
    for (Eigen::Index r = 0; r < frame.length(); ++r) {
        out(r, 0) = hour_of_day(frame.timestamps[r]);
        out(r, 1) = weekday(frame.timestamps[r]);
    }
    return out;
}

TimeSeriesFrame slice_frame(const TimeSeriesFrame& frame, Eigen::Index start, Eigen::Index len) {
    TimeSeriesFrame out;
    out.timestamps.assign(frame.timestamps.begin() + start, frame.timestamps.begin() + start + len);
    out.values = frame.values.middleRows(start, len);
    out.kpi_names = frame.kpi_names;
    if (frame.has_labels()) out.labels = frame.labels.middleRows(start, len);
    if (frame.imputed.size() != 0) out.imputed = frame.imputed.middleRows(start, len);
    return out;
}

static void check_min_len(const std::array<Eigen::Index, 3>& sizes, Eigen::Index min_len) {
    static const char* names[3] = {"train", "val", "test"};
    for (int i = 0; i < 3; ++i)
        if (sizes[i] < min_len)
            throw ValidationError(std::string(names[i]) + " split has " + std::to_string(sizes[i]) +
                                  " timesteps, need at least " + std::to_string(min_len));
}

std::array<TimeSeriesFrame, 3> split_time_ordered(const TimeSeriesFrame& frame,
                                                  const std::array<double, 3>& fractions,
                                                  Eigen::Index min_len) {
    double sum = fractions[0] + fractions[1] + fractions[2];
    if (fractions[0] <= 0 || fractions[1] <= 0 || fractions[2] <= 0 || std::abs(sum - 1.0) > 1e-9)
        throw ValidationError("split fractions must be positive and sum to 1");
    const Eigen::Index T = frame.length();
    Eigen::Index b1 = static_cast<Eigen::Index>(std::floor(fractions[0] * T));
    Eigen::Index b2 = static_cast<Eigen::Index>(std::floor((fractions[0] + fractions[1]) * T));
    std::array<Eigen::Index, 3> sizes = {b1, b2 - b1, T - b2};
    check_min_len(sizes, std::max<Eigen::Index>(min_len, 1));
    return {slice_frame(frame, 0, b1), slice_frame(frame, b1, b2 - b1),
            slice_frame(frame, b2, T - b2)};
}

std::array<TimeSeriesFrame, 3> split_at_timestamps(const TimeSeriesFrame& frame, std::int64_t t1,
                                                   std::int64_t t2, Eigen::Index min_len) {
    if (t1 >= t2) throw ValidationError("split boundaries must satisfy t1 < t2");
    const auto& ts = frame.timestamps;
    auto it1 = std::lower_bound(ts.begin(), ts.end(), t1);
    auto it2 = std::lower_bound(ts.begin(), ts.end(), t2);
    Eigen::Index b1 = it1 - ts.begin();
    Eigen::Index b2 = it2 - ts.begin();
    std::array<Eigen::Index, 3> sizes = {b1, b2 - b1, frame.length() - b2};
    check_min_len(sizes, std::max<Eigen::Index>(min_len, 1));
    return {slice_frame(frame, 0, b1), slice_frame(frame, b1, b2 - b1),
            slice_frame(frame, b2, frame.length() - b2)};
}

Normalizer fit_normalizer(const TimeSeriesFrame& train) {
    if (train.length() == 0) throw ValidationError("cannot fit normalizer on an empty frame");
    const Eigen::Index F = train.kpis();
    Normalizer n;
    n.mean.resize(F);
    n.stddev.resize(F);
    n.constant_flag.assign(static_cast<std::size_t>(F), 0);
    for (Eigen::Index c = 0; c < F; ++c) {
        double mean = train.values.col(c).mean();
        double var = (train.values.col(c).array() - mean).square().mean();
        double sd = std::sqrt(var);
        n.mean[c] = mean;
        if (sd <= 0.0) {
            n.stddev[c] = 1.0;
            n.constant_flag[static_cast<std::size_t>(c)] = 1;
        } else {
            n.stddev[c] = sd;
        }
    }
    return n;
}

TimeSeriesFrame apply_normalizer(const TimeSeriesFrame& frame, const Normalizer& n) {
    if (n.mean.size() != frame.kpis()) throw ValidationError("normalizer KPI count mismatch");
    TimeSeriesFrame out = frame;
    for (Eigen::Index c = 0; c < frame.kpis(); ++c)
        out.values.col(c) = (frame.values.col(c).array() - n.mean[c]) / n.stddev[c];
    return out;
}

TimeSeriesFrame invert_normalizer(const TimeSeriesFrame& frame, const Normalizer& n) {
    if (n.mean.size() != frame.kpis()) throw ValidationError("normalizer KPI count mismatch");
    TimeSeriesFrame out = frame;
    for (Eigen::Index c = 0; c < frame.kpis(); ++c)
        out.values.col(c) = frame.values.col(c).array() * n.stddev[c] + n.mean[c];
    return out;
}

}  // namespace cmtad
