#pragma once

#include "cmtad/common.hpp"
#include "cmtad/scoring.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cmtad {

// Closed integer interval of anomalous timestamp indices.
struct Event {
    Eigen::Index start = 0;
    Eigen::Index end = 0;

    Eigen::Index length() const { return end - start + 1; }
    bool overlaps(const Event& o) const { return start <= o.end && o.start <= end; }
    bool operator==(const Event& o) const = default;
};

// Sorted, disjoint, maximal events over one binary stream.
using EventList = std::vector<Event>;

using BinaryStream = std::vector<std::uint8_t>;

EventList merge_events(const BinaryStream& labels);
BinaryStream expand_events(const EventList& events, Eigen::Index length);

struct Metrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// 2PR/(P+R), 0 when both are 0.
double f1_score(double precision, double recall);

struct PointwiseResult {
    Metrics metrics;
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
};

PointwiseResult pointwise_metrics(const BinaryStream& pred, const BinaryStream& gt);

struct OverlapResult {
    Metrics metrics;
    std::int64_t pred_events = 0;
    std::int64_t gt_events = 0;
    std::int64_t matched_pred = 0;  // predicted events overlapping >= 1 GT event
    std::int64_t detected_gt = 0;   // GT events overlapped by >= 1 predicted event
};

OverlapResult overlap_event_metrics(const EventList& pred, const EventList& gt);

// One zone of the stream partition around a GT event.
struct ZoneScore {
    bool has_pred = false;
    double precision = 0.0;  // mean individual precision over predicted points, valid iff has_pred
    double recall = 0.0;     // mean individual recall over GT points, 0 when no predictions
};

struct AffiliationResult {
    Metrics metrics;
    std::vector<ZoneScore> zones;
};

// Zone-based affiliation on discrete indices; requires gt to contain at least
// one event.
AffiliationResult affiliation_metrics(const BinaryStream& pred, const BinaryStream& gt);

enum class MetricKind { Pointwise, Overlap, Affiliation };
enum class AggMode { Macro, Micro, Union };

const char* to_string(MetricKind kind);
const char* to_string(AggMode mode);
MetricKind metric_kind_from_string(const std::string& s);
AggMode agg_mode_from_string(const std::string& s);

// One report row. Counts depend on the aggregation mode only: Macro and Micro
// carry per-KPI sums, Union counts the OR-reduced streams.
struct MetricRow {
    std::string model;
    MetricKind kind = MetricKind::Pointwise;
    AggMode mode = AggMode::Macro;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::int64_t gt_events = 0;
    std::int64_t pred_events = 0;
    std::int64_t gt_timestamps = 0;
    std::int64_t pred_timestamps = 0;
};

MetricRow aggregate(const MatU8& pred, const MatU8& gt, MetricKind kind, AggMode mode,
                    const std::string& model = "model");

// Every kind x mode combination, pointwise/overlap/affiliation x macro/micro/union.
std::vector<MetricRow> full_report(const MatU8& pred, const MatU8& gt, const std::string& model);

// Per-KPI Bernoulli flags with p equal to that KPI's empirical prevalence.
MatU8 random_baseline(const MatU8& gt, std::uint64_t seed);

void write_report_csv(const std::vector<MetricRow>& rows, const std::string& path,
                      const ArtifactStamp& stamp);
void write_report_json(const std::vector<MetricRow>& rows, const std::string& path,
                       const ArtifactStamp& stamp);

}  // namespace cmtad
