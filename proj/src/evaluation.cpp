#include "cmtad/evaluation.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace cmtad {

EventList merge_events(const BinaryStream& labels) {
    EventList out;
    const Eigen::Index T = static_cast<Eigen::Index>(labels.size());
    Eigen::Index t = 0;
    while (t < T) {
        if (labels[static_cast<std::size_t>(t)]) {
            Eigen::Index start = t;
            while (t + 1 < T && labels[static_cast<std::size_t>(t + 1)]) ++t;
            out.push_back({start, t});
        }
        ++t;
    }
    return out;
}

BinaryStream expand_events(const EventList& events, Eigen::Index length) {
    BinaryStream out(static_cast<std::size_t>(length), 0);
    for (const auto& e : events) {
        if (e.start < 0 || e.end < e.start || e.end >= length)
            throw ValidationError("event [" + std::to_string(e.start) + "," + std::to_string(e.end) +
                                  "] does not fit in a stream of length " + std::to_string(length));
        for (Eigen::Index t = e.start; t <= e.end; ++t) out[static_cast<std::size_t>(t)] = 1;
    }
    return out;
}

double f1_score(double precision, double recall) {
    const double s = precision + recall;
    return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

PointwiseResult pointwise_metrics(const BinaryStream& pred, const BinaryStream& gt) {
    if (pred.size() != gt.size())
        throw ValidationError("pointwise metrics: pred length " + std::to_string(pred.size()) +
                              " != gt length " + std::to_string(gt.size()));
    PointwiseResult r;
    for (std::size_t t = 0; t < pred.size(); ++t) {
        if (pred[t] && gt[t]) ++r.tp;
        else if (pred[t]) ++r.fp;
        else if (gt[t]) ++r.fn;
    }
    r.metrics.precision = r.tp + r.fp > 0 ? double(r.tp) / double(r.tp + r.fp) : 0.0;
    r.metrics.recall = r.tp + r.fn > 0 ? double(r.tp) / double(r.tp + r.fn) : 0.0;
    r.metrics.f1 = f1_score(r.metrics.precision, r.metrics.recall);
    return r;
}

OverlapResult overlap_event_metrics(const EventList& pred, const EventList& gt) {
    OverlapResult r;
    r.pred_events = static_cast<std::int64_t>(pred.size());
    r.gt_events = static_cast<std::int64_t>(gt.size());
    for (const auto& p : pred)
        for (const auto& g : gt)
            if (p.overlaps(g)) {
                ++r.matched_pred;
                break;
            }
    for (const auto& g : gt)
        for (const auto& p : pred)
            if (g.overlaps(p)) {
                ++r.detected_gt;
                break;
            }
    r.metrics.precision = r.pred_events > 0 ? double(r.matched_pred) / double(r.pred_events) : 0.0;
    r.metrics.recall = r.gt_events > 0 ? double(r.detected_gt) / double(r.gt_events) : 0.0;
    r.metrics.f1 = f1_score(r.metrics.precision, r.metrics.recall);
    return r;
}

namespace {

// dist(p, [a,b]) on integer indices, 0 inside.
Eigen::Index interval_dist(Eigen::Index p, Eigen::Index a, Eigen::Index b) {
    if (p < a) return a - p;
    if (p > b) return p - b;
    return 0;
}

// |{p in [lo,hi] : p <= a - d or p >= b + d}| for d >= 1.
Eigen::Index count_at_least(Eigen::Index lo, Eigen::Index hi, Eigen::Index a, Eigen::Index b,
                            Eigen::Index d) {
    const Eigen::Index left = std::max<Eigen::Index>(0, std::min(hi, a - d) - lo + 1);
    const Eigen::Index right = std::max<Eigen::Index>(0, hi - std::max(lo, b + d) + 1);
    return left + right;
}

}  // namespace

AffiliationResult affiliation_metrics(const BinaryStream& pred, const BinaryStream& gt) {
    if (pred.size() != gt.size())
        throw ValidationError("affiliation metrics: pred length " + std::to_string(pred.size()) +
                              " != gt length " + std::to_string(gt.size()));
    const EventList gt_events = merge_events(gt);
    if (gt_events.empty())
        throw ValidationError("affiliation metrics: ground truth contains no events");
    const Eigen::Index T = static_cast<Eigen::Index>(gt.size());

    AffiliationResult result;
    double prec_sum = 0.0;
    Eigen::Index prec_zones = 0;
    double rec_sum = 0.0;

    for (std::size_t j = 0; j < gt_events.size(); ++j) {
        const Event& I = gt_events[j];
        const Eigen::Index lo = j == 0 ? 0 : (gt_events[j - 1].end + gt_events[j].start) / 2 + 1;
        const Eigen::Index hi =
            j + 1 == gt_events.size() ? T - 1 : (gt_events[j].end + gt_events[j + 1].start) / 2;
        const double zone_size = static_cast<double>(hi - lo + 1);

        std::vector<Eigen::Index> pts;
        for (Eigen::Index p = lo; p <= hi; ++p)
            if (pred[static_cast<std::size_t>(p)]) pts.push_back(p);

        ZoneScore zone;
        zone.has_pred = !pts.empty();
        if (zone.has_pred) {
            double acc = 0.0;
            for (Eigen::Index x : pts) {
                const Eigen::Index d = interval_dist(x, I.start, I.end);
                acc += d == 0 ? 1.0 : double(count_at_least(lo, hi, I.start, I.end, d)) / zone_size;
            }
            zone.precision = acc / double(pts.size());

            double racc = 0.0;
            for (Eigen::Index y = I.start; y <= I.end; ++y) {
                auto it = std::lower_bound(pts.begin(), pts.end(), y);
                Eigen::Index d = std::numeric_limits<Eigen::Index>::max();
                if (it != pts.end()) d = *it - y;
                if (it != pts.begin()) d = std::min(d, y - *(it - 1));
                racc += d == 0 ? 1.0 : double(count_at_least(lo, hi, y, y, d)) / zone_size;
            }
            zone.recall = racc / double(I.length());
        }
        result.zones.push_back(zone);
        if (zone.has_pred) {
            prec_sum += zone.precision;
            ++prec_zones;
        }
        rec_sum += zone.recall;
    }

    result.metrics.precision = prec_zones > 0 ? prec_sum / double(prec_zones) : 0.0;
    result.metrics.recall = rec_sum / double(result.zones.size());
    result.metrics.f1 = f1_score(result.metrics.precision, result.metrics.recall);
    return result;
}

const char* to_string(MetricKind kind) {
    switch (kind) {
        case MetricKind::Pointwise: return "pointwise";
        case MetricKind::Overlap: return "overlap";
        case MetricKind::Affiliation: return "affiliation";
    }
    return "?";
}

const char* to_string(AggMode mode) {
    switch (mode) {
        case AggMode::Macro: return "macro";
        case AggMode::Micro: return "micro";
        case AggMode::Union: return "union";
    }
    return "?";
}

MetricKind metric_kind_from_string(const std::string& s) {
    if (s == "pointwise") return MetricKind::Pointwise;
    if (s == "overlap") return MetricKind::Overlap;
    if (s == "affiliation") return MetricKind::Affiliation;
    throw ValidationError("unknown metric kind '" + s + "'");
}

AggMode agg_mode_from_string(const std::string& s) {
    if (s == "macro") return AggMode::Macro;
    if (s == "micro") return AggMode::Micro;
    if (s == "union") return AggMode::Union;
    throw ValidationError("unknown aggregation mode '" + s + "'");
}

namespace {

BinaryStream column(const MatU8& m, Eigen::Index i) {
    BinaryStream out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index t = 0; t < m.rows(); ++t)
        out[static_cast<std::size_t>(t)] = m(t, i) ? 1 : 0;
    return out;
}

BinaryStream or_reduce(const MatU8& m) {
    BinaryStream out(static_cast<std::size_t>(m.rows()), 0);
    for (Eigen::Index t = 0; t < m.rows(); ++t)
        for (Eigen::Index i = 0; i < m.cols(); ++i)
            if (m(t, i)) {
                out[static_cast<std::size_t>(t)] = 1;
                break;
            }
    return out;
}

std::int64_t positives(const BinaryStream& s) {
    std::int64_t n = 0;
    for (auto v : s) n += v ? 1 : 0;
    return n;
}

Metrics single_stream(const BinaryStream& pred, const BinaryStream& gt, MetricKind kind) {
    switch (kind) {
        case MetricKind::Pointwise: return pointwise_metrics(pred, gt).metrics;
        case MetricKind::Overlap:
            return overlap_event_metrics(merge_events(pred), merge_events(gt)).metrics;
        case MetricKind::Affiliation: return affiliation_metrics(pred, gt).metrics;
    }
    return {};
}

}  // namespace

MetricRow aggregate(const MatU8& pred, const MatU8& gt, MetricKind kind, AggMode mode,
                    const std::string& model) {
    if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
        throw ValidationError("aggregate: pred and gt shapes differ");
    if (gt.cols() < 1) throw ValidationError("aggregate: no KPI streams");
    const Eigen::Index F = gt.cols();

    MetricRow row;
    row.model = model;
    row.kind = kind;
    row.mode = mode;

    if (mode == AggMode::Union) {
        const BinaryStream up = or_reduce(pred), ug = or_reduce(gt);
        row.gt_events = static_cast<std::int64_t>(merge_events(ug).size());
        row.pred_events = static_cast<std::int64_t>(merge_events(up).size());
        row.gt_timestamps = positives(ug);
        row.pred_timestamps = positives(up);
        const Metrics m = single_stream(up, ug, kind);
        row.precision = m.precision;
        row.recall = m.recall;
        row.f1 = m.f1;
        return row;
    }

    for (Eigen::Index i = 0; i < F; ++i) {
        const BinaryStream p = column(pred, i), g = column(gt, i);
        row.gt_events += static_cast<std::int64_t>(merge_events(g).size());
        row.pred_events += static_cast<std::int64_t>(merge_events(p).size());
        row.gt_timestamps += positives(g);
        row.pred_timestamps += positives(p);
    }

    if (mode == AggMode::Macro) {
        double ps = 0, rs = 0, fs = 0;
        Eigen::Index used = 0;
        for (Eigen::Index i = 0; i < F; ++i) {
            const BinaryStream p = column(pred, i), g = column(gt, i);
            if (kind == MetricKind::Affiliation && merge_events(g).empty()) continue;
            const Metrics m = single_stream(p, g, kind);
            ps += m.precision;
            rs += m.recall;
            fs += m.f1;
            ++used;
        }
        if (used == 0)
            throw ValidationError("aggregate: no KPI has ground-truth events to affiliate against");
        row.precision = ps / double(used);
        row.recall = rs / double(used);
        row.f1 = fs / double(used);
        return row;
    }

    // Micro: pool confusion counts (pointwise), event counts (overlap) or
    // zones (affiliation) across KPIs, then compute once.
    switch (kind) {
        case MetricKind::Pointwise: {
            std::int64_t tp = 0, fp = 0, fn = 0;
            for (Eigen::Index i = 0; i < F; ++i) {
                const PointwiseResult r = pointwise_metrics(column(pred, i), column(gt, i));
                tp += r.tp;
                fp += r.fp;
                fn += r.fn;
            }
            row.precision = tp + fp > 0 ? double(tp) / double(tp + fp) : 0.0;
            row.recall = tp + fn > 0 ? double(tp) / double(tp + fn) : 0.0;
            break;
        }
        case MetricKind::Overlap: {
            std::int64_t matched = 0, npred = 0, detected = 0, ngt = 0;
            for (Eigen::Index i = 0; i < F; ++i) {
                const OverlapResult r =
                    overlap_event_metrics(merge_events(column(pred, i)), merge_events(column(gt, i)));
                matched += r.matched_pred;
                npred += r.pred_events;
                detected += r.detected_gt;
                ngt += r.gt_events;
            }
            row.precision = npred > 0 ? double(matched) / double(npred) : 0.0;
            row.recall = ngt > 0 ? double(detected) / double(ngt) : 0.0;
            break;
        }
        case MetricKind::Affiliation: {
            double prec_sum = 0.0, rec_sum = 0.0;
            std::int64_t prec_zones = 0, all_zones = 0;
            for (Eigen::Index i = 0; i < F; ++i) {
                const BinaryStream g = column(gt, i);
                if (merge_events(g).empty()) continue;
                const AffiliationResult r = affiliation_metrics(column(pred, i), g);
                for (const auto& z : r.zones) {
                    if (z.has_pred) {
                        prec_sum += z.precision;
                        ++prec_zones;
                    }
                    rec_sum += z.recall;
                    ++all_zones;
                }
            }
            if (all_zones == 0)
                throw ValidationError("aggregate: no KPI has ground-truth events to affiliate against");
            row.precision = prec_zones > 0 ? prec_sum / double(prec_zones) : 0.0;
            row.recall = rec_sum / double(all_zones);
            break;
        }
    }
    row.f1 = f1_score(row.precision, row.recall);
    return row;
}

std::vector<MetricRow> full_report(const MatU8& pred, const MatU8& gt, const std::string& model) {
    std::vector<MetricRow> rows;
    for (MetricKind kind : {MetricKind::Pointwise, MetricKind::Overlap, MetricKind::Affiliation})
        for (AggMode mode : {AggMode::Macro, AggMode::Micro, AggMode::Union})
            rows.push_back(aggregate(pred, gt, kind, mode, model));
    return rows;
}

MatU8 random_baseline(const MatU8& gt, std::uint64_t seed) {
    const Eigen::Index T = gt.rows(), F = gt.cols();
    if (T < 1) throw ValidationError("random baseline: empty stream");
    MatU8 out = MatU8::Zero(T, F);
    for (Eigen::Index i = 0; i < F; ++i) {
        std::int64_t pos = 0;
        for (Eigen::Index t = 0; t < T; ++t) pos += gt(t, i) ? 1 : 0;
        const double prev = double(pos) / double(T);
        Rng rng = Rng::sub_stream(seed, 0x62617365ull + static_cast<std::uint64_t>(i));
        for (Eigen::Index t = 0; t < T; ++t) out(t, i) = rng.bernoulli(prev) ? 1 : 0;
    }
    return out;
}

void write_report_csv(const std::vector<MetricRow>& rows, const std::string& path,
                      const ArtifactStamp& stamp) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open '" + path + "' for writing");
    char line[256];
    std::snprintf(line, sizeof(line), "# config_hash=%016llx seed=%llu\n",
                  static_cast<unsigned long long>(stamp.config_hash),
                  static_cast<unsigned long long>(stamp.seed));
    out << line;
    out << "model,metric,mode,precision,recall,f1,gt_events,pred_events,gt_timestamps,pred_"
           "timestamps\n";
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%s,%s,%s,%.6f,%.6f,%.6f,%lld,%lld,%lld,%lld\n",
                      r.model.c_str(), to_string(r.kind), to_string(r.mode), r.precision, r.recall,
                      r.f1, static_cast<long long>(r.gt_events), static_cast<long long>(r.pred_events),
                      static_cast<long long>(r.gt_timestamps),
                      static_cast<long long>(r.pred_timestamps));
        out << line;
    }
    if (!out) throw ValidationError("failed writing '" + path + "'");
}

void write_report_json(const std::vector<MetricRow>& rows, const std::string& path,
                       const ArtifactStamp& stamp) {
    nlohmann::json doc;
    char hash_hex[17];
    std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                  static_cast<unsigned long long>(stamp.config_hash));
    doc["config_hash"] = hash_hex;
    doc["seed"] = stamp.seed;
    doc["rows"] = nlohmann::json::array();
    for (const auto& r : rows)
        doc["rows"].push_back({{"model", r.model},
                               {"metric", to_string(r.kind)},
                               {"mode", to_string(r.mode)},
                               {"precision", r.precision},
                               {"recall", r.recall},
                               {"f1", r.f1},
                               {"gt_events", r.gt_events},
                               {"pred_events", r.pred_events},
                               {"gt_timestamps", r.gt_timestamps},
                               {"pred_timestamps", r.pred_timestamps}});
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open '" + path + "' for writing");
    out << doc.dump(2) << "\n";
    if (!out) throw ValidationError("failed writing '" + path + "'");
}

}  // namespace cmtad
