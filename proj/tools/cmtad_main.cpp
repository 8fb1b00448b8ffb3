#include <CLI11.hpp>

#include "cmtad/calendar.hpp"
#include "cmtad/checkpoint.hpp"
#include "cmtad/config.hpp"
#include "cmtad/evaluation.hpp"
#include "cmtad/pipeline.hpp"
#include "cmtad/scoring.hpp"
#include "cmtad/synth.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

using namespace cmtad;
using nlohmann::json;

namespace {

std::string default_config_path() {
    const char* env = std::getenv("CMTAD_CONFIG");
    return env ? env : "";
}

RunConfig load_config_or_die(const std::string& path) {
    if (path.empty())
        throw ValidationError("no config given: pass --config or set CMTAD_CONFIG");
    return load_config_file(path);
}

std::string sibling_path(const std::string& path, const std::string& suffix) {
    std::filesystem::path p(path);
    std::filesystem::path out = p.parent_path() / (p.stem().string() + suffix + p.extension().string());
    return out.string();
}

TimeSeriesFrame load_data(const RunConfig& cfg, const std::string& path) {
    LoadOptions opts;
    opts.dt = cfg.dt;
    opts.gaps = cfg.gap_policy;
    return load_series_csv(path, "", opts);
}

struct FlagsFile {
    std::vector<std::int64_t> timestamps;
    std::vector<std::string> kpi_names;
    MatU8 flags;
    ArtifactStamp stamp;
};

FlagsFile read_flags_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open flags file '" + path + "'");
    FlagsFile out;
    std::string line;
    if (!std::getline(in, line))
        throw ValidationError("flags file '" + path + "' is empty");
    unsigned long long hash = 0, seed = 0;
    if (std::sscanf(line.c_str(), "# config_hash=%llx seed=%llu", &hash, &seed) != 2)
        throw ValidationError("flags file '" + path + "' is missing the provenance stamp");
    out.stamp = {hash, seed};
    if (!std::getline(in, line) || line != "timestamp,kpi,flag")
        throw ValidationError("flags file '" + path + "' has an unexpected header");

    std::map<std::string, int> kpi_index;
    std::vector<std::int64_t> ts_col;
    std::vector<int> kpi_col;
    std::vector<std::uint8_t> flag_col;
    int lineno = 2;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::size_t c1 = line.find(','), c2 = line.rfind(',');
        if (c1 == std::string::npos || c2 == c1)
            throw ValidationError("flags file line " + std::to_string(lineno) + ": expected 3 fields");
        std::int64_t ts = parse_timestamp(line.substr(0, c1));
        std::string kpi = line.substr(c1 + 1, c2 - c1 - 1);
        std::string fl = line.substr(c2 + 1);
        if (fl != "0" && fl != "1")
            throw ValidationError("flags file line " + std::to_string(lineno) + ": flag must be 0 or 1");
        auto [it, added] = kpi_index.try_emplace(kpi, static_cast<int>(kpi_index.size()));
        if (added) out.kpi_names.push_back(kpi);
        if (out.timestamps.empty() || out.timestamps.back() != ts) out.timestamps.push_back(ts);
        ts_col.push_back(ts);
        kpi_col.push_back(it->second);
        flag_col.push_back(fl[0] == '1');
    }
    if (ts_col.empty()) throw ValidationError("flags file '" + path + "' has no rows");

    std::map<std::int64_t, Eigen::Index> ts_index;
    for (std::size_t i = 0; i < out.timestamps.size(); ++i)
        if (!ts_index.emplace(out.timestamps[i], static_cast<Eigen::Index>(i)).second)
            throw ValidationError("flags file: timestamp " + std::to_string(out.timestamps[i]) +
                                  " appears in two separate blocks");
    out.flags = MatU8::Zero(static_cast<Eigen::Index>(out.timestamps.size()),
                            static_cast<Eigen::Index>(out.kpi_names.size()));
    for (std::size_t i = 0; i < ts_col.size(); ++i)
        out.flags(ts_index[ts_col[i]], kpi_col[i]) = flag_col[i];
    return out;
}

std::vector<std::pair<MetricKind, AggMode>> selected_cells(const std::string& metric,
                                                           const std::string& mode) {
    std::vector<MetricKind> kinds;
    if (metric == "all")
        kinds = {MetricKind::Pointwise, MetricKind::Overlap, MetricKind::Affiliation};
    else
        kinds = {metric_kind_from_string(metric)};
    std::vector<AggMode> modes;
    if (mode == "all")
        modes = {AggMode::Macro, AggMode::Micro, AggMode::Union};
    else
        modes = {agg_mode_from_string(mode)};
    std::vector<std::pair<MetricKind, AggMode>> cells;
    for (MetricKind k : kinds)
        for (AggMode m : modes) cells.emplace_back(k, m);
    return cells;
}

std::vector<MetricRow> read_report_file(const std::string& path, ArtifactStamp& stamp) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open report '" + path + "'");
    std::vector<MetricRow> rows;
    if (std::filesystem::path(path).extension() == ".json") {
        json doc = json::parse(in, nullptr, false);
        if (doc.is_discarded()) throw ValidationError("report '" + path + "' is not valid JSON");
        stamp.config_hash = std::strtoull(doc.at("config_hash").get<std::string>().c_str(), nullptr, 16);
        stamp.seed = doc.at("seed").get<std::uint64_t>();
        for (const auto& r : doc.at("rows")) {
            MetricRow row;
            row.model = r.at("model").get<std::string>();
            row.kind = metric_kind_from_string(r.at("metric").get<std::string>());
            row.mode = agg_mode_from_string(r.at("mode").get<std::string>());
            row.precision = r.at("precision").get<double>();
            row.recall = r.at("recall").get<double>();
            row.f1 = r.at("f1").get<double>();
            row.gt_events = r.at("gt_events").get<std::int64_t>();
            row.pred_events = r.at("pred_events").get<std::int64_t>();
            row.gt_timestamps = r.at("gt_timestamps").get<std::int64_t>();
            row.pred_timestamps = r.at("pred_timestamps").get<std::int64_t>();
            rows.push_back(row);
        }
        return rows;
    }
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("report '" + path + "' is empty");
    unsigned long long hash = 0, seed = 0;
    if (std::sscanf(line.c_str(), "# config_hash=%llx seed=%llu", &hash, &seed) != 2)
        throw ValidationError("report '" + path + "' is missing the provenance stamp");
    stamp = {hash, seed};
    std::getline(in, line);  // column header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::size_t pos = 0;
        while (true) {
            std::size_t c = line.find(',', pos);
            f.push_back(line.substr(pos, c - pos));
            if (c == std::string::npos) break;
            pos = c + 1;
        }
        if (f.size() != 10)
            throw ValidationError("report '" + path + "': expected 10 columns");
        MetricRow row;
        row.model = f[0];
        row.kind = metric_kind_from_string(f[1]);
        row.mode = agg_mode_from_string(f[2]);
        row.precision = std::stod(f[3]);
        row.recall = std::stod(f[4]);
        row.f1 = std::stod(f[5]);
        row.gt_events = std::stoll(f[6]);
        row.pred_events = std::stoll(f[7]);
        row.gt_timestamps = std::stoll(f[8]);
        row.pred_timestamps = std::stoll(f[9]);
        rows.push_back(row);
    }
    return rows;
}

void write_report(const std::vector<MetricRow>& rows, const std::string& path,
                  const ArtifactStamp& stamp) {
    if (std::filesystem::path(path).extension() == ".json")
        write_report_json(rows, path, stamp);
    else
        write_report_csv(rows, path, stamp);
}

void print_rows(const std::vector<MetricRow>& rows) {
    std::printf("%-8s %-12s %-6s %9s %9s %9s %9s %9s\n", "model", "metric", "mode", "P", "R", "F1",
                "gt_ev", "pred_ev");
    for (const auto& r : rows)
        std::printf("%-8s %-12s %-6s %9.4f %9.4f %9.4f %9lld %9lld\n", r.model.c_str(),
                    to_string(r.kind), to_string(r.mode), r.precision, r.recall, r.f1,
                    static_cast<long long>(r.gt_events), static_cast<long long>(r.pred_events));
}

int cmd_synth(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::string& out, std::string out_labels) {
    RunConfig cfg = load_config_or_die(config_path);
    if (seed) {
        cfg.seed = *seed;
        cfg.synth.seed = *seed;
    }
    SynthResult result = generate_synthetic(cfg.synth);
    if (out_labels.empty()) out_labels = sibling_path(out, "_labels");
    write_series_csv(result.frame, out, out_labels);
    std::int64_t labeled = result.frame.labels.size() ? result.frame.labels.cast<std::int64_t>().sum() : 0;
    std::printf("wrote %lld timesteps x %lld KPIs to %s (%lld anomalous cells, labels in %s)\n",
                static_cast<long long>(result.frame.length()),
                static_cast<long long>(result.frame.kpis()), out.c_str(),
                static_cast<long long>(labeled), out_labels.c_str());
    return 0;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::string& data_path, const std::string& out_ckpt) {
    RunConfig cfg = load_config_or_die(config_path);
    if (seed) cfg.seed = *seed;

    TimeSeriesFrame frame = load_data(cfg, data_path);
    Checkpoint ckpt = train_pipeline(cfg, frame, [](const EpochStats& s) {
        std::printf("epoch %3d  train %.6f  val %.6f\n", s.epoch, s.train_loss, s.val_loss);
        std::fflush(stdout);
    });
    save_checkpoint(ckpt, out_ckpt);
    const auto& best = *std::min_element(
        ckpt.history.begin(), ckpt.history.end(),
        [](const EpochStats& a, const EpochStats& b) { return a.val_loss < b.val_loss; });
    std::printf("best epoch %d (val %.6f); checkpoint written to %s\n", best.epoch, best.val_loss,
                out_ckpt.c_str());
    return 0;
}

int cmd_calibrate(const std::string& ckpt_path, const std::string& val_data, double c_flag,
                  bool c_given, const std::string& split_name, const std::string& out_ckpt) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    RunConfig cfg = parse_config(ckpt.config_text);
    const double c = c_given ? c_flag : cfg.threshold_c;

    TimeSeriesFrame full = load_data(cfg, val_data);
    const Thresholds& th = calibrate_split(ckpt, full, split_from_string(split_name), c);
    const std::string out = out_ckpt.empty() ? ckpt_path : out_ckpt;
    save_checkpoint(ckpt, out);

    std::printf("calibrated with c = %g, thresholds written to %s\n", c, out.c_str());
    for (Eigen::Index i = 0; i < th.tau.size(); ++i)
        std::printf("  %-16s mu_val %.6g  tau %.6g\n",
                    th.kpi_names[static_cast<std::size_t>(i)].c_str(), th.mu_val(i), th.tau(i));
    return 0;
}

int cmd_score(const std::string& ckpt_path, const std::string& data_path,
              const std::string& out_scores, const std::string& out_flags,
              const std::string& split_name) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    if (!ckpt.thresholds)
        throw ValidationError("checkpoint has no thresholds; run calibrate first");
    RunConfig cfg = parse_config(ckpt.config_text);

    TimeSeriesFrame full = load_data(cfg, data_path);
    ScoreSeries scores = score_split(ckpt, full, split_from_string(split_name));
    MatU8 pred = flag_anomalies(scores, *ckpt.thresholds);

    ArtifactStamp stamp{ckpt.config_hash, ckpt.seed};
    write_scores_csv(scores, out_scores, stamp);
    write_flags_csv(scores, pred, out_flags, stamp);
    std::printf("scored %lld timesteps (%lld covered); %lld cells flagged\n",
                static_cast<long long>(scores.length()),
                static_cast<long long>(scores.length() - cfg.window),
                static_cast<long long>(pred.cast<std::int64_t>().sum()));
    return 0;
}

int cmd_eval(const std::string& flags_path, const std::string& labels_path,
             const std::string& mode, const std::string& metric, const std::string& out_report,
             std::optional<std::uint64_t> seed) {
    FlagsFile flags = read_flags_csv(flags_path);
    TimeSeriesFrame labels = load_series_csv(labels_path);

    for (const auto& name : flags.kpi_names)
        if (std::find(labels.kpi_names.begin(), labels.kpi_names.end(), name) ==
            labels.kpi_names.end())
            throw ValidationError("KPI '" + name + "' has flags but no labels");
    for (const auto& name : labels.kpi_names)
        if (std::find(flags.kpi_names.begin(), flags.kpi_names.end(), name) ==
            flags.kpi_names.end())
            throw ValidationError("KPI '" + name + "' has labels but no flags");

    std::map<std::int64_t, Eigen::Index> label_row;
    for (Eigen::Index t = 0; t < labels.length(); ++t)
        label_row[labels.timestamps[static_cast<std::size_t>(t)]] = t;
    const Eigen::Index T = static_cast<Eigen::Index>(flags.timestamps.size());
    const Eigen::Index F = static_cast<Eigen::Index>(flags.kpi_names.size());
    std::vector<Eigen::Index> label_col(static_cast<std::size_t>(F));
    for (Eigen::Index i = 0; i < F; ++i)
        label_col[static_cast<std::size_t>(i)] =
            std::find(labels.kpi_names.begin(), labels.kpi_names.end(),
                      flags.kpi_names[static_cast<std::size_t>(i)]) -
            labels.kpi_names.begin();
    MatU8 gt(T, F);
    for (Eigen::Index t = 0; t < T; ++t) {
        auto it = label_row.find(flags.timestamps[static_cast<std::size_t>(t)]);
        if (it == label_row.end())
            throw ValidationError("flagged timestamp " +
                                  std::to_string(flags.timestamps[static_cast<std::size_t>(t)]) +
                                  " is absent from the label file");
        for (Eigen::Index i = 0; i < F; ++i) {
            double v = labels.values(it->second, label_col[static_cast<std::size_t>(i)]);
            if (v != 0.0 && v != 1.0)
                throw ValidationError("label file contains a non-binary value for KPI '" +
                                      flags.kpi_names[static_cast<std::size_t>(i)] + "'");
            gt(t, i) = v != 0.0;
        }
    }

    const std::uint64_t baseline_seed = seed ? *seed : flags.stamp.seed;
    MatU8 random_pred = random_baseline(gt, baseline_seed);

    std::vector<MetricRow> rows;
    for (auto [kind, agg] : selected_cells(metric, mode))
        rows.push_back(aggregate(flags.flags, gt, kind, agg, "model"));
    for (auto [kind, agg] : selected_cells(metric, mode))
        rows.push_back(aggregate(random_pred, gt, kind, agg, "random"));

    write_report(rows, out_report, flags.stamp);
    print_rows(rows);
    std::printf("report written to %s\n", out_report.c_str());
    return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& format,
               const std::string& out) {
    std::vector<MetricRow> rows;
    ArtifactStamp stamp{};
    bool first = true;
    for (const auto& path : inputs) {
        ArtifactStamp s{};
        auto part = read_report_file(path, s);
        if (first) {
            stamp = s;
            first = false;
        } else if (s.config_hash != stamp.config_hash) {
            throw ValidationError("report '" + path + "' has a different config hash; refusing to merge");
        }
        rows.insert(rows.end(), part.begin(), part.end());
    }
    if (rows.empty()) throw ValidationError("no rows found in the input reports");

    if (!out.empty()) {
        if (format == "json")
            write_report_json(rows, out, stamp);
        else
            write_report_csv(rows, out, stamp);
        std::printf("merged %zu rows into %s\n", rows.size(), out.c_str());
        return 0;
    }
    if (format == "json") {
        // Mirror of the file writer, kept in sync with it.
        json doc;
        char hex[17];
        std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(stamp.config_hash));
        doc["config_hash"] = hex;
        doc["seed"] = stamp.seed;
        doc["rows"] = json::array();
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
        std::printf("%s\n", doc.dump(2).c_str());
    } else {
        print_rows(rows);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"context-aware multivariate KPI anomaly detection"};
    app.require_subcommand(1);

    std::string config_path = default_config_path();
    std::optional<std::uint64_t> seed;

    auto* synth = app.add_subcommand("synth", "generate a labeled synthetic KPI series");
    std::string synth_out, synth_out_labels;
    synth->add_option("--config", config_path, "run configuration file");
    synth->add_option("--seed", seed, "override the config seed");
    synth->add_option("--out", synth_out, "output data CSV")->required();
    synth->add_option("--out-labels", synth_out_labels, "output label CSV (default <out>_labels)");

    auto* train_cmd = app.add_subcommand("train", "train a model on the train split");
    std::string train_data, train_out;
    train_cmd->add_option("--config", config_path, "run configuration file");
    train_cmd->add_option("--seed", seed, "override the config seed");
    train_cmd->add_option("--data", train_data, "input data CSV")->required();
    train_cmd->add_option("--out-ckpt", train_out, "output checkpoint path")->required();

    auto* calibrate = app.add_subcommand("calibrate", "fit anomaly thresholds, labels unseen");
    std::string cal_ckpt, cal_data, cal_split = "val", cal_out;
    double cal_c = 4.0;
    calibrate->add_option("--ckpt", cal_ckpt, "trained checkpoint")->required();
    calibrate->add_option("--val-data", cal_data, "data CSV to calibrate on")->required();
    auto* c_opt = calibrate->add_option("--c", cal_c, "threshold multiplier (default from config)");
    calibrate->add_option("--split", cal_split, "which split of the file to use (default val)");
    calibrate->add_option("--out-ckpt", cal_out, "write here instead of updating in place");

    auto* score = app.add_subcommand("score", "score a series and emit anomaly flags");
    std::string score_ckpt, score_data, score_out, flags_out, score_split = "test";
    score->add_option("--ckpt", score_ckpt, "calibrated checkpoint")->required();
    score->add_option("--data", score_data, "input data CSV")->required();
    score->add_option("--out-scores", score_out, "output scores CSV")->required();
    score->add_option("--out-flags", flags_out, "output flags CSV")->required();
    score->add_option("--split", score_split, "which split of the file to score (default test)");

    auto* eval = app.add_subcommand("eval", "compare flags against ground-truth labels");
    std::string eval_flags, eval_labels, eval_mode = "all", eval_metric = "all", eval_out;
    eval->add_option("--flags", eval_flags, "flags CSV from score")->required();
    eval->add_option("--labels", eval_labels, "ground-truth label CSV")->required();
    eval->add_option("--mode", eval_mode, "macro, micro, union or all")
        ->check(CLI::IsMember({"macro", "micro", "union", "all"}));
    eval->add_option("--metric", eval_metric, "pointwise, overlap, affiliation or all")
        ->check(CLI::IsMember({"pointwise", "overlap", "affiliation", "all"}));
    eval->add_option("--out-report", eval_out, "output report (.csv or .json)")->required();
    eval->add_option("--seed", seed, "random-baseline seed (default: the flags stamp)");

    auto* report = app.add_subcommand("report", "merge evaluation reports");
    std::vector<std::string> report_inputs;
    std::string report_format = "csv", report_out;
    report->add_option("--inputs", report_inputs, "report files to merge")->required();
    report->add_option("--format", report_format, "csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
    report->add_option("--out", report_out, "output path (default: print to stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (synth->parsed()) return cmd_synth(config_path, seed, synth_out, synth_out_labels);
        if (train_cmd->parsed()) return cmd_train(config_path, seed, train_data, train_out);
        if (calibrate->parsed())
            return cmd_calibrate(cal_ckpt, cal_data, cal_c, c_opt->count() > 0, cal_split, cal_out);
        if (score->parsed())
            return cmd_score(score_ckpt, score_data, score_out, flags_out, score_split);
        if (eval->parsed())
            return cmd_eval(eval_flags, eval_labels, eval_mode, eval_metric, eval_out, seed);
        if (report->parsed()) return cmd_report(report_inputs, report_format, report_out);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
