#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cmtad/checkpoint.hpp"
#include "cmtad/config.hpp"
#include "cmtad/evaluation.hpp"
#include "cmtad/pipeline.hpp"
#include "cmtad/scoring.hpp"
#include "cmtad/synth.hpp"

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

namespace py = pybind11;
using namespace cmtad;

namespace {

TimeSeriesFrame frame_from_py(const std::vector<std::int64_t>& timestamps,
                              const Eigen::Ref<const Matd>& values,
                              const std::vector<std::string>& kpi_names) {
    TimeSeriesFrame frame;
    frame.timestamps = timestamps;
    frame.values = values;
    frame.kpi_names = kpi_names;
    frame.imputed = MatU8::Zero(values.rows(), values.cols());
    frame.validate();
    return frame;
}

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

py::array_t<std::uint8_t> u8_array(const MatU8& m) {
    // Column-major strides; pybind11 copies the buffer since no base is given.
    return py::array_t<std::uint8_t>(
        {m.rows(), m.cols()},
        {static_cast<py::ssize_t>(sizeof(std::uint8_t)),
         static_cast<py::ssize_t>(m.rows() * sizeof(std::uint8_t))},
        m.data());
}

py::dict row_to_dict(const MetricRow& r) {
    py::dict d;
    d["model"] = r.model;
    d["metric"] = std::string(to_string(r.kind));
    d["mode"] = std::string(to_string(r.mode));
    d["precision"] = r.precision;
    d["recall"] = r.recall;
    d["f1"] = r.f1;
    d["gt_events"] = r.gt_events;
    d["pred_events"] = r.pred_events;
    d["gt_timestamps"] = r.gt_timestamps;
    d["pred_timestamps"] = r.pred_timestamps;
    return d;
}

}  // namespace

PYBIND11_MODULE(_cmtad, m) {
    m.doc() = "context-aware multivariate KPI anomaly detection";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

    m.def("canonical_config", [](const std::string& text) {
        return canonical_config_text(parse_config(text));
    }, py::arg("text"), "Parse a config and return its canonical serialization.");

    m.def("config_hash", [](const std::string& text) {
        return hash_hex(config_hash(parse_config(text)));
    }, py::arg("text"), "Hex hash of the canonical form of a config.");

    m.def("generate", [](const std::string& config_text) {
        RunConfig cfg = parse_config(config_text);
        SynthResult result = generate_synthetic(cfg.synth);
        py::dict d;
        d["timestamps"] = result.frame.timestamps;
        d["values"] = result.frame.values;
        d["labels"] = u8_array(result.frame.labels);
        d["kpi_names"] = result.frame.kpi_names;
        return d;
    }, py::arg("config_text"), "Generate a labeled synthetic KPI frame.");

    m.def("train", [](const std::string& config_text, const std::vector<std::int64_t>& timestamps,
                      const Eigen::Ref<const Matd>& values,
                      const std::vector<std::string>& kpi_names, const std::string& ckpt_path,
                      bool verbose) {
        RunConfig cfg = parse_config(config_text);
        TimeSeriesFrame frame = frame_from_py(timestamps, values, kpi_names);
        Checkpoint ckpt = train_pipeline(cfg, frame, [&](const EpochStats& s) {
            if (verbose)
                py::print("epoch", s.epoch, "train", s.train_loss, "val", s.val_loss);
        });
        save_checkpoint(ckpt, ckpt_path);
        py::list history;
        for (const auto& e : ckpt.history) {
            py::dict d;
            d["epoch"] = e.epoch;
            d["train_loss"] = e.train_loss;
            d["val_loss"] = e.val_loss;
            history.append(d);
        }
        return history;
    }, py::arg("config_text"), py::arg("timestamps"), py::arg("values"), py::arg("kpi_names"),
       py::arg("ckpt_path"), py::arg("verbose") = false,
       "Train on the train split and write a checkpoint; returns the loss history.");

    m.def("calibrate", [](const std::string& ckpt_path, const std::vector<std::int64_t>& timestamps,
                          const Eigen::Ref<const Matd>& values,
                          const std::vector<std::string>& kpi_names, double c,
                          const std::string& split) {
        Checkpoint ckpt = load_checkpoint(ckpt_path);
        TimeSeriesFrame frame = frame_from_py(timestamps, values, kpi_names);
        const Thresholds& th = calibrate_split(ckpt, frame, split_from_string(split), c);
        save_checkpoint(ckpt, ckpt_path);
        py::dict d;
        d["tau"] = th.tau;
        d["mu_val"] = th.mu_val;
        d["c"] = th.c;
        d["kpi_names"] = th.kpi_names;
        return d;
    }, py::arg("ckpt_path"), py::arg("timestamps"), py::arg("values"), py::arg("kpi_names"),
       py::arg("c") = 4.0, py::arg("split") = "val",
       "Fit per-KPI thresholds on the chosen split and store them in the checkpoint.");

    m.def("score", [](const std::string& ckpt_path, const std::vector<std::int64_t>& timestamps,
                      const Eigen::Ref<const Matd>& values,
                      const std::vector<std::string>& kpi_names, const std::string& split) {
        Checkpoint ckpt = load_checkpoint(ckpt_path);
        TimeSeriesFrame frame = frame_from_py(timestamps, values, kpi_names);
        ScoreSeries s = score_split(ckpt, frame, split_from_string(split));
        py::dict d;
        d["timestamps"] = s.timestamps;
        d["scores"] = s.scores;
        d["forecast_component"] = s.forecast_comp;
        d["recon_component"] = s.recon_comp;
        d["covered"] = s.covered;
        if (ckpt.thresholds) {
            MatU8 pred = flag_anomalies(s, *ckpt.thresholds);
            d["flags"] = u8_array(pred);
        }
        return d;
    }, py::arg("ckpt_path"), py::arg("timestamps"), py::arg("values"), py::arg("kpi_names"),
       py::arg("split") = "test",
       "Score the chosen split; includes flags when the checkpoint is calibrated.");

    m.def("evaluate", [](const py::array_t<std::uint8_t>& pred, const py::array_t<std::uint8_t>& gt,
                         const std::string& metric, const std::string& mode,
                         const std::string& model) {
        auto p = pred.unchecked<2>();
        auto g = gt.unchecked<2>();
        MatU8 pm(p.shape(0), p.shape(1)), gm(g.shape(0), g.shape(1));
        for (py::ssize_t i = 0; i < p.shape(0); ++i)
            for (py::ssize_t j = 0; j < p.shape(1); ++j) pm(i, j) = p(i, j);
        for (py::ssize_t i = 0; i < g.shape(0); ++i)
            for (py::ssize_t j = 0; j < g.shape(1); ++j) gm(i, j) = g(i, j);
        if (metric == "all" || mode == "all") {
            py::list rows;
            std::vector<MetricKind> kinds =
                metric == "all" ? std::vector<MetricKind>{MetricKind::Pointwise, MetricKind::Overlap,
                                                          MetricKind::Affiliation}
                                : std::vector<MetricKind>{metric_kind_from_string(metric)};
            std::vector<AggMode> modes =
                mode == "all" ? std::vector<AggMode>{AggMode::Macro, AggMode::Micro, AggMode::Union}
                              : std::vector<AggMode>{agg_mode_from_string(mode)};
            for (MetricKind k : kinds)
                for (AggMode md : modes) rows.append(row_to_dict(aggregate(pm, gm, k, md, model)));
            return py::object(rows);
        }
        return py::object(row_to_dict(
            aggregate(pm, gm, metric_kind_from_string(metric), agg_mode_from_string(mode), model)));
    }, py::arg("pred"), py::arg("gt"), py::arg("metric") = "all", py::arg("mode") = "all",
       py::arg("model") = "model",
       "Precision/recall/F1 rows for binary prediction vs ground truth matrices.");

    m.def("random_baseline", [](const py::array_t<std::uint8_t>& gt, std::uint64_t seed) {
        auto g = gt.unchecked<2>();
        MatU8 gm(g.shape(0), g.shape(1));
        for (py::ssize_t i = 0; i < g.shape(0); ++i)
            for (py::ssize_t j = 0; j < g.shape(1); ++j) gm(i, j) = g(i, j);
        return u8_array(random_baseline(gm, seed));
    }, py::arg("gt"), py::arg("seed"), "Prevalence-matched random flags for a label matrix.");

    m.def("checkpoint_info", [](const std::string& path) {
        Checkpoint ckpt = load_checkpoint(path);
        py::dict d;
        d["kpi_names"] = ckpt.kpi_names;
        d["seed"] = ckpt.seed;
        d["config_hash"] = hash_hex(ckpt.config_hash);
        d["config_text"] = ckpt.config_text;
        d["window"] = ckpt.model().window;
        d["horizon"] = ckpt.model().horizon;
        d["calibrated"] = ckpt.thresholds.has_value();
        d["epochs_trained"] = ckpt.history.size();
        return d;
    }, py::arg("path"), "Checkpoint metadata without the tensors.");
}
