#include "cmtad/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace cmtad {

void RunConfig::validate() const {
    if (dt < 0) throw ValidationError("config: datastore.dt must be >= 0");
    if (split_train <= 0 || split_val <= 0 || split_test <= 0)
        throw ValidationError("config: split fractions must be positive");
    if (std::abs(split_train + split_val + split_test - 1.0) > 1e-9)
        throw ValidationError("config: split fractions must sum to 1");
    ModelConfig probe = model_config(1);
    probe.validate();
    train_config().validate();
    window_spec().validate();
    if (gamma < 0) throw ValidationError("config: scoring.gamma must be >= 0");
    if (threshold_c <= 0) throw ValidationError("config: scoring.c must be > 0");
    synth.validate();
    if (eval_mode != "all" && eval_mode != "macro" && eval_mode != "micro" && eval_mode != "union")
        throw ValidationError("config: evaluation.mode must be macro, micro, union or all");
    if (eval_metric != "all" && eval_metric != "pointwise" && eval_metric != "overlap" &&
        eval_metric != "affiliation")
        throw ValidationError("config: evaluation.metric must be pointwise, overlap, affiliation or all");
    if (static_cat_values.size() != static_cat.size() ||
        static_real_values.size() != static_real.size())
        throw ValidationError("config: static context value count mismatch");
    for (std::size_t i = 0; i < static_cat.size(); ++i) {
        int v = static_cat_values[i];
        if (v < 0 || v >= static_cat[i].cardinality)
            throw ValidationError("config: value " + std::to_string(v) + " out of range for '" +
                                  static_cat[i].name + "'");
    }
}

ContextSchema RunConfig::context_schema() const {
    ContextSchema schema;
    schema.static_cat = static_cat;
    schema.dynamic_cat = dynamic_cat;
    schema.static_real = static_real;
    schema.real_proj_dim = real_proj_dim;
    if (calendar) {
        auto declared = [&](const std::string& n) {
            return std::any_of(schema.dynamic_cat.begin(), schema.dynamic_cat.end(),
                               [&](const CatFeature& f) { return f.name == n; });
        };
        if (!declared("hour")) schema.dynamic_cat.push_back({"hour", 24, 4});
        if (!declared("weekday")) schema.dynamic_cat.push_back({"weekday", 7, 3});
    }
    schema.validate();
    return schema;
}

ContextData RunConfig::context_data(const TimeSeriesFrame& frame) const {
    ContextData data;
    if (!context_enabled) return data;
    const ContextSchema schema = context_schema();
    data.static_cat_values = static_cat_values;
    data.static_real_values = static_real_values;
    if (!schema.dynamic_cat.empty()) {
        // hour and weekday are the only dynamic features a bare series can
        // feed; anything else needs values supplied through the library API.
        for (const auto& f : schema.dynamic_cat)
            if (f.name != "hour" && f.name != "weekday")
                throw ValidationError("dynamic context feature '" + f.name +
                                      "' has no data source in this pipeline");
        const MatI32 cal = derive_calendar_context(frame);
        data.dynamic_cat.resize(frame.length(), static_cast<Eigen::Index>(schema.dynamic_cat.size()));
        for (std::size_t c = 0; c < schema.dynamic_cat.size(); ++c)
            data.dynamic_cat.col(static_cast<Eigen::Index>(c)) =
                cal.col(schema.dynamic_cat[c].name == "hour" ? 0 : 1);
    }
    data.validate_against(schema, frame.length());
    return data;
}

ModelConfig RunConfig::model_config(int kpis) const {
    ModelConfig m;
    m.kpis = kpis;
    m.window = window;
    m.horizon = horizon;
    m.conv_channels = conv_channels;
    m.kernel_size = kernel_size;
    m.gru_hidden = gru_hidden;
    m.leaky_slope = leaky_slope;
    m.context_enabled = context_enabled;
    m.context = context_schema();
    return m;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig t;
    t.epochs = epochs;
    t.batch_size = batch_size;
    t.learning_rate = learning_rate;
    t.weight_decay = weight_decay;
    t.seed = seed;
    t.patience = patience;
    t.clip_norm = clip_norm;
    t.threads = threads;
    return t;
}

namespace {

struct Entry {
    std::string section;
    std::string key;
    std::string value;
    int line;
};

[[noreturn]] void fail(int line, const std::string& msg) {
    throw ValidationError("config line " + std::to_string(line) + ": " + msg);
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// Strips a trailing comment that is not inside a quoted string.
std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') quoted = !quoted;
        else if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
}

std::vector<Entry> tokenize(const std::string& text, std::vector<std::pair<std::string, int>>& sections) {
    std::vector<Entry> entries;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const std::string s = trim(strip_comment(raw));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') fail(line, "unterminated section header");
            section = trim(s.substr(1, s.size() - 2));
            if (section.empty()) fail(line, "empty section name");
            sections.emplace_back(section, line);
            continue;
        }
        const std::size_t eq = s.find('=');
        if (eq == std::string::npos) fail(line, "expected key = value");
        const std::string key = trim(s.substr(0, eq));
        const std::string value = trim(s.substr(eq + 1));
        if (key.empty()) fail(line, "empty key");
        if (value.empty()) fail(line, "empty value for key '" + key + "'");
        if (section.empty()) fail(line, "key '" + key + "' appears before any [section]");
        entries.push_back({section, key, value, line});
    }
    return entries;
}

std::int64_t parse_int(const Entry& e) {
    std::int64_t v = 0;
    const auto* begin = e.value.data();
    const auto* end = begin + e.value.size();
    auto r = std::from_chars(begin, end, v);
    if (r.ec != std::errc{} || r.ptr != end)
        fail(e.line, "key '" + e.key + "': expected an integer, got '" + e.value + "'");
    return v;
}

double parse_float(const Entry& e) {
    char* endp = nullptr;
    const double v = std::strtod(e.value.c_str(), &endp);
    if (endp != e.value.c_str() + e.value.size() || e.value.empty())
        fail(e.line, "key '" + e.key + "': expected a number, got '" + e.value + "'");
    return v;
}

bool parse_bool(const Entry& e) {
    if (e.value == "true") return true;
    if (e.value == "false") return false;
    fail(e.line, "key '" + e.key + "': expected true or false, got '" + e.value + "'");
}

std::string parse_string(const Entry& e) {
    if (e.value.size() < 2 || e.value.front() != '"' || e.value.back() != '"')
        fail(e.line, "key '" + e.key + "': expected a quoted string, got '" + e.value + "'");
    return e.value.substr(1, e.value.size() - 2);
}

[[noreturn]] void unknown_key(const Entry& e) {
    fail(e.line, "unknown key '" + e.key + "' in section [" + e.section + "]");
}

// [context.static_cat.<name>] style feature subsections.
bool split_feature_section(const std::string& section, std::string& group, std::string& name) {
    if (section.rfind("context.", 0) != 0) return false;
    const std::string rest = section.substr(8);
    const std::size_t dot = rest.find('.');
    if (dot == std::string::npos) return false;
    group = rest.substr(0, dot);
    name = rest.substr(dot + 1);
    return true;
}

std::size_t find_or_add(std::vector<CatFeature>& v, const std::string& name) {
    for (std::size_t i = 0; i < v.size(); ++i)
        if (v[i].name == name) return i;
    v.push_back({name, 1, 1});
    return v.size() - 1;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::vector<std::pair<std::string, int>> sections;
    const std::vector<Entry> entries = tokenize(text, sections);

    for (const auto& [section, line] : sections) {
        std::string group, name;
        if (section == "run" || section == "datastore" || section == "model" ||
            section == "context" || section == "training" || section == "scoring" ||
            section == "synth" || section == "evaluation")
            continue;
        if (split_feature_section(section, group, name)) {
            if (name.empty()) fail(line, "feature section [" + section + "] has an empty name");
            if (group == "static_cat") {
                if (find_or_add(cfg.static_cat, name) == cfg.static_cat_values.size())
                    cfg.static_cat_values.push_back(0);
                continue;
            }
            if (group == "dynamic_cat") {
                find_or_add(cfg.dynamic_cat, name);
                continue;
            }
            if (group == "static_real") {
                if (std::find(cfg.static_real.begin(), cfg.static_real.end(), name) ==
                    cfg.static_real.end()) {
                    cfg.static_real.push_back(name);
                    cfg.static_real_values.push_back(0.0);
                }
                continue;
            }
        }
        fail(line, "unknown section [" + section + "]");
    }

    for (const auto& e : entries) {
        const std::string& s = e.section;
        const std::string& k = e.key;
        if (s == "run") {
            if (k == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(e));
            else unknown_key(e);
        } else if (s == "datastore") {
            if (k == "dt") cfg.dt = parse_int(e);
            else if (k == "gap_policy") {
                const std::string v = parse_string(e);
                if (v == "strict") cfg.gap_policy = GapPolicy::Strict;
                else if (v == "fill") cfg.gap_policy = GapPolicy::Fill;
                else fail(e.line, "gap_policy must be \"strict\" or \"fill\"");
            } else if (k == "split_train") cfg.split_train = parse_float(e);
            else if (k == "split_val") cfg.split_val = parse_float(e);
            else if (k == "split_test") cfg.split_test = parse_float(e);
            else unknown_key(e);
        } else if (s == "model") {
            if (k == "window") cfg.window = static_cast<int>(parse_int(e));
            else if (k == "horizon") cfg.horizon = static_cast<int>(parse_int(e));
            else if (k == "conv_channels") cfg.conv_channels = static_cast<int>(parse_int(e));
            else if (k == "kernel_size") cfg.kernel_size = static_cast<int>(parse_int(e));
            else if (k == "gru_hidden") cfg.gru_hidden = static_cast<int>(parse_int(e));
            else if (k == "leaky_slope") cfg.leaky_slope = parse_float(e);
            else if (k == "context_enabled") cfg.context_enabled = parse_bool(e);
            else unknown_key(e);
        } else if (s == "context") {
            if (k == "calendar") cfg.calendar = parse_bool(e);
            else if (k == "real_proj_dim") cfg.real_proj_dim = static_cast<int>(parse_int(e));
            else unknown_key(e);
        } else if (s == "training") {
            if (k == "epochs") cfg.epochs = static_cast<int>(parse_int(e));
            else if (k == "batch_size") cfg.batch_size = static_cast<int>(parse_int(e));
            else if (k == "learning_rate") cfg.learning_rate = parse_float(e);
            else if (k == "weight_decay") cfg.weight_decay = parse_float(e);
            else if (k == "patience") cfg.patience = static_cast<int>(parse_int(e));
            else if (k == "clip_norm") cfg.clip_norm = parse_float(e);
            else if (k == "stride") cfg.stride = static_cast<int>(parse_int(e));
            else if (k == "threads") cfg.threads = static_cast<int>(parse_int(e));
            else unknown_key(e);
        } else if (s == "scoring") {
            if (k == "gamma") cfg.gamma = parse_float(e);
            else if (k == "c") cfg.threshold_c = parse_float(e);
            else unknown_key(e);
        } else if (s == "synth") {
            if (k == "kpis") cfg.synth.kpis = static_cast<int>(parse_int(e));
            else if (k == "length") cfg.synth.length = parse_int(e);
            else if (k == "dt") cfg.synth.dt = parse_int(e);
            else if (k == "start_timestamp") cfg.synth.start_timestamp = parse_int(e);
            else if (k == "daily_period") cfg.synth.daily_period = static_cast<int>(parse_int(e));
            else if (k == "weekly_period") cfg.synth.weekly_period = static_cast<int>(parse_int(e));
            else if (k == "daily_amp_min") cfg.synth.daily_amp_min = parse_float(e);
            else if (k == "daily_amp_max") cfg.synth.daily_amp_max = parse_float(e);
            else if (k == "weekly_amp_min") cfg.synth.weekly_amp_min = parse_float(e);
            else if (k == "weekly_amp_max") cfg.synth.weekly_amp_max = parse_float(e);
            else if (k == "ar_coeff") cfg.synth.ar_coeff = parse_float(e);
            else if (k == "ar_scale") cfg.synth.ar_scale = parse_float(e);
            else if (k == "prevalence") cfg.synth.prevalence = parse_float(e);
            else if (k == "spike_weight") cfg.synth.spike_weight = parse_float(e);
            else if (k == "shift_weight") cfg.synth.shift_weight = parse_float(e);
            else if (k == "dropout_weight") cfg.synth.dropout_weight = parse_float(e);
            else if (k == "min_events") cfg.synth.min_events = static_cast<int>(parse_int(e));
            else if (k == "max_events") cfg.synth.max_events = static_cast<int>(parse_int(e));
            else unknown_key(e);
        } else if (s == "evaluation") {
            if (k == "mode") cfg.eval_mode = parse_string(e);
            else if (k == "metric") cfg.eval_metric = parse_string(e);
            else unknown_key(e);
        } else {
            std::string group, name;
            if (!split_feature_section(s, group, name)) fail(e.line, "unknown section [" + s + "]");
            if (group == "static_real") {
                if (k != "value") unknown_key(e);
                auto it = std::find(cfg.static_real.begin(), cfg.static_real.end(), name);
                cfg.static_real_values[static_cast<std::size_t>(it - cfg.static_real.begin())] =
                    parse_float(e);
                continue;
            }
            auto& list = group == "static_cat" ? cfg.static_cat : cfg.dynamic_cat;
            std::size_t idx = find_or_add(list, name);
            CatFeature* f = &list[idx];
            if (k == "cardinality") f->cardinality = static_cast<int>(parse_int(e));
            else if (k == "embed_dim") f->embed_dim = static_cast<int>(parse_int(e));
            else if (k == "value" && group == "static_cat")
                cfg.static_cat_values[idx] = static_cast<int>(parse_int(e));
            else unknown_key(e);
        }
    }

    cfg.synth.seed = cfg.seed;
    cfg.validate();
    return cfg;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config(text);
}

namespace {

std::string fmt_float(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

}  // namespace

std::string canonical_config_text(const RunConfig& cfg) {
    std::ostringstream out;
    out << "[run]\n";
    out << "seed = " << cfg.seed << "\n\n";

    out << "[datastore]\n";
    out << "dt = " << cfg.dt << "\n";
    out << "gap_policy = \"" << (cfg.gap_policy == GapPolicy::Strict ? "strict" : "fill") << "\"\n";
    out << "split_train = " << fmt_float(cfg.split_train) << "\n";
    out << "split_val = " << fmt_float(cfg.split_val) << "\n";
    out << "split_test = " << fmt_float(cfg.split_test) << "\n\n";

    out << "[model]\n";
    out << "window = " << cfg.window << "\n";
    out << "horizon = " << cfg.horizon << "\n";
    out << "conv_channels = " << cfg.conv_channels << "\n";
    out << "kernel_size = " << cfg.kernel_size << "\n";
    out << "gru_hidden = " << cfg.gru_hidden << "\n";
    out << "leaky_slope = " << fmt_float(cfg.leaky_slope) << "\n";
    out << "context_enabled = " << (cfg.context_enabled ? "true" : "false") << "\n\n";

    out << "[context]\n";
    out << "calendar = " << (cfg.calendar ? "true" : "false") << "\n";
    out << "real_proj_dim = " << cfg.real_proj_dim << "\n";
    for (std::size_t i = 0; i < cfg.static_cat.size(); ++i) {
        const auto& f = cfg.static_cat[i];
        out << "\n[context.static_cat." << f.name << "]\n";
        out << "cardinality = " << f.cardinality << "\n";
        out << "embed_dim = " << f.embed_dim << "\n";
        out << "value = " << cfg.static_cat_values[i] << "\n";
    }
    for (const auto& f : cfg.dynamic_cat) {
        out << "\n[context.dynamic_cat." << f.name << "]\n";
        out << "cardinality = " << f.cardinality << "\n";
        out << "embed_dim = " << f.embed_dim << "\n";
    }
    for (std::size_t i = 0; i < cfg.static_real.size(); ++i) {
        out << "\n[context.static_real." << cfg.static_real[i] << "]\n";
        out << "value = " << fmt_float(cfg.static_real_values[i]) << "\n";
    }
    out << "\n";

    out << "[training]\n";
    out << "epochs = " << cfg.epochs << "\n";
    out << "batch_size = " << cfg.batch_size << "\n";
    out << "learning_rate = " << fmt_float(cfg.learning_rate) << "\n";
    out << "weight_decay = " << fmt_float(cfg.weight_decay) << "\n";
    out << "patience = " << cfg.patience << "\n";
    out << "clip_norm = " << fmt_float(cfg.clip_norm) << "\n";
    out << "stride = " << cfg.stride << "\n";
    out << "threads = " << cfg.threads << "\n\n";

    out << "[scoring]\n";
    out << "gamma = " << fmt_float(cfg.gamma) << "\n";
    out << "c = " << fmt_float(cfg.threshold_c) << "\n\n";

    out << "[synth]\n";
    out << "kpis = " << cfg.synth.kpis << "\n";
    out << "length = " << cfg.synth.length << "\n";
    out << "dt = " << cfg.synth.dt << "\n";
    out << "start_timestamp = " << cfg.synth.start_timestamp << "\n";
    out << "daily_period = " << cfg.synth.daily_period << "\n";
    out << "weekly_period = " << cfg.synth.weekly_period << "\n";
    out << "daily_amp_min = " << fmt_float(cfg.synth.daily_amp_min) << "\n";
    out << "daily_amp_max = " << fmt_float(cfg.synth.daily_amp_max) << "\n";
    out << "weekly_amp_min = " << fmt_float(cfg.synth.weekly_amp_min) << "\n";
    out << "weekly_amp_max = " << fmt_float(cfg.synth.weekly_amp_max) << "\n";
    out << "ar_coeff = " << fmt_float(cfg.synth.ar_coeff) << "\n";
    out << "ar_scale = " << fmt_float(cfg.synth.ar_scale) << "\n";
    out << "prevalence = " << fmt_float(cfg.synth.prevalence) << "\n";
    out << "spike_weight = " << fmt_float(cfg.synth.spike_weight) << "\n";
    out << "shift_weight = " << fmt_float(cfg.synth.shift_weight) << "\n";
    out << "dropout_weight = " << fmt_float(cfg.synth.dropout_weight) << "\n";
    out << "min_events = " << cfg.synth.min_events << "\n";
    out << "max_events = " << cfg.synth.max_events << "\n\n";

    out << "[evaluation]\n";
    out << "mode = \"" << cfg.eval_mode << "\"\n";
    out << "metric = \"" << cfg.eval_metric << "\"\n";
    return out.str();
}

std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a64(canonical_config_text(cfg)); }

}  // namespace cmtad
