#include "cmtad/checkpoint.hpp"

#include <nlohmann/json.hpp>
#include <zlib.h>

#include <cstring>
#include <fstream>

namespace cmtad {

using json = nlohmann::json;

namespace {

json schema_to_json(const ContextSchema& s) {
    json j;
    j["static_cat"] = json::array();
    for (const auto& f : s.static_cat)
        j["static_cat"].push_back({{"name", f.name}, {"cardinality", f.cardinality}, {"embed_dim", f.embed_dim}});
    j["dynamic_cat"] = json::array();
    for (const auto& f : s.dynamic_cat)
        j["dynamic_cat"].push_back({{"name", f.name}, {"cardinality", f.cardinality}, {"embed_dim", f.embed_dim}});
    j["static_real"] = s.static_real;
    j["real_proj_dim"] = s.real_proj_dim;
    return j;
}

ContextSchema schema_from_json(const json& j) {
    ContextSchema s;
    for (const auto& f : j.at("static_cat"))
        s.static_cat.push_back({f.at("name").get<std::string>(), f.at("cardinality").get<int>(),
                                f.at("embed_dim").get<int>()});
    for (const auto& f : j.at("dynamic_cat"))
        s.dynamic_cat.push_back({f.at("name").get<std::string>(), f.at("cardinality").get<int>(),
                                 f.at("embed_dim").get<int>()});
    s.static_real = j.at("static_real").get<std::vector<std::string>>();
    s.real_proj_dim = j.at("real_proj_dim").get<int>();
    return s;
}

json config_to_json(const ModelConfig& c) {
    return json{{"kpis", c.kpis},
                {"window", c.window},
                {"horizon", c.horizon},
                {"conv_channels", c.conv_channels},
                {"kernel_size", c.kernel_size},
                {"gru_hidden", c.gru_hidden},
                {"leaky_slope", c.leaky_slope},
                {"context_enabled", c.context_enabled},
                {"context", schema_to_json(c.context)}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.kpis = j.at("kpis").get<int>();
    c.window = j.at("window").get<int>();
    c.horizon = j.at("horizon").get<int>();
    c.conv_channels = j.at("conv_channels").get<int>();
    c.kernel_size = j.at("kernel_size").get<int>();
    c.gru_hidden = j.at("gru_hidden").get<int>();
    c.leaky_slope = j.at("leaky_slope").get<double>();
    c.context_enabled = j.at("context_enabled").get<bool>();
    c.context = schema_from_json(j.at("context"));
    return c;
}

std::vector<double> to_vec(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd from_vec(const std::vector<double>& v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
    return out;
}

void put_u32_le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    json head;
    head["format_version"] = ckpt.format_version;
    head["model"] = config_to_json(ckpt.params.config);
    head["normalizer"] = {{"mean", to_vec(ckpt.normalizer.mean)},
                          {"stddev", to_vec(ckpt.normalizer.stddev)},
                          {"constant", ckpt.normalizer.constant_flag}};
    head["kpi_names"] = ckpt.kpi_names;
    if (ckpt.thresholds) {
        head["thresholds"] = {{"c", ckpt.thresholds->c},
                              {"tau", to_vec(ckpt.thresholds->tau)},
                              {"mu_val", to_vec(ckpt.thresholds->mu_val)},
                              {"kpi_names", ckpt.thresholds->kpi_names}};
    } else {
        head["thresholds"] = nullptr;
    }
    head["history"] = json::array();
    for (const auto& e : ckpt.history)
        head["history"].push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
    head["seed"] = ckpt.seed;
    head["config_text"] = ckpt.config_text;
    char hash_hex[17];
    std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                  static_cast<unsigned long long>(ckpt.config_hash));
    head["config_hash"] = hash_hex;
    head["split"] = {{"train", ckpt.split_train}, {"val", ckpt.split_val}};

    std::string payload;
    json index = json::array();
    ckpt.params.visit([&](const std::string& name, const Matf& m, TensorKind) {
        const std::size_t offset = payload.size();
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                float f = m(r, c);
                std::uint32_t bits;
                std::memcpy(&bits, &f, 4);
                put_u32_le(payload, bits);
            }
        index.push_back({{"name", name},
                         {"dtype", "f32"},
                         {"shape", {m.rows(), m.cols()}},
                         {"offset", offset},
                         {"bytes", payload.size() - offset}});
    });
    head["tensors"] = std::move(index);

    const std::string header = head.dump();
    std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(payload.data()),
              static_cast<uInt>(payload.size())));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open '" + path + "' for writing");
    out.write("CMAD", 4);
    std::string len;
    put_u32_le(len, static_cast<std::uint32_t>(header.size()));
    out.write(len.data(), 4);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    std::string tail;
    put_u32_le(tail, crc);
    out.write(tail.data(), 4);
    if (!out) throw ValidationError("failed writing '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open checkpoint '" + path + "'");
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (blob.size() < 12 || blob.compare(0, 4, "CMAD") != 0)
        throw ValidationError("'" + path + "' is not a checkpoint (bad magic)");
    const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
    const std::uint32_t header_len = get_u32_le(bytes + 4);
    if (8ull + header_len + 4ull > blob.size())
        throw ValidationError("checkpoint '" + path + "' is truncated");

    json head;
    try {
        head = json::parse(blob.begin() + 8, blob.begin() + 8 + header_len);
    } catch (const json::exception& e) {
        throw ValidationError("checkpoint header is not valid JSON: " + std::string(e.what()));
    }

    const int version = head.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion)
        throw ValidationError("checkpoint format version " + std::to_string(version) +
                              " is not supported (expected " +
                              std::to_string(kCheckpointFormatVersion) + ")");

    const std::size_t payload_begin = 8 + header_len;
    const std::size_t payload_len = blob.size() - payload_begin - 4;
    const std::uint32_t stored_crc = get_u32_le(bytes + blob.size() - 4);
    const std::uint32_t actual_crc = static_cast<std::uint32_t>(
        crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(blob.data() + payload_begin),
              static_cast<uInt>(payload_len)));
    if (stored_crc != actual_crc)
        throw ValidationError("checkpoint payload CRC mismatch (file corrupt or truncated)");

    Checkpoint ckpt;
    ckpt.format_version = version;
    ModelConfig cfg = config_from_json(head.at("model"));
    cfg.validate();
    ckpt.params = ModelParams<float>::allocate(cfg);

    const json& norm = head.at("normalizer");
    ckpt.normalizer.mean = from_vec(norm.at("mean").get<std::vector<double>>());
    ckpt.normalizer.stddev = from_vec(norm.at("stddev").get<std::vector<double>>());
    ckpt.normalizer.constant_flag = norm.at("constant").get<std::vector<std::uint8_t>>();
    ckpt.kpi_names = head.at("kpi_names").get<std::vector<std::string>>();
    if (!head.at("thresholds").is_null()) {
        Thresholds th;
        const json& t = head.at("thresholds");
        th.c = t.at("c").get<double>();
        th.tau = from_vec(t.at("tau").get<std::vector<double>>());
        th.mu_val = from_vec(t.at("mu_val").get<std::vector<double>>());
        th.kpi_names = t.at("kpi_names").get<std::vector<std::string>>();
        ckpt.thresholds = std::move(th);
    }
    for (const auto& e : head.at("history"))
        ckpt.history.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(),
                                e.at("val_loss").get<double>()});
    ckpt.seed = head.at("seed").get<std::uint64_t>();
    ckpt.config_text = head.at("config_text").get<std::string>();
    ckpt.config_hash = std::strtoull(head.at("config_hash").get<std::string>().c_str(), nullptr, 16);
    ckpt.split_train = head.at("split").at("train").get<double>();
    ckpt.split_val = head.at("split").at("val").get<double>();

    // Index lookup by name; every tensor the config implies must be present
    // with the right shape.
    const json& tensors = head.at("tensors");
    std::size_t consumed = 0;
    ckpt.params.visit([&](const std::string& name, Matf& m, TensorKind) {
        const json* entry = nullptr;
        for (const auto& t : tensors)
            if (t.at("name").get<std::string>() == name) {
                entry = &t;
                break;
            }
        if (!entry) throw ValidationError("checkpoint is missing tensor '" + name + "'");
        const auto shape = entry->at("shape").get<std::vector<Eigen::Index>>();
        if (shape.size() != 2 || shape[0] != m.rows() || shape[1] != m.cols())
            throw ValidationError("checkpoint tensor '" + name + "' has the wrong shape");
        const std::size_t offset = entry->at("offset").get<std::size_t>();
        const std::size_t len = entry->at("bytes").get<std::size_t>();
        if (len != static_cast<std::size_t>(m.size()) * 4 || offset + len > payload_len)
            throw ValidationError("checkpoint tensor '" + name + "' has a bad payload range");
        const unsigned char* p = bytes + payload_begin + offset;
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                std::uint32_t bits = get_u32_le(p);
                p += 4;
                float f;
                std::memcpy(&f, &bits, 4);
                m(r, c) = f;
            }
        consumed += len;
    });
    if (tensors.size() != static_cast<std::size_t>(ckpt.params.tensors().size()))
        throw ValidationError("checkpoint carries unexpected extra tensors");
    if (consumed != payload_len)
        throw ValidationError("checkpoint payload size does not match the tensor index");
    return ckpt;
}

}  // namespace cmtad
