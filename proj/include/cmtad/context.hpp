#pragma once

#include "cmtad/common.hpp"

#include <string>
#include <unordered_set>
#include <vector>

namespace cmtad {

struct CatFeature {
    std::string name;
    int cardinality = 1;
    int embed_dim = 1;
};

// Declares which static categorical, dynamic categorical, and static real
// features feed the per-timestep context vector, and how wide each embeds.
struct ContextSchema {
    std::vector<CatFeature> static_cat;
    std::vector<CatFeature> dynamic_cat;
    std::vector<std::string> static_real;
    int real_proj_dim = 0;  // output width of the static-real projection

    int context_dim() const {
        int d = 0;
        for (const auto& f : static_cat) d += f.embed_dim;
        for (const auto& f : dynamic_cat) d += f.embed_dim;
        if (!static_real.empty()) d += real_proj_dim;
        return d;
    }

    bool empty() const { return static_cat.empty() && dynamic_cat.empty() && static_real.empty(); }

    void validate() const {
        std::unordered_set<std::string> names;
        auto check_name = [&](const std::string& n) {
            if (!names.insert(n).second)
                throw ValidationError("duplicate context feature name '" + n + "'");
        };
        for (const auto& f : static_cat) {
            check_name(f.name);
            if (f.cardinality < 1 || f.embed_dim < 1)
                throw ValidationError("context feature '" + f.name + "': cardinality and embed_dim must be >= 1");
        }
        for (const auto& f : dynamic_cat) {
            check_name(f.name);
            if (f.cardinality < 1 || f.embed_dim < 1)
                throw ValidationError("context feature '" + f.name + "': cardinality and embed_dim must be >= 1");
        }
        for (const auto& n : static_real) check_name(n);
        if (!static_real.empty() && real_proj_dim < 1)
            throw ValidationError("static real features declared but real_proj_dim < 1");
    }
};

// Concrete context values for one series: static values are per-series,
// dynamic categorical indices are per-timestep (T x #dynamic).
struct ContextData {
    std::vector<int> static_cat_values;
    std::vector<double> static_real_values;
    MatI32 dynamic_cat;  // T x dynamic_cat.size(), 0x0 when none

    void validate_against(const ContextSchema& schema, Eigen::Index timesteps) const {
        if (static_cat_values.size() != schema.static_cat.size())
            throw ValidationError("context: static categorical value count mismatch");
        for (std::size_t i = 0; i < schema.static_cat.size(); ++i) {
            int v = static_cat_values[i];
            if (v < 0 || v >= schema.static_cat[i].cardinality)
                throw ValidationError("context: value " + std::to_string(v) + " out of range for '" +
                                      schema.static_cat[i].name + "'");
        }
        if (static_real_values.size() != schema.static_real.size())
            throw ValidationError("context: static real value count mismatch");
        if (!schema.dynamic_cat.empty()) {
            if (dynamic_cat.rows() != timesteps ||
                dynamic_cat.cols() != static_cast<Eigen::Index>(schema.dynamic_cat.size()))
                throw ValidationError("context: dynamic categorical matrix shape mismatch");
            for (Eigen::Index c = 0; c < dynamic_cat.cols(); ++c) {
                int card = schema.dynamic_cat[static_cast<std::size_t>(c)].cardinality;
                for (Eigen::Index r = 0; r < dynamic_cat.rows(); ++r) {
                    int v = dynamic_cat(r, c);
                    if (v < 0 || v >= card)
                        throw ValidationError("context: value " + std::to_string(v) +
                                              " out of range for '" +
                                              schema.dynamic_cat[static_cast<std::size_t>(c)].name + "'");
                }
            }
        } else if (dynamic_cat.size() != 0) {
            throw ValidationError("context: dynamic values given but schema declares none");
        }
    }
};

}  // namespace cmtad
