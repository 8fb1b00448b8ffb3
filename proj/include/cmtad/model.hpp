#pragma once

#include "cmtad/autodiff.hpp"
#include "cmtad/common.hpp"
#include "cmtad/context.hpp"
#include "cmtad/datastore.hpp"
#include "cmtad/rng.hpp"

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace cmtad {

struct ModelConfig {
    int kpis = 1;            // F
    int window = 100;        // W
    int horizon = 3;         // H
    int conv_channels = 64;  // ch
    int kernel_size = 7;
    int gru_hidden = 768;  // d_h
    double leaky_slope = 0.2;
    bool context_enabled = true;
    ContextSchema context;

    void validate() const {
        if (kpis < 1 || window < 1 || horizon < 1 || conv_channels < 1 || kernel_size < 1 ||
            gru_hidden < 1)
            throw ValidationError("model config: all dimensions must be >= 1");
        if (!(leaky_slope > 0.0 && leaky_slope < 1.0))
            throw ValidationError("model config: leaky_slope must be in (0,1)");
        context.validate();
    }

    int context_dim() const { return context_enabled ? context.context_dim() : 0; }

    // An enabled flag with an empty schema contributes nothing; the conv
    // block then takes the plain residual path.
    bool context_active() const { return context_enabled && context.context_dim() > 0; }
};

template <class S>
struct GruParams {
    Mat<S> wz, wr, wh;  // in x hid, absent (0 x hid) when in == 0
    Mat<S> uz, ur, uh;  // hid x hid
    Mat<S> bz, br, bh;  // 1 x hid

    void allocate(int in, int hid) {
        wz.setZero(in, hid);
        wr.setZero(in, hid);
        wh.setZero(in, hid);
        uz.setZero(hid, hid);
        ur.setZero(hid, hid);
        uh.setZero(hid, hid);
        bz.setZero(1, hid);
        br.setZero(1, hid);
        bh.setZero(1, hid);
    }
};

template <class S>
struct GatParams {
    Mat<S> wl, wr;  // D x D'
    Mat<S> av;      // D' x 1

    void allocate(int d_in, int d_out) {
        wl.setZero(d_in, d_out);
        wr.setZero(d_in, d_out);
        av.setZero(d_out, 1);
    }
};

enum class TensorKind { Weight, Bias };

// All trainable tensors. Weight matrices are stored input x output so the
// forward pass is x * W. The config is carried along so the set of live
// tensors (context on/off, learned skip projection) is self-describing.
template <class S>
struct ModelParams {
    ModelConfig config;

    std::vector<Mat<S>> static_emb;   // per static categorical: card x dim
    std::vector<Mat<S>> dynamic_emb;  // per dynamic categorical: card x dim
    Mat<S> real_w, real_b;            // #reals x proj, 1 x proj
    Mat<S> ctx_w1, ctx_b1, ctx_w2, ctx_b2;
    Mat<S> conv_in_w, conv_in_b;      // (k*F) x ch
    Mat<S> conv_fuse1_w, conv_fuse1_b;
    Mat<S> conv_fuse2_w, conv_fuse2_b;
    Mat<S> skip_w, skip_b;  // F x ch, only when F != ch
    GatParams<S> gat_feat;  // node dim = W
    GatParams<S> gat_temp;  // node dim = ch
    GruParams<S> enc;       // in = 3ch
    Mat<S> fore_w1, fore_b1, fore_w2, fore_b2;  // d_h->d_h->H*F
    GruParams<S> dec;       // in = 0
    Mat<S> out_w, out_b;    // d_h x F

    static ModelParams allocate(const ModelConfig& cfg) {
        cfg.validate();
        ModelParams p;
        p.config = cfg;
        const int F = cfg.kpis, W = cfg.window, H = cfg.horizon;
        const int ch = cfg.conv_channels, k = cfg.kernel_size, dh = cfg.gru_hidden;
        if (cfg.context_active()) {
            const auto& sc = cfg.context;
            for (const auto& f : sc.static_cat) p.static_emb.push_back(Mat<S>::Zero(f.cardinality, f.embed_dim));
            for (const auto& f : sc.dynamic_cat) p.dynamic_emb.push_back(Mat<S>::Zero(f.cardinality, f.embed_dim));
            int nr = static_cast<int>(sc.static_real.size());
            p.real_w.setZero(nr, nr > 0 ? sc.real_proj_dim : 0);
            p.real_b.setZero(1, nr > 0 ? sc.real_proj_dim : 0);
            p.ctx_w1.setZero(sc.context_dim(), ch);
            p.ctx_b1.setZero(1, ch);
            p.ctx_w2.setZero(ch, ch);
            p.ctx_b2.setZero(1, ch);
        }
        p.conv_in_w.setZero(k * F, ch);
        p.conv_in_b.setZero(1, ch);
        const int fuse_in = cfg.context_active() ? 2 * ch : ch;
        p.conv_fuse1_w.setZero(k * fuse_in, ch);
        p.conv_fuse1_b.setZero(1, ch);
        p.conv_fuse2_w.setZero(k * ch, ch);
        p.conv_fuse2_b.setZero(1, ch);
        if (F != ch) {
            p.skip_w.setZero(F, ch);
            p.skip_b.setZero(1, ch);
        }
        p.gat_feat.allocate(W, W);
        p.gat_temp.allocate(ch, ch);
        p.enc.allocate(3 * ch, dh);
        p.fore_w1.setZero(dh, dh);
        p.fore_b1.setZero(1, dh);
        p.fore_w2.setZero(dh, H * F);
        p.fore_b2.setZero(1, H * F);
        p.dec.allocate(0, dh);
        p.out_w.setZero(dh, F);
        p.out_b.setZero(1, F);
        return p;
    }

    // Enumerates live tensors in a fixed order; zero-sized tensors are
    // skipped. This order defines checkpoint layout and optimizer state.
    template <class Self, class Fn>
    static void visit_impl(Self& p, Fn&& fn) {
        auto emit = [&](const std::string& name, auto& m, TensorKind kind) {
            if (m.size() != 0) fn(name, m, kind);
        };
        for (std::size_t i = 0; i < p.static_emb.size(); ++i)
            emit("ctx.static_emb." + std::to_string(i), p.static_emb[i], TensorKind::Weight);
        for (std::size_t i = 0; i < p.dynamic_emb.size(); ++i)
            emit("ctx.dynamic_emb." + std::to_string(i), p.dynamic_emb[i], TensorKind::Weight);
        emit("ctx.real_w", p.real_w, TensorKind::Weight);
        emit("ctx.real_b", p.real_b, TensorKind::Bias);
        emit("ctx.mlp_w1", p.ctx_w1, TensorKind::Weight);
        emit("ctx.mlp_b1", p.ctx_b1, TensorKind::Bias);
        emit("ctx.mlp_w2", p.ctx_w2, TensorKind::Weight);
        emit("ctx.mlp_b2", p.ctx_b2, TensorKind::Bias);
        emit("conv_in.w", p.conv_in_w, TensorKind::Weight);
        emit("conv_in.b", p.conv_in_b, TensorKind::Bias);
        emit("conv_fuse1.w", p.conv_fuse1_w, TensorKind::Weight);
        emit("conv_fuse1.b", p.conv_fuse1_b, TensorKind::Bias);
        emit("conv_fuse2.w", p.conv_fuse2_w, TensorKind::Weight);
        emit("conv_fuse2.b", p.conv_fuse2_b, TensorKind::Bias);
        emit("skip_proj.w", p.skip_w, TensorKind::Weight);
        emit("skip_proj.b", p.skip_b, TensorKind::Bias);
        emit("gat_feat.wl", p.gat_feat.wl, TensorKind::Weight);
        emit("gat_feat.wr", p.gat_feat.wr, TensorKind::Weight);
        emit("gat_feat.a", p.gat_feat.av, TensorKind::Weight);
        emit("gat_temp.wl", p.gat_temp.wl, TensorKind::Weight);
        emit("gat_temp.wr", p.gat_temp.wr, TensorKind::Weight);
        emit("gat_temp.a", p.gat_temp.av, TensorKind::Weight);
        emit("enc.wz", p.enc.wz, TensorKind::Weight);
        emit("enc.wr", p.enc.wr, TensorKind::Weight);
        emit("enc.wh", p.enc.wh, TensorKind::Weight);
        emit("enc.uz", p.enc.uz, TensorKind::Weight);
        emit("enc.ur", p.enc.ur, TensorKind::Weight);
        emit("enc.uh", p.enc.uh, TensorKind::Weight);
        emit("enc.bz", p.enc.bz, TensorKind::Bias);
        emit("enc.br", p.enc.br, TensorKind::Bias);
        emit("enc.bh", p.enc.bh, TensorKind::Bias);
        emit("fore.w1", p.fore_w1, TensorKind::Weight);
        emit("fore.b1", p.fore_b1, TensorKind::Bias);
        emit("fore.w2", p.fore_w2, TensorKind::Weight);
        emit("fore.b2", p.fore_b2, TensorKind::Bias);
        emit("dec.uz", p.dec.uz, TensorKind::Weight);
        emit("dec.ur", p.dec.ur, TensorKind::Weight);
        emit("dec.uh", p.dec.uh, TensorKind::Weight);
        emit("dec.bz", p.dec.bz, TensorKind::Bias);
        emit("dec.br", p.dec.br, TensorKind::Bias);
        emit("dec.bh", p.dec.bh, TensorKind::Bias);
        emit("out.w", p.out_w, TensorKind::Weight);
        emit("out.b", p.out_b, TensorKind::Bias);
    }

    template <class Fn>
    void visit(Fn&& fn) {
        visit_impl(*this, fn);
    }
    template <class Fn>
    void visit(Fn&& fn) const {
        visit_impl(*this, fn);
    }

    std::vector<Mat<S>*> tensors() {
        std::vector<Mat<S>*> out;
        visit([&](const std::string&, Mat<S>& m, TensorKind) { out.push_back(&m); });
        return out;
    }

    std::int64_t param_count() const {
        std::int64_t n = 0;
        visit([&](const std::string&, const Mat<S>& m, TensorKind) { n += m.size(); });
        return n;
    }

    bool all_finite() const {
        bool ok = true;
        visit([&](const std::string&, const Mat<S>& m, TensorKind) { ok = ok && m.allFinite(); });
        return ok;
    }

    template <class S2>
    ModelParams<S2> cast() const {
        ModelParams<S2> out = ModelParams<S2>::allocate(config);
        auto dst = out.tensors();
        std::size_t i = 0;
        visit([&](const std::string&, const Mat<S>& m, TensorKind) {
            *dst[i++] = m.template cast<S2>();
        });
        return out;
    }
};

// Deterministic per seed: tensors are filled in visit order, weights with
// Glorot-uniform draws, biases left at zero.
template <class S>
ModelParams<S> init_params(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams<S> p = ModelParams<S>::allocate(cfg);
    Rng rng = Rng::sub_stream(seed, 0x6d6f64656cull);
    p.visit([&](const std::string&, Mat<S>& m, TensorKind kind) {
        if (kind == TensorKind::Bias) return;
        double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c)
                m(r, c) = static_cast<S>(rng.uniform(-limit, limit));
    });
    return p;
}

// One window's context features, resolved to plain indices/values.
struct WindowContext {
    std::vector<int> static_cat;
    std::vector<double> static_real;
    MatI32 dynamic_cat;  // W x #dynamic

    static WindowContext from_sample(const ContextData& series, const MatI32& window_rows) {
        WindowContext wc;
        wc.static_cat = series.static_cat_values;
        wc.static_real = series.static_real_values;
        wc.dynamic_cat = window_rows;
        return wc;
    }
};

// Binds one parameter set onto a tape and exposes the layer computations.
// Forward passes over different tapes may run concurrently against the same
// immutable ModelParams.
template <class S>
class ModelGraph {
public:
    using T = Tape<S>;
    using Var = typename T::Var;

    ModelGraph(T& tape, const ModelParams<S>& params, bool trainable)
        : tape_(&tape), cfg_(params.config) {
        params.visit([&](const std::string& name, const Mat<S>& m, TensorKind) {
            Var v = tape_->leaf(m, trainable);
            order_.push_back(v);
            names_.push_back(name);
            by_name_.emplace(name, v);
        });
    }

    const ModelConfig& config() const { return cfg_; }
    const std::vector<Var>& bound_vars() const { return order_; }
    const std::vector<std::string>& bound_names() const { return names_; }

    Var var(const std::string& name) const {
        auto it = by_name_.find(name);
        if (it == by_name_.end()) throw ValidationError("no bound tensor named '" + name + "'");
        return it->second;
    }

    // Per-timestep context matrix, W x d_c: embedded static categoricals
    // (repeated across rows), embedded dynamic categoricals, projected static
    // reals (repeated). Empty schema yields W x 0.
    Var embed_context(const WindowContext& ctx) {
        const int W = cfg_.window;
        const auto& schema = cfg_.context;
        if (!cfg_.context_enabled) throw ValidationError("context disabled for this model");
        if (static_cast<int>(ctx.static_cat.size()) != static_cast<int>(schema.static_cat.size()))
            throw ValidationError("embed_context: static categorical count mismatch");
        std::vector<Var> pieces;
        for (std::size_t i = 0; i < schema.static_cat.size(); ++i) {
            int v = ctx.static_cat[i];
            if (v < 0 || v >= schema.static_cat[i].cardinality)
                throw ValidationError("embed_context: index " + std::to_string(v) +
                                      " out of range for '" + schema.static_cat[i].name + "'");
            Var row = tape_->embed_rows(var("ctx.static_emb." + std::to_string(i)), {v});
            pieces.push_back(tape_->replicate_rows(row, W));
        }
        if (!schema.dynamic_cat.empty()) {
            if (ctx.dynamic_cat.rows() != W ||
                ctx.dynamic_cat.cols() != static_cast<Eigen::Index>(schema.dynamic_cat.size()))
                throw ValidationError("embed_context: dynamic categorical shape mismatch");
            for (std::size_t i = 0; i < schema.dynamic_cat.size(); ++i) {
                std::vector<int> idx(W);
                for (int r = 0; r < W; ++r) idx[r] = ctx.dynamic_cat(r, static_cast<Eigen::Index>(i));
                pieces.push_back(tape_->embed_rows(var("ctx.dynamic_emb." + std::to_string(i)), std::move(idx)));
            }
        }
        if (!schema.static_real.empty()) {
            if (ctx.static_real.size() != schema.static_real.size())
                throw ValidationError("embed_context: static real count mismatch");
            Mat<S> row(1, static_cast<Eigen::Index>(ctx.static_real.size()));
            for (std::size_t i = 0; i < ctx.static_real.size(); ++i)
                row(0, static_cast<Eigen::Index>(i)) = static_cast<S>(ctx.static_real[i]);
            Var proj = tape_->add_row(tape_->matmul(tape_->leaf(std::move(row)), var("ctx.real_w")),
                                      var("ctx.real_b"));
            pieces.push_back(tape_->replicate_rows(proj, W));
        }
        if (pieces.empty()) return tape_->leaf(Mat<S>(W, 0));
        Var out = pieces[0];
        for (std::size_t i = 1; i < pieces.size(); ++i) out = tape_->concat_cols(out, pieces[i]);
        return out;
    }

    // Length-preserving causal 1D convolution.
    Var conv1d(Var x, const std::string& prefix) {
        Var cols = tape_->causal_im2col(x, cfg_.kernel_size);
        return tape_->add_row(tape_->matmul(cols, var(prefix + ".w")), var(prefix + ".b"));
    }

    Var skip_proj(Var x) {
        if (cfg_.kpis == cfg_.conv_channels) return x;  // identity 1x1 map
        return tape_->add_row(tape_->matmul(x, var("skip_proj.w")), var("skip_proj.b"));
    }

    // Context-conditioned convolution block. With context disabled this is a
    // standard residual 1D convolution stack.
    Var cond_conv_block(Var x, Var context) {
        Var y1 = conv1d(x, "conv_in");
        Var z0 = y1;
        if (cfg_.context_active()) {
            Var c1 = tape_->relu(
                tape_->add_row(tape_->matmul(context, var("ctx.mlp_w1")), var("ctx.mlp_b1")));
            Var cp = tape_->add_row(tape_->matmul(c1, var("ctx.mlp_w2")), var("ctx.mlp_b2"));
            z0 = tape_->concat_cols(y1, cp);
        }
        Var z1 = tape_->relu(conv1d(z0, "conv_fuse1"));
        Var z2 = conv1d(z1, "conv_fuse2");
        return tape_->add(z2, skip_proj(x));
    }

    struct Attention {
        Var out;
        Var attn;  // row-stochastic n x n
    };

    // GATv2 over a complete self-looped graph of the rows of u.
    Attention gatv2_layer(Var u, const std::string& prefix) {
        if (tape_->val(u).rows() == 0) throw ValidationError("gatv2_layer: empty node set");
        Var left = tape_->matmul(u, var(prefix + ".wl"));
        Var right = tape_->matmul(u, var(prefix + ".wr"));
        Var scores = tape_->gatv2_scores(left, right, var(prefix + ".a"),
                                         static_cast<S>(cfg_.leaky_slope));
        Var alpha = tape_->softmax_rows(scores);
        Var out = tape_->sigmoid(tape_->matmul(alpha, right));
        return {out, alpha};
    }

    struct Encoded {
        Var state;      // 1 x d_h
        Var features;   // W x 3ch
        Var feat_attn;  // ch x ch
        Var temp_attn;  // W x W
    };

    // Conv features + feature-attention view (conv channels as nodes) +
    // temporal-attention view (timesteps as nodes), concatenated and run
    // through the encoder GRU.
    Encoded encode(Var x, Var context) {
        Var v = cond_conv_block(x, context);
        auto feat = gatv2_layer(tape_->transpose(v), "gat_feat");
        auto temp = gatv2_layer(v, "gat_temp");
        Var cat = tape_->concat_cols(tape_->concat_cols(v, tape_->transpose(feat.out)), temp.out);
        Var h = gru_forward(cat, "enc");
        return {h, cat, feat.attn, temp.attn};
    }

    // Single-shot multi-step forecast, d_h -> H x F.
    Var forecast_head(Var state) {
        Var hid = tape_->relu(tape_->add_row(tape_->matmul(state, var("fore.w1")), var("fore.b1")));
        Var flat = tape_->add_row(tape_->matmul(hid, var("fore.w2")), var("fore.b2"));
        return tape_->reshape_row(flat, cfg_.horizon, cfg_.kpis);
    }

    // Deterministic GRU decoder: init from the encoder state, unroll W steps
    // with no inputs, project each step to F. No sampling anywhere.
    Var reconstruct_head(Var state) {
        Var h = state;
        Var out{-1};
        for (int t = 0; t < cfg_.window; ++t) {
            h = gru_step(Var{-1}, h, "dec");
            Var row = tape_->add_row(tape_->matmul(h, var("out.w")), var("out.b"));
            out = t == 0 ? row : tape_->concat_rows(out, row);
        }
        return out;
    }

    struct Outputs {
        Var forecast;        // H x F
        Var reconstruction;  // W x F
        Var state;
        Var feat_attn;
        Var temp_attn;
    };

    Outputs forward(const Mat<S>& window, const WindowContext& ctx) {
        if (window.rows() != cfg_.window || window.cols() != cfg_.kpis)
            throw ValidationError("forward: window shape mismatch");
        Var x = tape_->leaf(window);
        Var c = cfg_.context_active() ? embed_context(ctx) : Var{-1};
        auto enc = encode(x, c);
        return {forecast_head(enc.state), reconstruct_head(enc.state), enc.state, enc.feat_attn,
                enc.temp_attn};
    }

    Var gru_forward(Var seq, const std::string& prefix) {
        const int hid = static_cast<int>(tape_->val(var(prefix + ".uz")).rows());
        Var h = tape_->leaf(Mat<S>::Zero(1, hid));
        const int steps = static_cast<int>(tape_->val(seq).rows());
        for (int t = 0; t < steps; ++t) h = gru_step(tape_->slice_rows(seq, t, 1), h, prefix);
        return h;
    }

    // x may be invalid for an input-free cell (decoder).
    Var gru_step(Var x, Var h, const std::string& prefix) {
        auto gate = [&](const char* w, const char* u, const char* b) {
            Var pre = tape_->matmul(h, var(prefix + "." + u));
            if (x.valid()) pre = tape_->add(tape_->matmul(x, var(prefix + "." + w)), pre);
            return tape_->add_row(pre, var(prefix + "." + b));
        };
        Var z = tape_->sigmoid(gate("wz", "uz", "bz"));
        Var r = tape_->sigmoid(gate("wr", "ur", "br"));
        Var hn = tape_->matmul(h, var(prefix + ".uh"));
        Var pre_n = tape_->mul(r, hn);
        if (x.valid()) pre_n = tape_->add(tape_->matmul(x, var(prefix + ".wh")), pre_n);
        Var n = tape_->tanh(tape_->add_row(pre_n, var(prefix + ".bh")));
        Var one_minus_z = tape_->add_scalar(tape_->scale(z, S(-1)), S(1));
        return tape_->add(tape_->mul(z, h), tape_->mul(one_minus_z, n));
    }

private:
    T* tape_;
    ModelConfig cfg_;
    std::vector<Var> order_;
    std::vector<std::string> names_;
    std::unordered_map<std::string, Var> by_name_;
};

// Plain-value forward for inference paths.
template <class S>
struct ForwardValues {
    Mat<S> forecast;
    Mat<S> reconstruction;
};

template <class S>
ForwardValues<S> forward_values(const ModelParams<S>& params, const Mat<S>& window,
                                const WindowContext& ctx) {
    Tape<S> tape;
    ModelGraph<S> graph(tape, params, false);
    auto out = graph.forward(window, ctx);
    return {tape.val(out.forecast), tape.val(out.reconstruction)};
}

}  // namespace cmtad
