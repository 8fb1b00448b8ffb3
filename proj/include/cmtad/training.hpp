#pragma once

#include "cmtad/autodiff.hpp"
#include "cmtad/common.hpp"
#include "cmtad/datastore.hpp"
#include "cmtad/model.hpp"
#include "cmtad/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace cmtad {

struct TrainConfig {
    int epochs = 100;
    int batch_size = 64;
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;
    int patience = 10;  // epochs without val improvement before stopping
    double clip_norm = 5.0;
    int threads = 0;  // 0 = hardware default

    void validate() const {
        if (epochs < 1 || batch_size < 1 || patience < 1)
            throw ValidationError("train config: epochs, batch_size, patience must be >= 1");
        if (learning_rate < 0.0 || weight_decay < 0.0 || !(clip_norm > 0.0))
            throw ValidationError("train config: learning_rate and weight_decay must be >= 0, clip_norm > 0");
        if (threads < 0) throw ValidationError("train config: threads must be >= 0");
    }
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

// Mean-reduced squared error over cells with mask 1. A fully masked term
// contributes nothing.
template <class S>
typename Tape<S>::Var masked_mse(Tape<S>& tape, typename Tape<S>::Var pred, const Mat<S>& target,
                                 const Mat<S>& mask) {
    const Mat<S>& p = tape.val(pred);
    if (p.rows() != target.rows() || p.cols() != target.cols() || p.rows() != mask.rows() ||
        p.cols() != mask.cols())
        throw ValidationError("masked_mse: shape mismatch");
    double count = static_cast<double>(mask.template cast<double>().sum());
    if (count <= 0.0) return tape.leaf(Mat<S>::Zero(1, 1));
    auto diff = tape.sub(pred, tape.leaf(target));
    auto sq = tape.mul(diff, diff);
    auto masked = tape.mul(sq, tape.leaf(mask));
    return tape.scale(tape.sum_all(masked), static_cast<S>(1.0 / count));
}

template <class S>
typename Tape<S>::Var joint_loss_var(Tape<S>& tape, typename Tape<S>::Var forecast,
                                     typename Tape<S>::Var reconstruction,
                                     const WindowSample<S>& sample) {
    auto lf = masked_mse(tape, forecast, sample.target, sample.target_mask);
    auto lr = masked_mse(tape, reconstruction, sample.input, sample.input_mask);
    return tape.add(lf, lr);
}

// Value-level joint loss for already-computed outputs.
template <class S>
double joint_loss(const Mat<S>& forecast, const Mat<S>& reconstruction, const Mat<S>& target,
                  const Mat<S>& input, const Mat<S>& target_mask, const Mat<S>& input_mask) {
    auto term = [](const Mat<S>& pred, const Mat<S>& ref, const Mat<S>& mask) {
        if (pred.rows() != ref.rows() || pred.cols() != ref.cols() || mask.rows() != ref.rows() ||
            mask.cols() != ref.cols())
            throw ValidationError("joint_loss: shape mismatch");
        double count = static_cast<double>(mask.template cast<double>().sum());
        if (count <= 0.0) return 0.0;
        double acc = ((pred - ref).array().square() * mask.array()).template cast<double>().sum();
        return acc / count;
    };
    return term(forecast, target, target_mask) + term(reconstruction, input, input_mask);
}

template <class S>
class Adam {
public:
    Adam(Eigen::Index n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        m_.setZero(n, 1);
        v_.setZero(n, 1);
    }

    void step(Eigen::Ref<Eigen::Matrix<S, Eigen::Dynamic, 1>> params,
              const Eigen::Matrix<S, Eigen::Dynamic, 1>& grad) {
        ++t_;
        m_ = beta1_ * m_ + (1.0 - beta1_) * grad.template cast<double>();
        v_ = beta2_ * v_ +
             (1.0 - beta2_) * grad.template cast<double>().array().square().matrix();
        double bc1 = 1.0 - std::pow(beta1_, t_);
        double bc2 = 1.0 - std::pow(beta2_, t_);
        Eigen::VectorXd update =
            (lr_ / bc1) * m_.array() / ((v_.array() / bc2).sqrt() + eps_);
        params -= update.cast<S>();
    }

    int steps_taken() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    int t_ = 0;
    Eigen::VectorXd m_, v_;
};

template <class S>
Eigen::Index total_size(const ModelParams<S>& p) {
    return static_cast<Eigen::Index>(p.param_count());
}

template <class S>
Eigen::Matrix<S, Eigen::Dynamic, 1> flatten(const ModelParams<S>& p) {
    Eigen::Matrix<S, Eigen::Dynamic, 1> out(total_size(p));
    Eigen::Index at = 0;
    p.visit([&](const std::string&, const Mat<S>& m, TensorKind) {
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) out(at++) = m(r, c);
    });
    return out;
}

template <class S>
void unflatten(const Eigen::Matrix<S, Eigen::Dynamic, 1>& flat, ModelParams<S>& p) {
    if (flat.size() != total_size(p)) throw ValidationError("unflatten: size mismatch");
    Eigen::Index at = 0;
    p.visit([&](const std::string&, Mat<S>& m, TensorKind) {
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = flat(at++);
    });
}

struct TrainResult {
    ModelParams<float> params;  // best validation loss
    std::vector<EpochStats> history;
    int best_epoch = 0;
    double best_val_loss = 0.0;
    bool early_stopped = false;
};

namespace detail {

// Gradient of one sample's joint loss, flattened in visit order.
template <class S>
Eigen::Matrix<S, Eigen::Dynamic, 1> sample_gradient(const ModelParams<S>& params,
                                                    const WindowSample<S>& sample,
                                                    const WindowContext& ctx, double* loss_out) {
    Tape<S> tape;
    ModelGraph<S> graph(tape, params, true);
    auto out = graph.forward(sample.input, ctx);
    auto loss = joint_loss_var(tape, out.forecast, out.reconstruction, sample);
    if (loss_out) *loss_out = static_cast<double>(tape.val(loss)(0, 0));
    tape.backward(loss);
    Eigen::Matrix<S, Eigen::Dynamic, 1> flat(total_size(params));
    Eigen::Index at = 0;
    for (auto v : graph.bound_vars()) {
        const Mat<S>& g = tape.grad(v);
        for (Eigen::Index r = 0; r < g.rows(); ++r)
            for (Eigen::Index c = 0; c < g.cols(); ++c) flat(at++) = g(r, c);
    }
    return flat;
}

template <class S>
double dataset_loss(const ModelParams<S>& params, const WindowSet& windows, int threads) {
    const Eigen::Index n = windows.count();
    std::vector<double> losses(static_cast<std::size_t>(n));
    parallel_for(n, threads, [&](Eigen::Index j) {
        auto sample = windows.template sample<S>(j);
        WindowContext ctx = WindowContext::from_sample(windows.context(), sample.dynamic_cat);
        auto out = forward_values(params, sample.input, ctx);
        losses[static_cast<std::size_t>(j)] = joint_loss(out.forecast, out.reconstruction,
                                                         sample.target, sample.input,
                                                         sample.target_mask, sample.input_mask);
    });
    double acc = 0.0;
    for (double l : losses) acc += l;
    return n > 0 ? acc / static_cast<double>(n) : 0.0;
}

}  // namespace detail

// Joint training of both heads. Per-sample gradients inside a batch are
// computed in parallel but summed in sample order, so a (seed, data) pair
// fixes the whole trajectory.
inline TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg,
                         const WindowSet& train_windows, const WindowSet& val_windows,
                         std::function<void(const EpochStats&)> on_epoch = {}) {
    using S = float;
    model_cfg.validate();
    cfg.validate();
    if (train_windows.count() < 1 || val_windows.count() < 1)
        throw ValidationError("train: empty window stream");

    ModelParams<S> params = init_params<S>(model_cfg, cfg.seed);
    const Eigen::Index n_params = total_size(params);
    Eigen::Matrix<S, Eigen::Dynamic, 1> flat = flatten(params);
    Adam<S> opt(n_params, cfg.learning_rate);
    Rng shuffle_rng = Rng::sub_stream(cfg.seed, 0x736875666cull);

    std::vector<Eigen::Index> order(static_cast<std::size_t>(train_windows.count()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    TrainResult result;
    result.best_val_loss = std::numeric_limits<double>::infinity();
    Eigen::Matrix<S, Eigen::Dynamic, 1> best_flat = flat;
    int since_best = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates with the session RNG keeps the batch sequence a pure
        // function of the seed.
        for (std::size_t i = order.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(
                shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }

        double train_acc = 0.0;
        Eigen::Index seen = 0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t b1 =
                std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
            const Eigen::Index bsz = static_cast<Eigen::Index>(b1 - b0);
            std::vector<Eigen::Matrix<S, Eigen::Dynamic, 1>> grads(
                static_cast<std::size_t>(bsz));
            std::vector<double> losses(static_cast<std::size_t>(bsz));
            parallel_for(bsz, cfg.threads, [&](Eigen::Index k) {
                Eigen::Index j = order[b0 + static_cast<std::size_t>(k)];
                auto sample = train_windows.sample<S>(j);
                WindowContext ctx =
                    WindowContext::from_sample(train_windows.context(), sample.dynamic_cat);
                grads[static_cast<std::size_t>(k)] = detail::sample_gradient<S>(
                    params, sample, ctx, &losses[static_cast<std::size_t>(k)]);
            });
            Eigen::Matrix<S, Eigen::Dynamic, 1> batch_grad =
                Eigen::Matrix<S, Eigen::Dynamic, 1>::Zero(n_params);
            for (Eigen::Index k = 0; k < bsz; ++k) {
                batch_grad += grads[static_cast<std::size_t>(k)];
                train_acc += losses[static_cast<std::size_t>(k)];
            }
            batch_grad /= static_cast<S>(bsz);
            seen += bsz;
            if (cfg.weight_decay > 0.0)
                batch_grad += static_cast<S>(cfg.weight_decay) * flat;
            double gnorm = batch_grad.template cast<double>().norm();
            if (!std::isfinite(gnorm))
                throw ValidationError("train: non-finite gradient at epoch " +
                                      std::to_string(epoch));
            if (gnorm > cfg.clip_norm)
                batch_grad *= static_cast<S>(cfg.clip_norm / gnorm);
            opt.step(flat, batch_grad);
            unflatten(flat, params);
        }
        double train_loss = train_acc / static_cast<double>(seen);
        double val_loss = detail::dataset_loss(params, val_windows, cfg.threads);
        if (!std::isfinite(train_loss) || !std::isfinite(val_loss))
            throw ValidationError("train: loss became non-finite at epoch " +
                                  std::to_string(epoch) + " (train=" + std::to_string(train_loss) +
                                  ", val=" + std::to_string(val_loss) + ")");
        EpochStats stats{epoch, train_loss, val_loss};
        result.history.push_back(stats);
        if (on_epoch) on_epoch(stats);

        if (val_loss < result.best_val_loss) {
            result.best_val_loss = val_loss;
            result.best_epoch = epoch;
            best_flat = flat;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            result.early_stopped = true;
            break;
        }
    }

    result.params = ModelParams<S>::allocate(model_cfg);
    unflatten(best_flat, result.params);
    return result;
}

enum class GradCheckTarget {
    ContextEmbed,
    ConvBlock,
    FeatGat,
    TempGat,
    Encoder,
    ForecastHead,
    ReconHead,
    Full,
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_tensor;
    Eigen::Index worst_entry = -1;
};

// Analytic gradients (double) vs central finite differences. The probe loss
// is sum(output .* R) for a fixed random cotangent R, so every output element
// feeds the scalar. The f(θ±ε) evaluations run in extended precision: the
// difference quotient cancels ~ε of signal, and double-precision forward
// noise would swamp near-zero gradient entries. `corrupt_one` doubles the
// first sizeable analytic entry, for validating that the comparison itself
// can fail.
inline GradCheckReport grad_check(GradCheckTarget target, const ModelConfig& cfg,
                                  std::uint64_t seed, double eps = 1e-5,
                                  bool corrupt_one = false) {
    using S = double;
    using X = long double;
    cfg.validate();
    if (target == GradCheckTarget::ContextEmbed && !cfg.context_active())
        throw ValidationError("grad_check: context embedding target needs an active context schema");

    Rng rng = Rng::sub_stream(seed, 0x67636865636bull);
    ModelParams<S> params = init_params<S>(cfg, seed);
    params.visit([&](const std::string&, Mat<S>& m, TensorKind) {
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) += rng.uniform(-0.05, 0.05);
    });

    Mat<S> window(cfg.window, cfg.kpis);
    for (Eigen::Index r = 0; r < window.rows(); ++r)
        for (Eigen::Index c = 0; c < window.cols(); ++c) window(r, c) = rng.uniform(-1.0, 1.0);

    WindowContext ctx;
    if (cfg.context_active()) {
        for (const auto& f : cfg.context.static_cat)
            ctx.static_cat.push_back(
                static_cast<int>(rng.uniform_int(0, f.cardinality - 1)));
        for (const auto& name : cfg.context.static_real) {
            (void)name;
            ctx.static_real.push_back(rng.uniform(-1.0, 1.0));
        }
        ctx.dynamic_cat.resize(cfg.window, static_cast<Eigen::Index>(cfg.context.dynamic_cat.size()));
        for (Eigen::Index r = 0; r < ctx.dynamic_cat.rows(); ++r)
            for (Eigen::Index c = 0; c < ctx.dynamic_cat.cols(); ++c)
                ctx.dynamic_cat(r, c) = static_cast<int>(rng.uniform_int(
                    0, cfg.context.dynamic_cat[static_cast<std::size_t>(c)].cardinality - 1));
    }

    // Builds the probe outputs on a fresh tape; also used inside the finite
    // difference loop, so it must be a pure function of the parameters.
    auto probe = [&]<class T>(Tape<T>& tape, ModelGraph<T>& graph) {
        std::vector<typename Tape<T>::Var> outs;
        Mat<T> win = window.template cast<T>();
        auto context_var = [&]() {
            return cfg.context_active() ? graph.embed_context(ctx) : typename Tape<T>::Var{-1};
        };
        switch (target) {
            case GradCheckTarget::ContextEmbed:
                outs.push_back(graph.embed_context(ctx));
                break;
            case GradCheckTarget::ConvBlock:
                outs.push_back(graph.cond_conv_block(tape.leaf(win), context_var()));
                break;
            case GradCheckTarget::FeatGat: {
                auto v = graph.cond_conv_block(tape.leaf(win), context_var());
                outs.push_back(graph.gatv2_layer(tape.transpose(v), "gat_feat").out);
                break;
            }
            case GradCheckTarget::TempGat: {
                auto v = graph.cond_conv_block(tape.leaf(win), context_var());
                outs.push_back(graph.gatv2_layer(v, "gat_temp").out);
                break;
            }
            case GradCheckTarget::Encoder:
                outs.push_back(graph.encode(tape.leaf(win), context_var()).state);
                break;
            case GradCheckTarget::ForecastHead:
                outs.push_back(
                    graph.forecast_head(graph.encode(tape.leaf(win), context_var()).state));
                break;
            case GradCheckTarget::ReconHead:
                outs.push_back(
                    graph.reconstruct_head(graph.encode(tape.leaf(win), context_var()).state));
                break;
            case GradCheckTarget::Full: {
                auto out = graph.forward(win, ctx);
                outs.push_back(out.forecast);
                outs.push_back(out.reconstruction);
                break;
            }
        }
        return outs;
    };

    // Fix the cotangents from the unperturbed output shapes.
    std::vector<Mat<S>> cotangents;
    {
        Tape<S> tape;
        ModelGraph<S> graph(tape, params, false);
        for (auto v : probe(tape, graph)) {
            const Mat<S>& val = tape.val(v);
            Mat<S> r(val.rows(), val.cols());
            for (Eigen::Index i = 0; i < r.rows(); ++i)
                for (Eigen::Index j = 0; j < r.cols(); ++j) r(i, j) = rng.uniform(-1.0, 1.0);
            cotangents.push_back(std::move(r));
        }
    }

    auto scalar_loss = [&](const ModelParams<X>& p) {
        Tape<X> tape;
        ModelGraph<X> graph(tape, p, false);
        auto outs = probe(tape, graph);
        X acc = 0;
        for (std::size_t i = 0; i < outs.size(); ++i)
            acc += (tape.val(outs[i]).array() * cotangents[i].template cast<X>().array()).sum();
        return acc;
    };

    // Analytic pass.
    std::vector<Mat<S>> analytic;
    std::vector<std::string> names;
    {
        Tape<S> tape;
        ModelGraph<S> graph(tape, params, true);
        auto outs = probe(tape, graph);
        typename Tape<S>::Var loss{-1};
        for (std::size_t i = 0; i < outs.size(); ++i) {
            auto term = tape.sum_all(tape.mul(outs[i], tape.leaf(cotangents[i])));
            loss = loss.valid() ? tape.add(loss, term) : term;
        }
        tape.backward(loss);
        for (std::size_t i = 0; i < graph.bound_vars().size(); ++i) {
            analytic.push_back(tape.grad(graph.bound_vars()[i]));
            names.push_back(graph.bound_names()[i]);
        }
    }
    if (corrupt_one) {
        for (auto& g : analytic) {
            bool done = false;
            for (Eigen::Index r = 0; r < g.rows() && !done; ++r)
                for (Eigen::Index c = 0; c < g.cols() && !done; ++c)
                    if (std::abs(g(r, c)) > 1e-3) {
                        g(r, c) *= 2.0;
                        done = true;
                    }
            if (done) break;
        }
    }

    // Numeric pass over every parameter entry.
    GradCheckReport report;
    ModelParams<X> wide = params.template cast<X>();
    auto tensors = wide.tensors();
    for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
        Mat<X>& m = *tensors[ti];
        for (Eigen::Index idx = 0; idx < m.size(); ++idx) {
            const X saved = m.data()[idx];
            m.data()[idx] = saved + static_cast<X>(eps);
            X up = scalar_loss(wide);
            m.data()[idx] = saved - static_cast<X>(eps);
            X down = scalar_loss(wide);
            m.data()[idx] = saved;
            double gn = static_cast<double>((up - down) / (2 * static_cast<X>(eps)));
            double ga = analytic[ti].data()[idx];
            double rel = std::abs(ga - gn) / std::max({std::abs(ga), std::abs(gn), 1e-8});
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_tensor = names[ti];
                report.worst_entry = idx;
            }
        }
    }
    return report;
}

}  // namespace cmtad
