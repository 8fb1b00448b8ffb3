#include "doctest.h"

#include "cmtad/model.hpp"
#include "cmtad/training.hpp"
#include "support/oracles.hpp"

#include <cmath>

using namespace cmtad;

namespace {

ModelConfig tiny_config(bool with_context) {
    ModelConfig cfg;
    cfg.kpis = 2;
    cfg.window = 8;
    cfg.horizon = 2;
    cfg.conv_channels = 4;
    cfg.kernel_size = 3;
    cfg.gru_hidden = 8;
    cfg.context_enabled = with_context;
    if (with_context) {
        cfg.context.static_cat.push_back({"region", 3, 2});
        cfg.context.dynamic_cat.push_back({"hour", 24, 3});
        cfg.context.static_real.push_back("capacity");
        cfg.context.real_proj_dim = 2;
    }
    return cfg;
}

WindowContext random_context(const ModelConfig& cfg, Rng& rng) {
    WindowContext ctx;
    for (const auto& f : cfg.context.static_cat)
        ctx.static_cat.push_back(static_cast<int>(rng.uniform_int(0, f.cardinality - 1)));
    for (std::size_t i = 0; i < cfg.context.static_real.size(); ++i)
        ctx.static_real.push_back(rng.uniform(-1.0, 1.0));
    ctx.dynamic_cat.resize(cfg.window, static_cast<Eigen::Index>(cfg.context.dynamic_cat.size()));
    for (Eigen::Index r = 0; r < ctx.dynamic_cat.rows(); ++r)
        for (Eigen::Index c = 0; c < ctx.dynamic_cat.cols(); ++c)
            ctx.dynamic_cat(r, c) = static_cast<int>(
                rng.uniform_int(0, cfg.context.dynamic_cat[static_cast<std::size_t>(c)].cardinality - 1));
    return ctx;
}

Matd random_window(const ModelConfig& cfg, Rng& rng) {
    Matd x(cfg.window, cfg.kpis);
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        for (Eigen::Index c = 0; c < x.cols(); ++c) x(r, c) = rng.uniform(-1.0, 1.0);
    return x;
}

// Naive causal conv: output row t sums taps j, tap j reading input row
// t-(k-1-j), weights laid out tap-major to match the library's im2col.
Matd conv_ref(const Matd& x, const Matd& w, const Matd& b, int k) {
    const Eigen::Index T = x.rows(), C = x.cols(), ch = w.cols();
    Matd out(T, ch);
    for (Eigen::Index t = 0; t < T; ++t) {
        out.row(t) = b.row(0);
        for (int j = 0; j < k; ++j) {
            Eigen::Index src = t - (k - 1 - j);
            if (src < 0) continue;
            out.row(t) += x.row(src) * w.middleRows(j * C, C);
        }
    }
    return out;
}

}  // namespace

TEST_CASE("init is deterministic and param counts match a hand count") {
    ModelConfig cfg = tiny_config(false);
    auto p1 = init_params<double>(cfg, 42);
    auto p2 = init_params<double>(cfg, 42);
    auto tensors1 = p1.tensors();
    auto tensors2 = p2.tensors();
    REQUIRE(tensors1.size() == tensors2.size());
    for (std::size_t i = 0; i < tensors1.size(); ++i) CHECK(*tensors1[i] == *tensors2[i]);
    // conv 28+52+52, skip 12, gats 136+36, enc 504, fore 108, dec 216, out 18
    CHECK(p1.param_count() == 1162);
    auto p3 = init_params<double>(cfg, 43);
    CHECK(flatten(p1) != flatten(p3));
}

TEST_CASE("default-scale config lands in the single-digit-million range") {
    ModelConfig cfg;
    cfg.kpis = 12;
    cfg.window = 100;
    cfg.horizon = 3;
    cfg.conv_channels = 64;
    cfg.kernel_size = 7;
    cfg.gru_hidden = 768;
    cfg.context_enabled = true;
    cfg.context.dynamic_cat.push_back({"hour", 24, 8});
    cfg.context.dynamic_cat.push_back({"weekday", 7, 4});
    auto n = ModelParams<float>::allocate(cfg).param_count();
    MESSAGE("default param count: ", n);
    CHECK(n >= 1'000'000);
    CHECK(n <= 10'000'000);
}

TEST_CASE("context embedding layout: static rows repeat, dynamic rows follow the index") {
    ModelConfig cfg = tiny_config(true);
    auto params = init_params<double>(cfg, 7);
    Rng rng(3);
    WindowContext ctx = random_context(cfg, rng);
    for (Eigen::Index r = 0; r < ctx.dynamic_cat.rows(); ++r) ctx.dynamic_cat(r, 0) = r % 3;

    Tape<double> tape;
    ModelGraph<double> graph(tape, params, false);
    const Matd& c = tape.val(graph.embed_context(ctx));
    REQUIRE(c.rows() == cfg.window);
    REQUIRE(c.cols() == cfg.context.context_dim());
    // static embedding occupies the first 2 columns, identical on every row
    for (Eigen::Index r = 1; r < c.rows(); ++r) {
        CHECK(c(r, 0) == c(0, 0));
        CHECK(c(r, 1) == c(0, 1));
        // static-real projection occupies the trailing 2 columns
        CHECK(c(r, 5) == c(0, 5));
        CHECK(c(r, 6) == c(0, 6));
    }
    // equal dynamic index -> equal dynamic sub-vector (cols 2..4)
    CHECK(c(0, 2) == c(3, 2));
    CHECK(c(1, 3) == c(4, 3));
    CHECK(c(0, 2) != c(1, 2));
}

TEST_CASE("empty context schema embeds to a zero-width matrix") {
    ModelConfig cfg = tiny_config(false);
    cfg.context_enabled = true;  // enabled flag with nothing declared
    auto params = init_params<double>(cfg, 7);
    Tape<double> tape;
    ModelGraph<double> graph(tape, params, false);
    WindowContext ctx;
    const Matd& c = tape.val(graph.embed_context(ctx));
    CHECK(c.rows() == cfg.window);
    CHECK(c.cols() == 0);
}

TEST_CASE("out-of-range category index is rejected by name") {
    ModelConfig cfg = tiny_config(true);
    auto params = init_params<double>(cfg, 7);
    Rng rng(4);
    WindowContext ctx = random_context(cfg, rng);
    ctx.static_cat[0] = 3;  // cardinality is 3, valid range 0..2
    Tape<double> tape;
    ModelGraph<double> graph(tape, params, false);
    CHECK_THROWS_WITH_AS((void)graph.embed_context(ctx),
                         doctest::Contains("region"), ValidationError);
}

TEST_CASE("context-off block equals the residual conv reference") {
    ModelConfig cfg = tiny_config(false);
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        auto params = init_params<double>(cfg, 100 + trial);
        Matd x = random_window(cfg, rng);
        Tape<double> tape;
        ModelGraph<double> graph(tape, params, false);
        Matd got = tape.val(graph.cond_conv_block(tape.leaf(x), {-1}));

        Matd y1 = conv_ref(x, params.conv_in_w, params.conv_in_b, cfg.kernel_size);
        Matd z1 = conv_ref(y1, params.conv_fuse1_w, params.conv_fuse1_b, cfg.kernel_size)
                      .cwiseMax(0.0);
        Matd z2 = conv_ref(z1, params.conv_fuse2_w, params.conv_fuse2_b, cfg.kernel_size);
        Matd ref = z2 + (x * params.skip_w + Matd::Ones(cfg.window, 1) * params.skip_b);
        CHECK(oracle::max_rel_err(got, ref) < 1e-6);
    }
}

TEST_CASE("zero weights with identity skip pass the input through") {
    ModelConfig cfg = tiny_config(false);
    cfg.kpis = 4;  // F == ch, identity skip
    auto params = ModelParams<double>::allocate(cfg);
    Rng rng(6);
    Matd x = random_window(cfg, rng);
    Tape<double> tape;
    ModelGraph<double> graph(tape, params, false);
    Matd got = tape.val(graph.cond_conv_block(tape.leaf(x), {-1}));
    CHECK(got == x);
}

TEST_CASE("single-node attention is the sigmoid of its own projection") {
    ModelConfig cfg = tiny_config(false);
    auto params = init_params<double>(cfg, 11);
    Tape<double> tape;
    ModelGraph<double> graph(tape, params, false);
    Matd u(1, cfg.window);
    for (int i = 0; i < cfg.window; ++i) u(0, i) = 0.1 * i - 0.3;
    auto att = graph.gatv2_layer(tape.leaf(u), "gat_feat");
    CHECK(tape.val(att.attn)(0, 0) == doctest::Approx(1.0));
    Matd expect = (u * params.gat_feat.wr).unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    CHECK(oracle::max_rel_err(tape.val(att.out), expect) < 1e-12);
}

TEST_CASE("attention rows form a probability simplex") {
    ModelConfig cfg = tiny_config(true);
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        auto params = init_params<double>(cfg, 500 + trial);
        Matd x = random_window(cfg, rng);
        WindowContext ctx = random_context(cfg, rng);
        Tape<double> tape;
        ModelGraph<double> graph(tape, params, true);
        auto enc = graph.encode(tape.leaf(x), graph.embed_context(ctx));
        for (const Matd* a : {&tape.val(enc.feat_attn), &tape.val(enc.temp_attn)}) {
            for (Eigen::Index r = 0; r < a->rows(); ++r) {
                CHECK(a->row(r).sum() == doctest::Approx(1.0).epsilon(1e-6));
                CHECK(a->row(r).minCoeff() >= 0.0);
            }
        }
    }
}

TEST_CASE("attention is dynamic: some input makes different queries prefer different keys") {
    ModelConfig cfg = tiny_config(false);
    bool witness = false;
    for (int seed = 0; seed < 50 && !witness; ++seed) {
        auto params = init_params<double>(cfg, 900 + seed);
        Rng rng(700 + seed);
        Matd u(5, cfg.conv_channels);
        for (Eigen::Index r = 0; r < u.rows(); ++r)
            for (Eigen::Index c = 0; c < u.cols(); ++c) u(r, c) = rng.uniform(-2.0, 2.0);
        Tape<double> tape;
        ModelGraph<double> graph(tape, params, false);
        const Matd& a = tape.val(graph.gatv2_layer(tape.leaf(u), "gat_temp").attn);
        Eigen::Index best0, best1;
        a.row(0).maxCoeff(&best0);
        a.row(1).maxCoeff(&best1);
        witness = best0 != best1;
    }
    CHECK(witness);
}

TEST_CASE("encoder output size tracks d_h, not the window") {
    for (int w : {6, 10, 17}) {
        ModelConfig cfg = tiny_config(false);
        cfg.window = w;
        auto params = init_params<float>(cfg, 13);
        Rng rng(13);
        Matd xd(w, cfg.kpis);
        for (Eigen::Index r = 0; r < xd.rows(); ++r)
            for (Eigen::Index c = 0; c < xd.cols(); ++c) xd(r, c) = rng.uniform(-1.0, 1.0);
        Tape<float> tape;
        ModelGraph<float> graph(tape, params, false);
        auto enc = graph.encode(tape.leaf(xd.cast<float>()), {-1});
        CHECK(tape.val(enc.state).rows() == 1);
        CHECK(tape.val(enc.state).cols() == cfg.gru_hidden);
        CHECK(tape.val(enc.features).rows() == w);
        CHECK(tape.val(enc.features).cols() == 3 * cfg.conv_channels);
    }
}

TEST_CASE("permuting KPIs with matching conv kernel rows leaves the state unchanged") {
    ModelConfig cfg = tiny_config(false);
    auto params = init_params<double>(cfg, 21);
    Rng rng(21);
    Matd x = random_window(cfg, rng);

    // swap the two KPI columns and the corresponding rows inside each tap
    // block of the first conv kernel and of the skip projection
    ModelParams<double> permuted = params;
    for (int j = 0; j < cfg.kernel_size; ++j)
        permuted.conv_in_w.middleRows(j * cfg.kpis, cfg.kpis) =
            params.conv_in_w.middleRows(j * cfg.kpis, cfg.kpis).colwise().reverse();
    permuted.skip_w = params.skip_w.colwise().reverse();
    Matd xp = x.rowwise().reverse();

    Tape<double> t1, t2;
    ModelGraph<double> g1(t1, params, false), g2(t2, permuted, false);
    Matd h1 = t1.val(g1.encode(t1.leaf(x), {-1}).state);
    Matd h2 = t2.val(g2.encode(t2.leaf(xp), {-1}).state);
    CHECK(oracle::max_rel_err(h1, h2) < 1e-9);
}

TEST_CASE("forecast head: zero weights leave only the bias, reshaped row-major") {
    ModelConfig cfg = tiny_config(false);
    auto params = init_params<double>(cfg, 31);
    params.fore_w1.setZero();
    params.fore_b1.setZero();
    params.fore_w2.setZero();
    for (int i = 0; i < cfg.horizon * cfg.kpis; ++i) params.fore_b2(0, i) = i + 1.0;
    Rng rng(31);
    Matd x = random_window(cfg, rng);
    auto out = forward_values(params, x, {});
    REQUIRE(out.forecast.rows() == cfg.horizon);
    REQUIRE(out.forecast.cols() == cfg.kpis);
    for (int h = 0; h < cfg.horizon; ++h)
        for (int f = 0; f < cfg.kpis; ++f)
            CHECK(out.forecast(h, f) == doctest::Approx(h * cfg.kpis + f + 1.0));
}

TEST_CASE("forward obeys the shape contract and repeats bit-identically") {
    ModelConfig cfg = tiny_config(true);
    auto params = init_params<double>(cfg, 41);
    Rng rng(41);
    Matd x = random_window(cfg, rng);
    WindowContext ctx = random_context(cfg, rng);
    auto a = forward_values(params, x, ctx);
    auto b = forward_values(params, x, ctx);
    REQUIRE(a.forecast.rows() == cfg.horizon);
    REQUIRE(a.forecast.cols() == cfg.kpis);
    REQUIRE(a.reconstruction.rows() == cfg.window);
    REQUIRE(a.reconstruction.cols() == cfg.kpis);
    CHECK(a.forecast == b.forecast);
    CHECK(a.reconstruction == b.reconstruction);
}

TEST_CASE("forward stays finite over many random draws") {
    Rng rng(55);
    for (int trial = 0; trial < 1000; ++trial) {
        ModelConfig cfg = tiny_config(trial % 2 == 0);
        cfg.window = 4 + static_cast<int>(rng.uniform_int(0, 6));
        cfg.kpis = 1 + static_cast<int>(rng.uniform_int(0, 3));
        cfg.horizon = 1 + static_cast<int>(rng.uniform_int(0, 2));
        cfg.conv_channels = 2 + static_cast<int>(rng.uniform_int(0, 3));
        cfg.gru_hidden = 3 + static_cast<int>(rng.uniform_int(0, 5));
        auto params = init_params<float>(cfg, 7000 + trial);
        Matd xd(cfg.window, cfg.kpis);
        for (Eigen::Index r = 0; r < xd.rows(); ++r)
            for (Eigen::Index c = 0; c < xd.cols(); ++c) xd(r, c) = rng.uniform(-3.0, 3.0);
        WindowContext ctx = cfg.context_active() ? random_context(cfg, rng) : WindowContext{};
        auto out = forward_values<float>(params, xd.cast<float>(), ctx);
        CHECK(out.forecast.allFinite());
        CHECK(out.reconstruction.allFinite());
    }
}

TEST_CASE("context toggling changes the output unless context weights are zero") {
    ModelConfig on = tiny_config(true);
    auto params = init_params<double>(on, 61);
    Rng rng(61);
    Matd x = random_window(on, rng);
    WindowContext ctx = random_context(on, rng);
    auto with_ctx = forward_values(params, x, ctx);

    ModelParams<double> zeroed = params;
    for (auto& e : zeroed.static_emb) e.setZero();
    for (auto& e : zeroed.dynamic_emb) e.setZero();
    zeroed.real_w.setZero();
    zeroed.real_b.setZero();
    zeroed.ctx_w1.setZero();
    zeroed.ctx_b1.setZero();
    zeroed.ctx_w2.setZero();
    zeroed.ctx_b2.setZero();
    auto zero_ctx = forward_values(zeroed, x, ctx);
    // different context values stop mattering once the context path is zeroed
    WindowContext ctx2 = random_context(on, rng);
    ctx2.static_cat = ctx.static_cat;
    auto zero_ctx2 = forward_values(zeroed, x, ctx2);
    CHECK(zero_ctx.forecast == zero_ctx2.forecast);
    CHECK((with_ctx.forecast - zero_ctx.forecast).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("layer and full-model gradients match finite differences") {
    ModelConfig ctx_cfg = tiny_config(true);
    ModelConfig plain = tiny_config(false);
    struct Case {
        GradCheckTarget target;
        const ModelConfig* cfg;
        const char* name;
    };
    const Case cases[] = {
        {GradCheckTarget::ContextEmbed, &ctx_cfg, "context"},
        {GradCheckTarget::ConvBlock, &ctx_cfg, "conv"},
        {GradCheckTarget::FeatGat, &plain, "feat-gat"},
        {GradCheckTarget::TempGat, &plain, "temp-gat"},
        {GradCheckTarget::Encoder, &plain, "encoder"},
        {GradCheckTarget::ForecastHead, &plain, "forecast"},
        {GradCheckTarget::ReconHead, &plain, "recon"},
        {GradCheckTarget::Full, &ctx_cfg, "full"},
    };
    for (const auto& c : cases) {
        for (std::uint64_t seed : {1u, 2u}) {
            auto report = grad_check(c.target, *c.cfg, seed);
            CAPTURE(c.name);
            CAPTURE(seed);
            CAPTURE(report.worst_tensor);
            CHECK(report.max_rel_err < 1e-4);
        }
    }
}

TEST_CASE("a corrupted gradient is caught by the checker") {
    auto report = grad_check(GradCheckTarget::Encoder, tiny_config(false), 3, 1e-5, true);
    CHECK(report.max_rel_err > 1e-2);
}

TEST_CASE("config validation rejects bad dimensions") {
    ModelConfig cfg = tiny_config(false);
    cfg.window = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = tiny_config(false);
    cfg.leaky_slope = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}
