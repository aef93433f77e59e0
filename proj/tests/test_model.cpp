#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "hmf/model.hpp"

using namespace hmf;
using namespace hmf::model;

namespace {

// Values with pairwise gaps well above the finite-difference step, so max
// pools have unique window maxima and relus stay away from their kink.
void fill_fd_safe(Tensor& t, Rng& rng) {
    const std::size_t n = t.v.size();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    for (std::size_t i = 0; i < n; ++i) {
        t.v[i] = -0.6 + 1.2 * (static_cast<double>(perm[i]) + 0.3) / static_cast<double>(n);
    }
}

double rel_err(double a, double b) {
    return std::fabs(a - b) / std::max({1e-3, std::fabs(a), std::fabs(b)});
}

constexpr double kFdEps = 1e-5;

// max relative error between analytic gradients and central differences of
// L = sum(R . layer(x)) over every parameter and input element
double grad_check_layer(Layer& layer, int n, int h, int w, int c, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> params(layer.param_count(), 0.0);
    std::vector<double> grads(layer.param_count(), 0.0);
    if (!params.empty()) {
        layer.bind(params.data(), grads.data());
        layer.init(rng);
    }

    Tensor x(n, h, w, c);
    fill_fd_safe(x, rng);

    Tensor y = layer.forward(x, true);
    Tensor proj(y.n, y.h, y.w, y.c);
    for (auto& v : proj.v) v = rng.uniform(-1.0, 1.0);

    auto loss_now = [&]() {
        Tensor out = layer.forward(x, false);
        double l = 0.0;
        for (std::size_t i = 0; i < out.v.size(); ++i) l += proj.v[i] * out.v[i];
        return l;
    };

    std::fill(grads.begin(), grads.end(), 0.0);
    Tensor dx = layer.backward(proj);

    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double old = params[i];
        params[i] = old + kFdEps;
        const double l1 = loss_now();
        params[i] = old - kFdEps;
        const double l2 = loss_now();
        params[i] = old;
        worst = std::max(worst, rel_err(grads[i], (l1 - l2) / (2 * kFdEps)));
    }
    for (std::size_t i = 0; i < x.v.size(); ++i) {
        const double old = x.v[i];
        x.v[i] = old + kFdEps;
        const double l1 = loss_now();
        x.v[i] = old - kFdEps;
        const double l2 = loss_now();
        x.v[i] = old;
        worst = std::max(worst, rel_err(dx.v[i], (l1 - l2) / (2 * kFdEps)));
    }
    return worst;
}

double grad_check_network(const ModelSpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    Network net(spec);
    net.init_params(seed);

    Tensor x(3, spec.input_side, spec.input_side, 3);
    fill_fd_safe(x, rng);
    std::vector<int> labels = {1, 0, 1};

    net.forward_backward(x, labels, 2.5);
    std::vector<double> analytic = net.grads();

    double worst = 0.0;
    auto& p = net.params();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double old = p[i];
        p[i] = old + kFdEps;
        const double l1 = net.forward_backward(x, labels, 2.5);
        p[i] = old - kFdEps;
        const double l2 = net.forward_backward(x, labels, 2.5);
        p[i] = old;
        worst = std::max(worst, rel_err(analytic[i], (l1 - l2) / (2 * kFdEps)));
    }
    return worst;
}

geo::ImageTile solid_tile(int side, double base, std::uint64_t seed) {
    geo::ImageTile t;
    t.side_px = side;
    t.side_m = side;
    t.pixels.resize(static_cast<std::size_t>(side) * side * 3);
    Rng rng(seed);
    for (auto& v : t.pixels) {
        v = std::clamp(base + rng.uniform(-0.05, 0.05), 0.0, 1.0);
    }
    return t;
}

} // namespace

TEST_CASE("conv shape: 3x3 same-padding keeps 64x64, widens to 8 channels") {
    Conv2d conv(3, 8, 3, 1, 1);
    auto os = conv.out_shape({64, 64, 3});
    CHECK(os[0] == 64);
    CHECK(os[1] == 64);
    CHECK(os[2] == 8);
}

TEST_CASE("shape algebra follows floor((in + 2p - k)/s) + 1") {
    Rng rng(31337);
    for (int trial = 0; trial < 40; ++trial) {
        const int h = static_cast<int>(rng.range(4, 20));
        const int w = static_cast<int>(rng.range(4, 20));
        const int c = static_cast<int>(rng.range(1, 4));
        const int k = static_cast<int>(rng.range(1, 4));
        const int s = static_cast<int>(rng.range(1, 3));
        const int p = static_cast<int>(rng.range(0, 2));
        if (h + 2 * p < k || w + 2 * p < k) continue;

        Conv2d conv(c, 5, k, s, p);
        auto os = conv.out_shape({h, w, c});
        CHECK(os[0] == (h + 2 * p - k) / s + 1);
        CHECK(os[1] == (w + 2 * p - k) / s + 1);

        Tensor x(2, h, w, c);
        fill_fd_safe(x, rng);
        std::vector<double> params(conv.param_count());
        std::vector<double> grads(conv.param_count());
        conv.bind(params.data(), grads.data());
        Rng init_rng(trial);
        conv.init(init_rng);
        Tensor y = conv.forward(x, false);
        CHECK(y.h == os[0]);
        CHECK(y.w == os[1]);
        CHECK(y.c == 5);

        if (h >= k && w >= k) {
            MaxPool2d pool(k, s);
            auto ps = pool.out_shape({h, w, c});
            CHECK(ps[0] == (h - k) / s + 1);
            CHECK(ps[1] == (w - k) / s + 1);
            Tensor z = pool.forward(x, false);
            CHECK(z.h == ps[0]);
            CHECK(z.w == ps[1]);
        }
    }
}

TEST_CASE("all-zero parameters score exactly 0.5") {
    ModelSpec spec = default_spec(BlockFamily::Plain);
    spec.input_side = 16;
    Network net(spec);
    // params default to zero; sigmoid(0) = 0.5
    Tensor x(2, 16, 16, 3);
    Rng rng(5);
    fill_fd_safe(x, rng);
    auto scores = net.forward(x);
    REQUIRE(scores.size() == 2);
    CHECK(scores[0] == 0.5);
    CHECK(scores[1] == 0.5);
}

TEST_CASE("residual block with zero weights is the identity map") {
    ResidualBlock block(4);
    std::vector<double> params(block.param_count(), 0.0);
    std::vector<double> grads(block.param_count(), 0.0);
    block.bind(params.data(), grads.data());

    Tensor x(2, 5, 5, 4);
    Rng rng(17);
    fill_fd_safe(x, rng);
    Tensor y = block.forward(x, false);
    CHECK(y.v == x.v);
}

TEST_CASE("weighted BCE: analytic values at s = 0.5") {
    // sigmoid(0) = 0.5 -> per-sample loss ln 2
    CHECK(weighted_bce({0.0}, {1}, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(weighted_bce({0.0}, {0}, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // positive weight scales the positive term linearly
    CHECK(weighted_bce({0.0, 0.0}, {1, 1}, 9.0) ==
          doctest::Approx(9.0 * std::log(2.0)).epsilon(1e-12));
    CHECK_THROWS_AS(weighted_bce({0.0}, {2}, 1.0), LabelError);
    CHECK_THROWS_AS(weighted_bce({0.0, 0.0}, {1}, 1.0), LabelError);
}

TEST_CASE("gradient check: conv (same-pad and strided)") {
    for (std::uint64_t seed : {1, 2, 3}) {
        Conv2d same(2, 3, 3, 1, 1);
        CHECK(grad_check_layer(same, 2, 6, 6, 2, seed) < 1e-4);
        Conv2d strided(2, 4, 3, 2, 0);
        CHECK(grad_check_layer(strided, 2, 7, 7, 2, seed + 10) < 1e-4);
        Conv2d one_by_one(3, 2, 1, 1, 0);
        CHECK(grad_check_layer(one_by_one, 2, 4, 4, 3, seed + 20) < 1e-4);
    }
}

TEST_CASE("gradient check: relu, max pool, global average pool") {
    for (std::uint64_t seed : {4, 5, 6}) {
        ReLU relu;
        CHECK(grad_check_layer(relu, 2, 5, 5, 3, seed) < 1e-4);
        MaxPool2d pool(2, 2);
        CHECK(grad_check_layer(pool, 2, 6, 6, 3, seed + 10) < 1e-4);
        GlobalAvgPool gap;
        CHECK(grad_check_layer(gap, 2, 5, 5, 4, seed + 20) < 1e-4);
    }
}

TEST_CASE("gradient check: dense layer") {
    for (std::uint64_t seed : {7, 8, 9}) {
        Dense dense(7, 3);
        CHECK(grad_check_layer(dense, 3, 1, 1, 7, seed) < 1e-4);
    }
}

TEST_CASE("gradient check: residual block (identity skip addition)") {
    for (std::uint64_t seed : {10, 11, 12}) {
        ResidualBlock block(3);
        CHECK(grad_check_layer(block, 2, 5, 5, 3, seed) < 1e-4);
    }
}

TEST_CASE("gradient check: dense block (channel concatenation)") {
    for (std::uint64_t seed : {13, 14, 15}) {
        DenseBlock block(2, 3, 2);
        CHECK(grad_check_layer(block, 2, 5, 5, 2, seed) < 1e-4);
    }
}

TEST_CASE("gradient check: sigmoid + BCE head") {
    Rng rng(16);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> logits(6);
        std::vector<int> labels(6);
        for (std::size_t i = 0; i < logits.size(); ++i) {
            logits[i] = rng.uniform(-3.0, 3.0);
            labels[i] = rng.unit() < 0.5 ? 1 : 0;
        }
        const double w = rng.uniform(0.5, 9.0);
        std::vector<double> analytic;
        weighted_bce(logits, labels, w, &analytic);
        for (std::size_t i = 0; i < logits.size(); ++i) {
            const double old = logits[i];
            logits[i] = old + kFdEps;
            const double l1 = weighted_bce(logits, labels, w);
            logits[i] = old - kFdEps;
            const double l2 = weighted_bce(logits, labels, w);
            logits[i] = old;
            CHECK(rel_err(analytic[i], (l1 - l2) / (2 * kFdEps)) < 1e-4);
        }
    }
}

TEST_CASE("gradient check: full networks, one per family") {
    ModelSpec plain;
    plain.family = BlockFamily::Plain;
    plain.input_side = 8;
    plain.stages = {{4, 1}};
    CHECK(grad_check_network(plain, 100) < 1e-4);

    ModelSpec residual = plain;
    residual.family = BlockFamily::Residual;
    CHECK(grad_check_network(residual, 101) < 1e-4);

    ModelSpec dense;
    dense.family = BlockFamily::Dense;
    dense.input_side = 8;
    dense.stages = {{3, 2}};
    CHECK(grad_check_network(dense, 102) < 1e-4);
}

namespace {

std::vector<dataset::LabeledTile> brightness_tiles(int count, int side, std::uint64_t seed) {
    std::vector<dataset::LabeledTile> tiles;
    Rng rng(seed);
    for (int i = 0; i < count; ++i) {
        dataset::LabeledTile lt;
        lt.label = i % 2;
        lt.address_id = "A" + std::to_string(i);
        lt.tile = solid_tile(side, lt.label ? 0.75 : 0.3, rng.next());
        tiles.push_back(std::move(lt));
    }
    return tiles;
}

dataset::DatasetSplit front_back_split(std::size_t n, std::size_t train_n) {
    dataset::DatasetSplit sp;
    for (std::size_t i = 0; i < n; ++i) {
        (i < train_n ? sp.train : sp.val).push_back(i);
    }
    return sp;
}

} // namespace

TEST_CASE("train: zero learning rate leaves the parameters at init") {
    auto tiles = brightness_tiles(20, 8, 1);
    auto split = front_back_split(20, 14);

    ModelSpec spec;
    spec.input_side = 8;
    spec.stages = {{4, 1}};
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.seed = 99;

    auto trained = train(tiles, split, spec, cfg);

    Network reference(spec);
    reference.init_params(cfg.seed);
    CHECK(trained.params == reference.params());
    CHECK(trained.history.size() == 2);
}

TEST_CASE("train: fixed seed gives a bit-identical trajectory") {
    auto tiles = brightness_tiles(24, 8, 2);
    auto split = front_back_split(24, 16);

    ModelSpec spec;
    spec.input_side = 8;
    spec.stages = {{4, 1}};
    TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.seed = 7;

    auto a = train(tiles, split, spec, cfg);
    auto b = train(tiles, split, spec, cfg);
    CHECK(a.params == b.params);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].loss == b.history[i].loss);
        CHECK(a.history[i].val_auc == b.history[i].val_auc);
    }
}

TEST_CASE("train: learns a brightness-separable toy set") {
    auto tiles = brightness_tiles(40, 8, 3);
    auto split = front_back_split(40, 28);

    ModelSpec spec;
    spec.input_side = 8;
    spec.stages = {{4, 1}};
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.epochs = 10;
    cfg.batch_size = 8;
    cfg.seed = 21;

    auto trained = train(tiles, split, spec, cfg);
    CHECK(trained.history.back().epoch == 10);
    double best = 0.0;
    for (const auto& h : trained.history) best = std::max(best, h.val_auc);
    CHECK(best >= 0.9);
}

TEST_CASE("train: exploding updates raise a divergence error") {
    auto tiles = brightness_tiles(12, 8, 4);
    auto split = front_back_split(12, 8);

    ModelSpec spec;
    spec.input_side = 8;
    spec.stages = {{4, 1}};
    TrainConfig cfg;
    cfg.learning_rate = 1e30; // parameters overflow within a few updates
    cfg.epochs = 8;
    cfg.batch_size = 4;
    cfg.seed = 2;

    CHECK_THROWS_AS(train(tiles, split, spec, cfg), DivergenceError);
}

TEST_CASE("scores stay strictly inside (0,1) even for saturated logits") {
    ModelSpec spec;
    spec.input_side = 8;
    spec.stages = {{4, 1}};
    Network net(spec);
    net.init_params(1);
    for (auto& p : net.params()) p *= 1e8; // force the clamp

    Tensor x(2, 8, 8, 3);
    Rng rng(2);
    fill_fd_safe(x, rng);
    for (double s : net.forward(x)) {
        CHECK(s > 0.0);
        CHECK(s < 1.0);
    }
}

TEST_CASE("predict_score is pure and matches the Scorer") {
    ModelSpec spec;
    spec.input_side = 8;
    spec.stages = {{4, 1}};
    Network net(spec);
    net.init_params(12);
    TrainedModel m;
    m.spec = spec;
    m.params = net.params();

    geo::ImageTile tile = solid_tile(10, 0.6, 8);
    const double s1 = predict_score(m, tile);
    const double s2 = predict_score(m, tile);
    CHECK(s1 == s2);
    Scorer scorer(m);
    CHECK(scorer.score(tile) == s1);
}

TEST_CASE("resize_area: exact 2x downsample averages blocks") {
    // 4x4 image, band-constant values
    std::vector<double> src(4 * 4 * 3);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
            for (int b = 0; b < 3; ++b) src[(r * 4 + c) * 3 + b] = r * 4 + c;
    auto dst = resize_area(src, 4, 2);
    REQUIRE(dst.size() == 2u * 2u * 3u);
    // top-left block mean: (0 + 1 + 4 + 5) / 4
    CHECK(dst[0] == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(dst[(1 * 2 + 1) * 3 + 0] == doctest::Approx((10 + 11 + 14 + 15) / 4.0).epsilon(1e-12));
}

TEST_CASE("resize_area: preserves the image mean at any ratio") {
    Rng rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        const int s = static_cast<int>(rng.range(3, 17));
        const int d = static_cast<int>(rng.range(3, 17));
        std::vector<double> src(static_cast<std::size_t>(s) * s * 3);
        for (auto& v : src) v = rng.unit();
        auto dst = resize_area(src, s, d);
        const double mean_src = std::accumulate(src.begin(), src.end(), 0.0) / src.size();
        const double mean_dst = std::accumulate(dst.begin(), dst.end(), 0.0) / dst.size();
        CHECK(mean_src == doctest::Approx(mean_dst).epsilon(1e-9));
    }
}

TEST_CASE("checkpoint write -> read round-trips bit-exactly") {
    namespace fs = std::filesystem;
    ModelSpec spec;
    spec.family = BlockFamily::Dense;
    spec.input_side = 16;
    spec.stages = {{3, 2}, {6, 1}};
    Network net(spec);
    net.init_params(5);

    TrainedModel m;
    m.spec = spec;
    m.params = net.params();
    m.history = {{1, 0.693, 0.51}, {2, 0.41250000000000003, 0.97}};

    const fs::path path = fs::temp_directory_path() / "hmf_ckpt_test.ckpt";
    save_model(m, path);
    TrainedModel r = load_model(path);
    CHECK(r.spec.family == spec.family);
    CHECK(r.spec.input_side == spec.input_side);
    REQUIRE(r.spec.stages.size() == 2);
    CHECK(r.spec.stages[1].filters == 6);
    CHECK(r.spec.stages[0].blocks == 2);
    CHECK(r.params == m.params);
    REQUIRE(r.history.size() == 2);
    CHECK(r.history[1].loss == m.history[1].loss);
    CHECK(r.history[1].val_auc == m.history[1].val_auc);

    // second save of the reloaded model is byte-identical
    const fs::path path2 = fs::temp_directory_path() / "hmf_ckpt_test2.ckpt";
    save_model(r, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    fs::remove(path);
    fs::remove(path2);
}

TEST_CASE("network rejects wrong input shapes") {
    ModelSpec spec;
    spec.input_side = 8;
    spec.stages = {{4, 1}};
    Network net(spec);
    Tensor bad(1, 9, 9, 3);
    CHECK_THROWS_AS(net.forward(bad), ShapeError);
    Tensor bad2(1, 8, 8, 1);
    CHECK_THROWS_AS(net.forward(bad2), ShapeError);
}

TEST_CASE("model spec validation") {
    ModelSpec spec;
    spec.stages = {};
    CHECK_THROWS_AS(validate_spec(spec), ConfigError);
    spec.stages = {{0, 1}};
    CHECK_THROWS_AS(validate_spec(spec), ConfigError);
    // too many pools for the input side
    ModelSpec deep;
    deep.input_side = 4;
    deep.stages = {{4, 1}, {4, 1}, {4, 1}, {4, 1}};
    CHECK_THROWS_AS(Network{deep}, ConfigError);
}
