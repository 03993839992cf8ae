#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "mmofl/errors.hpp"
#include "mmofl/model.hpp"

using namespace mmofl;

namespace {

EncoderParams manual_encoder(int in, int hidden, int out) {
    EncoderParams e;
    e.w1 = Mat(static_cast<std::size_t>(hidden), static_cast<std::size_t>(in));
    e.b1.assign(static_cast<std::size_t>(hidden), 0.0);
    e.w2 = Mat(static_cast<std::size_t>(out), static_cast<std::size_t>(hidden));
    e.b2.assign(static_cast<std::size_t>(out), 0.0);
    return e;
}

ModelShape tiny_shape() { return ModelShape{{3, 3}, 4, 3, 2}; }

std::vector<TrainSample> tiny_batch(Rng& rng, int classes, bool with_constant) {
    std::vector<TrainSample> batch;
    for (int i = 0; i < 5; ++i) {
        TrainSample s;
        s.label = i % classes;
        Rng a = rng.child("a", static_cast<std::uint64_t>(i));
        s.inputs.push_back({FeatureOrigin::Raw, gaussian(a, 0.0, 1.0, 3)});
        Rng b = rng.child("b", static_cast<std::uint64_t>(i));
        if (with_constant && i % 2 == 0)
            s.inputs.push_back({FeatureOrigin::Constant, gaussian(b, 0.0, 1.0, 3)});
        else
            s.inputs.push_back({FeatureOrigin::Raw, gaussian(b, 0.0, 1.0, 3)});
        batch.push_back(std::move(s));
    }
    return batch;
}

std::vector<std::vector<Vec>> tiny_bank(Rng& rng, int modalities, int classes, int feat) {
    std::vector<std::vector<Vec>> bank(static_cast<std::size_t>(modalities));
    for (int m = 0; m < modalities; ++m)
        for (int c = 0; c < classes; ++c) {
            Rng r = rng.child("bank", static_cast<std::uint64_t>(m),
                              static_cast<std::uint64_t>(c));
            bank[static_cast<std::size_t>(m)].push_back(
                l2_normalize(gaussian(r, 0.0, 1.0, static_cast<std::size_t>(feat))));
        }
    return bank;
}

double max_rel_err(const Vec& a, const Vec& f) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double denom = std::max({std::fabs(a[i]), std::fabs(f[i]), 1e-4});
        worst = std::max(worst, std::fabs(a[i] - f[i]) / denom);
    }
    return worst;
}

}  // namespace

TEST_CASE("encode with zero weights is the output bias") {
    EncoderParams e = manual_encoder(2, 2, 3);
    e.b2 = {1.0, 2.0, 3.0};
    CHECK(encode(e, {7.0, -4.0}) == Vec{1.0, 2.0, 3.0});
}

TEST_CASE("encode matches the closed form on a 1x1 net") {
    EncoderParams e = manual_encoder(1, 1, 1);
    e.w1.at(0, 0) = 1.0;
    e.w2.at(0, 0) = 2.0;
    e.b2 = {0.5};
    Vec z = encode(e, {0.3});
    CHECK(z[0] == doctest::Approx(2.0 * std::tanh(0.3) + 0.5).epsilon(1e-15));
}

TEST_CASE("init_model is deterministic and fan-in bounded") {
    Rng a(5), b(5);
    GlobalModel m1 = init_model(a, tiny_shape());
    GlobalModel m2 = init_model(b, tiny_shape());
    CHECK(flatten(m1) == flatten(m2));
    for (double v : m1.head.w1.a) CHECK(std::fabs(v) <= 1.0 / std::sqrt(6.0));
    for (double v : m1.head.b1) CHECK(v == 0.0);
    for (double v : m1.encoders[0].w1.a) CHECK(std::fabs(v) <= 1.0 / std::sqrt(3.0));

    ModelShape s = shape_of(m1);
    CHECK(s.dims == tiny_shape().dims);
    CHECK(s.hidden == 4);
    CHECK(s.feat == 3);
    CHECK(s.classes == 2);
}

TEST_CASE("predict concatenates modality features in order") {
    Rng rng(6);
    GlobalModel m = init_model(rng, tiny_shape());
    Vec z0{0.1, 0.2, 0.3}, z1{-0.4, 0.5, -0.6};
    Vec logits = predict(m, {z0, z1});
    Vec cat{0.1, 0.2, 0.3, -0.4, 0.5, -0.6};
    CHECK(logits == encode(m.head, cat));
    CHECK_THROWS_AS((void)predict(m, {z0}), ShapeError);
}

TEST_CASE("argmax takes the lowest index on ties") {
    CHECK(argmax({1.0, 3.0, 3.0}) == 1);
    CHECK(argmax({5.0}) == 0);
    CHECK(argmax({-2.0, -2.0, -2.0}) == 0);
    CHECK_THROWS_AS(argmax({}), std::invalid_argument);
}

TEST_CASE("cross entropy analytic values") {
    CHECK(ce_loss({0.0, 0.0, 0.0, 0.0}, 2) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(ce_loss({100.0, 0.0}, 0) == 0.0);  // saturated and clamped at zero
    CHECK(ce_loss({0.0, 50.0}, 0) == doctest::Approx(50.0).epsilon(1e-12));
    CHECK(ce_loss({1.0, 2.0}, 1) < ce_loss({1.0, 2.0}, 0));
    CHECK_THROWS_AS((void)ce_loss({0.0, 0.0}, 2), std::invalid_argument);
}

TEST_CASE("prototype cross entropy analytic values") {
    // single class: certain prediction, zero loss
    CHECK(pce_loss({1.0, 2.0}, {{0.0, 0.0}}, 0) == 0.0);

    // equidistant prototypes: log C
    std::vector<Vec> eq{{1.0, 0.0}, {0.0, 1.0}};
    CHECK(pce_loss({0.0, 0.0}, eq, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    std::vector<Vec> eq3{{1.0, 0.0}, {0.0, 1.0}, {-1.0, 0.0}};
    CHECK(pce_loss({0.0, 0.0}, eq3, 1) == doctest::Approx(std::log(3.0)).epsilon(1e-9));

    // worked case: distances 0 and 2 -> log(1 + e^-2)
    std::vector<Vec> row{{0.0, 0.0}, {std::sqrt(2.0), 0.0}};
    CHECK(pce_loss({0.0, 0.0}, row, 0) == doctest::Approx(0.126928).epsilon(1e-5));
    CHECK(pce_loss({0.0, 0.0}, row, 0) ==
          doctest::Approx(std::log(1.0 + std::exp(-2.0))).epsilon(1e-12));

    CHECK_THROWS_AS((void)pce_loss({0.0}, {}, 0), MissingPrototypeError);
    std::vector<Vec> holey{{1.0, 0.0}, {}};
    CHECK_THROWS_AS((void)pce_loss({0.0, 0.0}, holey, 0), MissingPrototypeError);
}

TEST_CASE("plr reduces to ce when quality is clean or beta is zero") {
    Rng rng(7);
    std::vector<std::vector<Vec>> bank = tiny_bank(rng, 2, 3, 2);
    Vec logits{0.3, -0.2, 0.9};
    std::vector<Vec> z{{0.1, 0.2}, {0.3, 0.4}};

    double ce = ce_loss(logits, 1);
    CHECK(plr_loss(logits, 1, z, bank, {0, 0}, 0.0) == ce);  // beta 0, bitwise
    CHECK(plr_loss(logits, 1, z, bank, {1, 1}, 0.7) == ce);  // clean, bitwise

    double with_pce = plr_loss(logits, 1, z, bank, {0, 1}, 0.7);
    CHECK(with_pce == doctest::Approx(ce + 0.7 * pce_loss(z[0], bank[0], 1)).epsilon(1e-12));
    CHECK_THROWS_AS((void)plr_loss(logits, 1, z, {}, {0, 0}, 0.5), MissingPrototypeError);
}

TEST_CASE("backward matches finite differences") {
    Rng rng(8);
    ModelShape shape = tiny_shape();
    Rng mr = rng.child("model");
    GlobalModel model = init_model(mr, shape);
    Rng br = rng.child("batch");
    std::vector<TrainSample> batch = tiny_batch(br, shape.classes, true);
    Rng kr = rng.child("bank");
    std::vector<std::vector<Vec>> bank = tiny_bank(kr, 2, shape.classes, shape.feat);

    std::vector<LossConfig> cases(3);
    cases[1].beta = 0.7;
    cases[1].quality = {0, 1};
    cases[1].bank = &bank;
    cases[2].beta = 1.3;
    cases[2].quality = {0, 0};
    cases[2].bank = &bank;

    for (const LossConfig& cfg : cases) {
        auto [loss, grad] = backward(model, batch, cfg);
        CHECK(loss == doctest::Approx(batch_loss(model, batch, cfg)).epsilon(1e-12));
        Vec analytic = flatten(grad);
        Vec theta = flatten(model);
        Vec fd = finite_diff_grad(
            [&](const Vec& th) { return batch_loss(unflatten(shape, th), batch, cfg); },
            theta, 1e-5);
        CHECK(max_rel_err(analytic, fd) < 1e-4);
    }
}

TEST_CASE("substituted features are constants in backprop") {
    Rng rng(9);
    ModelShape shape = tiny_shape();
    Rng mr = rng.child("model");
    GlobalModel model = init_model(mr, shape);
    std::vector<TrainSample> batch;
    TrainSample s;
    s.label = 1;
    Rng xr = rng.child("x");
    s.inputs.push_back({FeatureOrigin::Raw, gaussian(xr, 0.0, 1.0, 3)});
    Rng cr = rng.child("c");
    s.inputs.push_back({FeatureOrigin::Constant, gaussian(cr, 0.0, 1.0, 3)});
    batch.push_back(s);

    auto [loss, grad] = backward(model, batch, LossConfig{});
    CHECK(loss > 0.0);
    for (double v : grad.encoders[1].w1.a) CHECK(v == 0.0);
    for (double v : grad.encoders[1].w2.a) CHECK(v == 0.0);
    bool encoder0_touched = false;
    for (double v : grad.encoders[0].w1.a) encoder0_touched |= (v != 0.0);
    CHECK(encoder0_touched);
}

TEST_CASE("sample weights equal explicit duplication") {
    Rng rng(10);
    ModelShape shape = tiny_shape();
    Rng mr = rng.child("model");
    GlobalModel model = init_model(mr, shape);
    Rng br = rng.child("batch");
    std::vector<TrainSample> two = tiny_batch(br, shape.classes, false);
    two.resize(2);
    std::vector<TrainSample> dup{two[0], two[0], two[0], two[1]};

    LossConfig weighted;
    Vec w{3.0, 1.0};
    weighted.weights = &w;
    auto [lw, gw] = backward(model, two, weighted);
    auto [ld, gd] = backward(model, dup, LossConfig{});
    CHECK(lw == doctest::Approx(ld).epsilon(1e-14));
    Vec fw = flatten(gw), fd2 = flatten(gd);
    for (std::size_t i = 0; i < fw.size(); ++i)
        CHECK(fw[i] == doctest::Approx(fd2[i]).epsilon(1e-12));

    Vec zero_first{0.0, 1.0};
    LossConfig skip;
    skip.weights = &zero_first;
    std::vector<TrainSample> only{two[1]};
    CHECK(batch_loss(model, two, skip) ==
          doctest::Approx(batch_loss(model, only, LossConfig{})).epsilon(1e-14));
}

TEST_CASE("ogd step arithmetic") {
    Rng rng(11);
    GlobalModel m = init_model(rng, tiny_shape());
    GlobalModel before = m;
    Gradient g = zero_like(m);
    ogd_step(m, g, 0.5);  // zero gradient: no movement
    CHECK(flatten(m) == flatten(before));

    g.head.b2[0] = 2.0;
    ogd_step(m, g, 0.25);
    CHECK(m.head.b2[0] == doctest::Approx(before.head.b2[0] - 0.5).epsilon(1e-15));

    ogd_step(m, g, 0.0);  // eta 0 is the identity
    CHECK(m.head.b2[0] == doctest::Approx(before.head.b2[0] - 0.5).epsilon(1e-15));
    CHECK_THROWS_AS(ogd_step(m, g, -0.1), std::invalid_argument);
}

TEST_CASE("local_update reports the pre-step loss and composes steps") {
    Rng rng(12);
    ModelShape shape = tiny_shape();
    Rng mr = rng.child("model");
    GlobalModel a = init_model(mr, shape);
    GlobalModel b = a;
    Rng br = rng.child("batch");
    std::vector<TrainSample> batch = tiny_batch(br, shape.classes, false);

    double before = batch_loss(a, batch, LossConfig{});
    double reported = local_update(a, batch, LossConfig{}, 2, 0.05);
    CHECK(reported == doctest::Approx(before).epsilon(1e-14));

    // two manual steps reproduce steps = 2
    for (int i = 0; i < 2; ++i) {
        auto [loss, grad] = backward(b, batch, LossConfig{});
        (void)loss;
        ogd_step(b, grad, 0.05);
    }
    CHECK(flatten(a) == flatten(b));
    CHECK(batch_loss(a, batch, LossConfig{}) < before);  // it actually descends
}

TEST_CASE("flatten round trips and serializes to f32") {
    Rng rng(13);
    ModelShape shape{{4, 2}, 3, 2, 3};
    GlobalModel m = init_model(rng, shape);
    Vec theta = flatten(m);
    CHECK(theta.size() == param_count(m));
    GlobalModel back = unflatten(shape, theta);
    CHECK(flatten(back) == theta);
    CHECK_THROWS_AS((void)unflatten(shape, Vec(theta.size() + 1, 0.0)), ShapeError);

    auto bytes = to_f32_bytes(m);
    CHECK(bytes.size() == 4 * param_count(m));
    GlobalModel f32 = from_f32_bytes(shape, bytes);
    CHECK(to_f32_bytes(f32) == bytes);  // stable after one truncation
    CHECK_THROWS_AS((void)from_f32_bytes(shape, std::vector<std::uint8_t>(5, 0)),
                    FormatError);
}
