#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "pqe/model.hpp"
#include "support/support.hpp"

using namespace pqe;
using test::fill_normal;

namespace {

Tensor random_input(Shape4 s, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Tensor t(s);
    for (auto& v : t.data()) v = u(rng);
    return t;
}

}  // namespace

TEST_CASE("spec validation") {
    CHECK_NOTHROW(ModelSpec{}.validate());
    CHECK_THROWS_AS((ModelSpec{3, 8, 1, true}).validate(), ArgumentError);
    CHECK_THROWS_AS((ModelSpec{2, 0, 1, true}).validate(), ArgumentError);
    CHECK_THROWS_AS((ModelSpec{2, 8, 0, true}).validate(), ArgumentError);
}

TEST_CASE("parameter layout") {
    const ModelSpec spec{2, 8, 3, true};
    const auto p = zero_params<float>(spec);
    const ParamLayout L(spec);
    REQUIRE(p.entries.size() == L.total);
    CHECK(p.entries[L.head_w].name == "head.w");
    CHECK(p.entries[L.head_w].value.shape() == Shape4{8, 2, 3, 3});
    CHECK(p.entries[L.res_base(2) + 2].name == "res2.conv2.w");
    CHECK(p.entries[L.out_w].value.shape() == Shape4{1, 8, 3, 3});
    CHECK(p.entries[L.bn_var].name == "bn.running_var");
    CHECK_FALSE(p.entries[L.bn_mean].trainable);
    CHECK(p.entries[L.out_b].name == "out.b");
}

TEST_CASE("zero parameters with global residual pass the reconstruction through") {
    for (int ch : {1, 2}) {
        const ModelSpec spec{ch, 6, 2, true};
        const auto p = zero_params<float>(spec);
        const Tensor x = random_input({3, ch, 7, 5}, 4);
        for (RunMode m : {RunMode::Eval, RunMode::Train}) {
            const Tensor y = model_forward(x, p, spec, m);
            REQUIRE(y.shape() == Shape4{3, 1, 7, 5});
            for (int n = 0; n < 3; ++n) CHECK(std::ranges::equal(y.channel(n, 0), x.channel(n, 0)));
        }
    }
    const ModelSpec plain{2, 4, 1, false};
    const Tensor y = model_forward(random_input({1, 2, 4, 4}, 5), zero_params<float>(plain), plain, RunMode::Eval);
    CHECK(std::ranges::all_of(y.data(), [](float v) { return v == 0.0f; }));
}

TEST_CASE("input channel mismatch") {
    const ModelSpec spec{2, 4, 1, true};
    CHECK_THROWS_AS(model_forward(random_input({1, 1, 4, 4}, 1), zero_params<float>(spec), spec, RunMode::Eval),
                    ArgumentError);
    CHECK_THROWS_AS(model_forward(random_input({1, 2, 4, 4}, 1), zero_params<float>(ModelSpec{2, 5, 1, true}), spec,
                                  RunMode::Eval),
                    ArgumentError);
}

TEST_CASE("init is deterministic and He-scaled") {
    const ModelSpec spec{2, 32, 2, true};
    const auto a = init_params(spec, 9), b = init_params(spec, 9), c = init_params(spec, 10);
    CHECK(a == b);
    CHECK_FALSE(a == c);
    const ParamLayout L(spec);
    for (const auto& e : a.entries) {
        if (e.name.ends_with(".w")) {
            double s2 = 0.0;
            for (float v : e.value.data()) s2 += static_cast<double>(v) * v;
            const double sd = std::sqrt(s2 / static_cast<double>(e.value.size()));
            const double want = std::sqrt(2.0 / (9.0 * e.value.c()));
            if (e.value.size() >= 500) CHECK(std::abs(sd / want - 1.0) < 0.1);
        } else if (e.name == "bn.gamma" || e.name == "bn.running_var") {
            CHECK(std::ranges::all_of(e.value.data(), [](float v) { return v == 1.0f; }));
        } else {
            CHECK(std::ranges::all_of(e.value.data(), [](float v) { return v == 0.0f; }));
        }
    }
    const auto scaled = init_params(spec, 9, 0.25);
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        const auto& x = a.entries[i].value.data();
        const auto& y = scaled.entries[i].value.data();
        const float k = i == L.out_w ? 0.25f : 1.0f;
        for (std::size_t j = 0; j < x.size(); ++j) REQUIRE(y[j] == x[j] * k);
    }
    CHECK_THROWS_AS(init_params(spec, 9, -1.0), ArgumentError);
}

TEST_CASE("1- and 2-channel inits from one seed share all but the prediction slice") {
    const ModelSpec one{1, 8, 2, true}, two{2, 8, 2, true};
    const auto a = init_params(one, 42), b = init_params(two, 42);
    REQUIRE(a.entries.size() == b.entries.size());
    for (std::size_t k = 1; k < a.entries.size(); ++k) CHECK(a.entries[k] == b.entries[k]);
    const auto& ha = a.entries[0].value;
    const auto& hb = b.entries[0].value;
    for (int co = 0; co < 8; ++co)
        for (int i = 0; i < 9; ++i)
            REQUIRE(hb.at(co, 0, i / 3, i % 3) == doctest::Approx(ha.at(co, 0, i / 3, i % 3) / std::sqrt(2.0)));
}

TEST_CASE("eval is deterministic and channel order matters") {
    const ModelSpec spec{2, 8, 1, true};
    const auto p = init_params(spec, 3);
    const Tensor x = random_input({2, 2, 8, 8}, 6);
    CHECK(model_forward(x, p, spec, RunMode::Eval) == model_forward(x, p, spec, RunMode::Eval));
    Tensor swapped(x.shape());
    for (int n = 0; n < 2; ++n) {
        std::ranges::copy(x.channel(n, 0), swapped.channel(n, 1).begin());
        std::ranges::copy(x.channel(n, 1), swapped.channel(n, 0).begin());
    }
    CHECK_FALSE(model_forward(x, p, spec, RunMode::Eval) == model_forward(swapped, p, spec, RunMode::Eval));
}

TEST_CASE("train-mode forward and running statistics") {
    const ModelSpec spec{1, 4, 1, true};
    auto p = init_params(spec, 2);
    const Tensor x = random_input({2, 1, 6, 6}, 7);
    const auto pass = model_forward_train(x, p, spec);
    CHECK(pass.output == model_forward(x, p, spec, RunMode::Train));
    const ParamLayout L(spec);
    update_running_stats(p, pass, spec);
    for (int c = 0; c < 4; ++c)
        CHECK(p.entries[L.bn_mean].value.data()[c] ==
              doctest::Approx(0.1 * pass.bn.mean[static_cast<std::size_t>(c)]).epsilon(1e-5));
}

TEST_CASE("end-to-end gradient matches finite differences") {
    std::mt19937_64 rng(21);
    for (bool residual : {true, false}) {
        const ModelSpec spec{2, 4, 1, residual};
        auto p = params_cast<double>(init_params(spec, 5));
        for (auto& e : p.entries)
            if (e.name.ends_with(".b") || e.name == "bn.beta") fill_normal(e.value, rng, 0.1);
        BasicTensor<double> x({2, 2, 8, 8});
        fill_normal(x, rng);
        BasicTensor<double> w({2, 1, 8, 8});
        fill_normal(w, rng);
        auto f = [&] {
            const auto y = model_forward_train(x, p, spec).output;
            double s = 0;
            for (std::size_t i = 0; i < y.size(); ++i) s += y.data()[i] * w.data()[i];
            return s;
        };
        auto signs = [&] {
            const auto pass = model_forward_train(x, p, spec);
            std::vector<bool> s;
            auto add = [&](const BasicTensor<double>& t) {
                for (double v : t.data()) s.push_back(v > 0);
            };
            for (const auto& r : pass.res) add(r.hidden);
            add(pass.tail1_pre);
            add(pass.tail2_pre);
            return s;
        };
        const auto g = model_backward(model_forward_train(x, p, spec), p, spec, w);
        test::SmoothStats stats;
        CHECK(test::gradient_error_smooth(x, g.input, f, signs, stats) <= 1e-3);
        for (std::size_t k = 0; k < p.entries.size(); ++k) {
            if (!p.entries[k].trainable) continue;
            CAPTURE(p.entries[k].name);
            CHECK(test::gradient_error_smooth(p.entries[k].value, g.params.entries[k].value, f, signs, stats) <= 1e-3);
        }
        CHECK(stats.skipped * 100 < stats.coordinates);
    }
}

TEST_CASE("model file round trip") {
    const ModelSpec spec{2, 5, 2, false};
    SavedModel m{spec, Component::U, 37, init_params(spec, 4)};
    const auto dir = test::temp_dir("model");
    save_model(m, dir / "m.pqen");
    CHECK(load_model(dir / "m.pqen") == m);

    SavedModel untagged{ModelSpec{1, 3, 1, true}, std::nullopt, -1, init_params(ModelSpec{1, 3, 1, true}, 1)};
    CHECK(decode_model(encode_model(untagged)) == untagged);

    const auto bytes = encode_model(m);
    CHECK(bytes[0] == 'P');
    CHECK(bytes[3] == 'N');
    CHECK(bytes[4] == 1);  // version, little-endian

    auto truncated = bytes;
    truncated.resize(bytes.size() - 4);
    try {
        decode_model(truncated);
        FAIL("truncated file accepted");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("expected") != std::string::npos);
    }
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_model(bad), FormatError);
    bad = bytes;
    bad[4] = 9;
    CHECK_THROWS_AS(decode_model(bad), FormatError);
    bad = bytes;
    bad[12] = '[';
    CHECK_THROWS_AS(decode_model(bad), FormatError);
    CHECK_THROWS_AS(decode_model(std::vector<std::uint8_t>{'P', 'Q'}), FormatError);
    CHECK_THROWS(load_model(dir / "missing.pqen"));
}
