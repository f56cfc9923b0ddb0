// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Usage: pqe_acceptance [--workdir DIR] [--only N[,N...]]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "oracle/codec_oracle.hpp"
#include "pqe/bitstream.hpp"
#include "pqe/codec.hpp"
#include "pqe/harness.hpp"
#include "pqe/layers.hpp"
#include "pqe/metrics.hpp"
#include "pqe/model.hpp"
#include "pqe/training.hpp"
#include "pqe/transform.hpp"
#include "support/support.hpp"

using namespace pqe;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// 1. every chosen mode equals the oracle's brute-force argmin
Outcome codec_oracle() {
    std::mt19937_64 rng(101);
    int frames = 0, blocks = 0, mismatches = 0;
    for (int k = 0; k < 4; ++k) {
        const VideoFrame f = k < 2 ? test::random_frame(64, 64, rng)
                                   : VideoFrame(test::smooth_plane(64, 64, 8 + 4 * k, rng),
                                                test::smooth_plane(32, 32, 6, rng), test::smooth_plane(32, 32, 5, rng));
        ++frames;
        for (int qp : {22, 37, 47}) {
            const auto enc = encode_frame(f, CodecConfig{qp, 16}, true);
            for (int p = 0; p < 3; ++p) {
                const auto o = oracle::code_plane(f.plane(static_cast<Component>(p)), p == 0 ? 16 : 8, qp);
                const auto& got = enc.stats.per_block_modes[static_cast<std::size_t>(p)];
                blocks += static_cast<int>(o.modes.size());
                if (got.size() != o.modes.size()) {
                    mismatches += static_cast<int>(o.modes.size());
                    continue;
                }
                for (std::size_t i = 0; i < got.size(); ++i) mismatches += got[i] != o.modes[i];
            }
        }
    }
    return {mismatches == 0 && frames >= 3,
            fmt("%g frames x QPs {22,37,47}, %g blocks, %g mode mismatches", frames, blocks, mismatches)};
}

// Walks a serialized frame with a bare bit reader and returns its body bits.
std::int64_t walk_body_bits(std::span<const std::uint8_t> bytes, const CodedFrame& cf, bool* padding_ok) {
    BitReader br(bytes);
    br.get_bits(8 * kStreamHeaderBytes);
    const std::uint64_t start = br.position();
    for (const auto& g : cf.planes)
        for (std::size_t b = 0; b < g.blocks.size(); ++b) {
            br.get_bits(7);
            for (int i = 0; i < g.block_size * g.block_size; ++i)
                if (br.get_eg0() != 0) br.get_bit();
        }
    const auto body = static_cast<std::int64_t>(br.position() - start);
    *padding_ok = br.remaining() < 8;
    while (br.remaining() > 0) *padding_ok = *padding_ok && br.get_bit() == 0;
    return body;
}

// 2. encode -> serialize -> parse -> decode is bit-exact; rates add up
Outcome codec_bitexact() {
    std::mt19937_64 rng(202);
    int ok = 0;
    for (int k = 0; k < 10; ++k) {
        const int w = 16 + 8 * (k % 5), h = 16 + 8 * (k % 3);
        const VideoFrame f = test::random_frame(w, h, rng);
        const int qp = 22 + 3 * k;
        const auto enc = encode_frame(f, CodecConfig{qp, k % 2 ? 8 : 16});
        const auto bytes = serialize_frame(enc.coded);
        const auto dec = decode_frame(parse_frame(bytes));
        std::int64_t rate = 0;
        for (const auto& g : enc.coded.planes)
            for (const auto& b : g.blocks) rate += b.rate_bits;
        bool padding_ok = false;
        const std::int64_t body = walk_body_bits(bytes, enc.coded, &padding_ok);
        if (dec.recon == enc.frames.recon && dec.pred == enc.frames.pred && rate == body && padding_ok) ++ok;
    }
    return {ok == 10, fmt("%g/10 frames bit-exact with sum(rate_bits) == body bits", ok)};
}

// 3. lambda(40) and the re-derived cost of the IPM 38 example
Outcome lambda_calibration() {
    const double lambda = lambda_of_qp(40);
    const double j = 22970.0 + lambda * 182.0;
    const double rel = std::abs(j - 77803.0) / 77803.0;
    return {lambda >= 300.5 && lambda <= 301.5 && rel <= 0.005,
            fmt("lambda(40) = %.4f, J = %.1f (%.3f%% from 77803)", lambda, j, 100 * rel)};
}

// 4. DCT round trip, energy, quantizer bound
Outcome numerics() {
    std::mt19937_64 rng(404);
    std::uniform_real_distribution<double> u(-255.0, 255.0);
    double rt = 0.0, energy = 0.0;
    for (int n : {4, 8, 16, 32})
        for (int t = 0; t < 50; ++t) {
            std::vector<double> x(static_cast<std::size_t>(n) * n);
            for (auto& v : x) v = u(rng);
            const auto c = forward_dct2(x, n);
            const auto y = inverse_dct2(c, n);
            double ex = 0, ec = 0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                rt = std::max(rt, std::abs(x[i] - y[i]));
                ex += x[i] * x[i];
                ec += c[i] * c[i];
            }
            energy = std::max(energy, std::abs(ex - ec) / ex);
        }
    double worst = 0.0;
    std::uniform_real_distribution<double> big(-5000.0, 5000.0);
    std::uniform_int_distribution<int> qps(0, 51);
    for (int i = 0; i < 100000; ++i) {
        const double step = qstep(qps(rng));
        const double c = big(rng);
        const double back = dequantize(quantize(std::span<const double>(&c, 1), step), step)[0];
        worst = std::max(worst, std::abs(back - c) / (step / 2));
    }
    return {rt <= 1e-6 && energy <= 1e-6 && worst <= 1.0,
            fmt("round trip %.2e, energy %.2e, max |dequant-c|/(step/2) = %.6f over 1e5 values", rt, energy, worst)};
}

// 5. finite-difference gradient suite in double precision
Outcome gradients() {
    using D = BasicTensor<double>;
    std::mt19937_64 rng(505);
    auto rnd = [&](Shape4 s) {
        D t(s);
        test::fill_normal(t, rng);
        return t;
    };
    auto dot = [](const D& a, const D& b) {
        double s = 0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
        return s;
    };
    double worst[5] = {0, 0, 0, 0, 0};
    int instances = 0;
    test::SmoothStats smooth;
    for (int t = 0; t < 20; ++t, ++instances) {
        const int ci = 1 + t % 3, co = 1 + (t / 3) % 3;
        {
            D x = rnd({1 + t % 2, ci, 4 + t % 3, 5}), k = rnd({co, ci, 3, 3}), b = rnd({co, 1, 1, 1});
            const D w = rnd({x.n(), co, x.h(), x.w()});
            auto f = [&] { return dot(conv2d_forward(x, k, b), w); };
            const auto g = conv2d_backward(x, k, w);
            for (auto e : {test::gradient_error(x, g.dx, f), test::gradient_error(k, g.dkernel, f),
                           test::gradient_error(b, g.dbias, f)})
                worst[0] = std::max(worst[0], e);
        }
        {
            D x = rnd({2, ci, 4, 4});
            for (auto& v : x.data())
                if (std::abs(v) < 0.01) v = 0.5;
            const D w = rnd(x.shape());
            worst[1] = std::max(worst[1], test::gradient_error(x, relu_backward(x, w), [&] { return dot(relu_forward(x), w); }));
        }
        {
            D x = rnd({2, ci, 3, 3}), gamma = rnd({ci, 1, 1, 1}), beta = rnd({ci, 1, 1, 1});
            const D w = rnd(x.shape());
            auto f = [&] { return dot(batchnorm_forward_train(x, gamma, beta), w); };
            BatchNormCache<double> cache;
            batchnorm_forward_train(x, gamma, beta, &cache);
            const auto g = batchnorm_backward(cache, gamma, w);
            for (auto e : {test::gradient_error(x, g.dx, f), test::gradient_error(gamma, g.dgamma, f),
                           test::gradient_error(beta, g.dbeta, f)})
                worst[2] = std::max(worst[2], e);
        }
        {
            D x = rnd({1 + t % 2, ci, 4, 4});
            D k1 = rnd({ci, ci, 3, 3}), b1 = rnd({ci, 1, 1, 1}), k2 = rnd({ci, ci, 3, 3}), b2 = rnd({ci, 1, 1, 1});
            const D w = rnd(x.shape());
            const ResidualParams<double> p{k1, b1, k2, b2};
            auto f = [&] { return dot(residual_block_forward(x, p), w); };
            auto signs = [&] {
                ResidualCache<double> c;
                residual_block_forward(x, p, &c);
                std::vector<bool> s;
                for (double v : c.hidden.data()) s.push_back(v > 0);
                return s;
            };
            ResidualCache<double> cache;
            residual_block_forward(x, p, &cache);
            const auto g = residual_block_backward(cache, p, w);
            std::pair<D*, const D*> pairs[] = {{&x, &g.dx},
                                               {&k1, &g.conv1.dkernel},
                                               {&b1, &g.conv1.dbias},
                                               {&k2, &g.conv2.dkernel},
                                               {&b2, &g.conv2.dbias}};
            for (auto [param, grad] : pairs)
                worst[3] = std::max(worst[3], test::gradient_error_smooth(*param, *grad, f, signs, smooth));
        }
        {
            const ModelSpec spec{2, 4, 1, t % 2 == 0};
            auto p = params_cast<double>(init_params(spec, static_cast<std::uint64_t>(t)));
            for (auto& e : p.entries)
                if (e.name.ends_with(".b") || e.name == "bn.beta") test::fill_normal(e.value, rng, 0.1);
            D x = rnd({2, 2, 8, 8});
            const D w = rnd({2, 1, 8, 8});
            auto f = [&] { return dot(model_forward_train(x, p, spec).output, w); };
            auto signs = [&] {
                const auto pass = model_forward_train(x, p, spec);
                std::vector<bool> s;
                auto add = [&](const D& a) {
                    for (double v : a.data()) s.push_back(v > 0);
                };
                for (const auto& r : pass.res) add(r.hidden);
                add(pass.tail1_pre);
                add(pass.tail2_pre);
                return s;
            };
            const auto g = model_backward(model_forward_train(x, p, spec), p, spec, w);
            worst[4] = std::max(worst[4], test::gradient_error_smooth(x, g.input, f, signs, smooth));
            for (std::size_t k = 0; k < p.entries.size(); ++k) {
                if (!p.entries[k].trainable) continue;
                worst[4] = std::max(worst[4], test::gradient_error_smooth(p.entries[k].value, g.params.entries[k].value,
                                                                          f, signs, smooth));
            }
        }
    }
    const double max_err = *std::max_element(std::begin(worst), std::end(worst));
    const double n = static_cast<double>(smooth.coordinates);
    const double skip_frac = static_cast<double>(smooth.skipped) / n;
    std::string detail = fmt("%g instances per layer; worst rel. error conv %.1e relu %.1e bn %.1e", instances,
                             worst[0], worst[1], worst[2]) +
                         fmt(" residual %.1e model %.1e; ReLU-network coordinates: %.0f, %.2f%% needed eps < 1e-3,",
                             worst[3], worst[4], n, 100 * static_cast<double>(smooth.refined) / n) +
                         fmt(" %.2f%% skipped (kink within 1e-6)", 100 * skip_frac);
    return {max_err <= 1e-3 && skip_frac < 0.01, detail};
}

// 6. zero model with global residual is an identity through cmd_enhance
Outcome identity(const fs::path& work) {
    const fs::path dir = work / "identity";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::vector<VideoFrame> recon{test::texture_frame(200, 136, 61), test::texture_frame(200, 136, 62)};
    std::vector<VideoFrame> pred{test::texture_frame(200, 136, 63), test::texture_frame(200, 136, 64)};
    write_yuv420(recon, dir / "recon.yuv");
    write_yuv420(pred, dir / "pred.yuv");
    harness::EnhanceOptions opt;
    for (Component c : {Component::Y, Component::U, Component::V}) {
        const ModelSpec spec{2, 8, 2, true};
        opt.models.push_back(dir / (std::string(to_string(c)) + ".pqen"));
        save_model(SavedModel{spec, c, 37, zero_params<float>(spec)}, opt.models.back());
    }
    opt.recon = dir / "recon.yuv";
    opt.pred = dir / "pred.yuv";
    opt.width = 200;
    opt.height = 136;
    opt.qp = 37;
    opt.out = dir / "enhanced.yuv";
    std::ostringstream warn;
    const auto frames = harness::cmd_enhance(opt, warn);
    const bool same = slurp(opt.out) == slurp(opt.recon) && frames == recon;
    return {same, std::string(same ? "enhanced file identical" : "enhanced file differs") +
                      " to the reconstruction (2 frames 200x136, 64x64 tiles with 8-sample overlap)"};
}

double psnr_unit(double mse) { return 10.0 * std::log10(1.0 / mse); }

// 7. overfit toy run
Outcome toy_training() {
    const VideoFrame f = test::texture_frame(128, 128, 707);
    const auto enc = encode_frame(f, CodecConfig{47, 16});
    const auto patches = extract_patches(f.y, enc.frames.recon.y, enc.frames.pred.y, 8, 77, Component::Y, 47, 32);
    const ModelSpec spec{2, 16, 2, true};
    TrainConfig cfg;
    cfg.batch_size = 8;  // one step per epoch
    cfg.total_epochs = 200;
    cfg.decay_every = 200;
    cfg.lr_initial = 1e-3;
    cfg.seed = 7;
    cfg.qp = 47;
    cfg.init_output_gain = 0.1;
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = train_model(patches, spec, cfg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double first = r.log.front().mean_loss, last = r.log.back().mean_loss;

    std::vector<std::size_t> idx(patches.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const Batch b = make_batch(patches, idx, true);
    const Tensor out = model_forward(b.input, r.params, spec, RunMode::Eval);
    double se_rec = 0, se_enh = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double e = std::clamp<double>(out.data()[i], 0.0, 1.0) - b.target.data()[i];
        se_enh += e * e;
    }
    for (std::size_t n = 0; n < patches.size(); ++n)
        for (std::size_t k = 0; k < patches[n].orig.size(); ++k) {
            const double d = static_cast<double>(patches[n].recon[k]) - patches[n].orig[k];
            se_rec += d * d;
        }
    const double count = static_cast<double>(out.size());
    const double p_rec = psnr_unit(se_rec / count), p_enh = psnr_unit(se_enh / count);
    const double ratio = last / first;
    return {ratio <= 0.1 && p_enh - p_rec >= 0.5,
            fmt("loss %.4g -> %.4g (ratio %.4f); ", first, last, ratio) +
                fmt("PSNR recon %.2f dB, enhanced %.2f dB (%+.2f dB); %.0f s", p_rec, p_enh, p_enh - p_rec, secs)};
}

// 8. prediction-aware vs reconstruction-only at matched seeds and budgets
Outcome ablation() {
    int wins = 0;
    std::string detail;
    for (int s = 0; s < 5; ++s) {
        const VideoFrame f = test::texture_frame(128, 128, 800 + static_cast<std::uint64_t>(s));
        const auto enc = encode_frame(f, CodecConfig{42, 16});
        const auto patches = extract_patches(f.y, enc.frames.recon.y, enc.frames.pred.y, 16,
                                             80 + static_cast<std::uint64_t>(s), Component::Y, 42, 32);
        double final_loss[2];
        for (int arm = 0; arm < 2; ++arm) {
            const bool with_pred = arm == 0;
            TrainConfig cfg;
            cfg.batch_size = 8;
            cfg.total_epochs = 200;
            cfg.decay_every = 200;
            cfg.lr_initial = 1e-3;
            cfg.seed = 1000 + static_cast<std::uint64_t>(s);
            cfg.qp = 42;
            cfg.use_prediction = with_pred;
            cfg.init_output_gain = 0.1;
            const auto r = train_model(patches, ModelSpec{with_pred ? 2 : 1, 16, 2, true}, cfg);
            final_loss[arm] = r.log.back().mean_loss;
        }
        wins += final_loss[0] < final_loss[1];
        detail += (s ? " " : "") + fmt("%.4f/%.4f", final_loss[0], final_loss[1]);
    }
    return {wins >= 4, fmt("2-ch lower in %g/5 seeds (final loss with/without: ", wins) + detail + ")"};
}

// 9. BD-rate analytics
Outcome bd_analytics() {
    const RDCurve c{{1000, 30.1}, {1800, 33.0}, {3100, 35.7}, {5600, 38.2}};
    bool ok = bd_rate(c, c).bd_rate_percent == 0.0;
    double worst = 0.0;
    for (double k : {0.5, 0.9, 2.0}) {
        RDCurve t = c;
        for (auto& p : t) p.bitrate *= k;
        worst = std::max(worst, std::abs(bd_rate(c, t).bd_rate_percent - 100 * (k - 1)));
    }
    ok = ok && worst <= 1e-6;
    RDCurve bad = c;
    bad[2].psnr = 32.0;
    bool rejected = false;
    try {
        bd_rate(c, bad);
    } catch (const CurveError&) {
        rejected = true;
    }
    return {ok && rejected, fmt("identity exact, max scaling error %.2e, non-monotone rejected: ", worst) +
                                (rejected ? "yes" : "no")};
}

// 10. end-to-end experiment
Outcome experiment(const fs::path& work) {
    const fs::path dir = work / "experiment";
    fs::remove_all(dir);
    fs::create_directories(dir);
    write_yuv420(std::vector<VideoFrame>{test::texture_frame(64, 64, 1001)}, dir / "alpha.yuv");
    write_yuv420(std::vector<VideoFrame>{test::texture_frame(64, 64, 1002)}, dir / "beta.yuv");
    const nlohmann::json doc = {
        {"sources",
         {{{"path", "alpha.yuv"}, {"width", 64}, {"height", 64}, {"class", "T1"}},
          {{"path", "beta.yuv"}, {"width", 64}, {"height", 64}, {"class", "T2"}}}},
        {"qp_range_ctc", {22, 27, 32, 37}},
        {"qp_range_high", {32, 37, 42, 47}},
        {"model", {{"width", 8}, {"num_res_blocks", 1}}},
        {"train", {{"epochs", 20}, {"batch_size", 8}, {"lr", 1e-4}, {"patches_per_image", 8}, {"init_output_gain", 0.0}}},
        {"seed", 3},
        {"output_dir", "out"}};
    std::ofstream(dir / "config.json") << doc.dump(2);
    const auto t0 = std::chrono::steady_clock::now();
    const auto cfg = harness::load_experiment_config(dir / "config.json");
    std::ostringstream progress;
    const auto report = harness::cmd_experiment(cfg, progress);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    int complete = 0;
    for (const char* range : {"ctc", "high"})
        for (const char* arm : {"with_prediction", "without_prediction"}) {
            const fs::path p = cfg.output_dir / (std::string("report_") + range + "_" + arm + ".md");
            if (!fs::exists(p)) continue;
            const std::string text = slurp(p);
            bool rows = text.find("| T1 | alpha |") != std::string::npos &&
                        text.find("| T2 | beta |") != std::string::npos &&
                        text.find("**Overall**") != std::string::npos && text.find("n/a") == std::string::npos;
            const auto t = std::find_if(report.tables.begin(), report.tables.end(),
                                        [&](const harness::BDTable& b) { return b.range == range && b.arm == arm; });
            rows = rows && t != report.tables.end() && t->cells.size() == 6 &&
                   std::all_of(t->cells.begin(), t->cells.end(), [](const harness::BDCell& c) { return c.bd_rate; });
            complete += rows;
        }
    return {complete == 4 && secs < 1800,
            fmt("%g/4 complete reports (2 sequences x Y,U,V, class and overall rows) in %.0f s", complete, secs)};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria 1-10"};
    std::string workdir = (fs::temp_directory_path() / "pqe_acceptance").string();
    std::vector<int> only;
    app.add_option("--workdir", workdir, "Scratch directory");
    app.add_option("--only", only, "Run only these criteria")->delimiter(',');
    CLI11_PARSE(app, argc, argv);
    const fs::path work(workdir);
    fs::create_directories(work);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"codec oracle equivalence", codec_oracle},
        {"codec bit-exactness", codec_bitexact},
        {"lambda calibration", lambda_calibration},
        {"numerics", numerics},
        {"gradient suite", gradients},
        {"identity contract", [&] { return identity(work); }},
        {"toy training", toy_training},
        {"prediction-aware ablation", ablation},
        {"BD-rate analytics", bd_analytics},
        {"end-to-end experiment", [&] { return experiment(work); }},
    };
    const std::set<int> selected(only.begin(), only.end());
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first << "): " << o.detail
                  << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
