#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "pqe/frame_io.hpp"
#include "pqe/tensor.hpp"

namespace pqe::test {

namespace fs = std::filesystem;

inline Plane random_plane(int w, int h, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> d(0, 255);
    Plane p(w, h);
    for (auto& s : p.samples()) s = static_cast<std::uint8_t>(d(rng));
    return p;
}

inline VideoFrame random_frame(int w, int h, std::mt19937_64& rng) {
    Plane y = random_plane(w, h, rng);
    Plane u = random_plane(w / 2, h / 2, rng);
    Plane v = random_plane(w / 2, h / 2, rng);
    return VideoFrame(std::move(y), std::move(u), std::move(v));
}

// Smooth-ish random content: bilinear upsampling of a coarse random grid, so
// intra modes other than DC/planar actually win.
inline Plane smooth_plane(int w, int h, int cell, std::mt19937_64& rng) {
    const int gw = w / cell + 2;
    const int gh = h / cell + 2;
    std::uniform_real_distribution<double> d(0.0, 255.0);
    std::vector<double> g(static_cast<std::size_t>(gw) * gh);
    for (auto& v : g) v = d(rng);
    Plane p(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double fx = static_cast<double>(x) / cell, fy = static_cast<double>(y) / cell;
            const int ix = static_cast<int>(fx), iy = static_cast<int>(fy);
            const double ax = fx - ix, ay = fy - iy;
            auto at = [&](int i, int j) { return g[static_cast<std::size_t>(j) * gw + i]; };
            const double v = (1 - ax) * (1 - ay) * at(ix, iy) + ax * (1 - ay) * at(ix + 1, iy) +
                             (1 - ax) * ay * at(ix, iy + 1) + ax * ay * at(ix + 1, iy + 1);
            p.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
    return p;
}

// Oriented gratings inside discs plus flat rectangles with sharp edges; no
// i.i.d. noise, so coding artifacts are structured and depend on the chosen
// directional modes.
inline Plane texture_plane(int w, int h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::vector<double> img(static_cast<std::size_t>(w) * h, 110.0);
    const int discs = std::max(3, w * h / 1600);
    for (int k = 0; k < discs; ++k) {
        const double th = u01(rng) * std::numbers::pi, f = 0.15 + 0.45 * u01(rng), a = 15 + 20 * u01(rng);
        const double cx = u01(rng) * w, cy = u01(rng) * h, r = 15 + 25 * u01(rng);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if ((x - cx) * (x - cx) + (y - cy) * (y - cy) < r * r)
                    img[static_cast<std::size_t>(y) * w + x] += a * std::sin(f * (x * std::cos(th) + y * std::sin(th)));
    }
    const int rects = std::max(4, w * h / 1400);
    for (int k = 0; k < rects; ++k) {
        const int x0 = static_cast<int>(u01(rng) * (w - 8)), y0 = static_cast<int>(u01(rng) * (h - 8));
        const int rw = 8 + static_cast<int>(u01(rng) * 32), rh = 8 + static_cast<int>(u01(rng) * 32);
        const double delta = -50 + 100 * u01(rng);
        for (int y = y0; y < std::min(h, y0 + rh); ++y)
            for (int x = x0; x < std::min(w, x0 + rw); ++x) img[static_cast<std::size_t>(y) * w + x] += delta;
    }
    Plane p(w, h);
    for (std::size_t i = 0; i < img.size(); ++i)
        p.samples()[i] = static_cast<std::uint8_t>(std::clamp(std::lround(img[i]), 0L, 255L));
    return p;
}

inline VideoFrame texture_frame(int w, int h, std::uint64_t seed) {
    return VideoFrame(texture_plane(w, h, seed), texture_plane(w / 2, h / 2, seed + 1),
                      texture_plane(w / 2, h / 2, seed + 2));
}

// Fresh empty directory under the system temp dir.
inline fs::path temp_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("pqe_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

template <typename T>
void fill_normal(BasicTensor<T>& t, std::mt19937_64& rng, double stddev = 1.0) {
    std::normal_distribution<double> d(0.0, stddev);
    for (auto& v : t.data()) v = static_cast<T>(d(rng));
}

// Central differences of f with respect to every element of x; returns
// ||analytic - numeric|| / max(||analytic||, ||numeric||), or 0 when both
// norms are below `floor`.
inline double gradient_error(BasicTensor<double>& x, const BasicTensor<double>& analytic,
                             const std::function<double()>& f, double eps = 1e-3, double floor = 1e-8) {
    double diff2 = 0.0, an2 = 0.0, num2 = 0.0;
    auto data = x.data();
    const auto a = analytic.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double keep = data[i];
        data[i] = keep + eps;
        const double fp = f();
        data[i] = keep - eps;
        const double fm = f();
        data[i] = keep;
        const double num = (fp - fm) / (2 * eps);
        diff2 += (num - a[i]) * (num - a[i]);
        an2 += a[i] * a[i];
        num2 += num * num;
    }
    const double scale = std::max(std::sqrt(an2), std::sqrt(num2));
    if (scale < floor) return 0.0;
    return std::sqrt(diff2) / scale;
}

// Same for piecewise-smooth f. When the +-eps step changes `pattern` (e.g.
// ReLU signs) the coordinate is retried with eps/10 down to 1e-6; fallbacks
// and coordinates that never become smooth are counted.
struct SmoothStats {
    std::size_t coordinates = 0;
    std::size_t refined = 0;
    std::size_t skipped = 0;
};

inline double gradient_error_smooth(BasicTensor<double>& x, const BasicTensor<double>& analytic,
                                    const std::function<double()>& f,
                                    const std::function<std::vector<bool>()>& pattern, SmoothStats& stats,
                                    double eps = 1e-3, double floor = 1e-8) {
    double diff2 = 0.0, an2 = 0.0, num2 = 0.0;
    auto data = x.data();
    const auto a = analytic.data();
    const auto base = pattern();
    for (std::size_t i = 0; i < data.size(); ++i) {
        ++stats.coordinates;
        const double keep = data[i];
        bool smooth = false;
        double num = 0.0;
        for (double e = eps; e >= 1e-6 * 0.999; e /= 10) {
            data[i] = keep + e;
            const double fp = f();
            const bool same_p = pattern() == base;
            data[i] = keep - e;
            const double fm = f();
            const bool same_m = pattern() == base;
            data[i] = keep;
            if (same_p && same_m) {
                smooth = true;
                num = (fp - fm) / (2 * e);
                if (e != eps) ++stats.refined;
                break;
            }
        }
        if (!smooth) {
            ++stats.skipped;
            continue;
        }
        diff2 += (num - a[i]) * (num - a[i]);
        an2 += a[i] * a[i];
        num2 += num * num;
    }
    const double scale = std::max(std::sqrt(an2), std::sqrt(num2));
    if (scale < floor) return 0.0;
    return std::sqrt(diff2) / scale;
}

}  // namespace pqe::test
