#include "pqe/intra_pred.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <optional>
#include <string>

#include "pqe/errors.hpp"

namespace pqe {

namespace {

constexpr std::array<int, 17> kAngleTable = {0, 1, 2, 3, 4, 6, 8, 10, 12, 14, 16, 18, 20, 23, 26, 29, 32};

// Two-tap linear interpolation at real index p.
double sample_at(const std::vector<int>& arr, double p) {
    const int last = static_cast<int>(arr.size()) - 1;
    const double fl = std::floor(p);
    const int i0 = std::clamp(static_cast<int>(fl), 0, last);
    const double f = p - fl;
    if (f == 0.0 || i0 == last) return arr[i0];
    return (1.0 - f) * arr[i0] + f * arr[i0 + 1];
}

std::uint8_t to_pixel(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
}

}  // namespace

IntraMode::IntraMode(int index) : index_(index) {
    if (index < 0 || index >= kNumIntraModes)
        throw ArgumentError("intra mode " + std::to_string(index) + " outside [0, 66]");
}

int IntraMode::angle() const {
    if (!is_angular()) return 0;
    const int k = is_vertical_family() ? index_ - kVerticalMode : index_ - kHorizontalMode;
    const int mag = kAngleTable[static_cast<std::size_t>(std::abs(k))];
    return k < 0 ? -mag : mag;
}

RefSamples build_reference_samples(const Plane& recon, int bx, int by, int n) {
    const int bcol = bx / n;
    const int brow = by / n;
    auto fetch = [&](int px, int py) -> std::optional<int> {
        if (px < 0 || py < 0 || px >= recon.width() || py >= recon.height()) return std::nullopt;
        const int r = py / n;
        const int c = px / n;
        if (r < brow || (r == brow && c < bcol)) return recon.at(px, py);
        return std::nullopt;
    };

    // Scan order: left column bottom-up, corner, top row left-to-right.
    const int total = 4 * n + 1;
    std::vector<std::optional<int>> scan(total);
    for (int y = 0; y < 2 * n; ++y) scan[2 * n - 1 - y] = fetch(bx - 1, by + y);
    scan[2 * n] = fetch(bx - 1, by - 1);
    for (int x = 0; x < 2 * n; ++x) scan[2 * n + 1 + x] = fetch(bx + x, by - 1);

    const auto first = std::find_if(scan.begin(), scan.end(), [](const auto& s) { return s.has_value(); });
    std::vector<int> filled(total, 128);
    if (first != scan.end()) {
        int prev = **first;
        for (int i = 0; i < total; ++i) {
            if (scan[i]) prev = *scan[i];
            filled[i] = prev;
        }
    }

    RefSamples refs;
    refs.size = n;
    refs.top.resize(2 * n + 1);
    refs.left.resize(2 * n);
    for (int y = 0; y < 2 * n; ++y) refs.left[y] = filled[2 * n - 1 - y];
    refs.top[0] = filled[2 * n];
    for (int x = 0; x < 2 * n; ++x) refs.top[1 + x] = filled[2 * n + 1 + x];
    return refs;
}

std::vector<std::uint8_t> predict_block(const RefSamples& refs, IntraMode mode, int n) {
    if (refs.size != n || refs.top.size() != static_cast<std::size_t>(2 * n + 1) ||
        refs.left.size() != static_cast<std::size_t>(2 * n))
        throw ArgumentError("reference samples do not match block size " + std::to_string(n));

    std::vector<std::uint8_t> pred(static_cast<std::size_t>(n) * n);
    auto out = [&](int x, int y) -> std::uint8_t& { return pred[static_cast<std::size_t>(y) * n + x]; };

    if (mode.index() == kDcMode) {
        int sum = 0;
        for (int i = 0; i < n; ++i) sum += refs.top[1 + i] + refs.left[i];
        const auto dc = static_cast<std::uint8_t>((sum + n) / (2 * n));
        std::fill(pred.begin(), pred.end(), dc);
        return pred;
    }

    if (mode.index() == kPlanarMode) {
        const int shift = std::countr_zero(static_cast<unsigned>(n)) + 1;
        const int top_right = refs.top[1 + n];
        const int bottom_left = refs.left[n];
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                const int v = (n - 1 - x) * refs.left[y] + (x + 1) * top_right + (n - 1 - y) * refs.top[1 + x] +
                              (y + 1) * bottom_left + n;
                out(x, y) = static_cast<std::uint8_t>(std::clamp(v >> shift, 0, 255));
            }
        return pred;
    }

    // Both reference arrays indexed from the corner: [corner, r0, r1, ...].
    std::vector<int> left_ext(2 * n + 1);
    left_ext[0] = refs.corner();
    std::copy(refs.left.begin(), refs.left.end(), left_ext.begin() + 1);
    const std::vector<int>& top_ext = refs.top;

    const double a = mode.angle() / 32.0;
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            double v;
            if (mode.is_vertical_family()) {
                const double xr = x + (y + 1) * a;
                if (xr >= -1.0) {
                    v = sample_at(top_ext, xr + 1.0);
                } else {
                    const double yr = y - (x + 1) / -a;
                    v = sample_at(left_ext, yr + 1.0);
                }
            } else {
                const double yr = y - (x + 1) * a;
                if (yr >= -1.0) {
                    v = sample_at(left_ext, yr + 1.0);
                } else {
                    const double xr = x - (y + 1) / a;
                    v = sample_at(top_ext, xr + 1.0);
                }
            }
            out(x, y) = to_pixel(v);
        }
    }
    return pred;
}

}  // namespace pqe
