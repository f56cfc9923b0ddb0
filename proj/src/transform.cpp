#include "pqe/transform.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "pqe/errors.hpp"

namespace pqe {

namespace {

void check_qp(int qp) {
    if (qp < kMinQp || qp > kMaxQp) throw ArgumentError("QP " + std::to_string(qp) + " outside [0, 51]");
}

int size_index(int n) {
    switch (n) {
        case 4: return 0;
        case 8: return 1;
        case 16: return 2;
        case 32: return 3;
        default: throw ArgumentError("unsupported transform size " + std::to_string(n));
    }
}

// basis[k * n + i] = alpha_k cos(pi (2i+1) k / 2n)
const std::vector<double>& dct_basis(int n) {
    static const std::array<std::vector<double>, 4> table = [] {
        std::array<std::vector<double>, 4> t;
        for (int idx = 0; idx < 4; ++idx) {
            const int size = 4 << idx;
            auto& m = t[idx];
            m.resize(static_cast<std::size_t>(size) * size);
            for (int k = 0; k < size; ++k) {
                const double alpha = k == 0 ? std::sqrt(1.0 / size) : std::sqrt(2.0 / size);
                for (int i = 0; i < size; ++i)
                    m[static_cast<std::size_t>(k) * size + i] =
                        alpha * std::cos(std::numbers::pi * (2 * i + 1) * k / (2.0 * size));
            }
        }
        return t;
    }();
    return table[size_index(n)];
}

// out = A * X * B^T where A, B are n x n (row-major); the transposition flags
// pick C or C^T for each side.
std::vector<double> separable(std::span<const double> x, int n, bool inverse) {
    if (x.size() != static_cast<std::size_t>(n) * n) throw ArgumentError("block size does not match n*n");
    const auto& c = dct_basis(n);
    const auto at = [&](int r, int k) {  // C or C^T element
        return inverse ? c[static_cast<std::size_t>(k) * n + r] : c[static_cast<std::size_t>(r) * n + k];
    };
    std::vector<double> tmp(x.size(), 0.0), out(x.size(), 0.0);
    // rows: tmp = M * x
    for (int r = 0; r < n; ++r)
        for (int k = 0; k < n; ++k) {
            const double m = at(r, k);
            for (int col = 0; col < n; ++col) tmp[r * n + col] += m * x[k * n + col];
        }
    // cols: out = tmp * M^T
    for (int r = 0; r < n; ++r)
        for (int col = 0; col < n; ++col) {
            double s = 0.0;
            for (int k = 0; k < n; ++k) s += tmp[r * n + k] * at(col, k);
            out[r * n + col] = s;
        }
    return out;
}

}  // namespace

double qstep(int qp) {
    check_qp(qp);
    return std::pow(2.0, (qp - 4) / 6.0);
}

double lambda_of_qp(int qp, double lambda_scale) {
    check_qp(qp);
    return lambda_scale * std::pow(2.0, (qp - 12) / 3.0);
}

std::vector<double> forward_dct2(std::span<const double> block, int n) {
    return separable(block, n, false);
}

std::vector<double> inverse_dct2(std::span<const double> coeffs, int n) {
    return separable(coeffs, n, true);
}

double snap(double v) {
    constexpr double kGrid = 1073741824.0;  // 2^30
    return std::round(v * kGrid) / kGrid;
}

double round_half_away(double v) {
    return std::round(v);
}

std::vector<std::int32_t> quantize(std::span<const double> coeffs, double step) {
    if (!(step > 0.0)) throw ArgumentError("quantizer step must be positive");
    std::vector<std::int32_t> q(coeffs.size());
    for (std::size_t i = 0; i < coeffs.size(); ++i) q[i] = static_cast<std::int32_t>(round_half_away(snap(coeffs[i] / step)));
    return q;
}

std::vector<double> dequantize(std::span<const std::int32_t> levels, double step) {
    if (!(step > 0.0)) throw ArgumentError("quantizer step must be positive");
    std::vector<double> c(levels.size());
    for (std::size_t i = 0; i < levels.size(); ++i) c[i] = levels[i] * step;
    return c;
}

}  // namespace pqe
