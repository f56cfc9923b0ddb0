#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace pqe {

inline constexpr int kMinQp = 0;
inline constexpr int kMaxQp = 51;
inline constexpr double kDefaultLambdaScale = 0.4666;

// Quantizer step 2^((qp-4)/6).
double qstep(int qp);

// Lagrangian multiplier lambda_scale * 2^((qp-12)/3). The default scale puts
// lambda(40) at ~301.
double lambda_of_qp(int qp, double lambda_scale = kDefaultLambdaScale);

// Orthonormal 2-D DCT-II on an n x n row-major block, n in {4, 8, 16, 32}.
std::vector<double> forward_dct2(std::span<const double> block, int n);
std::vector<double> inverse_dct2(std::span<const double> coeffs, int n);

// Nearest multiple of 2^-30. Applied before every rounding decision so that
// values which are exact ties in real arithmetic (e.g. k + 1/2 at power-of-two
// step sizes) round the same way regardless of floating-point evaluation order.
double snap(double v);

double round_half_away(double v);

// round_half_away(snap(c / step)) per coefficient.

std::vector<std::int32_t> quantize(std::span<const double> coeffs, double step);
std::vector<double> dequantize(std::span<const std::int32_t> levels, double step);

}  // namespace pqe
