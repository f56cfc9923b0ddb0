#pragma once

#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pqe/frame_io.hpp"

namespace pqe {

inline constexpr double kPsnrCap = 100.0;

double mse(const Plane& a, const Plane& b);
double mse(std::span<const float> a, std::span<const float> b);  // samples in [0, 1]

// 10 log10(255^2 / MSE); +infinity for identical planes.
double psnr(const Plane& a, const Plane& b);
double psnr_from_mse(double mse, double peak = 255.0);
// Same, clamped to kPsnrCap so lossless points stay usable in RD fits.
double psnr_capped(const Plane& a, const Plane& b);

struct RDPoint {
    double bitrate = 0.0;
    double psnr = 0.0;
};

// At least 4 points. Validation sorts by bitrate and then requires bitrate
// and PSNR to be strictly increasing.
using RDCurve = std::vector<RDPoint>;

struct BDResult {
    double bd_rate_percent = 0.0;
    double overlap_low = 0.0;
    double overlap_high = 0.0;
};

RDCurve validated_curve(RDCurve curve);

// Bjontegaard delta rate: cubic fit of log10(rate) over PSNR (least squares
// beyond 4 points), integrated over the common PSNR interval.
BDResult bd_rate(const RDCurve& anchor, const RDCurve& test);

struct LabeledBD {
    std::string sequence;
    std::string sequence_class;
    double bd_rate_percent = 0.0;
};

struct BDAggregate {
    std::map<std::string, double> class_average;
    std::map<std::string, int> class_count;
    double overall = 0.0;
    int count = 0;
};

BDAggregate aggregate_bd(std::span<const LabeledBD> results);

}  // namespace pqe
