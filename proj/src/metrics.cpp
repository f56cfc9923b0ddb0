#include "pqe/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "pqe/errors.hpp"

namespace pqe {

double mse(const Plane& a, const Plane& b) {
    if (a.width() != b.width() || a.height() != b.height())
        throw ArgumentError("PSNR/MSE planes differ in size");
    const auto sa = a.samples();
    const auto sb = b.samples();
    std::uint64_t sse = 0;
    for (std::size_t i = 0; i < sa.size(); ++i) {
        const int d = static_cast<int>(sa[i]) - static_cast<int>(sb[i]);
        sse += static_cast<std::uint64_t>(d * d);
    }
    return static_cast<double>(sse) / static_cast<double>(sa.size());
}

double mse(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size() || a.empty()) throw ArgumentError("MSE inputs differ in size");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

double psnr_from_mse(double m, double peak) {
    if (m <= 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / m);
}

double psnr(const Plane& a, const Plane& b) {
    return psnr_from_mse(mse(a, b));
}

double psnr_capped(const Plane& a, const Plane& b) {
    return std::min(psnr(a, b), kPsnrCap);
}

RDCurve validated_curve(RDCurve curve) {
    if (curve.size() < 4) throw CurveError("RD curve needs at least 4 points, got " + std::to_string(curve.size()));
    for (const auto& p : curve) {
        if (!std::isfinite(p.bitrate) || !std::isfinite(p.psnr))
            throw CurveError("RD curve contains a non-finite value");
        if (p.bitrate <= 0.0) throw CurveError("RD curve bitrate must be positive");
    }
    std::sort(curve.begin(), curve.end(), [](const RDPoint& a, const RDPoint& b) { return a.bitrate < b.bitrate; });
    for (std::size_t i = 1; i < curve.size(); ++i) {
        if (!(curve[i].bitrate > curve[i - 1].bitrate))
            throw CurveError("RD curve bitrates are not strictly increasing");
        if (!(curve[i].psnr > curve[i - 1].psnr))
            throw CurveError("RD curve PSNR is not strictly increasing with bitrate");
    }
    return curve;
}

namespace {

// Coefficients of log10(rate) = c0 + c1 t + c2 t^2 + c3 t^3 with t = psnr - center.
Eigen::Vector4d fit_log_rate(const RDCurve& c, double center) {
    Eigen::MatrixXd a(static_cast<Eigen::Index>(c.size()), 4);
    Eigen::VectorXd y(static_cast<Eigen::Index>(c.size()));
    for (std::size_t i = 0; i < c.size(); ++i) {
        const double t = c[i].psnr - center;
        const auto r = static_cast<Eigen::Index>(i);
        a(r, 0) = 1.0;
        a(r, 1) = t;
        a(r, 2) = t * t;
        a(r, 3) = t * t * t;
        y(r) = std::log10(c[i].bitrate);
    }
    return a.colPivHouseholderQr().solve(y);
}

double integrate(const Eigen::Vector4d& p, double lo, double hi) {
    auto prim = [&p](double t) { return p(0) * t + p(1) * t * t / 2 + p(2) * t * t * t / 3 + p(3) * t * t * t * t / 4; };
    return prim(hi) - prim(lo);
}

}  // namespace

BDResult bd_rate(const RDCurve& anchor_in, const RDCurve& test_in) {
    const RDCurve anchor = validated_curve(anchor_in);
    const RDCurve test = validated_curve(test_in);

    const double lo = std::max(anchor.front().psnr, test.front().psnr);
    const double hi = std::min(anchor.back().psnr, test.back().psnr);
    if (!(hi > lo)) throw OverlapError("RD curves have no overlapping PSNR range");

    // Shared origin keeps both fits identically conditioned.
    const double center = 0.5 * (lo + hi);
    const auto pa = fit_log_rate(anchor, center);
    const auto pt = fit_log_rate(test, center);
    const double avg_a = integrate(pa, lo - center, hi - center) / (hi - lo);
    const double avg_t = integrate(pt, lo - center, hi - center) / (hi - lo);
    const double delta = avg_t - avg_a;

    BDResult r;
    r.bd_rate_percent = (std::pow(10.0, delta) - 1.0) * 100.0;
    r.overlap_low = lo;
    r.overlap_high = hi;
    return r;
}

BDAggregate aggregate_bd(std::span<const LabeledBD> results) {
    if (results.empty()) throw ArgumentError("no BD-rate results to aggregate");
    BDAggregate agg;
    std::map<std::string, double> sums;
    double total = 0.0;
    for (const auto& r : results) {
        sums[r.sequence_class] += r.bd_rate_percent;
        agg.class_count[r.sequence_class] += 1;
        total += r.bd_rate_percent;
    }
    for (const auto& [cls, s] : sums) agg.class_average[cls] = s / agg.class_count[cls];
    agg.count = static_cast<int>(results.size());
    agg.overall = total / agg.count;
    return agg;
}

}  // namespace pqe
