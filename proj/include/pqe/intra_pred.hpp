#pragma once

#include <cstdint>
#include <vector>

#include "pqe/frame_io.hpp"

namespace pqe {

inline constexpr int kNumIntraModes = 67;
inline constexpr int kPlanarMode = 0;
inline constexpr int kDcMode = 1;
inline constexpr int kHorizontalMode = 18;
inline constexpr int kVerticalMode = 50;

class IntraMode {
public:
    IntraMode() = default;
    explicit IntraMode(int index);

    int index() const noexcept { return index_; }
    bool is_angular() const noexcept { return index_ >= 2; }
    bool is_vertical_family() const noexcept { return index_ >= 34; }

    // Signed displacement in 1/32 sample, sign(k) * T[|k|] for the offset k
    // from mode 18 (modes 2..33) or mode 50 (modes 34..66). Vertical family:
    // row y reads the top row at x + (y+1)*angle/32. Horizontal family:
    // column x reads the left column at y - (x+1)*angle/32. So mode 66 is the
    // top-right diagonal, 34 the top-left one and 2 the bottom-left one.
    int angle() const;

    auto operator<=>(const IntraMode&) const = default;

private:
    int index_ = kPlanarMode;
};

// Neighboring reconstructed samples of an n x n block.
//   top[0]       top-left corner
//   top[1 + x]   sample above column x, x in [0, 2n)
//   left[y]      sample left of row y,  y in [0, 2n)
struct RefSamples {
    int size = 0;
    std::vector<int> top;
    std::vector<int> left;

    int corner() const { return top[0]; }
};

// Gathers references for the block at (bx, by) from a plane whose blocks are
// reconstructed in raster order on a fixed n x n grid. Unavailable samples
// copy the nearest available one along the bottom-left -> corner -> top-right
// scan; with no neighbors at all every reference is 128.
RefSamples build_reference_samples(const Plane& recon, int bx, int by, int n);

// n x n predictor, row-major, samples in [0, 255].
std::vector<std::uint8_t> predict_block(const RefSamples& refs, IntraMode mode, int n);

}  // namespace pqe
