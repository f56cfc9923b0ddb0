#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace pqe {

enum class Component { Y = 0, U = 1, V = 2 };

std::string_view to_string(Component c);
Component component_from_string(std::string_view s);

// One 8-bit color component, row-major.
class Plane {
public:
    Plane() = default;
    Plane(int width, int height, std::uint8_t fill = 0);
    Plane(int width, int height, std::vector<std::uint8_t> samples);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return samples_.size(); }

    std::uint8_t at(int x, int y) const { return samples_[static_cast<std::size_t>(y) * width_ + x]; }
    std::uint8_t& at(int x, int y) { return samples_[static_cast<std::size_t>(y) * width_ + x]; }

    std::span<const std::uint8_t> samples() const noexcept { return samples_; }
    std::span<std::uint8_t> samples() noexcept { return samples_; }
    std::span<const std::uint8_t> row(int y) const {
        return std::span<const std::uint8_t>(samples_).subspan(static_cast<std::size_t>(y) * width_, width_);
    }

    // Copy of the window [x, x+w) x [y, y+h); the window must lie inside the plane.
    Plane crop(int x, int y, int w, int h) const;
    // Edge-replicating extension to (w, h) with w >= width(), h >= height().
    Plane padded(int w, int h) const;

    bool operator==(const Plane&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> samples_;
};

// 4:2:0 frame. Luma dimensions are even, so chroma is exactly half size.
struct VideoFrame {
    Plane y;
    Plane u;
    Plane v;

    VideoFrame() = default;
    VideoFrame(Plane y_plane, Plane u_plane, Plane v_plane);

    // Constant frame of the given luma size.
    static VideoFrame filled(int width, int height, std::uint8_t luma, std::uint8_t chroma = 128);

    int width() const noexcept { return y.width(); }
    int height() const noexcept { return y.height(); }

    const Plane& plane(Component c) const;
    Plane& plane(Component c);

    bool operator==(const VideoFrame&) const = default;
};

struct RgbImage {
    Plane r;
    Plane g;
    Plane b;
};

using PnmImage = std::variant<Plane, RgbImage>;

std::vector<VideoFrame> read_yuv420(const std::filesystem::path& path, int width, int height,
                                    int max_frames = 0);
void write_yuv420(std::span<const VideoFrame> frames, const std::filesystem::path& path);

PnmImage read_pnm(const std::filesystem::path& path);
void write_pgm(const Plane& plane, const std::filesystem::path& path);
void write_ppm(const RgbImage& image, const std::filesystem::path& path);

// BT.601 full range, 2x2 box-averaged chroma.
VideoFrame rgb_to_yuv420(const Plane& r, const Plane& g, const Plane& b);

// Loads a PGM (luma only, neutral chroma) or PPM as a 4:2:0 frame, cropping
// odd dimensions down to even.
VideoFrame load_image_as_frame(const std::filesystem::path& path);

}  // namespace pqe
