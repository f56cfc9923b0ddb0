#include "pqe/frame_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

#include "pqe/errors.hpp"

namespace pqe {

namespace {

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint8_t clamp_round(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
}

}  // namespace

std::string_view to_string(Component c) {
    switch (c) {
        case Component::Y: return "Y";
        case Component::U: return "U";
        case Component::V: return "V";
    }
    return "?";
}

Component component_from_string(std::string_view s) {
    if (s == "Y" || s == "y") return Component::Y;
    if (s == "U" || s == "u") return Component::U;
    if (s == "V" || s == "v") return Component::V;
    throw ArgumentError("unknown component '" + std::string(s) + "' (expected Y, U or V)");
}

Plane::Plane(int width, int height, std::uint8_t fill)
    : Plane(width, height,
            std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0), fill)) {}

Plane::Plane(int width, int height, std::vector<std::uint8_t> samples)
    : width_(width), height_(height), samples_(std::move(samples)) {
    if (width < 1 || height < 1)
        throw ArgumentError("plane dimensions must be positive, got " + std::to_string(width) + "x" +
                            std::to_string(height));
    if (samples_.size() != static_cast<std::size_t>(width) * height)
        throw ArgumentError("plane sample count " + std::to_string(samples_.size()) + " != " +
                            std::to_string(width) + "x" + std::to_string(height));
}

Plane Plane::crop(int x, int y, int w, int h) const {
    if (x < 0 || y < 0 || w < 1 || h < 1 || x + w > width_ || y + h > height_)
        throw ArgumentError("crop window outside plane");
    std::vector<std::uint8_t> out(static_cast<std::size_t>(w) * h);
    for (int r = 0; r < h; ++r) {
        auto src = row(y + r).subspan(x, w);
        std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(r) * w);
    }
    return Plane(w, h, std::move(out));
}

Plane Plane::padded(int w, int h) const {
    if (w < width_ || h < height_) throw ArgumentError("padded size smaller than plane");
    Plane out(w, h);
    for (int r = 0; r < h; ++r) {
        const int sr = std::min(r, height_ - 1);
        for (int c = 0; c < w; ++c) out.at(c, r) = at(std::min(c, width_ - 1), sr);
    }
    return out;
}

VideoFrame::VideoFrame(Plane y_plane, Plane u_plane, Plane v_plane)
    : y(std::move(y_plane)), u(std::move(u_plane)), v(std::move(v_plane)) {
    if (y.width() % 2 != 0 || y.height() % 2 != 0)
        throw ArgumentError("4:2:0 frames need even luma dimensions");
    const int cw = (y.width() + 1) / 2;
    const int ch = (y.height() + 1) / 2;
    if (u.width() != cw || u.height() != ch || v.width() != cw || v.height() != ch)
        throw ArgumentError("chroma planes do not match 4:2:0 geometry");
}

VideoFrame VideoFrame::filled(int width, int height, std::uint8_t luma, std::uint8_t chroma) {
    return VideoFrame(Plane(width, height, luma), Plane(width / 2, height / 2, chroma),
                      Plane(width / 2, height / 2, chroma));
}

const Plane& VideoFrame::plane(Component c) const {
    switch (c) {
        case Component::Y: return y;
        case Component::U: return u;
        case Component::V: return v;
    }
    return y;
}

Plane& VideoFrame::plane(Component c) {
    return const_cast<Plane&>(static_cast<const VideoFrame&>(*this).plane(c));
}

std::vector<VideoFrame> read_yuv420(const std::filesystem::path& path, int width, int height,
                                    int max_frames) {
    if (width < 2 || height < 2 || width % 2 != 0 || height % 2 != 0)
        throw ArgumentError("YUV 4:2:0 dimensions must be even and positive, got " + std::to_string(width) +
                            "x" + std::to_string(height));
    const auto bytes = read_file_bytes(path);
    const std::size_t luma = static_cast<std::size_t>(width) * height;
    const std::size_t chroma = luma / 4;
    const std::size_t frame_bytes = luma + 2 * chroma;
    if (bytes.size() % frame_bytes != 0)
        throw FormatError(path.string() + ": size " + std::to_string(bytes.size()) +
                          " is not a multiple of the frame size " + std::to_string(frame_bytes));

    std::size_t count = bytes.size() / frame_bytes;
    if (max_frames > 0) count = std::min<std::size_t>(count, max_frames);

    std::vector<VideoFrame> frames;
    frames.reserve(count);
    auto it = bytes.begin();
    auto take = [&it](std::size_t n) {
        std::vector<std::uint8_t> v(it, it + static_cast<std::ptrdiff_t>(n));
        it += static_cast<std::ptrdiff_t>(n);
        return v;
    };
    for (std::size_t f = 0; f < count; ++f) {
        Plane y(width, height, take(luma));
        Plane u(width / 2, height / 2, take(chroma));
        Plane v(width / 2, height / 2, take(chroma));
        frames.emplace_back(std::move(y), std::move(u), std::move(v));
    }
    return frames;
}

void write_yuv420(std::span<const VideoFrame> frames, const std::filesystem::path& path) {
    for (const auto& f : frames)
        if (f.width() != frames.front().width() || f.height() != frames.front().height())
            throw ArgumentError("all frames written to one YUV file must share dimensions");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    for (const auto& f : frames)
        for (const Plane* p : {&f.y, &f.u, &f.v})
            out.write(reinterpret_cast<const char*>(p->samples().data()),
                      static_cast<std::streamsize>(p->size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_pnm_token(const std::vector<std::uint8_t>& bytes, std::size_t& pos) {
    while (pos < bytes.size()) {
        if (bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else if (std::isspace(bytes[pos])) {
            ++pos;
        } else {
            break;
        }
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') tok.push_back(static_cast<char>(bytes[pos++]));
    return tok;
}

int parse_pnm_int(const std::string& tok, const std::filesystem::path& path) {
    if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
        throw FormatError(path.string() + ": bad PNM header field '" + tok + "'");
    return std::stoi(tok);
}

}  // namespace

PnmImage read_pnm(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    std::size_t pos = 0;
    const std::string magic = next_pnm_token(bytes, pos);
    if (magic != "P5" && magic != "P6")
        throw FormatError(path.string() + ": unsupported PNM magic '" + magic + "' (only P5/P6)");
    const int w = parse_pnm_int(next_pnm_token(bytes, pos), path);
    const int h = parse_pnm_int(next_pnm_token(bytes, pos), path);
    const int maxval = parse_pnm_int(next_pnm_token(bytes, pos), path);
    if (maxval != 255) throw FormatError(path.string() + ": unsupported maxval " + std::to_string(maxval));
    if (w < 1 || h < 1) throw FormatError(path.string() + ": empty image");
    ++pos;  // single whitespace byte after maxval

    const int channels = magic == "P5" ? 1 : 3;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    if (pos > bytes.size() || bytes.size() - pos < n * channels)
        throw FormatError(path.string() + ": truncated PNM payload");

    if (channels == 1)
        return Plane(w, h, std::vector<std::uint8_t>(bytes.begin() + pos, bytes.begin() + pos + n));

    std::vector<std::uint8_t> r(n), g(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        r[i] = bytes[pos + 3 * i];
        g[i] = bytes[pos + 3 * i + 1];
        b[i] = bytes[pos + 3 * i + 2];
    }
    return RgbImage{Plane(w, h, std::move(r)), Plane(w, h, std::move(g)), Plane(w, h, std::move(b))};
}

void write_pgm(const Plane& plane, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "P5\n" << plane.width() << ' ' << plane.height() << "\n255\n";
    out.write(reinterpret_cast<const char*>(plane.samples().data()), static_cast<std::streamsize>(plane.size()));
}

void write_ppm(const RgbImage& image, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "P6\n" << image.r.width() << ' ' << image.r.height() << "\n255\n";
    std::vector<std::uint8_t> interleaved(image.r.size() * 3);
    for (std::size_t i = 0; i < image.r.size(); ++i) {
        interleaved[3 * i] = image.r.samples()[i];
        interleaved[3 * i + 1] = image.g.samples()[i];
        interleaved[3 * i + 2] = image.b.samples()[i];
    }
    out.write(reinterpret_cast<const char*>(interleaved.data()), static_cast<std::streamsize>(interleaved.size()));
}

VideoFrame rgb_to_yuv420(const Plane& r, const Plane& g, const Plane& b) {
    const int w = r.width();
    const int h = r.height();
    if (g.width() != w || g.height() != h || b.width() != w || b.height() != h)
        throw ArgumentError("RGB planes differ in size");
    if (w % 2 != 0 || h % 2 != 0) throw ArgumentError("RGB to 4:2:0 conversion needs even dimensions");

    Plane y(w, h);
    std::vector<double> cb(static_cast<std::size_t>(w) * h), cr(cb.size());
    for (int row = 0; row < h; ++row) {
        for (int col = 0; col < w; ++col) {
            const double R = r.at(col, row), G = g.at(col, row), B = b.at(col, row);
            y.at(col, row) = clamp_round(0.299 * R + 0.587 * G + 0.114 * B);
            const std::size_t i = static_cast<std::size_t>(row) * w + col;
            cb[i] = -0.168736 * R - 0.331264 * G + 0.5 * B + 128.0;
            cr[i] = 0.5 * R - 0.418688 * G - 0.081312 * B + 128.0;
        }
    }
    Plane u(w / 2, h / 2), v(w / 2, h / 2);
    for (int row = 0; row < h / 2; ++row) {
        for (int col = 0; col < w / 2; ++col) {
            const std::size_t i0 = static_cast<std::size_t>(2 * row) * w + 2 * col;
            const std::size_t i1 = i0 + w;
            u.at(col, row) = clamp_round((cb[i0] + cb[i0 + 1] + cb[i1] + cb[i1 + 1]) / 4.0);
            v.at(col, row) = clamp_round((cr[i0] + cr[i0 + 1] + cr[i1] + cr[i1 + 1]) / 4.0);
        }
    }
    return VideoFrame(std::move(y), std::move(u), std::move(v));
}

VideoFrame load_image_as_frame(const std::filesystem::path& path) {
    const PnmImage img = read_pnm(path);
    if (const auto* gray = std::get_if<Plane>(&img)) {
        const int w = gray->width() & ~1;
        const int h = gray->height() & ~1;
        if (w < 2 || h < 2) throw FormatError(path.string() + ": image too small for 4:2:0");
        return VideoFrame(gray->crop(0, 0, w, h), Plane(w / 2, h / 2, 128), Plane(w / 2, h / 2, 128));
    }
    const auto& rgb = std::get<RgbImage>(img);
    const int w = rgb.r.width() & ~1;
    const int h = rgb.r.height() & ~1;
    if (w < 2 || h < 2) throw FormatError(path.string() + ": image too small for 4:2:0");
    return rgb_to_yuv420(rgb.r.crop(0, 0, w, h), rgb.g.crop(0, 0, w, h), rgb.b.crop(0, 0, w, h));
}

}  // namespace pqe
