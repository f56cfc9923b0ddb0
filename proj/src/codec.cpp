#include "pqe/codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#include "pqe/bitstream.hpp"
#include "pqe/errors.hpp"
#include "pqe/metrics.hpp"

namespace pqe {

namespace {

constexpr int kModeBits = 7;
constexpr char kMagic[4] = {'P', 'Q', 'I', 'C'};

int plane_block_size(const CodecConfig& cfg, int plane_index) {
    return plane_index == 0 ? cfg.block_size : cfg.block_size / 2;
}

int round_up(int v, int m) { return (v + m - 1) / m * m; }

std::vector<std::uint8_t> extract_block(const Plane& p, int bx, int by, int n) {
    std::vector<std::uint8_t> b(static_cast<std::size_t>(n) * n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) b[static_cast<std::size_t>(y) * n + x] = p.at(bx + x, by + y);
    return b;
}

void store_block(Plane& p, std::span<const std::uint8_t> b, int bx, int by, int n) {
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) p.at(bx + x, by + y) = b[static_cast<std::size_t>(y) * n + x];
}

void write_block(BitWriter& bw, const BlockRecord& rec) {
    bw.put_bits(static_cast<std::uint32_t>(rec.mode.index()), kModeBits);
    for (const std::int32_t q : rec.qcoeffs) {
        bw.put_eg0(static_cast<std::uint32_t>(std::abs(q)));
        if (q != 0) bw.put_bit(q < 0);
    }
}

struct PlaneGeometry {
    int width;
    int height;
    int block;
    int cols;
    int rows;
};

PlaneGeometry geometry(int frame_w, int frame_h, const CodecConfig& cfg, int plane_index) {
    const int w = plane_index == 0 ? frame_w : frame_w / 2;
    const int h = plane_index == 0 ? frame_h : frame_h / 2;
    const int n = plane_block_size(cfg, plane_index);
    return {w, h, n, round_up(w, n) / n, round_up(h, n) / n};
}

VideoFrame crop_frame(const std::array<Plane, 3>& padded, int w, int h) {
    return VideoFrame(padded[0].crop(0, 0, w, h), padded[1].crop(0, 0, w / 2, h / 2),
                      padded[2].crop(0, 0, w / 2, h / 2));
}

CodedFrame parse_one(BitReader& br, std::size_t& consumed_bytes) {
    const std::uint64_t start = br.position();
    for (char m : kMagic)
        if (br.get_bits(8) != static_cast<std::uint8_t>(m)) throw ParseError("bad magic, not a PQIC stream", start);
    const auto version = br.get_bits(8);
    if (version != kStreamVersion)
        throw ParseError("unsupported stream version " + std::to_string(version), br.position() - 8);

    CodedFrame cf;
    cf.width = static_cast<int>(br.get_bits(16));
    cf.height = static_cast<int>(br.get_bits(16));
    cf.config.qp = static_cast<int>(br.get_bits(8));
    cf.config.block_size = static_cast<int>(br.get_bits(8));
    const std::uint64_t header_end = br.position();
    try {
        cf.config.validate();
    } catch (const ArgumentError& e) {
        throw ParseError(std::string("invalid header: ") + e.what(), header_end);
    }
    if (cf.width < 2 || cf.height < 2 || cf.width % 2 != 0 || cf.height % 2 != 0)
        throw ParseError("invalid frame dimensions in header", header_end);

    for (int p = 0; p < 3; ++p) {
        const auto g = geometry(cf.width, cf.height, cf.config, p);
        PlaneGrid& grid = cf.planes[p];
        grid.block_size = g.block;
        grid.cols = g.cols;
        grid.rows = g.rows;
        grid.blocks.resize(static_cast<std::size_t>(g.cols) * g.rows);
        for (auto& rec : grid.blocks) {
            const std::uint64_t block_start = br.position();
            const auto mode = static_cast<int>(br.get_bits(kModeBits));
            if (mode >= kNumIntraModes)
                throw ParseError("intra mode " + std::to_string(mode) + " out of range", block_start);
            rec.mode = IntraMode(mode);
            rec.qcoeffs.resize(static_cast<std::size_t>(g.block) * g.block);
            for (auto& q : rec.qcoeffs) {
                const auto mag = br.get_eg0();
                if (mag > static_cast<std::uint32_t>(INT32_MAX)) throw ParseError("level overflow", br.position());
                q = static_cast<std::int32_t>(mag);
                if (mag != 0 && br.get_bit()) q = -q;
            }
            rec.rate_bits = static_cast<std::int64_t>(br.position() - block_start);
        }
    }
    while (br.position() % 8 != 0)
        if (br.get_bit()) throw ParseError("nonzero padding bit", br.position() - 1);
    consumed_bytes = static_cast<std::size_t>(br.position() / 8);
    return cf;
}

}  // namespace

void CodecConfig::validate() const {
    if (qp < kMinQp || qp > kMaxQp) throw ArgumentError("QP " + std::to_string(qp) + " outside [0, 51]");
    if (block_size != 8 && block_size != 16 && block_size != 32)
        throw ArgumentError("block size " + std::to_string(block_size) + " not in {8, 16, 32}");
    if (!(lambda_scale > 0.0)) throw ArgumentError("lambda scale must be positive");
}

bool CodedFrame::operator==(const CodedFrame& other) const {
    if (config.qp != other.config.qp || config.block_size != other.config.block_size || width != other.width ||
        height != other.height)
        return false;
    for (int p = 0; p < 3; ++p) {
        const auto& a = planes[p];
        const auto& b = other.planes[p];
        if (a.block_size != b.block_size || a.cols != b.cols || a.rows != b.rows ||
            a.blocks.size() != b.blocks.size())
            return false;
        for (std::size_t i = 0; i < a.blocks.size(); ++i) {
            if (a.blocks[i].mode != b.blocks[i].mode || a.blocks[i].qcoeffs != b.blocks[i].qcoeffs ||
                a.blocks[i].rate_bits != b.blocks[i].rate_bits)
                return false;
        }
    }
    return true;
}

double FrameStats::psnr(Component c) const {
    switch (c) {
        case Component::Y: return psnr_y;
        case Component::U: return psnr_u;
        case Component::V: return psnr_v;
    }
    return psnr_y;
}

std::int64_t block_rate_bits(std::span<const std::int32_t> qcoeffs, IntraMode) {
    std::int64_t bits = kModeBits;
    for (const std::int32_t q : qcoeffs) bits += eg0_length(static_cast<std::uint32_t>(std::abs(q))) + (q != 0 ? 1 : 0);
    return bits;
}

std::vector<std::uint8_t> reconstruct_block(std::span<const std::uint8_t> pred, std::span<const std::int32_t> qcoeffs,
                                            int n, double step) {
    std::vector<std::uint8_t> recon(pred.begin(), pred.end());
    if (std::all_of(qcoeffs.begin(), qcoeffs.end(), [](std::int32_t q) { return q == 0; })) return recon;
    const auto residual = inverse_dct2(dequantize(qcoeffs, step), n);
    for (std::size_t i = 0; i < recon.size(); ++i)
        recon[i] = static_cast<std::uint8_t>(std::clamp(round_half_away(snap(pred[i] + residual[i])), 0.0, 255.0));
    return recon;
}

BlockResult encode_block(std::span<const std::uint8_t> orig, const RefSamples& refs, int n, int qp, double lambda) {
    if (orig.size() != static_cast<std::size_t>(n) * n) throw ArgumentError("original block has wrong size");
    const double step = qstep(qp);
    BlockResult best;
    bool have_best = false;
    std::vector<double> residual(orig.size());
    for (int m = 0; m < kNumIntraModes; ++m) {
        const IntraMode mode(m);
        auto pred = predict_block(refs, mode, n);
        for (std::size_t i = 0; i < orig.size(); ++i) residual[i] = static_cast<double>(orig[i]) - pred[i];
        auto levels = quantize(forward_dct2(residual, n), step);
        auto recon = reconstruct_block(pred, levels, n, step);

        std::int64_t sse = 0;
        for (std::size_t i = 0; i < orig.size(); ++i) {
            const int d = static_cast<int>(orig[i]) - recon[i];
            sse += d * d;
        }
        const std::int64_t rate = block_rate_bits(levels, mode);
        const double cost = static_cast<double>(sse) + lambda * static_cast<double>(rate);
        if (!have_best || cost < best.record.rd_cost) {
            best.record = BlockRecord{mode, std::move(levels), rate, sse, cost};
            best.recon = std::move(recon);
            best.pred = std::move(pred);
            have_best = true;
        }
    }
    return best;
}

EncodedFrame encode_frame(const VideoFrame& orig, const CodecConfig& cfg, bool record_modes) {
    cfg.validate();
    if (orig.width() > 0xFFFF || orig.height() > 0xFFFF) throw ArgumentError("frame too large for the stream header");
    const double lambda = cfg.lambda();

    EncodedFrame out;
    out.coded.config = cfg;
    out.coded.width = orig.width();
    out.coded.height = orig.height();

    std::array<Plane, 3> recon_planes, pred_planes;
    for (int p = 0; p < 3; ++p) {
        const auto g = geometry(orig.width(), orig.height(), cfg, p);
        const int pw = g.cols * g.block;
        const int ph = g.rows * g.block;
        const Plane src = orig.plane(static_cast<Component>(p)).padded(pw, ph);
        Plane recon(pw, ph), pred(pw, ph);
        PlaneGrid& grid = out.coded.planes[p];
        grid.block_size = g.block;
        grid.cols = g.cols;
        grid.rows = g.rows;
        grid.blocks.reserve(static_cast<std::size_t>(g.cols) * g.rows);
        for (int by = 0; by < ph; by += g.block) {
            for (int bx = 0; bx < pw; bx += g.block) {
                const auto refs = build_reference_samples(recon, bx, by, g.block);
                auto res = encode_block(extract_block(src, bx, by, g.block), refs, g.block, cfg.qp, lambda);
                store_block(recon, res.recon, bx, by, g.block);
                store_block(pred, res.pred, bx, by, g.block);
                grid.blocks.push_back(std::move(res.record));
            }
        }
        recon_planes[p] = std::move(recon);
        pred_planes[p] = std::move(pred);
    }
    out.frames.recon = crop_frame(recon_planes, orig.width(), orig.height());
    out.frames.pred = crop_frame(pred_planes, orig.width(), orig.height());

    auto& st = out.stats;
    st.qp = cfg.qp;
    st.total_bits = static_cast<std::int64_t>(serialize_frame(out.coded).size()) * 8;
    st.psnr_y = psnr(orig.y, out.frames.recon.y);
    st.psnr_u = psnr(orig.u, out.frames.recon.u);
    st.psnr_v = psnr(orig.v, out.frames.recon.v);
    if (record_modes) {
        for (const auto& grid : out.coded.planes) {
            std::vector<int> modes;
            for (const auto& b : grid.blocks) modes.push_back(b.mode.index());
            st.per_block_modes.push_back(std::move(modes));
        }
    }
    return out;
}

FramePair decode_frame(const CodedFrame& coded) {
    coded.config.validate();
    const double step = qstep(coded.config.qp);
    std::array<Plane, 3> recon_planes, pred_planes;
    for (int p = 0; p < 3; ++p) {
        const auto g = geometry(coded.width, coded.height, coded.config, p);
        const PlaneGrid& grid = coded.planes[p];
        if (grid.cols != g.cols || grid.rows != g.rows || grid.block_size != g.block ||
            grid.blocks.size() != static_cast<std::size_t>(g.cols) * g.rows)
            throw ArgumentError("coded plane grid inconsistent with frame geometry");
        Plane recon(g.cols * g.block, g.rows * g.block), pred(g.cols * g.block, g.rows * g.block);
        std::size_t i = 0;
        for (int by = 0; by < recon.height(); by += g.block) {
            for (int bx = 0; bx < recon.width(); bx += g.block) {
                const BlockRecord& rec = grid.blocks[i++];
                const auto refs = build_reference_samples(recon, bx, by, g.block);
                const auto pb = predict_block(refs, rec.mode, g.block);
                const auto rb = reconstruct_block(pb, rec.qcoeffs, g.block, step);
                store_block(pred, pb, bx, by, g.block);
                store_block(recon, rb, bx, by, g.block);
            }
        }
        recon_planes[p] = std::move(recon);
        pred_planes[p] = std::move(pred);
    }
    return FramePair{crop_frame(recon_planes, coded.width, coded.height),
                     crop_frame(pred_planes, coded.width, coded.height)};
}

FramePair decode_frame(std::span<const std::uint8_t> stream) {
    return decode_frame(parse_frame(stream));
}

std::vector<std::uint8_t> serialize_frame(const CodedFrame& coded) {
    coded.config.validate();
    BitWriter bw;
    for (char m : kMagic) bw.put_byte(static_cast<std::uint8_t>(m));
    bw.put_byte(kStreamVersion);
    bw.put_bits(static_cast<std::uint32_t>(coded.width), 16);
    bw.put_bits(static_cast<std::uint32_t>(coded.height), 16);
    bw.put_byte(static_cast<std::uint8_t>(coded.config.qp));
    bw.put_byte(static_cast<std::uint8_t>(coded.config.block_size));
    for (const auto& grid : coded.planes)
        for (const auto& rec : grid.blocks) write_block(bw, rec);
    bw.align();
    return bw.take();
}

CodedFrame parse_frame(std::span<const std::uint8_t> stream) {
    BitReader br(stream);
    std::size_t consumed = 0;
    CodedFrame cf = parse_one(br, consumed);
    if (consumed != stream.size())
        throw ParseError("trailing data after frame", static_cast<std::uint64_t>(consumed) * 8);
    return cf;
}

std::vector<CodedFrame> parse_stream_sequence(std::span<const std::uint8_t> data) {
    std::vector<CodedFrame> frames;
    std::size_t offset = 0;
    while (offset < data.size()) {
        BitReader br(data.subspan(offset));
        std::size_t consumed = 0;
        try {
            frames.push_back(parse_one(br, consumed));
        } catch (const ParseError& e) {
            throw ParseError("frame " + std::to_string(frames.size()) + ": " + e.reason(),
                             static_cast<std::uint64_t>(offset) * 8 + e.bit_offset());
        }
        offset += consumed;
    }
    return frames;
}

}  // namespace pqe
