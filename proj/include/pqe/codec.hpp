#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "pqe/frame_io.hpp"
#include "pqe/intra_pred.hpp"
#include "pqe/transform.hpp"

namespace pqe {

struct CodecConfig {
    int qp = 32;
    int block_size = 16;  // luma; chroma uses block_size / 2
    double lambda_scale = kDefaultLambdaScale;

    void validate() const;
    double lambda() const { return lambda_of_qp(qp, lambda_scale); }
};

// Coding decision and R-D statistics of one block.
// rd_cost == distortion_sse + lambda * rate_bits.
struct BlockRecord {
    IntraMode mode;
    std::vector<std::int32_t> qcoeffs;
    std::int64_t rate_bits = 0;
    std::int64_t distortion_sse = 0;
    double rd_cost = 0.0;
};

struct PlaneGrid {
    int block_size = 0;
    int cols = 0;
    int rows = 0;
    std::vector<BlockRecord> blocks;  // raster order
};

struct CodedFrame {
    CodecConfig config;
    int width = 0;
    int height = 0;
    std::array<PlaneGrid, 3> planes;  // Y, U, V

    // Compares the syntax carried by the stream (qp, block size, dimensions,
    // modes, levels, rate); encoder-only statistics are ignored.
    bool operator==(const CodedFrame& other) const;
};

struct FramePair {
    VideoFrame recon;
    VideoFrame pred;
};

struct FrameStats {
    int qp = 0;
    std::int64_t total_bits = 0;
    double psnr_y = 0.0;
    double psnr_u = 0.0;
    double psnr_v = 0.0;
    std::vector<std::vector<int>> per_block_modes;  // optional, one list per plane

    double psnr(Component c) const;
};

struct EncodedFrame {
    CodedFrame coded;
    FramePair frames;
    FrameStats stats;
};

// Flat 7-bit mode plus EG0 magnitude and a sign bit per nonzero level.
std::int64_t block_rate_bits(std::span<const std::int32_t> qcoeffs, IntraMode mode);

struct BlockResult {
    BlockRecord record;
    std::vector<std::uint8_t> recon;
    std::vector<std::uint8_t> pred;
};

// Reconstruction of an n x n block from its predictor and levels.
std::vector<std::uint8_t> reconstruct_block(std::span<const std::uint8_t> pred,
                                            std::span<const std::int32_t> qcoeffs, int n, double step);

// Exhaustive R-D search over all 67 modes; ties go to the lower mode index.
BlockResult encode_block(std::span<const std::uint8_t> orig, const RefSamples& refs, int n, int qp,
                         double lambda);

EncodedFrame encode_frame(const VideoFrame& orig, const CodecConfig& cfg, bool record_modes = false);

FramePair decode_frame(const CodedFrame& coded);
FramePair decode_frame(std::span<const std::uint8_t> stream);

inline constexpr std::uint8_t kStreamVersion = 0;
inline constexpr int kStreamHeaderBytes = 11;

std::vector<std::uint8_t> serialize_frame(const CodedFrame& coded);
CodedFrame parse_frame(std::span<const std::uint8_t> stream);

// A multi-frame .pqic file is the concatenation of per-frame streams.
std::vector<CodedFrame> parse_stream_sequence(std::span<const std::uint8_t> data);

}  // namespace pqe
