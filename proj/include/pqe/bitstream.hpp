#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace pqe {

// Bit length of the order-0 Exp-Golomb code for v: 2*floor(log2(v+1)) + 1.
int eg0_length(std::uint32_t v);

// MSB-first bit packer.
class BitWriter {
public:
    void put_bit(bool bit);
    void put_bits(std::uint32_t value, int count);
    void put_eg0(std::uint32_t value);
    void put_byte(std::uint8_t b) { put_bits(b, 8); }

    std::uint64_t bit_count() const noexcept { return bits_; }
    // Zero-pads to a byte boundary.
    void align();
    const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }
    std::vector<std::uint8_t> take();

private:
    std::vector<std::uint8_t> bytes_;
    std::uint64_t bits_ = 0;
};

// MSB-first reader; throws ParseError (with the current bit offset) on underrun.
class BitReader {
public:
    explicit BitReader(std::span<const std::uint8_t> data) : data_(data) {}

    bool get_bit();
    std::uint32_t get_bits(int count);
    std::uint32_t get_eg0();

    std::uint64_t position() const noexcept { return pos_; }
    std::uint64_t size_bits() const noexcept { return static_cast<std::uint64_t>(data_.size()) * 8; }
    std::uint64_t remaining() const noexcept { return size_bits() - pos_; }
    void align();

private:
    std::span<const std::uint8_t> data_;
    std::uint64_t pos_ = 0;
};

}  // namespace pqe
