#include "pqe/bitstream.hpp"

#include <bit>

#include "pqe/errors.hpp"

namespace pqe {

int eg0_length(std::uint32_t v) {
    const std::uint64_t x = static_cast<std::uint64_t>(v) + 1;
    return 2 * (std::bit_width(x) - 1) + 1;
}

void BitWriter::put_bit(bool bit) {
    if (bits_ % 8 == 0) bytes_.push_back(0);
    if (bit) bytes_.back() |= static_cast<std::uint8_t>(0x80u >> (bits_ % 8));
    ++bits_;
}

void BitWriter::put_bits(std::uint32_t value, int count) {
    for (int i = count - 1; i >= 0; --i) put_bit((value >> i) & 1u);
}

void BitWriter::put_eg0(std::uint32_t value) {
    const std::uint64_t x = static_cast<std::uint64_t>(value) + 1;
    const int prefix = std::bit_width(x) - 1;
    for (int i = 0; i < prefix; ++i) put_bit(false);
    for (int i = prefix; i >= 0; --i) put_bit((x >> i) & 1u);
}

void BitWriter::align() {
    bits_ = (bits_ + 7) / 8 * 8;
}

std::vector<std::uint8_t> BitWriter::take() {
    bits_ = 0;
    return std::move(bytes_);
}

bool BitReader::get_bit() {
    if (pos_ >= size_bits()) throw ParseError("unexpected end of stream", pos_);
    const bool bit = (data_[pos_ / 8] >> (7 - pos_ % 8)) & 1u;
    ++pos_;
    return bit;
}

std::uint32_t BitReader::get_bits(int count) {
    if (static_cast<std::uint64_t>(count) > remaining()) throw ParseError("unexpected end of stream", pos_);
    std::uint32_t v = 0;
    for (int i = 0; i < count; ++i) v = (v << 1) | static_cast<std::uint32_t>(get_bit());
    return v;
}

std::uint32_t BitReader::get_eg0() {
    const std::uint64_t start = pos_;
    int zeros = 0;
    while (!get_bit()) {
        if (++zeros > 31) throw ParseError("Exp-Golomb prefix too long", start);
    }
    std::uint64_t x = 1;
    for (int i = 0; i < zeros; ++i) x = (x << 1) | static_cast<std::uint64_t>(get_bit());
    return static_cast<std::uint32_t>(x - 1);
}

void BitReader::align() {
    pos_ = (pos_ + 7) / 8 * 8;
    if (pos_ > size_bits()) pos_ = size_bits();
}

}  // namespace pqe
