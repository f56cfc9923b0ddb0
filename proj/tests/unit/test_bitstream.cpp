#include <doctest.h>

#include <random>

#include "pqe/bitstream.hpp"
#include "pqe/errors.hpp"

using namespace pqe;

TEST_CASE("eg0 lengths") {
    CHECK(eg0_length(0) == 1);
    CHECK(eg0_length(1) == 3);
    CHECK(eg0_length(2) == 3);
    CHECK(eg0_length(3) == 5);
    CHECK(eg0_length(6) == 5);
    CHECK(eg0_length(7) == 7);
    for (std::uint32_t v = 0; v < 5000; ++v) {
        int bits = 0;
        for (std::uint64_t x = v + 1ull; x > 1; x >>= 1) ++bits;
        REQUIRE(eg0_length(v) == 2 * bits + 1);
    }
}

TEST_CASE("eg0 code words") {
    BitWriter w;
    w.put_eg0(0);  // 1
    w.put_eg0(1);  // 010
    w.put_eg0(4);  // 00101
    w.align();
    // 1 010 00101 0000000 -> 1010 0010 1000 0000
    CHECK(w.bytes() == std::vector<std::uint8_t>{0xA2, 0x80});
}

TEST_CASE("writer and reader round trip") {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<std::uint32_t> val(0, 100000);
    std::uniform_int_distribution<int> width(1, 32);
    BitWriter w;
    std::vector<std::pair<std::uint32_t, int>> fixed;
    std::vector<std::uint32_t> golomb;
    for (int i = 0; i < 500; ++i) {
        const int n = width(rng);
        const std::uint32_t v = val(rng) & (n == 32 ? 0xFFFFFFFFu : ((1u << n) - 1));
        fixed.emplace_back(v, n);
        w.put_bits(v, n);
        golomb.push_back(val(rng));
        w.put_eg0(golomb.back());
    }
    const auto total = w.bit_count();
    const auto bytes = w.take();
    CHECK(bytes.size() == (total + 7) / 8);
    BitReader r(bytes);
    for (std::size_t i = 0; i < fixed.size(); ++i) {
        REQUIRE(r.get_bits(fixed[i].second) == fixed[i].first);
        REQUIRE(r.get_eg0() == golomb[i]);
    }
    CHECK(r.position() == total);
}

TEST_CASE("reader underrun reports the bit offset") {
    const std::vector<std::uint8_t> one{0x00};
    BitReader r(one);
    r.get_bits(5);
    try {
        r.get_bits(4);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.bit_offset() == 5);  // start of the failing read
    }
    BitReader z(one);
    CHECK_THROWS_AS(z.get_eg0(), ParseError);  // all-zero prefix runs off the end
}

TEST_CASE("align pads with zeros") {
    BitWriter w;
    w.put_bit(true);
    w.align();
    CHECK(w.bit_count() == 8);
    CHECK(w.bytes() == std::vector<std::uint8_t>{0x80});
    w.align();
    CHECK(w.bit_count() == 8);
}
