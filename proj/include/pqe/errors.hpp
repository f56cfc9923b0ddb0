#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pqe {

// Bad caller input: odd dimensions, out-of-range QP, mismatched shapes.
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed file contents (YUV size, PNM header, model file).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Coded stream could not be parsed; carries the bit position of the failure.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::uint64_t bit_offset)
        : std::runtime_error(what + " (at bit " + std::to_string(bit_offset) + ")"),
          reason_(what),
          bit_offset_(bit_offset) {}

    const std::string& reason() const noexcept { return reason_; }
    std::uint64_t bit_offset() const noexcept { return bit_offset_; }

private:
    std::string reason_;
    std::uint64_t bit_offset_;
};

// Optimization diverged (non-finite loss or gradient).
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// RD curve rejected (too few points, non-monotone, non-finite).
class CurveError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Two RD curves share no PSNR interval.
class OverlapError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace pqe
