#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

#include "cyclight/error.hpp"

namespace cyclight {

/// Fixed-length binary word, most-significant bit first.
///
/// Position 0 is the leftmost (first transmitted) symbol. The integer value is
/// the usual base-2 reading, so leading zeros are kept by the word but vanish
/// in `value()`. Lengths up to 63 bits are supported.
class BitWord {
public:
    static constexpr int kMaxLength = 63;

    BitWord() = default;

    BitWord(std::uint64_t value, int length) : value_(value), length_(length) {
        if (length < 0 || length > kMaxLength)
            throw OutOfRangeError("BitWord length " + std::to_string(length) + " outside [0, 63]");
        value_ &= mask(length);
    }

    static BitWord fromString(std::string_view text) {
        if (static_cast<int>(text.size()) > kMaxLength)
            throw OutOfRangeError("bit string longer than 63 symbols");
        std::uint64_t v = 0;
        for (char c : text) {
            if (c != '0' && c != '1')
                throw FormatError("invalid bit symbol '" + std::string(1, c) + "'");
            v = (v << 1) | static_cast<std::uint64_t>(c - '0');
        }
        return BitWord(v, static_cast<int>(text.size()));
    }

    std::uint64_t value() const noexcept { return value_; }
    int size() const noexcept { return length_; }
    bool empty() const noexcept { return length_ == 0; }

    /// Symbol at position i, counted from the most-significant end.
    int bit(int i) const noexcept { return static_cast<int>((value_ >> (length_ - 1 - i)) & 1u); }

    /// Cyclic left shift by `shift` positions.
    BitWord rotated(int shift) const noexcept {
        if (length_ == 0) return *this;
        shift %= length_;
        if (shift < 0) shift += length_;
        if (shift == 0) return *this;
        const std::uint64_t v = ((value_ << shift) | (value_ >> (length_ - shift))) & mask(length_);
        return BitWord(v, length_, Unchecked{});
    }

    BitWord flipped(int i) const noexcept {
        return BitWord(value_ ^ (std::uint64_t{1} << (length_ - 1 - i)), length_, Unchecked{});
    }

    /// Inserts a copy of symbol i next to it (length grows by one).
    BitWord duplicated(int i) const noexcept {
        const int low = length_ - 1 - i;  // bits strictly to the right of i
        const std::uint64_t head = value_ >> low;  // includes symbol i
        const std::uint64_t tail = value_ & mask(low);
        const std::uint64_t v = (((head << 1) | (head & 1u)) << low) | tail;
        return BitWord(v, length_ + 1, Unchecked{});
    }

    BitWord deleted(int i) const noexcept {
        const int low = length_ - 1 - i;
        const std::uint64_t head = value_ >> (low + 1);
        const std::uint64_t tail = value_ & mask(low);
        return BitWord((head << low) | tail, length_ - 1, Unchecked{});
    }

    BitWord appended(int bit) const {
        return BitWord((value_ << 1) | static_cast<std::uint64_t>(bit & 1), length_ + 1);
    }

    std::string toString() const {
        std::string s(static_cast<std::size_t>(length_), '0');
        for (int i = 0; i < length_; ++i) s[static_cast<std::size_t>(i)] = bit(i) ? '1' : '0';
        return s;
    }

    friend bool operator==(const BitWord&, const BitWord&) = default;
    friend auto operator<=>(const BitWord& a, const BitWord& b) {
        if (auto c = a.length_ <=> b.length_; c != 0) return c;
        return a.value_ <=> b.value_;
    }

    static constexpr std::uint64_t mask(int length) noexcept {
        return length >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << length) - 1);
    }

private:
    struct Unchecked {};
    BitWord(std::uint64_t value, int length, Unchecked) noexcept : value_(value), length_(length) {}

    std::uint64_t value_ = 0;
    int length_ = 0;
};

}  // namespace cyclight
