#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cyclight/bitword.hpp"
#include "cyclight/error.hpp"

namespace cyclight {

enum class CodebookMode { Initial, Robust };

inline std::string_view toString(CodebookMode mode) {
    return mode == CodebookMode::Initial ? "initial" : "robust";
}

inline CodebookMode parseCodebookMode(std::string_view text) {
    if (text == "initial") return CodebookMode::Initial;
    if (text == "robust") return CodebookMode::Robust;
    throw FormatError("unknown code-book mode '" + std::string(text) + "' (expected initial|robust)");
}

/// Identifier of a code-word; 1-based, 0 is reserved for "unknown".
using CodeId = std::uint32_t;
inline constexpr CodeId kUnknownId = 0;

/// Canonical class representatives in identifier order (identifier = index + 1).
struct Codebook {
    int bits = 0;
    CodebookMode mode = CodebookMode::Initial;
    std::vector<BitWord> words;

    std::size_t size() const noexcept { return words.size(); }
    const BitWord& word(CodeId id) const { return words.at(id - 1); }

    friend bool operator==(const Codebook&, const Codebook&) = default;
};

/// Integer-indexed decode table with 2^(bits+1) slots.
///
/// Initial mode only ever populates the low 2^bits slots; robust mode uses
/// the upper half for duplication variants of length bits+1.
struct LookupTable {
    int bits = 0;
    CodebookMode mode = CodebookMode::Initial;
    std::vector<CodeId> entries;

    CodeId operator[](std::uint64_t index) const { return entries.at(index); }
    std::size_t size() const noexcept { return entries.size(); }

    friend bool operator==(const LookupTable&, const LookupTable&) = default;
};

struct CodeSet {
    Codebook book;
    LookupTable table;
};

namespace detail {

inline std::uint32_t rotl(std::uint32_t w, int shift, int n) noexcept {
    if (shift == 0) return w;
    const std::uint32_t m = static_cast<std::uint32_t>(BitWord::mask(n));
    return ((w << shift) | (w >> (n - shift))) & m;
}

inline std::uint32_t minRotation(std::uint32_t w, int n) noexcept {
    std::uint32_t best = w;
    for (int i = 1; i < n; ++i) best = std::min(best, rotl(w, i, n));
    return best;
}

inline std::uint32_t maxRotation(std::uint32_t w, int n) noexcept {
    std::uint32_t best = w;
    for (int i = 1; i < n; ++i) best = std::max(best, rotl(w, i, n));
    return best;
}

/// Appends flip, duplication and deletion variants of the n-bit word w.
inline void appendNoiseVariants(std::uint32_t w, int n, std::vector<std::uint32_t>& out) {
    for (int j = 0; j < n; ++j) {
        const int low = n - 1 - j;
        const std::uint32_t tail = w & static_cast<std::uint32_t>(BitWord::mask(low));
        const std::uint32_t head = w >> low;  // ends with symbol j
        out.push_back(w ^ (std::uint32_t{1} << low));
        out.push_back((((head << 1) | (head & 1u)) << low) | tail);
        out.push_back(((head >> 1) << low) | tail);
    }
}

/// Rotations of the class plus every single IDF variant of every rotation.
inline void appendClassVariants(std::uint32_t canonical, int n, std::vector<std::uint32_t>& out) {
    for (int i = 0; i < n; ++i) {
        const std::uint32_t r = rotl(canonical, i, n);
        out.push_back(r);
        appendNoiseVariants(r, n, out);
    }
}

inline void sortUnique(std::vector<std::uint32_t>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

inline void requireBits(int n, int lo, int hi, std::string_view what) {
    if (n < lo || n > hi)
        throw OutOfRangeError(std::string(what) + ": bit length " + std::to_string(n) + " outside [" +
                              std::to_string(lo) + ", " + std::to_string(hi) + "]");
}

inline bool isTrivial(std::uint32_t w, int n) noexcept {
    return w == 0 || w == static_cast<std::uint32_t>(BitWord::mask(n));
}

}  // namespace detail

/// Rotation of `w` with the smallest integer value (the class representative c_0).
inline BitWord canonicalRotation(const BitWord& w) {
    if (w.empty()) throw OutOfRangeError("canonicalRotation: empty word");
    BitWord best = w;
    for (int i = 1; i < w.size(); ++i) best = std::min(best, w.rotated(i));
    return best;
}

/// Number of binary necklaces of length n (cyclic classes, trivial ones included).
inline std::uint64_t necklaceCount(int n) {
    detail::requireBits(n, 1, 32, "necklaceCount");
    auto phi = [](int m) {
        int result = m;
        for (int p = 2; p * p <= m; ++p) {
            if (m % p == 0) {
                while (m % p == 0) m /= p;
                result -= result / p;
            }
        }
        if (m > 1) result -= result / m;
        return result;
    };
    std::uint64_t sum = 0;
    for (int d = 1; d <= n; ++d)
        if (n % d == 0) sum += static_cast<std::uint64_t>(phi(d)) << (n / d);
    return sum / static_cast<std::uint64_t>(n);
}

/// Integer indices of every single flip, duplication and deletion of `w`.
///
/// Variants of length n-1, n and n+1 share one index space keyed by integer
/// value, so e.g. the deletion 011 and the 5-bit word 00011 collide on index 3.
inline std::vector<std::uint64_t> noisify(const BitWord& w) {
    std::vector<std::uint64_t> out;
    out.reserve(static_cast<std::size_t>(3 * w.size()));
    for (int j = 0; j < w.size(); ++j) {
        out.push_back(w.flipped(j).value());
        out.push_back(w.duplicated(j).value());
        out.push_back(w.deleted(j).value());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

/// All nontrivial cyclic classes of length n; every rotation decodes to its class.
inline CodeSet generateInitialCodebook(int n) {
    detail::requireBits(n, 2, 24, "generateInitialCodebook");
    CodeSet out;
    out.book.bits = out.table.bits = n;
    out.book.mode = out.table.mode = CodebookMode::Initial;
    out.table.entries.assign(std::size_t{1} << (n + 1), kUnknownId);

    const std::uint32_t top = static_cast<std::uint32_t>(BitWord::mask(n));
    for (std::uint32_t c = 1; c < top; ++c) {
        if (detail::minRotation(c, n) != c) continue;
        out.book.words.emplace_back(c, n);
        const auto id = static_cast<CodeId>(out.book.words.size());
        for (int i = 0; i < n; ++i) out.table.entries[detail::rotl(c, i, n)] = id;
    }
    return out;
}

/// Greedy IDF-robust code-book.
///
/// Classes are visited in descending order of their largest member. A class is
/// accepted when none of its variant indices (rotations and every single
/// flip/duplication/deletion of every rotation) is already claimed; it then
/// claims all of them.
inline CodeSet generateRobustCodebook(int n) {
    detail::requireBits(n, 4, 24, "generateRobustCodebook");
    CodeSet out;
    out.book.bits = out.table.bits = n;
    out.book.mode = out.table.mode = CodebookMode::Robust;
    out.table.entries.assign(std::size_t{1} << (n + 1), kUnknownId);
    auto& slots = out.table.entries;

    std::vector<std::uint32_t> variants;
    variants.reserve(static_cast<std::size_t>(n) * (3 * n + 1));
    const std::uint32_t top = static_cast<std::uint32_t>(BitWord::mask(n));
    for (std::uint32_t x = top; x-- > 1;) {
        if (detail::maxRotation(x, n) != x) continue;
        const std::uint32_t c = detail::minRotation(x, n);
        if (detail::isTrivial(c, n)) continue;

        variants.clear();
        detail::appendClassVariants(c, n, variants);
        const bool overlaps =
            std::any_of(variants.begin(), variants.end(), [&](std::uint32_t v) { return slots[v] != kUnknownId; });
        if (overlaps) continue;

        out.book.words.emplace_back(c, n);
        const auto id = static_cast<CodeId>(out.book.words.size());
        for (std::uint32_t v : variants) slots[v] = id;
    }
    return out;
}

inline CodeSet generateCodebook(int n, CodebookMode mode) {
    return mode == CodebookMode::Initial ? generateInitialCodebook(n) : generateRobustCodebook(n);
}

namespace detail {

/// Maximum independent set size by branch and bound over bitset adjacency.
class MaxIndependentSet {
public:
    explicit MaxIndependentSet(std::vector<std::vector<std::uint64_t>> adjacency)
        : adj_(std::move(adjacency)), words_(adj_.empty() ? 0 : adj_.front().size()) {}

    int solve() {
        std::vector<std::uint64_t> all(words_, 0);
        for (std::size_t v = 0; v < adj_.size(); ++v) all[v / 64] |= std::uint64_t{1} << (v % 64);
        best_ = 0;
        search(all, 0);
        return best_;
    }

private:
    static int count(const std::vector<std::uint64_t>& s) {
        int c = 0;
        for (auto w : s) c += std::popcount(w);
        return c;
    }

    void search(const std::vector<std::uint64_t>& candidates, int chosen) {
        const int remaining = count(candidates);
        if (remaining == 0) {
            best_ = std::max(best_, chosen);
            return;
        }
        if (chosen + remaining <= best_) return;

        // Branch on the candidate with most neighbours among candidates.
        std::size_t pivot = 0;
        int pivotDegree = -1;
        for (std::size_t w = 0; w < words_; ++w) {
            for (std::uint64_t bits = candidates[w]; bits != 0; bits &= bits - 1) {
                const std::size_t v = w * 64 + static_cast<std::size_t>(std::countr_zero(bits));
                int degree = 0;
                for (std::size_t k = 0; k < words_; ++k) degree += std::popcount(adj_[v][k] & candidates[k]);
                if (degree > pivotDegree) {
                    pivotDegree = degree;
                    pivot = v;
                }
            }
        }

        std::vector<std::uint64_t> next(words_);
        // Take the pivot: drop it and its neighbours.
        for (std::size_t k = 0; k < words_; ++k) next[k] = candidates[k] & ~adj_[pivot][k];
        next[pivot / 64] &= ~(std::uint64_t{1} << (pivot % 64));
        search(next, chosen + 1);

        // An isolated pivot is always worth taking.
        if (pivotDegree == 0) return;
        next = candidates;
        next[pivot / 64] &= ~(std::uint64_t{1} << (pivot % 64));
        search(next, chosen);
    }

    std::vector<std::vector<std::uint64_t>> adj_;
    std::size_t words_;
    int best_ = 0;
};

}  // namespace detail

/// Exact maximum number of mutually non-overlapping robust classes.
///
/// Two nontrivial classes overlap when their variant index sets intersect.
/// Exponential in the worst case; restricted to n <= 10.
inline int bruteForceMaxCodebook(int n) {
    detail::requireBits(n, 4, 10, "bruteForceMaxCodebook");
    const std::size_t slots = std::size_t{1} << (n + 1);
    const std::size_t slotWords = (slots + 63) / 64;

    std::vector<std::vector<std::uint64_t>> footprints;
    std::vector<std::uint32_t> variants;
    const std::uint32_t top = static_cast<std::uint32_t>(BitWord::mask(n));
    for (std::uint32_t c = 1; c < top; ++c) {
        if (detail::minRotation(c, n) != c) continue;
        variants.clear();
        detail::appendClassVariants(c, n, variants);
        std::vector<std::uint64_t> fp(slotWords, 0);
        for (auto v : variants) fp[v / 64] |= std::uint64_t{1} << (v % 64);
        footprints.push_back(std::move(fp));
    }

    const std::size_t vertices = footprints.size();
    const std::size_t vertexWords = (vertices + 63) / 64;
    std::vector<std::vector<std::uint64_t>> adjacency(vertices, std::vector<std::uint64_t>(vertexWords, 0));
    for (std::size_t a = 0; a < vertices; ++a) {
        for (std::size_t b = a + 1; b < vertices; ++b) {
            bool overlap = false;
            for (std::size_t k = 0; k < slotWords && !overlap; ++k) overlap = (footprints[a][k] & footprints[b][k]) != 0;
            if (!overlap) continue;
            adjacency[a][b / 64] |= std::uint64_t{1} << (b % 64);
            adjacency[b][a / 64] |= std::uint64_t{1} << (a % 64);
        }
    }
    return detail::MaxIndependentSet(std::move(adjacency)).solve();
}

}  // namespace cyclight
