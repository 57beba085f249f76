#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cyclight/bitword.hpp"
#include "cyclight/codebook.hpp"
#include "cyclight/error.hpp"

namespace cyclight {

/// Word transmitted (cyclically, forever) by the flasher holding identifier `id`.
inline BitWord encode(const Codebook& book, CodeId id) {
    if (id < 1 || id > book.size())
        throw OutOfRangeError("identifier " + std::to_string(id) + " outside [1, " + std::to_string(book.size()) + "]");
    return book.word(id);
}

/// Table lookup of an n- or (n+1)-bit window. Returns kUnknownId when unmapped.
inline CodeId decodeWindow(const LookupTable& table, const BitWord& window) {
    if (window.size() != table.bits && window.size() != table.bits + 1)
        throw OutOfRangeError("window length " + std::to_string(window.size()) + " must be " +
                              std::to_string(table.bits) + " or " + std::to_string(table.bits + 1));
    return table[window.value()];
}

enum class DecodeStatus { Unknown, LockedOn };

/// Per-track streaming decoder state. Updated by value through pushBit().
///
/// Lock-on is sticky: once locked, a different identifier takes over only
/// after it collects its own run of agreeing votes. Unknown votes neither
/// extend nor break a run.
struct DecodeState {
    DecodeStatus status = DecodeStatus::Unknown;
    CodeId identifier = kUnknownId;  // valid when LockedOn
    std::uint64_t bitsConsumed = 0;
    std::uint32_t agreementRun = 0;  // agreeing nonzero votes for the leading identifier
    CodeId candidate = kUnknownId;   // leading identifier (equals `identifier` when locked)
    CodeId challenger = kUnknownId;  // different identifier seen since lock-on
    std::uint32_t challengerRun = 0;
    CodeId lastVote = kUnknownId;    // vote cast by the most recent bit
    std::uint64_t history = 0;       // most recent bits, newest in the LSB

    friend bool operator==(const DecodeState&, const DecodeState&) = default;
};

/// Agreeing votes needed before lock-on: 1 for initial tables, 2 for robust ones.
inline std::uint32_t lockOnThreshold(CodebookMode mode) { return mode == CodebookMode::Initial ? 1 : 2; }

/// Vote cast for the bits currently held in `state`.
///
/// The n-bit window is always consulted; robust tables also consult the
/// (n+1)-bit window, which catches duplicated bits. Two different nonzero
/// answers cancel to unknown.
inline CodeId windowVote(const DecodeState& state, const LookupTable& table) {
    const int n = table.bits;
    if (state.bitsConsumed < static_cast<std::uint64_t>(n)) return kUnknownId;
    const CodeId shortVote = table[state.history & BitWord::mask(n)];
    if (table.mode != CodebookMode::Robust || state.bitsConsumed < static_cast<std::uint64_t>(n + 1)) return shortVote;
    const CodeId longVote = table[state.history & BitWord::mask(n + 1)];
    if (shortVote != kUnknownId && longVote != kUnknownId && shortVote != longVote) return kUnknownId;
    return shortVote != kUnknownId ? shortVote : longVote;
}

inline DecodeState pushBit(DecodeState state, const LookupTable& table, int bit) {
    state.history = (state.history << 1) | static_cast<std::uint64_t>(bit & 1);
    ++state.bitsConsumed;
    const CodeId vote = windowVote(state, table);
    state.lastVote = vote;
    if (vote == kUnknownId) return state;

    const std::uint32_t threshold = lockOnThreshold(table.mode);
    if (vote == state.candidate) {
        ++state.agreementRun;
        state.challenger = kUnknownId;
        state.challengerRun = 0;
    } else if (state.status != DecodeStatus::LockedOn) {
        state.candidate = vote;
        state.agreementRun = 1;
    } else {
        state.challengerRun = vote == state.challenger ? state.challengerRun + 1 : 1;
        state.challenger = vote;
        if (state.challengerRun >= threshold) {
            state.candidate = vote;
            state.agreementRun = state.challengerRun;
            state.challenger = kUnknownId;
            state.challengerRun = 0;
        }
    }
    if (state.agreementRun >= threshold) {
        state.status = DecodeStatus::LockedOn;
        state.identifier = state.candidate;
    }
    return state;
}

/// Time to first decode: n bits at one bit per frame.
inline double lockOnTime(int bits, double fps) {
    if (bits < 1) throw OutOfRangeError("lockOnTime: bits must be >= 1");
    if (!(fps > 0.0)) throw OutOfRangeError("lockOnTime: fps must be positive");
    return bits / fps;
}

/// Lock-on time in hundredths of a second, truncated (not rounded).
inline long lockOnHundredthsTruncated(int bits, double fps) {
    return static_cast<long>(std::floor(bits * 100.0 / fps));
}

inline std::string formatHundredths(long hundredths) {
    std::string s = std::to_string(hundredths / 100) + ".";
    const long frac = hundredths % 100;
    if (frac < 10) s += '0';
    return s + std::to_string(frac);
}

inline constexpr std::array<int, 8> kTradeoffFps = {30, 45, 60, 75, 90, 120, 180, 240};

struct LockOnRow {
    int bits = 0;
    std::size_t codebookSize = 0;
    std::array<std::string, kTradeoffFps.size()> cells;
};

/// Lock-on grid for the given code-book sizes (bits -> size pairs).
inline std::vector<LockOnRow> lockOnTable(std::span<const std::pair<int, std::size_t>> sizes) {
    std::vector<LockOnRow> rows;
    for (auto [bits, size] : sizes) {
        LockOnRow row{bits, size, {}};
        for (std::size_t c = 0; c < kTradeoffFps.size(); ++c)
            row.cells[c] = formatHundredths(lockOnHundredthsTruncated(bits, kTradeoffFps[c]));
        rows.push_back(std::move(row));
    }
    return rows;
}

/// Insertions plus deletions turning a into b: |a| + |b| - 2 LCS(a, b).
inline int indelDistance(const BitWord& a, const BitWord& b) {
    const int m = a.size();
    const int n = b.size();
    std::vector<int> prev(static_cast<std::size_t>(n) + 1, 0), cur(prev.size(), 0);
    for (int i = 1; i <= m; ++i) {
        for (int j = 1; j <= n; ++j) {
            const auto J = static_cast<std::size_t>(j);
            cur[J] = a.bit(i - 1) == b.bit(j - 1) ? prev[J - 1] + 1 : std::max(prev[J], cur[J - 1]);
        }
        std::swap(prev, cur);
    }
    return m + n - 2 * prev[static_cast<std::size_t>(n)];
}

struct Point3 {
    double x = 0, y = 0, z = 0;
};

/// Greedy identifier assignment for flashers at `positions`.
///
/// Each flasher, in input order, takes the unused code maximizing the minimum
/// indel distance to codes already given to flashers within `visibilityRadius`.
/// Ties go to the smallest identifier. Returns one identifier per flasher.
inline std::vector<CodeId> assignIds(std::span<const Point3> positions, double visibilityRadius, const Codebook& book) {
    if (positions.size() > book.size())
        throw OutOfRangeError(std::to_string(positions.size()) + " flashers but only " + std::to_string(book.size()) +
                              " code-words");
    std::vector<CodeId> assigned;
    std::vector<bool> used(book.size() + 1, false);
    for (std::size_t f = 0; f < positions.size(); ++f) {
        std::vector<CodeId> neighbours;
        for (std::size_t g = 0; g < f; ++g) {
            const double dx = positions[f].x - positions[g].x;
            const double dy = positions[f].y - positions[g].y;
            const double dz = positions[f].z - positions[g].z;
            if (std::sqrt(dx * dx + dy * dy + dz * dz) <= visibilityRadius) neighbours.push_back(assigned[g]);
        }
        CodeId best = kUnknownId;
        int bestScore = -1;
        for (CodeId id = 1; id <= book.size(); ++id) {
            if (used[id]) continue;
            int score = std::numeric_limits<int>::max();
            for (CodeId other : neighbours) score = std::min(score, indelDistance(book.word(id), book.word(other)));
            if (score > bestScore) {
                bestScore = score;
                best = id;
            }
        }
        used[best] = true;
        assigned.push_back(best);
    }
    return assigned;
}

}  // namespace cyclight
