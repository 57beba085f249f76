#include <gtest/gtest.h>

#include <random>

#include "cyclight/codec.hpp"
#include "oracles.hpp"

using namespace cyclight;

namespace {

struct StreamRun {
    DecodeState final;
    std::vector<CodeId> votes;
    std::vector<DecodeState> states;
};

StreamRun feed(const LookupTable& table, const std::string& bits) {
    StreamRun run;
    DecodeState s;
    for (char c : bits) {
        s = pushBit(s, table, c - '0');
        run.votes.push_back(s.lastVote);
        run.states.push_back(s);
    }
    run.final = s;
    return run;
}

}  // namespace

TEST(Encode, Examples) {
    const auto initial = generateInitialCodebook(4);
    const auto robust = generateRobustCodebook(4);
    EXPECT_EQ(encode(initial.book, 4).toString(), "0111");
    EXPECT_EQ(encode(robust.book, 1).toString(), "0111");
    EXPECT_THROW(encode(initial.book, 5), OutOfRangeError);
    EXPECT_THROW(encode(initial.book, 0), OutOfRangeError);
}

TEST(DecodeWindow, Examples) {
    const auto initial = generateInitialCodebook(4);
    const auto robust = generateRobustCodebook(4);
    EXPECT_EQ(decodeWindow(initial.table, BitWord::fromString("1101")), 4u);
    EXPECT_EQ(decodeWindow(initial.table, BitWord::fromString("0000")), kUnknownId);
    EXPECT_EQ(decodeWindow(robust.table, BitWord::fromString("11110")), 1u);
    EXPECT_THROW(decodeWindow(initial.table, BitWord::fromString("110")), OutOfRangeError);
    EXPECT_THROW(decodeWindow(initial.table, BitWord::fromString("110101")), OutOfRangeError);
}

TEST(PushBit, ExampleVoteStream) {
    const auto initial = generateInitialCodebook(4);
    const auto run = feed(initial.table, "1101110111");
    EXPECT_EQ(run.votes, (std::vector<CodeId>{0, 0, 0, 4, 4, 4, 4, 4, 4, 4}));
    EXPECT_EQ(run.states[2].status, DecodeStatus::Unknown);
    EXPECT_EQ(run.states[3].status, DecodeStatus::LockedOn);
    EXPECT_EQ(run.final.identifier, 4u);
}

TEST(PushBit, AllZeroStreamStaysUnknown) {
    const auto initial = generateInitialCodebook(4);
    const auto run = feed(initial.table, "0000");
    EXPECT_EQ(run.final.status, DecodeStatus::Unknown);
    EXPECT_EQ(run.final.bitsConsumed, 4u);
}

TEST(PushBit, RobustLocksThroughDuplicatedBit) {
    const auto robust = generateRobustCodebook(4);
    const auto run = feed(robust.table, "011110111");
    EXPECT_EQ(run.final.status, DecodeStatus::LockedOn);
    EXPECT_EQ(run.final.identifier, 1u);
}

TEST(PushBit, LockedStateCarriesThreshold) {
    // Invariant: LockedOn implies identifier >= 1 and agreementRun >= threshold.
    std::mt19937_64 rng(3);
    for (auto mode : {CodebookMode::Initial, CodebookMode::Robust}) {
        const auto set = generateCodebook(8, mode);
        DecodeState s;
        for (int k = 0; k < 5000; ++k) {
            s = pushBit(s, set.table, static_cast<int>(rng() & 1));
            if (s.status == DecodeStatus::LockedOn) {
                EXPECT_GE(s.identifier, 1u);
                EXPECT_GE(s.agreementRun, lockOnThreshold(mode));
            } else {
                EXPECT_EQ(s.identifier, kUnknownId);
            }
        }
    }
}

TEST(LockOnTime, Examples) {
    EXPECT_DOUBLE_EQ(lockOnTime(18, 60), 0.3);
    EXPECT_EQ(formatHundredths(lockOnHundredthsTruncated(18, 60)), "0.30");
    EXPECT_NEAR(lockOnTime(7, 30), 0.233333333, 1e-9);
    EXPECT_EQ(formatHundredths(lockOnHundredthsTruncated(7, 30)), "0.23");
    EXPECT_DOUBLE_EQ(lockOnTime(21, 240), 0.0875);
    EXPECT_EQ(formatHundredths(lockOnHundredthsTruncated(21, 240)), "0.08");
    EXPECT_THROW(lockOnTime(4, 0), OutOfRangeError);
    EXPECT_THROW(lockOnTime(4, -30), OutOfRangeError);
    EXPECT_THROW(lockOnTime(0, 30), OutOfRangeError);
}

TEST(LockOnTime, TimesFpsRecoversBits) {
    for (int n = 1; n <= 64; ++n)
        for (int fps : kTradeoffFps) EXPECT_DOUBLE_EQ(lockOnTime(n, fps) * fps, n);
}

TEST(IndelDistance, Examples) {
    auto d = [](const char* a, const char* b) { return indelDistance(BitWord::fromString(a), BitWord::fromString(b)); };
    EXPECT_EQ(d("0111", "0111"), 0);
    EXPECT_EQ(d("0111", "1111"), 2);
    EXPECT_EQ(d("0111", "011"), 1);
    EXPECT_EQ(d("", "0101"), 4);
}

TEST(IndelDistance, IsAMetricAndMatchesOracle) {
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 400; ++trial) {
        const auto a = oracle::randomBits(rng, 0, 14);
        const auto b = oracle::randomBits(rng, 0, 14);
        const auto c = oracle::randomBits(rng, 0, 14);
        const auto wa = BitWord::fromString(a), wb = BitWord::fromString(b), wc = BitWord::fromString(c);
        const int ab = indelDistance(wa, wb);
        EXPECT_EQ(ab, oracle::indelDistance(a, b));
        EXPECT_EQ(ab, indelDistance(wb, wa));
        EXPECT_EQ(ab == 0, a == b);
        EXPECT_LE(indelDistance(wa, wc), ab + indelDistance(wb, wc));
    }
}

TEST(AssignIds, SingleFlasherGetsFirstIdentifier) {
    const auto set = generateRobustCodebook(8);
    const std::vector<Point3> one{{0, 0, 0}};
    EXPECT_EQ(assignIds(one, 1.0, set.book), std::vector<CodeId>{1});
}

TEST(AssignIds, DistantFlashersAreUnconstrained) {
    const auto set = generateRobustCodebook(8);
    const std::vector<Point3> far{{0, 0, 0}, {10, 0, 0}};
    EXPECT_EQ(assignIds(far, 1.0, set.book), (std::vector<CodeId>{1, 2}));
}

TEST(AssignIds, NearbyPairGetsMostDistantCodes) {
    const auto set = generateRobustCodebook(8);
    int best = 0;
    for (CodeId a = 1; a <= set.book.size(); ++a)
        for (CodeId b = a + 1; b <= set.book.size(); ++b)
            best = std::max(best, oracle::indelDistance(set.book.word(a).toString(), set.book.word(b).toString()));
    const std::vector<Point3> near{{0, 0, 0}, {0.5, 0, 0}};
    const auto ids = assignIds(near, 1.0, set.book);
    ASSERT_EQ(ids.size(), 2u);
    EXPECT_NE(ids[0], ids[1]);
    EXPECT_EQ(indelDistance(set.book.word(ids[0]), set.book.word(ids[1])), best);
}

TEST(AssignIds, TooManyFlashers) {
    const auto set = generateRobustCodebook(4);
    const std::vector<Point3> two{{0, 0, 0}, {1, 0, 0}};
    EXPECT_THROW(assignIds(two, 1.0, set.book), OutOfRangeError);
}

TEST(StreamDecode, CleanRoundTripLocksWithinOneCycle) {
    for (auto mode : {CodebookMode::Initial, CodebookMode::Robust}) {
        for (int n = mode == CodebookMode::Initial ? 2 : 4; n <= 12; ++n) {
            const auto set = generateCodebook(n, mode);
            const std::size_t budget = mode == CodebookMode::Initial ? n : n + 2;
            for (CodeId id = 1; id <= set.book.size(); ++id) {
                const auto word = set.book.word(id).toString();
                for (int phase = 0; phase < n; ++phase) {
                    const auto run = feed(set.table, oracle::cyclicStream(word, phase, budget));
                    ASSERT_EQ(run.final.status, DecodeStatus::LockedOn) << word << " phase " << phase;
                    ASSERT_EQ(run.final.identifier, id);
                }
            }
        }
    }
}

namespace {

struct FaultSweep {
    std::size_t cases = 0;
    std::size_t wrongLocks = 0;      // decoder reported a different identifier
    std::size_t finalFailures = 0;   // final state not LockedOn(correct)
    std::size_t wrongVotes = 0;      // some step voted a different nonzero identifier
};

FaultSweep sweepSingleFaults(int n) {
    const auto set = generateRobustCodebook(n);
    FaultSweep sweep;
    const std::size_t len = 3 * static_cast<std::size_t>(n);
    for (CodeId id = 1; id <= set.book.size(); ++id) {
        const auto word = set.book.word(id).toString();
        for (int phase = 0; phase < n; ++phase) {
            const auto clean = oracle::cyclicStream(word, static_cast<std::size_t>(phase), len);
            for (auto fault : {oracle::Fault::Duplication, oracle::Fault::Deletion, oracle::Fault::Flip}) {
                for (std::size_t at = 0; at < len; ++at) {
                    const auto run = feed(set.table, oracle::inject(clean, fault, at));
                    ++sweep.cases;
                    bool wrongLock = false, wrongVote = false;
                    for (const auto& s : run.states) {
                        wrongLock |= s.status == DecodeStatus::LockedOn && s.identifier != id;
                        wrongVote |= s.lastVote != kUnknownId && s.lastVote != id;
                    }
                    sweep.wrongLocks += wrongLock;
                    sweep.wrongVotes += wrongVote;
                    sweep.finalFailures +=
                        !(run.final.status == DecodeStatus::LockedOn && run.final.identifier == id);
                }
            }
        }
    }
    return sweep;
}

}  // namespace

TEST(StreamDecode, SingleFaultNeverLocksWrongAndEndsLocked) {
    for (int n = 4; n <= 12; ++n) {
        const auto sweep = sweepSingleFaults(n);
        EXPECT_GT(sweep.cases, 0u);
        EXPECT_EQ(sweep.wrongLocks, 0u) << "n=" << n;
        EXPECT_EQ(sweep.finalFailures, 0u) << "n=" << n;
    }
}

TEST(StreamDecode, SingleFaultNeverVotesWrong) {
    for (int n = 4; n <= 12; ++n) EXPECT_EQ(sweepSingleFaults(n).wrongVotes, 0u) << "n=" << n;
}

TEST(LockOnTable, RowsCoverAllFrameRates) {
    const std::vector<std::pair<int, std::size_t>> sizes{{18, 83}};
    const auto rows = lockOnTable(sizes);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].cells[2], "0.30");
    EXPECT_EQ(rows[0].cells[6], "0.10");
}
