#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "cyclight/codec.hpp"
#include "cyclight/signal.hpp"
#include "cyclight/trace_csv.hpp"

using namespace cyclight;

TEST(ClassifyHue, Examples) {
    const std::vector<double> hues{5, 238, 2};
    EXPECT_EQ(classifyHue(hues), (std::vector<int>{1, 0, 1}));
    const std::vector<double> tie{120};
    EXPECT_EQ(classifyHue(tie), std::vector<int>{0});
    const std::vector<double> wrap{355, 300.5, 299.5};
    EXPECT_EQ(classifyHue(wrap), (std::vector<int>{1, 1, 0}));
}

TEST(ClassifyHue, NoisyReferencesRarelyMisclassify) {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> noise(0.0, 15.0);
    std::bernoulli_distribution coin(0.5);
    std::size_t errors = 0;
    const std::size_t draws = 100000;
    for (std::size_t k = 0; k < draws; ++k) {
        const int bit = coin(rng) ? 1 : 0;
        double h = std::fmod((bit ? kHueOne : kHueZero) + noise(rng) + 720.0, 360.0);
        const std::vector<double> one{h};
        errors += classifyHue(one)[0] != bit;
    }
    EXPECT_LT(static_cast<double>(errors) / draws, 1e-3);
}

TEST(ClassifyHue, IgnoresIntensity) {
    StreamingBitClassifier dim(BitScheme::Hue, 4), bright(BitScheme::Hue, 4);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> hue(0, 360), level(0, 1000);
    for (int k = 0; k < 500; ++k) {
        const double h = hue(rng);
        EXPECT_EQ(dim.push({double(k), level(rng), h, {}}), bright.push({double(k), level(rng), h, {}}));
    }
}

TEST(ClassifyIntensity, Examples) {
    const std::vector<double> square{10, 10, 90, 90, 10};
    EXPECT_EQ(classifyIntensity(square), (std::vector<int>{0, 0, 1, 1, 0}));
    const std::vector<double> flat{10, 10, 10, 10};
    EXPECT_THROW(classifyIntensity(flat), NoTransitionError);
    const std::vector<double> single{10};
    EXPECT_THROW(classifyIntensity(single), InsufficientDataError);
}

TEST(ClassifyIntensity, RecoversSquareWaveUnderDrift) {
    const std::vector<int> truth{0, 1, 1, 0, 1, 0, 0, 0, 1, 1, 1, 0, 1, 0, 0, 1};
    std::vector<double> samples;
    for (std::size_t i = 0; i < truth.size(); ++i) samples.push_back(20.0 + 80.0 * truth[i] + 5.0 * double(i));
    EXPECT_EQ(classifyIntensity(samples), truth);
}

TEST(ClassifyIntensity, AffineInvariant) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> level(0, 100), scale(0.01, 50), shift(-500, 500);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> w(8);
        for (auto& v : w) v = level(rng);
        const double a = scale(rng), b = shift(rng);
        std::vector<double> moved;
        for (double v : w) moved.push_back(a * v + b);
        EXPECT_EQ(classifyIntensity(w), classifyIntensity(moved));
    }
}

namespace {

std::vector<FlashSample> cleanTrace(const BitWord& word, std::size_t length, BitScheme scheme) {
    std::vector<FlashSample> out;
    for (std::size_t k = 0; k < length; ++k) {
        const int bit = word.bit(static_cast<int>(k % static_cast<std::size_t>(word.size())));
        FlashSample s;
        s.timestamp = double(k) / 30.0;
        s.intensity = scheme == BitScheme::Intensity ? (bit ? 200.0 : 40.0) : 120.0;
        s.hue = bit ? kHueOne : kHueZero;
        out.push_back(s);
    }
    return out;
}

}  // namespace

TEST(StreamingBitClassifier, CleanTraceDecodesToItsIdentifier) {
    for (auto scheme : {BitScheme::Hue, BitScheme::Intensity}) {
        for (int n : {6, 9, 12}) {
            const auto set = generateRobustCodebook(n);
            for (CodeId id = 1; id <= set.book.size(); ++id) {
                StreamingBitClassifier slicer(scheme, n);
                DecodeState state;
                std::string emitted;
                for (const auto& s : cleanTrace(set.book.word(id), 3 * static_cast<std::size_t>(n), scheme))
                    for (int bit : slicer.push(s)) {
                        state = pushBit(state, set.table, bit);
                        emitted += char('0' + bit);
                    }
                EXPECT_EQ(state.status, DecodeStatus::LockedOn) << emitted;
                EXPECT_EQ(state.identifier, id);
                EXPECT_EQ(emitted.size(), 3 * static_cast<std::size_t>(n));
            }
        }
    }
}

TEST(StreamingBitClassifier, HoldsBitsUntilWindowHasTransition) {
    StreamingBitClassifier slicer(BitScheme::Intensity, 3);
    EXPECT_TRUE(slicer.push({0, 50, 0, {}}).empty());
    EXPECT_TRUE(slicer.push({1, 52, 0, {}}).empty());
    EXPECT_EQ(slicer.push({2, 51, 0, {}}).size(), 3u);  // a noise step counts once the window is full
    StreamingBitClassifier flat(BitScheme::Intensity, 3);
    EXPECT_TRUE(flat.push({0, 50, 0, {}}).empty());
    EXPECT_TRUE(flat.push({1, 50, 0, {}}).empty());
    EXPECT_TRUE(flat.push({2, 50, 0, {}}).empty());
    EXPECT_TRUE(flat.push({3, 50, 0, {}}).empty());
    EXPECT_EQ(flat.push({4, 150, 0, {}}), (std::vector<int>{0, 0, 0, 0, 1}));
    EXPECT_EQ(flat.push({5, 150, 0, {}}), std::vector<int>{1});
    EXPECT_EQ(flat.push({6, 150, 0, {}}), std::vector<int>{1});  // flat window repeats the level
    EXPECT_EQ(flat.push({7, 52, 0, {}}), std::vector<int>{0});
}

namespace {

void addGaussian(Frame& f, double row, double col, double peak, double sigma, double hue) {
    for (int r = 0; r < f.rows; ++r)
        for (int c = 0; c < f.cols; ++c) {
            const double d2 = (r - row) * (r - row) + (c - col) * (c - col);
            const double v = peak * std::exp(-d2 / (2 * sigma * sigma));
            f.intensity[f.index(r, c)] += v;
            if (v > 0) f.hue[f.index(r, c)] = hue;
        }
}

}  // namespace

TEST(DetectFlashes, GaussianBlobCentroid) {
    Frame f(12, 15);
    addGaussian(f, 5.0, 7.0, 100.0, 0.7, kHueOne);
    const auto dets = detectFlashes(f, 10.0, 3.0);
    ASSERT_EQ(dets.size(), 1u);
    EXPECT_NEAR(dets[0].centroid.row, 5.0, 0.05);
    EXPECT_NEAR(dets[0].centroid.col, 7.0, 0.05);
    EXPECT_NEAR(dets[0].peak, 100.0, 1e-12);
    EXPECT_NEAR(dets[0].hue, 0.0, 1e-9);
}

TEST(DetectFlashes, EmptyFrame) {
    Frame f(8, 8);
    EXPECT_TRUE(detectFlashes(f, 1.0, 3.0).empty());
    EXPECT_THROW(detectFlashes(Frame{}, 1.0, 3.0), InsufficientDataError);
}

TEST(DetectFlashes, SuppressesNearbyWeakerBlob) {
    Frame adjacent(10, 10);
    adjacent.intensity[adjacent.index(5, 5)] = 80;
    adjacent.intensity[adjacent.index(5, 6)] = 50;
    EXPECT_EQ(detectFlashes(adjacent, 10.0, 3.0).size(), 1u);

    Frame apart(10, 10);
    apart.intensity[apart.index(5, 5)] = 50;
    apart.intensity[apart.index(5, 7)] = 80;
    const auto dets = detectFlashes(apart, 10.0, 3.0);
    ASSERT_EQ(dets.size(), 1u);
    EXPECT_EQ(dets[0].centroid, (Pixel{5, 7}));
    EXPECT_EQ(detectFlashes(apart, 10.0, 1.5).size(), 2u);
}

// Pixel noise is unbounded, so the 0.1 px bound is checked on the RMS error and
// on the 95th percentile rather than on every single draw.
TEST(DetectFlashes, NoisyCentroidStaysWithinTenthOfPixel) {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> offset(-0.5, 0.5);
    std::normal_distribution<double> noise(0.0, 4.0);  // peak 100: SNR 25
    const int trials = 1000;
    std::vector<double> errors;
    double sumSq = 0;
    for (int trial = 0; trial < trials; ++trial) {
        const double row = 15 + offset(rng), col = 20 + offset(rng);
        Frame f(30, 40);
        addGaussian(f, row, col, 100.0, 1.25, kHueZero);
        for (auto& v : f.intensity) v = std::max(0.0, v + noise(rng));
        const auto dets = detectFlashes(f, 16.0, 3.0);
        ASSERT_FALSE(dets.empty());
        double best = 1e9;
        for (const auto& d : dets) best = std::min(best, distance(d.centroid, {row, col}));
        errors.push_back(best);
        sumSq += best * best;
    }
    std::sort(errors.begin(), errors.end());
    EXPECT_LT(std::sqrt(sumSq / trials), 0.1);
    EXPECT_LT(errors[static_cast<std::size_t>(0.95 * trials)], 0.1);
}

namespace {

Detection at(double row, double col) { return Detection{{row, col}, 1.0, 1.0, 0.0}; }

}  // namespace

TEST(Associate, MatchesWithinGate) {
    TrackSet tracks;
    const std::vector<Detection> first{at(10, 10)};
    tracks.associate(first, 2.0, 0.0);
    const std::vector<Detection> second{at(10.4, 10.1)};
    const auto a = tracks.associate(second, 2.0, 1.0);
    ASSERT_EQ(tracks.tracks.size(), 1u);
    EXPECT_EQ(a.trackOfDetection[0], 0u);
    EXPECT_EQ(tracks.tracks[0].samples.size(), 2u);
}

TEST(Associate, OutsideGateOpensNewTrack) {
    TrackSet tracks;
    const std::vector<Detection> first{at(10, 10)};
    tracks.associate(first, 2.0, 0.0);
    const std::vector<Detection> second{at(30, 30)};
    const auto a = tracks.associate(second, 2.0, 1.0);
    ASSERT_EQ(tracks.tracks.size(), 2u);
    EXPECT_EQ(a.trackOfDetection[0], 1u);
    EXPECT_NE(tracks.tracks[0].trackId, tracks.tracks[1].trackId);
}

TEST(Associate, CrossingPairTakesMinimalPairing) {
    TrackSet tracks;
    const std::vector<Detection> first{at(10, 10), at(10, 12)};
    tracks.associate(first, 2.0, 0.0);
    const std::vector<Detection> second{at(10, 11.3), at(10, 10.6)};
    const auto a = tracks.associate(second, 2.0, 1.0);
    ASSERT_EQ(tracks.tracks.size(), 2u);
    const auto cost = [&](std::size_t t0, std::size_t t1) {
        return distance(first[t0].centroid, second[0].centroid) + distance(first[t1].centroid, second[1].centroid);
    };
    const double chosen = cost(a.trackOfDetection[0], a.trackOfDetection[1]);
    EXPECT_LE(chosen, std::min(cost(0, 1), cost(1, 0)) + 1e-12);
    EXPECT_EQ(a.trackOfDetection, (std::vector<std::size_t>{1, 0}));
}

TEST(Associate, ClosesTrackAfterTwoMissedFrames) {
    TrackSet tracks;
    const std::vector<Detection> one{at(10, 10)};
    const std::vector<Detection> none;
    tracks.associate(one, 2.0, 0.0);
    EXPECT_TRUE(tracks.associate(none, 2.0, 1.0).closedTracks.empty());
    EXPECT_FALSE(tracks.tracks[0].closed);
    const auto a = tracks.associate(none, 2.0, 2.0);
    EXPECT_EQ(a.closedTracks, std::vector<std::uint64_t>{tracks.tracks[0].trackId});
    EXPECT_TRUE(tracks.tracks[0].closed);
    tracks.associate(one, 2.0, 3.0);
    EXPECT_EQ(tracks.tracks.size(), 2u);
}

TEST(TraceCsv, RoundTrip) {
    std::vector<SampleTrace> traces{{7, {{0.0, 1.5, 240, {3.25, 4}}, {0.1, 2.0, 0.5, {3.5, 4.125}}}, 0, false},
                                    {2, {{0.05, 0.1, 10, {1, 1}}}, 0, false}};
    std::stringstream io;
    writeTraces(io, traces);
    const auto back = readTraces(io);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].trackId, 7u);
    EXPECT_EQ(back[1].trackId, 2u);
    ASSERT_EQ(back[0].samples.size(), 2u);
    EXPECT_EQ(back[0].samples[1].timestamp, 0.1);
    EXPECT_EQ(back[0].samples[1].pixel, (Pixel{3.5, 4.125}));
    EXPECT_EQ(back[1].samples[0].hue, 10.0);
}

TEST(TraceCsv, RejectsMalformedInput) {
    std::stringstream badHeader("id,t\n");
    EXPECT_THROW(readTraces(badHeader), FormatError);
    std::stringstream badNumber("track_id,t,intensity,hue,row,col\n1,0,x,0,0,0\n");
    EXPECT_THROW(readTraces(badNumber), FormatError);
    std::stringstream backwards("track_id,t,intensity,hue,row,col\n1,1,0,0,0,0\n1,0.5,0,0,0,0\n");
    EXPECT_THROW(readTraces(backwards), FormatError);
}
