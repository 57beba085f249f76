#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "cyclight/error.hpp"

namespace cyclight {

/// Image position, (row, col) order throughout.
struct Pixel {
    double row = 0;
    double col = 0;

    friend bool operator==(const Pixel&, const Pixel&) = default;
};

inline double distance(const Pixel& a, const Pixel& b) { return std::hypot(a.row - b.row, a.col - b.col); }

struct FlashSample {
    double timestamp = 0;  // tracker-local seconds
    double intensity = 0;
    double hue = 0;  // degrees in [0, 360)
    Pixel pixel;
};

/// Time-ordered samples of one tracked flash point.
struct SampleTrace {
    std::uint64_t trackId = 0;
    std::vector<FlashSample> samples;
    int missedFrames = 0;
    bool closed = false;
};

// Bit levels for the hue scheme.
inline constexpr double kHueOne = 0.0;    // red
inline constexpr double kHueZero = 240.0; // blue

inline double circularHueDistance(double a, double b) {
    double d = std::fmod(std::fabs(a - b), 360.0);
    return d > 180.0 ? 360.0 - d : d;
}

/// 1 where the hue is strictly closer to red than to blue, else 0.
inline std::vector<int> classifyHue(std::span<const double> hues) {
    std::vector<int> bits;
    bits.reserve(hues.size());
    for (double h : hues) bits.push_back(circularHueDistance(h, kHueOne) < circularHueDistance(h, kHueZero) ? 1 : 0);
    return bits;
}

inline constexpr double kTransitionFraction = 0.40;

/// High/low labels for a window of intensities.
///
/// The largest consecutive change seeds the two samples around it; the sweep
/// then walks outward and toggles whenever a step reaches 40% of that change.
inline std::vector<int> classifyIntensity(std::span<const double> window) {
    if (window.size() < 2) throw InsufficientDataError("classifyIntensity needs at least 2 samples");
    std::size_t seed = 0;
    double largest = 0;
    for (std::size_t i = 0; i + 1 < window.size(); ++i) {
        const double step = std::fabs(window[i + 1] - window[i]);
        if (step > largest) {
            largest = step;
            seed = i;
        }
    }
    if (largest == 0) throw NoTransitionError("intensity window has no transition");

    const double threshold = kTransitionFraction * largest;
    std::vector<int> bits(window.size(), 0);
    const bool rising = window[seed + 1] > window[seed];
    bits[seed] = rising ? 0 : 1;
    bits[seed + 1] = rising ? 1 : 0;
    for (std::size_t i = seed + 2; i < window.size(); ++i)
        bits[i] = std::fabs(window[i] - window[i - 1]) >= threshold ? 1 - bits[i - 1] : bits[i - 1];
    for (std::size_t i = seed; i-- > 0;)
        bits[i] = std::fabs(window[i + 1] - window[i]) >= threshold ? 1 - bits[i + 1] : bits[i + 1];
    return bits;
}

enum class BitScheme { Hue, Intensity };

/// Causal per-track bit slicer.
///
/// Intensity samples are classified over the trailing `window` samples and
/// only the newest label is emitted. Nothing is emitted until the window is
/// full (a shorter window may hold a single level, whose largest step is pure
/// noise); the first full window with a transition releases every held
/// sample at once. Bits already emitted are never revised.
class StreamingBitClassifier {
public:
    StreamingBitClassifier(BitScheme scheme, int window) : scheme_(scheme), window_(std::max(window, 2)) {}

    std::vector<int> push(const FlashSample& sample) {
        if (scheme_ == BitScheme::Hue) {
            const double h = sample.hue;
            return classifyHue(std::span<const double>(&h, 1));
        }
        recent_.push_back(sample.intensity);
        if (recent_.size() > static_cast<std::size_t>(window_)) recent_.pop_front();
        ++pending_;
        if (recent_.size() < static_cast<std::size_t>(window_)) return {};
        const std::vector<double> values(recent_.begin(), recent_.end());
        std::vector<int> labels;
        try {
            labels = classifyIntensity(values);
        } catch (const NoTransitionError&) {
            if (!last_) return {};
            pending_ = 0;
            return {*last_};  // flat window: level persists
        }
        // Held samples that already slid out of the window take the oldest label.
        std::vector<int> out;
        if (pending_ > labels.size()) out.assign(pending_ - labels.size(), labels.front());
        const std::size_t release = std::min(pending_, labels.size());
        out.insert(out.end(), labels.end() - static_cast<std::ptrdiff_t>(release), labels.end());
        pending_ = 0;
        last_ = labels.back();
        return out;
    }

private:
    BitScheme scheme_;
    int window_;
    std::deque<double> recent_;
    std::size_t pending_ = 0;
    std::optional<int> last_;
};

/// Single-frame photometric image: intensity and hue per pixel, row-major.
struct Frame {
    int rows = 0;
    int cols = 0;
    std::vector<double> intensity;
    std::vector<double> hue;

    Frame() = default;
    Frame(int r, int c)
        : rows(r), cols(c), intensity(static_cast<std::size_t>(r) * c, 0.0), hue(static_cast<std::size_t>(r) * c, 0.0) {}

    std::size_t index(int r, int c) const { return static_cast<std::size_t>(r) * cols + c; }
};

struct Detection {
    Pixel centroid;        // weighted by intensity above threshold
    double intensity = 0;  // integrated over the blob
    double peak = 0;
    double hue = 0;        // intensity-weighted circular mean, degrees
};

/// Bright-blob detector: threshold, 8-connected grouping, weighted centroid,
/// then suppression of weaker blobs within `nmsRadius` of a brighter one.
///
/// Centroid and hue weights are the intensity in excess of `threshold`, so a
/// pixel crossing the threshold enters the average with zero weight.
inline std::vector<Detection> detectFlashes(const Frame& frame, double threshold, double nmsRadius) {
    if (frame.rows <= 0 || frame.cols <= 0) throw InsufficientDataError("detectFlashes: empty frame");
    std::vector<Detection> blobs;
    std::vector<char> visited(frame.intensity.size(), 0);
    std::vector<std::pair<int, int>> stack;
    for (int r0 = 0; r0 < frame.rows; ++r0) {
        for (int c0 = 0; c0 < frame.cols; ++c0) {
            const auto start = frame.index(r0, c0);
            if (visited[start] || frame.intensity[start] < threshold) continue;
            double flux = 0, sum = 0, sumRow = 0, sumCol = 0, peak = 0, hx = 0, hy = 0;
            visited[start] = 1;
            stack.assign(1, {r0, c0});
            while (!stack.empty()) {
                auto [r, c] = stack.back();
                stack.pop_back();
                const auto k = frame.index(r, c);
                const double w = frame.intensity[k] - threshold;
                flux += frame.intensity[k];
                sum += w;
                sumRow += w * r;
                sumCol += w * c;
                peak = std::max(peak, frame.intensity[k]);
                const double rad = frame.hue[k] * std::numbers::pi / 180.0;
                hx += w * std::cos(rad);
                hy += w * std::sin(rad);
                for (int dr = -1; dr <= 1; ++dr) {
                    for (int dc = -1; dc <= 1; ++dc) {
                        const int rr = r + dr, cc = c + dc;
                        if (rr < 0 || cc < 0 || rr >= frame.rows || cc >= frame.cols) continue;
                        const auto kk = frame.index(rr, cc);
                        if (visited[kk] || frame.intensity[kk] < threshold) continue;
                        visited[kk] = 1;
                        stack.emplace_back(rr, cc);
                    }
                }
            }
            double hue = std::atan2(hy, hx) * 180.0 / std::numbers::pi;
            if (hue < 0) hue += 360.0;
            const Pixel centroid = sum > 0 ? Pixel{sumRow / sum, sumCol / sum} : Pixel{double(r0), double(c0)};
            blobs.push_back({centroid, flux, peak, hue});
        }
    }

    std::stable_sort(blobs.begin(), blobs.end(), [](const Detection& a, const Detection& b) { return a.peak > b.peak; });
    std::vector<Detection> kept;
    for (const auto& blob : blobs) {
        const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
            return distance(k.centroid, blob.centroid) < nmsRadius;
        });
        if (!suppressed) kept.push_back(blob);
    }
    return kept;
}

struct Association {
    std::vector<std::size_t> trackOfDetection;  // index into TrackSet::tracks, per detection
    std::vector<std::uint64_t> closedTracks;    // ids closed during this update
};

/// Frame-to-frame association of detections to open traces.
class TrackSet {
public:
    std::vector<SampleTrace> tracks;

    /// Greedy nearest-neighbour matching within `gatingRadius`. Unmatched
    /// detections open new traces; a trace unmatched for more than one frame
    /// is closed.
    Association associate(std::span<const Detection> detections, double gatingRadius, double timestamp) {
        struct Pair {
            double dist;
            std::size_t track, det;
        };
        std::vector<Pair> pairs;
        for (std::size_t t = 0; t < tracks.size(); ++t) {
            if (tracks[t].closed || tracks[t].samples.empty()) continue;
            for (std::size_t d = 0; d < detections.size(); ++d) {
                const double dist = distance(tracks[t].samples.back().pixel, detections[d].centroid);
                if (dist <= gatingRadius) pairs.push_back({dist, t, d});
            }
        }
        std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.dist < b.dist; });

        Association out;
        constexpr auto kNone = static_cast<std::size_t>(-1);
        out.trackOfDetection.assign(detections.size(), kNone);
        std::vector<bool> trackUsed(tracks.size(), false);
        for (const auto& p : pairs) {
            if (trackUsed[p.track] || out.trackOfDetection[p.det] != kNone) continue;
            trackUsed[p.track] = true;
            out.trackOfDetection[p.det] = p.track;
        }
        for (std::size_t t = 0; t < trackUsed.size(); ++t) {
            if (tracks[t].closed || trackUsed[t]) continue;
            if (++tracks[t].missedFrames > 1) {
                tracks[t].closed = true;
                out.closedTracks.push_back(tracks[t].trackId);
            }
        }
        for (std::size_t d = 0; d < detections.size(); ++d) {
            if (out.trackOfDetection[d] == kNone) {
                tracks.push_back(SampleTrace{nextId_++, {}, 0, false});
                out.trackOfDetection[d] = tracks.size() - 1;
            } else {
                tracks[out.trackOfDetection[d]].missedFrames = 0;
            }
            const auto& det = detections[d];
            tracks[out.trackOfDetection[d]].samples.push_back({timestamp, det.intensity, det.hue, det.centroid});
        }
        return out;
    }

private:
    std::uint64_t nextId_ = 0;
};

}  // namespace cyclight
