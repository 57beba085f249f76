#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cyclight/bitword.hpp"
#include "cyclight/error.hpp"
#include "cyclight/signal.hpp"

namespace cyclight {

inline constexpr double kPpm = 1e-6;

/// Local clock: local(t) = t (1 + ratePpm 1e-6) + offset, for true time t.
struct ClockModel {
    double ratePpm = 0;
    double offset = 0;
    double lastHeartbeat = 0;

    double rate() const { return 1.0 + ratePpm * kPpm; }
    double localTime(double trueTime) const { return trueTime + error(trueTime); }
    double error(double trueTime) const { return trueTime * ratePpm * kPpm + offset; }
    double trueTime(double localTime) const { return (localTime - offset) / rate(); }
};

inline ClockModel makeClock(double ratePpm, double offset = 0) {
    if (!(ratePpm > -1e6)) throw OutOfRangeError("clock rate must exceed -1e6 ppm");
    return ClockModel{ratePpm, offset, 0};
}

/// Longest heartbeat period keeping two clocks within `deltaMax` of each
/// other when both drift by at most `rhoMaxPpm`.
inline double syncInterval(double deltaMax, double rhoMaxPpm) {
    if (!(rhoMaxPpm > 0)) throw OutOfRangeError("syncInterval: rho must be positive");
    if (!(deltaMax >= 0)) throw OutOfRangeError("syncInterval: deltaMax must be nonnegative");
    return deltaMax * 1e6 / (2.0 * rhoMaxPpm);
}

/// Align the clock to true time at `trueTime`; the rate is left alone.
inline ClockModel applyHeartbeat(ClockModel clock, double trueTime) {
    clock.offset = -trueTime * clock.ratePpm * kPpm;
    clock.lastHeartbeat = trueTime;
    return clock;
}

enum class SensorKind { CMOS, CCD };
enum class PowerState { Active, LowPower };

struct SensorTiming {
    SensorKind kind = SensorKind::CCD;
    double fps = 30;
    double rowReadout = 0;  // seconds per row, CMOS only
    int rows = 1;
    double exposureMid = 0;

    double framePeriod() const { return 1.0 / fps; }

    /// Tracker-local time at which `row` of frame `frame` is sampled.
    double sampleTime(std::int64_t frame, double row) const {
        const double start = static_cast<double>(frame) / fps + exposureMid;
        return kind == SensorKind::CMOS ? start + row * rowReadout : start;
    }
};

inline void validate(const SensorTiming& s) {
    if (!(s.fps > 0)) throw OutOfRangeError("sensor fps must be positive");
    if (s.rows < 1) throw OutOfRangeError("sensor rows must be >= 1");
    if (s.kind == SensorKind::CMOS) {
        if (s.rowReadout < 0) throw OutOfRangeError("rowReadout must be nonnegative");
        if (s.rows * s.rowReadout > s.framePeriod() * (1 + 1e-12))
            throw OutOfRangeError("CMOS readout (rows * rowReadout) exceeds the frame period");
    }
}

/// CMOS defaults: full-frame readout and exposure midpoint at the frame start.
inline SensorTiming makeCmos(double fps, int rows) {
    return SensorTiming{SensorKind::CMOS, fps, 1.0 / (fps * rows), rows, 0.0};
}

inline SensorTiming makeCcd(double fps) { return SensorTiming{SensorKind::CCD, fps, 0.0, 1, 0.0}; }

struct EmitterState {
    BitWord word;
    double bitPeriod = 1.0 / 30;  // flasher-local seconds
    ClockModel clock;
    PowerState power = PowerState::Active;

    std::int64_t bitIndexAt(double localTime) const {
        // Snap times that sit on a bit boundary up to within rounding.
        return static_cast<std::int64_t>(std::floor(localTime / bitPeriod + 1e-9));
    }

    int bitAt(std::int64_t index) const {
        const auto n = static_cast<std::int64_t>(word.size());
        return word.bit(static_cast<int>(((index % n) + n) % n));
    }
};

/// Heartbeat delivery to an emitter. Alignment also wakes it up.
inline EmitterState receiveHeartbeat(EmitterState e, double trueTime) {
    e.clock = applyHeartbeat(e.clock, trueTime);
    e.power = PowerState::Active;
    return e;
}

/// Drops to LowPower once no heartbeat arrived within `timeout` seconds.
inline EmitterState updatePower(EmitterState e, double trueTime, double timeout) {
    if (trueTime - e.clock.lastHeartbeat > timeout) e.power = PowerState::LowPower;
    return e;
}

struct ChannelSample {
    std::int64_t frame = 0;
    double trueTime = 0;
    double flasherTime = 0;
    std::int64_t bitIndex = 0;
    int bitValue = 0;
};

/// Image row of the flasher in frame f.
using RowTrajectory = std::function<double(std::int64_t)>;

/// One sample per frame whose tracker-local start lies in [0, duration).
inline std::vector<ChannelSample> sampleStream(const EmitterState& emitter, const SensorTiming& sensor,
                                               const ClockModel& trackerClock, const RowTrajectory& rowTrajectory,
                                               double duration) {
    if (!(duration > 0)) throw OutOfRangeError("sampleStream: duration must be positive");
    validate(sensor);
    std::vector<ChannelSample> out;
    for (std::int64_t f = 0; static_cast<double>(f) / sensor.fps < duration; ++f) {
        const double row = sensor.kind == SensorKind::CMOS ? rowTrajectory(f) : 0.0;
        ChannelSample s;
        s.frame = f;
        s.trueTime = trackerClock.trueTime(sensor.sampleTime(f, row));
        s.flasherTime = emitter.clock.localTime(s.trueTime);
        s.bitIndex = emitter.bitIndexAt(s.flasherTime);
        s.bitValue = emitter.bitAt(s.bitIndex);
        out.push_back(s);
    }
    return out;
}

struct DriftEvents {
    std::size_t insertions = 0;  // a bit index sampled twice in a row
    std::size_t deletions = 0;   // bit indices skipped entirely
    std::vector<std::size_t> insertionAt;  // sample positions of the repeats
    std::vector<std::size_t> deletionAt;
};

inline DriftEvents countDrift(std::span<const ChannelSample> samples) {
    DriftEvents ev;
    for (std::size_t k = 1; k < samples.size(); ++k) {
        const auto step = samples[k].bitIndex - samples[k - 1].bitIndex;
        if (step == 0) {
            ++ev.insertions;
            ev.insertionAt.push_back(k);
        } else if (step > 1) {
            ev.deletions += static_cast<std::size_t>(step - 1);
            ev.deletionAt.push_back(k);
        }
    }
    return ev;
}

/// Tracker rate at which frames land every 0.95 bit periods of an ideal
/// emitter, i.e. exactly one repeated bit index per 20 samples.
inline double repeatingTrackerPpm() { return (1.0 / 0.95 - 1.0) / kPpm; }

struct RenderParams {
    double highLevel = 200;
    double lowLevel = 40;
    double hueIntensity = 120;  // constant brightness in the hue scheme
    double intensitySigma = 0;
    double hueSigma = 0;
};

struct TimedBit {
    double time = 0;
    int bit = 0;
};

/// Photometric samples for a bit sequence seen from `distance` meters.
inline SampleTrace renderSamples(std::span<const TimedBit> bits, BitScheme scheme, const RenderParams& p,
                                 double distance, std::mt19937_64& rng, std::uint64_t trackId = 0) {
    if (!(distance > 0)) throw OutOfRangeError("renderSamples: distance must be positive");
    std::normal_distribution<double> unit(0.0, 1.0);
    const double falloff = 1.0 / (distance * distance);
    SampleTrace trace{trackId, {}, 0, false};
    trace.samples.reserve(bits.size());
    for (const auto& b : bits) {
        FlashSample s;
        s.timestamp = b.time;
        if (scheme == BitScheme::Intensity) {
            s.intensity = (b.bit ? p.highLevel : p.lowLevel) * falloff;
            if (p.intensitySigma > 0) s.intensity += p.intensitySigma * unit(rng);
            s.hue = kHueOne;
        } else {
            s.intensity = p.hueIntensity * falloff;
            s.hue = b.bit ? kHueOne : kHueZero;
            if (p.hueSigma > 0) s.hue = std::fmod(s.hue + p.hueSigma * unit(rng) + 720.0, 360.0);
        }
        trace.samples.push_back(s);
    }
    return trace;
}

/// Largest |local_i(t) - local_j(t)| over all pairs, maximized over [0, horizon].
///
/// With `heartbeatPeriod` > 0 every clock is realigned at each multiple of the
/// period. Desync is piecewise linear in t, so checking the instants just
/// before each heartbeat and the horizon is exact.
inline double maxPairwiseDesync(std::vector<ClockModel> clocks, double heartbeatPeriod, double horizon) {
    auto spread = [&](double t) {
        double lo = 0, hi = 0;
        for (std::size_t i = 0; i < clocks.size(); ++i) {
            const double d = clocks[i].error(t);
            lo = i == 0 ? d : std::min(lo, d);
            hi = i == 0 ? d : std::max(hi, d);
        }
        return hi - lo;
    };
    double worst = spread(0.0);
    if (heartbeatPeriod > 0) {
        for (std::int64_t k = 1; static_cast<double>(k) * heartbeatPeriod <= horizon; ++k) {
            const double t = static_cast<double>(k) * heartbeatPeriod;
            worst = std::max(worst, spread(t));
            for (auto& c : clocks) c = applyHeartbeat(c, t);
        }
    }
    return std::max(worst, spread(horizon));
}

}  // namespace cyclight
