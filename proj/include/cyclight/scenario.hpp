#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cyclight/channel.hpp"
#include "cyclight/codebook.hpp"
#include "cyclight/codec.hpp"
#include "cyclight/error.hpp"
#include "cyclight/pose.hpp"
#include "cyclight/signal.hpp"

namespace cyclight {

using json = nlohmann::json;

struct FlasherConfig {
    std::optional<CodeId> id;  // empty: assigned automatically
    Vec3 position = Vec3::Zero();
    BitScheme scheme = BitScheme::Hue;
    double clockPpm = 0;
    double bitPeriod = 0;  // 0: one bit per nominal frame
    double phase = 0;      // initial clock offset, seconds
};

struct CameraConfig {
    CameraIntrinsics intrinsics;
    SensorTiming sensor;
    double clockPpm = 0;
};

struct TrajectoryPoint {
    double time = 0;
    Pose pose;
};

struct HeartbeatConfig {
    bool enabled = false;
    double period = 10;
    double timeout = std::numeric_limits<double>::infinity();
};

struct NoiseConfig {
    double intensitySigma = 0;
    double hueSigma = 0;  // degrees
    double pixelSigma = 0;
};

struct RenderConfig {
    double highLevel = 200;
    double lowLevel = 40;
    double hueLevel = 120;
    double detectionThreshold = 1e-6;
    double nmsRadius = 3;
    double gatingRadius = 5;
};

struct ScenarioConfig {
    std::uint64_t seed = 0;
    double duration = 0;
    int bits = 12;
    CodebookMode mode = CodebookMode::Robust;
    CameraConfig camera;
    std::vector<TrajectoryPoint> trajectory;
    std::vector<FlasherConfig> flashers;
    HeartbeatConfig heartbeat;
    NoiseConfig noise;
    RenderConfig render;
    double visibilityRadius = std::numeric_limits<double>::infinity();
};

namespace detail {

/// Field access with JSON-path diagnostics.
class ConfigReader {
public:
    ConfigReader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) throw ConfigError(path_.empty() ? "$" : path_, "must be an object");
    }

    std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    bool has(const std::string& key) const {
        seen_.insert(key);
        return node_.contains(key);
    }
    const json& raw(const std::string& key) const {
        seen_.insert(key);
        if (!node_.contains(key)) throw ConfigError(at(key), "required field is missing");
        return node_.at(key);
    }

    double number(const std::string& key) const {
        const auto& v = raw(key);
        if (!v.is_number()) throw ConfigError(at(key), "must be a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw ConfigError(at(key), "must be finite");
        return d;
    }
    double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }
    double positive(const std::string& key) const {
        const double d = number(key);
        if (!(d > 0)) throw ConfigError(at(key), "must be positive");
        return d;
    }
    double positive(const std::string& key, double fallback) const { return has(key) ? positive(key) : fallback; }
    double nonnegative(const std::string& key, double fallback) const {
        const double d = number(key, fallback);
        if (d < 0) throw ConfigError(at(key), "must be nonnegative");
        return d;
    }
    std::string string(const std::string& key) const {
        const auto& v = raw(key);
        if (!v.is_string()) throw ConfigError(at(key), "must be a string");
        return v.get<std::string>();
    }
    bool boolean(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const auto& v = raw(key);
        if (!v.is_boolean()) throw ConfigError(at(key), "must be true or false");
        return v.get<bool>();
    }
    template <int N>
    Eigen::Matrix<double, N, 1> vector(const std::string& key) const {
        const auto& v = raw(key);
        if (!v.is_array() || v.size() != N) throw ConfigError(at(key), "must be an array of " + std::to_string(N) + " numbers");
        Eigen::Matrix<double, N, 1> out;
        for (int i = 0; i < N; ++i) {
            if (!v[static_cast<std::size_t>(i)].is_number()) throw ConfigError(at(key) + "[" + std::to_string(i) + "]", "must be a number");
            out(i) = v[static_cast<std::size_t>(i)].get<double>();
        }
        return out;
    }
    ConfigReader child(const std::string& key) const { return ConfigReader(raw(key), at(key)); }

    void rejectUnknown() const {
        for (const auto& [key, value] : node_.items())
            if (!seen_.count(key)) throw ConfigError(at(key), "unknown field");
    }

private:
    const json& node_;
    std::string path_;
    mutable std::set<std::string> seen_;
};

inline BitScheme parseScheme(const std::string& s, const std::string& path) {
    if (s == "hue") return BitScheme::Hue;
    if (s == "intensity") return BitScheme::Intensity;
    throw ConfigError(path, "must be \"hue\" or \"intensity\"");
}

inline const char* schemeName(BitScheme s) { return s == BitScheme::Hue ? "hue" : "intensity"; }

inline Mat3 rotationFromRows(const Eigen::Matrix<double, 9, 1>& v) {
    Mat3 r;
    r << v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7), v(8);
    return r;
}

}  // namespace detail

inline ScenarioConfig parseScenario(const json& doc) {
    using detail::ConfigReader;
    ScenarioConfig cfg;
    const ConfigReader root(doc, "");

    const auto& seed = root.raw("seed");
    if (!seed.is_number_integer()) throw ConfigError("seed", "must be an integer");
    cfg.seed = seed.is_number_unsigned() ? seed.get<std::uint64_t>() : static_cast<std::uint64_t>(seed.get<std::int64_t>());
    cfg.duration = root.positive("duration_s");

    {
        const auto cb = root.child("codebook");
        const double n = cb.number("n");
        if (n != std::floor(n) || n < 4 || n > 24) throw ConfigError(cb.at("n"), "must be an integer in [4, 24]");
        cfg.bits = static_cast<int>(n);
        try {
            cfg.mode = cb.has("mode") ? parseCodebookMode(cb.string("mode")) : CodebookMode::Robust;
        } catch (const FormatError& e) {
            throw ConfigError(cb.at("mode"), e.what());
        }
        cb.rejectUnknown();
    }

    {
        const auto cam = root.child("camera");
        const auto k = cam.child("intrinsics");
        auto& in = cfg.camera.intrinsics;
        in.fx = k.positive("fx");
        in.fy = k.positive("fy");
        in.cx = k.number("cx");
        in.cy = k.number("cy");
        const double rows = k.positive("rows"), cols = k.positive("cols");
        if (rows != std::floor(rows) || cols != std::floor(cols)) throw ConfigError(k.at("rows"), "image size must be integral");
        in.rows = static_cast<int>(rows);
        in.cols = static_cast<int>(cols);
        k.rejectUnknown();

        const auto s = cam.child("sensor");
        auto& sensor = cfg.camera.sensor;
        const auto kind = s.has("kind") ? s.string("kind") : std::string("ccd");
        if (kind != "ccd" && kind != "cmos") throw ConfigError(s.at("kind"), "must be \"ccd\" or \"cmos\"");
        sensor.kind = kind == "cmos" ? SensorKind::CMOS : SensorKind::CCD;
        sensor.fps = s.positive("fps");
        sensor.rows = in.rows;
        sensor.rowReadout = sensor.kind == SensorKind::CMOS ? s.nonnegative("row_readout_s", 1.0 / (sensor.fps * in.rows)) : 0.0;
        sensor.exposureMid = s.nonnegative("exposure_mid_s", 0.0);
        try {
            validate(sensor);
        } catch (const OutOfRangeError& e) {
            throw ConfigError(s.at("row_readout_s"), e.what());
        }
        s.rejectUnknown();
        cfg.camera.clockPpm = cam.number("clock_ppm", 0.0);
        if (!(cfg.camera.clockPpm > -1e6)) throw ConfigError(cam.at("clock_ppm"), "must exceed -1e6");
        cam.rejectUnknown();
    }

    {
        const auto& traj = root.raw("trajectory");
        if (!traj.is_array() || traj.empty()) throw ConfigError("trajectory", "must be a nonempty array of poses");
        for (std::size_t i = 0; i < traj.size(); ++i) {
            const ConfigReader p(traj[i], "trajectory[" + std::to_string(i) + "]");
            TrajectoryPoint tp;
            tp.time = p.number("t_s");
            tp.pose.rotation = detail::rotationFromRows(p.vector<9>("rotation"));
            tp.pose.translation = p.vector<3>("translation_m");
            const Mat3& r = tp.pose.rotation;
            if ((r.transpose() * r - Mat3::Identity()).norm() > 1e-6 || std::fabs(r.determinant() - 1) > 1e-6)
                throw ConfigError(p.at("rotation"), "must be a rotation matrix (row-major)");
            tp.pose.rotation = orthonormalize(r);
            if (!cfg.trajectory.empty() && !(tp.time > cfg.trajectory.back().time))
                throw ConfigError(p.at("t_s"), "trajectory times must increase");
            p.rejectUnknown();
            cfg.trajectory.push_back(tp);
        }
    }

    {
        const auto& fl = root.raw("flashers");
        if (!fl.is_array()) throw ConfigError("flashers", "must be an array");
        for (std::size_t i = 0; i < fl.size(); ++i) {
            const ConfigReader f(fl[i], "flashers[" + std::to_string(i) + "]");
            FlasherConfig fc;
            if (f.has("id")) {
                const auto& id = f.raw("id");
                if (id.is_string() && id.get<std::string>() == "auto") {
                } else if (id.is_number_integer() && id.get<std::int64_t>() >= 1 && id.get<std::int64_t>() <= 0xffffffffLL) {
                    fc.id = static_cast<CodeId>(id.get<std::int64_t>());
                } else {
                    throw ConfigError(f.at("id"), "must be a positive integer or \"auto\"");
                }
            }
            fc.position = f.vector<3>("position_m");
            fc.scheme = f.has("scheme") ? detail::parseScheme(f.string("scheme"), f.at("scheme")) : BitScheme::Hue;
            fc.clockPpm = f.number("clock_ppm", 0.0);
            if (!(fc.clockPpm > -1e6)) throw ConfigError(f.at("clock_ppm"), "must exceed -1e6");
            fc.bitPeriod = f.positive("bit_period_s", 1.0 / cfg.camera.sensor.fps);
            fc.phase = f.number("phase_s", 0.0);
            f.rejectUnknown();
            cfg.flashers.push_back(fc);
        }
    }

    if (root.has("heartbeat")) {
        const auto h = root.child("heartbeat");
        cfg.heartbeat.enabled = h.boolean("enabled", true);
        cfg.heartbeat.period = h.positive("period_s", cfg.heartbeat.period);
        cfg.heartbeat.timeout = h.positive("timeout_s", cfg.heartbeat.timeout);
        h.rejectUnknown();
    }
    if (root.has("noise")) {
        const auto n = root.child("noise");
        cfg.noise.intensitySigma = n.nonnegative("intensity_sigma", 0);
        cfg.noise.hueSigma = n.nonnegative("hue_sigma_deg", 0);
        cfg.noise.pixelSigma = n.nonnegative("pixel_sigma_px", 0);
        n.rejectUnknown();
    }
    if (root.has("render")) {
        const auto r = root.child("render");
        cfg.render.highLevel = r.positive("high_level", cfg.render.highLevel);
        cfg.render.lowLevel = r.nonnegative("low_level", cfg.render.lowLevel);
        cfg.render.hueLevel = r.positive("hue_level", cfg.render.hueLevel);
        cfg.render.detectionThreshold = r.positive("detection_threshold", cfg.render.detectionThreshold);
        cfg.render.nmsRadius = r.nonnegative("nms_radius_px", cfg.render.nmsRadius);
        cfg.render.gatingRadius = r.positive("gating_radius_px", cfg.render.gatingRadius);
        if (!(cfg.render.lowLevel < cfg.render.highLevel)) throw ConfigError(r.at("low_level"), "must be below high_level");
        r.rejectUnknown();
    }
    cfg.visibilityRadius = root.positive("visibility_radius_m", cfg.visibilityRadius);
    root.rejectUnknown();

    // Code-book capacity and identifier consistency.
    const auto explicitIds = std::count_if(cfg.flashers.begin(), cfg.flashers.end(), [](const auto& f) { return f.id.has_value(); });
    if (explicitIds != 0 && explicitIds != static_cast<long>(cfg.flashers.size()))
        throw ConfigError("flashers", "ids must be all explicit or all \"auto\"");
    if (!cfg.flashers.empty()) {
        const auto size = generateCodebook(cfg.bits, cfg.mode).book.size();
        if (cfg.flashers.size() > size)
            throw ConfigError("flashers", std::to_string(cfg.flashers.size()) + " flashers exceed the " +
                                              std::to_string(size) + "-word code-book for n=" + std::to_string(cfg.bits));
        std::set<CodeId> used;
        for (std::size_t i = 0; i < cfg.flashers.size(); ++i) {
            const auto& id = cfg.flashers[i].id;
            if (!id) continue;
            const auto path = "flashers[" + std::to_string(i) + "].id";
            if (*id > size) throw ConfigError(path, "exceeds code-book size " + std::to_string(size));
            if (!used.insert(*id).second) throw ConfigError(path, "duplicate identifier");
        }
    }
    return cfg;
}

inline ScenarioConfig loadScenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("scenario", "cannot open " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("scenario", std::string("invalid JSON: ") + e.what());
    }
    return parseScenario(doc);
}

/// Camera pose at true time t: slerp on rotation, linear on translation.
inline Pose poseAt(std::span<const TrajectoryPoint> traj, double t) {
    if (t <= traj.front().time) return traj.front().pose;
    if (t >= traj.back().time) return traj.back().pose;
    auto hi = std::upper_bound(traj.begin(), traj.end(), t, [](double v, const TrajectoryPoint& p) { return v < p.time; });
    auto lo = hi - 1;
    const double a = (t - lo->time) / (hi->time - lo->time);
    const Eigen::Quaterniond q0(lo->pose.rotation), q1(hi->pose.rotation);
    return Pose{q0.slerp(a, q1).toRotationMatrix(), (1 - a) * lo->pose.translation + a * hi->pose.translation};
}

struct PoseError {
    double rotation = 0;     // rad
    double translation = 0;  // m
};

struct FlasherReport {
    std::size_t index = 0;
    CodeId id = kUnknownId;
    std::string word;
    std::string scheme;
    bool locked = false;
    std::optional<double> lockOnTime;
    std::optional<std::int64_t> lockOnFrame;
    double idAccuracy = 0;
    std::size_t insertions = 0, deletions = 0, flips = 0;
};

struct DecodedTrack {
    std::uint64_t track = 0;
    CodeId id = kUnknownId;
};

struct FrameReport {
    std::int64_t frame = 0;
    double time = 0;  // tracker-local
    std::size_t detections = 0;
    std::vector<DecodedTrack> decoded;
    std::optional<Pose> pose;
    bool degenerate = false;
    std::optional<PoseError> poseError;
    std::optional<Pose> truthPose;  // only with debug truth
};

struct HeartbeatEvent {
    double time = 0;
    std::string unit;
};

struct ScenarioReport {
    std::uint64_t seed = 0;
    int bits = 0;
    CodebookMode mode = CodebookMode::Robust;
    std::vector<FlasherReport> flashers;
    std::vector<FrameReport> frames;
    std::vector<HeartbeatEvent> heartbeats;
    std::optional<PoseError> poseRmse;
    double maxDesync = 0;
    std::size_t framesWithPose = 0;
    std::size_t flashersIdentified = 0;
    std::vector<Vec3> truthPositions;  // only with debug truth
};

namespace detail {

inline const std::array<double, 5> kBinomial = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

/// Bilinear splat blurred by a 5-tap binomial kernel. The footprint's
/// intensity-weighted centroid equals (row, col) exactly.
inline void splat(Frame& frame, std::vector<double>& strongest, double row, double col, double flux, double hue) {
    const int r0 = static_cast<int>(std::floor(row)), c0 = static_cast<int>(std::floor(col));
    const double fr = row - r0, fc = col - c0;
    std::array<double, 6> wr{}, wc{};
    for (int k = 0; k < 5; ++k) {
        wr[static_cast<std::size_t>(k)] += (1 - fr) * kBinomial[static_cast<std::size_t>(k)];
        wr[static_cast<std::size_t>(k) + 1] += fr * kBinomial[static_cast<std::size_t>(k)];
        wc[static_cast<std::size_t>(k)] += (1 - fc) * kBinomial[static_cast<std::size_t>(k)];
        wc[static_cast<std::size_t>(k) + 1] += fc * kBinomial[static_cast<std::size_t>(k)];
    }
    for (int i = 0; i < 6; ++i) {
        const int r = r0 - 2 + i;
        if (r < 0 || r >= frame.rows) continue;
        for (int j = 0; j < 6; ++j) {
            const int c = c0 - 2 + j;
            if (c < 0 || c >= frame.cols) continue;
            const double v = flux * wr[static_cast<std::size_t>(i)] * wc[static_cast<std::size_t>(j)];
            if (v <= 0) continue;
            const auto k = frame.index(r, c);
            frame.intensity[k] += v;
            if (v > strongest[k]) {
                strongest[k] = v;
                frame.hue[k] = hue;
            }
        }
    }
}

inline constexpr double kIntensityContrast = 0.25;

/// Per-track decoding with both bit schemes. A track's scheme is not known in
/// advance: a hue flasher shows both hue classes, an intensity flasher shows
/// brightness contrast, and a decoder is only trusted once its evidence is seen.
struct TrackDecoder {
    StreamingBitClassifier hueSlicer;
    StreamingBitClassifier intensitySlicer;
    DecodeState hueState, intensityState;
    std::vector<int> hueBits, intensityBits;
    std::vector<int> truthBits;
    std::vector<std::size_t> truthFlasher;
    bool sawRed = false, sawBlue = false;
    double minIntensity = std::numeric_limits<double>::infinity(), maxIntensity = 0;

    explicit TrackDecoder(int n) : hueSlicer(BitScheme::Hue, n), intensitySlicer(BitScheme::Intensity, n) {}

    void push(const FlashSample& sample, const LookupTable& table) {
        for (int b : hueSlicer.push(sample)) {
            hueState = pushBit(hueState, table, b);
            hueBits.push_back(b);
            (b ? sawRed : sawBlue) = true;
        }
        for (int b : intensitySlicer.push(sample)) {
            intensityState = pushBit(intensityState, table, b);
            intensityBits.push_back(b);
        }
        minIntensity = std::min(minIntensity, sample.intensity);
        maxIntensity = std::max(maxIntensity, sample.intensity);
    }

    bool hueEvidence() const { return sawRed && sawBlue; }
    bool intensityEvidence() const { return maxIntensity > 0 && (maxIntensity - minIntensity) >= kIntensityContrast * maxIntensity; }

    std::optional<CodeId> identifier() const {
        if (hueEvidence() && hueState.status == DecodeStatus::LockedOn) return hueState.identifier;
        if (intensityEvidence() && intensityState.status == DecodeStatus::LockedOn) return intensityState.identifier;
        return std::nullopt;
    }
};

}  // namespace detail

struct RunOptions {
    bool debugTruth = false;
    std::vector<SampleTrace>* traces = nullptr;  // receives per-track samples when set
};

/// Full pipeline: channel -> frames -> detection/association -> bits -> IDs -> pose.
inline ScenarioReport runScenario(const ScenarioConfig& cfg, const RunOptions& options = {}) {
    ScenarioReport report;
    report.seed = cfg.seed;
    report.bits = cfg.bits;
    report.mode = cfg.mode;

    const CodeSet codes = generateCodebook(cfg.bits, cfg.mode);
    const auto& sensor = cfg.camera.sensor;
    const auto& cam = cfg.camera.intrinsics;
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> unit(0.0, 1.0);

    // Identifier assignment and emitters.
    std::vector<CodeId> ids;
    if (!cfg.flashers.empty()) {
        if (cfg.flashers.front().id) {
            for (const auto& f : cfg.flashers) ids.push_back(*f.id);
        } else {
            std::vector<Point3> pts;
            for (const auto& f : cfg.flashers) pts.push_back({f.position.x(), f.position.y(), f.position.z()});
            ids = assignIds(pts, cfg.visibilityRadius, codes.book);
        }
    }
    std::vector<EmitterState> emitters;
    std::map<CodeId, std::size_t> flasherOfId;
    for (std::size_t i = 0; i < cfg.flashers.size(); ++i) {
        const auto& f = cfg.flashers[i];
        emitters.push_back(EmitterState{codes.book.word(ids[i]), f.bitPeriod, ClockModel{f.clockPpm, f.phase, 0}, PowerState::Active});
        flasherOfId[ids[i]] = i;
        FlasherReport fr;
        fr.index = i;
        fr.id = ids[i];
        fr.word = codes.book.word(ids[i]).toString();
        fr.scheme = detail::schemeName(f.scheme);
        report.flashers.push_back(fr);
        if (options.debugTruth) report.truthPositions.push_back(f.position);
    }
    ClockModel tracker{cfg.camera.clockPpm, 0, 0};

    auto desyncAt = [&](double t) {
        double lo = tracker.error(t), hi = lo;
        for (const auto& e : emitters) {
            lo = std::min(lo, e.clock.error(t));
            hi = std::max(hi, e.clock.error(t));
        }
        return hi - lo;
    };

    TrackSet tracks;
    std::map<std::uint64_t, detail::TrackDecoder> decoders;
    std::vector<std::vector<std::int64_t>> sampledIndex(cfg.flashers.size());
    std::vector<std::optional<std::int64_t>> firstSeen(cfg.flashers.size());
    std::vector<std::size_t> lockedFrames(cfg.flashers.size(), 0), correctFrames(cfg.flashers.size(), 0);
    std::vector<std::size_t> flips(cfg.flashers.size(), 0);
    constexpr auto kNoFlasher = static_cast<std::size_t>(-1);
    // Classified bits against sampled truth, using the decoder matching the flasher's scheme.
    auto tallyFlips = [&](const detail::TrackDecoder& dec) {
        for (std::size_t k = 0; k < dec.truthBits.size(); ++k) {
            const auto src = dec.truthFlasher[k];
            if (src == kNoFlasher) continue;
            const auto& bits = cfg.flashers[src].scheme == BitScheme::Hue ? dec.hueBits : dec.intensityBits;
            if (k < bits.size() && bits[k] != dec.truthBits[k]) ++flips[src];
        }
    };
    std::int64_t nextHeartbeat = 1;
    double sumRot = 0, sumTrans = 0;

    for (std::int64_t f = 0; static_cast<double>(f) / sensor.fps < cfg.duration; ++f) {
        const double frameStartLocal = sensor.sampleTime(f, 0.0);
        const double frameTrue = tracker.trueTime(frameStartLocal);

        // Heartbeats due before this frame.
        if (cfg.heartbeat.enabled) {
            while (static_cast<double>(nextHeartbeat) * cfg.heartbeat.period <= frameTrue) {
                const double t = static_cast<double>(nextHeartbeat++) * cfg.heartbeat.period;
                report.maxDesync = std::max(report.maxDesync, desyncAt(t));
                tracker = applyHeartbeat(tracker, t);
                report.heartbeats.push_back({t, "tracker"});
                for (std::size_t i = 0; i < emitters.size(); ++i) {
                    emitters[i] = receiveHeartbeat(emitters[i], t);
                    report.heartbeats.push_back({t, "flasher-" + std::to_string(i)});
                }
            }
            for (auto& e : emitters) e = updatePower(e, frameTrue, cfg.heartbeat.timeout);
        }
        report.maxDesync = std::max(report.maxDesync, desyncAt(frameTrue));

        // Render the frame.
        const Pose framePose = poseAt(cfg.trajectory, frameTrue);
        Frame frame(cam.rows, cam.cols);
        std::vector<double> strongest(frame.intensity.size(), 0.0);
        struct Truth {
            std::size_t flasher;
            Pixel pixel;
            int bit;
            std::int64_t bitIndex;
        };
        std::vector<Truth> visible;
        for (std::size_t i = 0; i < emitters.size(); ++i) {
            const auto& e = emitters[i];
            if (e.power != PowerState::Active) continue;
            const Vec3 cpt = framePose.apply(cfg.flashers[i].position);
            if (!(cpt.z() > 0)) continue;
            const Pixel rowGuess = project(cam, framePose, cfg.flashers[i].position);
            const double sampleLocal = sensor.sampleTime(f, std::clamp(rowGuess.row, 0.0, double(cam.rows - 1)));
            const double sampleTrue = tracker.trueTime(sampleLocal);
            const Pose pose = poseAt(cfg.trajectory, sampleTrue);
            const Vec3 inCam = pose.apply(cfg.flashers[i].position);
            if (!(inCam.z() > 0)) continue;
            Pixel px = project(cam, pose, cfg.flashers[i].position);
            if (cfg.noise.pixelSigma > 0) {
                px.row += cfg.noise.pixelSigma * unit(rng);
                px.col += cfg.noise.pixelSigma * unit(rng);
            }
            if (!inImage(cam, px)) continue;
            const auto index = e.bitIndexAt(e.clock.localTime(sampleTrue));
            const int bit = e.bitAt(index);
            const double falloff = 1.0 / inCam.squaredNorm();
            double flux, hue;
            if (cfg.flashers[i].scheme == BitScheme::Intensity) {
                flux = (bit ? cfg.render.highLevel : cfg.render.lowLevel) * falloff;
                if (cfg.noise.intensitySigma > 0) flux += cfg.noise.intensitySigma * unit(rng);
                hue = kHueOne;
            } else {
                flux = cfg.render.hueLevel * falloff;
                hue = bit ? kHueOne : kHueZero;
                if (cfg.noise.hueSigma > 0) hue = std::fmod(hue + cfg.noise.hueSigma * unit(rng) + 720.0, 360.0);
            }
            sampledIndex[i].push_back(index);
            if (flux <= 0) continue;
            detail::splat(frame, strongest, px.row, px.col, flux, hue);
            visible.push_back({i, px, bit, index});
        }

        // Detection and association.
        const auto detections = detectFlashes(frame, cfg.render.detectionThreshold, cfg.render.nmsRadius);
        const auto assoc = tracks.associate(detections, cfg.render.gatingRadius, frameStartLocal);
        for (auto id : assoc.closedTracks) {
            if (auto it = decoders.find(id); it != decoders.end()) {
                tallyFlips(it->second);
                decoders.erase(it);
            }
        }

        FrameReport fr;
        fr.frame = f;
        fr.time = frameStartLocal;
        fr.detections = detections.size();
        std::vector<Correspondence> corr;
        std::map<CodeId, int> claims;
        std::vector<std::pair<CodeId, Pixel>> decodedHere;
        for (std::size_t d = 0; d < detections.size(); ++d) {
            const auto& trace = tracks.tracks[assoc.trackOfDetection[d]];
            auto& dec = decoders.try_emplace(trace.trackId, cfg.bits).first->second;
            const auto& sample = trace.samples.back();
            dec.truthBits.push_back(0);
            dec.truthFlasher.push_back(kNoFlasher);
            dec.push(sample, codes.table);

            // Ground truth: nearest rendered flasher.
            std::optional<std::size_t> source;
            double best = 2.0;
            for (const auto& v : visible) {
                const double dist = distance(v.pixel, detections[d].centroid);
                if (dist < best) {
                    best = dist;
                    source = v.flasher;
                    dec.truthBits.back() = v.bit;
                }
            }
            dec.truthFlasher.back() = source ? *source : kNoFlasher;
            if (source && !firstSeen[*source]) firstSeen[*source] = f;

            const auto id = dec.identifier();
            if (!id) continue;
            fr.decoded.push_back({trace.trackId, *id});
            ++claims[*id];
            decodedHere.emplace_back(*id, detections[d].centroid);
            if (source) {
                auto& rep = report.flashers[*source];
                ++lockedFrames[*source];
                if (*id == rep.id) {
                    ++correctFrames[*source];
                    if (!rep.locked) {
                        rep.locked = true;
                        rep.lockOnFrame = f;
                        rep.lockOnTime = frameStartLocal - sensor.sampleTime(*firstSeen[*source], 0.0);
                    }
                }
            }
        }
        for (const auto& [id, px] : decodedHere) {
            if (claims[id] != 1) continue;
            auto it = flasherOfId.find(id);
            if (it == flasherOfId.end()) continue;
            corr.push_back({cfg.flashers[it->second].position, px});
        }

        if (corr.size() >= 4) {
            try {
                const Pose est = solvePnP(cam, corr);
                fr.pose = est;
                fr.poseError = PoseError{rotationError(est.rotation, framePose.rotation), translationError(est, framePose)};
                sumRot += fr.poseError->rotation * fr.poseError->rotation;
                sumTrans += fr.poseError->translation * fr.poseError->translation;
                ++report.framesWithPose;
            } catch (const DegenerateConfigurationError&) {
                fr.degenerate = true;
            }
        }
        if (options.debugTruth) fr.truthPose = framePose;
        report.frames.push_back(std::move(fr));
    }

    for (const auto& [id, dec] : decoders) tallyFlips(dec);
    if (report.framesWithPose > 0) {
        const double n = static_cast<double>(report.framesWithPose);
        report.poseRmse = PoseError{std::sqrt(sumRot / n), std::sqrt(sumTrans / n)};
    }
    for (std::size_t i = 0; i < report.flashers.size(); ++i) {
        auto& rep = report.flashers[i];
        rep.idAccuracy = lockedFrames[i] ? static_cast<double>(correctFrames[i]) / static_cast<double>(lockedFrames[i]) : 0.0;
        std::vector<ChannelSample> seq;
        for (auto idx : sampledIndex[i]) seq.push_back(ChannelSample{0, 0, 0, idx, 0});
        const auto drift = countDrift(seq);
        rep.insertions = drift.insertions;
        rep.deletions = drift.deletions;
        rep.flips = flips[i];
        report.flashersIdentified += rep.locked;
    }
    if (options.traces) *options.traces = tracks.tracks;
    return report;
}

namespace detail {

inline json poseToJson(const Pose& p) {
    json r = json::array(), t = json::array();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r.push_back(p.rotation(i, j));
    for (int i = 0; i < 3; ++i) t.push_back(p.translation(i));
    return json{{"rotation", r}, {"translation_m", t}};
}

inline Pose poseFromJson(const json& j) {
    Pose p;
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) p.rotation(i, k) = j.at("rotation").at(static_cast<std::size_t>(3 * i + k)).get<double>();
    for (int i = 0; i < 3; ++i) p.translation(i) = j.at("translation_m").at(static_cast<std::size_t>(i)).get<double>();
    return p;
}

inline json errorToJson(const PoseError& e) { return json{{"rotation_rad", e.rotation}, {"translation_m", e.translation}}; }

inline PoseError errorFromJson(const json& j) {
    return PoseError{j.at("rotation_rad").get<double>(), j.at("translation_m").get<double>()};
}

template <class T>
json optionalToJson(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

template <class T>
std::optional<T> optionalFromJson(const json& j) {
    return j.is_null() ? std::nullopt : std::optional<T>(j.get<T>());
}

}  // namespace detail

inline json reportToJson(const ScenarioReport& r) {
    using namespace detail;
    json flashers = json::array();
    for (const auto& f : r.flashers) {
        flashers.push_back({{"index", f.index},
                            {"id", f.id},
                            {"word", f.word},
                            {"scheme", f.scheme},
                            {"locked", f.locked},
                            {"lock_on_time_s", optionalToJson(f.lockOnTime)},
                            {"lock_on_frame", optionalToJson(f.lockOnFrame)},
                            {"id_accuracy", f.idAccuracy},
                            {"insertions", f.insertions},
                            {"deletions", f.deletions},
                            {"flips", f.flips}});
    }
    json frames = json::array();
    for (const auto& f : r.frames) {
        json decoded = json::array();
        for (const auto& d : f.decoded) decoded.push_back({{"track", d.track}, {"id", d.id}});
        json fj{{"frame", f.frame},
                {"t_s", f.time},
                {"detections", f.detections},
                {"decoded", decoded},
                {"pose", f.pose ? poseToJson(*f.pose) : json(nullptr)},
                {"degenerate", f.degenerate},
                {"pose_error", f.poseError ? errorToJson(*f.poseError) : json(nullptr)}};
        if (f.truthPose) fj["truth_pose"] = poseToJson(*f.truthPose);
        frames.push_back(std::move(fj));
    }
    json beats = json::array();
    for (const auto& h : r.heartbeats) beats.push_back({{"t_s", h.time}, {"unit_id", h.unit}});
    json out{{"seed", r.seed},
             {"codebook", {{"n", r.bits}, {"mode", toString(r.mode)}}},
             {"flashers", flashers},
             {"frames", frames},
             {"heartbeats", beats},
             {"summary",
              {{"pose_rmse", r.poseRmse ? errorToJson(*r.poseRmse) : json(nullptr)},
               {"max_desync_s", r.maxDesync},
               {"frames_with_pose", r.framesWithPose},
               {"flashers_identified", r.flashersIdentified}}}};
    if (!r.truthPositions.empty()) {
        json pts = json::array();
        for (const auto& p : r.truthPositions) pts.push_back({p.x(), p.y(), p.z()});
        out["truth"] = {{"flasher_positions_m", pts}};
    }
    return out;
}

inline ScenarioReport reportFromJson(const json& j) {
    using namespace detail;
    try {
        ScenarioReport r;
        r.seed = j.at("seed").get<std::uint64_t>();
        r.bits = j.at("codebook").at("n").get<int>();
        r.mode = parseCodebookMode(j.at("codebook").at("mode").get<std::string>());
        for (const auto& f : j.at("flashers")) {
            FlasherReport fr;
            fr.index = f.at("index").get<std::size_t>();
            fr.id = f.at("id").get<CodeId>();
            fr.word = f.at("word").get<std::string>();
            fr.scheme = f.at("scheme").get<std::string>();
            fr.locked = f.at("locked").get<bool>();
            fr.lockOnTime = optionalFromJson<double>(f.at("lock_on_time_s"));
            fr.lockOnFrame = optionalFromJson<std::int64_t>(f.at("lock_on_frame"));
            fr.idAccuracy = f.at("id_accuracy").get<double>();
            fr.insertions = f.at("insertions").get<std::size_t>();
            fr.deletions = f.at("deletions").get<std::size_t>();
            fr.flips = f.at("flips").get<std::size_t>();
            r.flashers.push_back(fr);
        }
        for (const auto& f : j.at("frames")) {
            FrameReport fr;
            fr.frame = f.at("frame").get<std::int64_t>();
            fr.time = f.at("t_s").get<double>();
            fr.detections = f.at("detections").get<std::size_t>();
            for (const auto& d : f.at("decoded")) fr.decoded.push_back({d.at("track").get<std::uint64_t>(), d.at("id").get<CodeId>()});
            if (!f.at("pose").is_null()) fr.pose = poseFromJson(f.at("pose"));
            fr.degenerate = f.at("degenerate").get<bool>();
            if (!f.at("pose_error").is_null()) fr.poseError = errorFromJson(f.at("pose_error"));
            if (f.contains("truth_pose")) fr.truthPose = poseFromJson(f.at("truth_pose"));
            r.frames.push_back(std::move(fr));
        }
        for (const auto& h : j.at("heartbeats")) r.heartbeats.push_back({h.at("t_s").get<double>(), h.at("unit_id").get<std::string>()});
        const auto& s = j.at("summary");
        if (!s.at("pose_rmse").is_null()) r.poseRmse = errorFromJson(s.at("pose_rmse"));
        r.maxDesync = s.at("max_desync_s").get<double>();
        r.framesWithPose = s.at("frames_with_pose").get<std::size_t>();
        r.flashersIdentified = s.at("flashers_identified").get<std::size_t>();
        if (j.contains("truth"))
            for (const auto& p : j.at("truth").at("flasher_positions_m"))
                r.truthPositions.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("report: ") + e.what());
    }
}

}  // namespace cyclight
