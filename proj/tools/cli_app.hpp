#pragma once

#include <cmath>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cyclight/cyclight.hpp"

namespace cyclight::cli {

using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitDomain = 2;

/// Integral values print without a fractional part ("10", not "10.0").
inline std::string formatNumber(double v) {
    if (std::isfinite(v) && std::floor(v) == v && std::fabs(v) < 1e15) return std::to_string(static_cast<long long>(v));
    return json(v).dump();
}

/// "4..21" or "12".
inline std::pair<int, int> parseBitRange(const std::string& text) {
    const auto dots = text.find("..");
    try {
        std::size_t used = 0;
        if (dots == std::string::npos) {
            const int n = std::stoi(text, &used);
            if (used != text.size()) throw std::invalid_argument(text);
            return {n, n};
        }
        const std::string a = text.substr(0, dots), b = text.substr(dots + 2);
        const int lo = std::stoi(a, &used);
        if (used != a.size()) throw std::invalid_argument(text);
        const int hi = std::stoi(b, &used);
        if (used != b.size()) throw std::invalid_argument(text);
        return {lo, hi};
    } catch (const std::logic_error&) {
        throw CLI::ValidationError("--bits", "expected N or LO..HI, got '" + text + "'");
    }
}

inline void writeFile(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write '" + path + "'");
    out << text;
    if (!out) throw FormatError("write failed for '" + path + "'");
}

struct Options {
    bool csv = false;
    int bits = 0;
    std::string mode = "robust";
    std::string out;
    std::string bitRange;
    unsigned jobs = 1;
    std::string book;
    CodeId id = 0;
    std::string stream;
    std::string trace;
    std::string scheme = "auto";
    double deltaMax = 0;
    double rhoPpm = 0;
    double fps = 0;
    std::string scenario;
    bool debugTruth = false;
    std::string traceOut;
};

inline void codebookGen(const Options& o, std::ostream& out) {
    const CodeSet set = generateCodebook(o.bits, parseCodebookMode(o.mode));
    std::string text;
    if (o.csv) {
        std::ostringstream s;
        s << "id,word\n";
        for (std::size_t k = 0; k < set.book.size(); ++k) s << k + 1 << ',' << set.book.words[k].toString() << '\n';
        text = s.str();
    } else {
        text = codeSetToJson(set, defaultEncoding(o.bits)).dump() + "\n";
    }
    if (o.out.empty()) {
        out << text;
        return;
    }
    writeFile(o.out, text);
    out << json{{"n", o.bits}, {"mode", o.mode}, {"size", set.book.size()}, {"out", o.out}}.dump() << "\n";
}

inline void codebookReport(const Options& o, std::ostream& out) {
    const auto [lo, hi] = parseBitRange(o.bitRange);
    if (lo < 2 || hi > 24 || lo > hi) throw OutOfRangeError("--bits range must lie within 2..24");

    struct Sizes {
        int n;
        std::uint64_t initial;
        std::size_t robust;
    };
    auto work = [](int n) { return Sizes{n, necklaceCount(n) - 2, generateRobustCodebook(n).book.size()}; };
    std::vector<Sizes> sizes;
    if (o.jobs <= 1) {
        for (int n = lo; n <= hi; ++n) sizes.push_back(work(n));
    } else {
        // Largest n first; each book is independent, so order of completion does not matter.
        std::vector<int> order;
        for (int n = hi; n >= lo; --n) order.push_back(n);
        std::size_t next = 0;
        std::vector<std::pair<int, std::future<Sizes>>> running;
        std::vector<Sizes> done;
        while (next < order.size() || !running.empty()) {
            while (next < order.size() && running.size() < o.jobs) {
                running.emplace_back(order[next], std::async(std::launch::async, work, order[next]));
                ++next;
            }
            done.push_back(running.front().second.get());
            running.erase(running.begin());
        }
        std::sort(done.begin(), done.end(), [](const Sizes& a, const Sizes& b) { return a.n < b.n; });
        sizes = std::move(done);
    }

    std::vector<std::pair<int, std::size_t>> robustSizes;
    for (const auto& s : sizes) robustSizes.emplace_back(s.n, s.robust);
    const auto grid = lockOnTable(robustSizes);

    if (o.csv) {
        out << "n,initial,robust";
        for (int fps : kTradeoffFps) out << ",lockon_" << fps;
        out << "\n";
        for (std::size_t i = 0; i < sizes.size(); ++i) {
            out << sizes[i].n << ',' << sizes[i].initial << ',' << sizes[i].robust;
            for (const auto& cell : grid[i].cells) out << ',' << cell;
            out << "\n";
        }
        return;
    }
    json j;
    j["fps"] = kTradeoffFps;
    auto counts = json::array();
    auto tradeoff = json::array();
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        counts.push_back({{"n", sizes[i].n}, {"initial", sizes[i].initial}, {"robust", sizes[i].robust}});
        tradeoff.push_back({{"n", grid[i].bits}, {"size", grid[i].codebookSize}, {"lockon_s", grid[i].cells}});
    }
    j["sizes"] = std::move(counts);
    j["tradeoff"] = std::move(tradeoff);
    out << j.dump() << "\n";
}

inline void encodeCmd(const Options& o, std::ostream& out) {
    const CodeSet set = loadCodeSet(o.book);
    const BitWord w = encode(set.book, o.id);
    if (o.csv)
        out << "id,word\n" << o.id << ',' << w.toString() << "\n";
    else
        out << json{{"id", o.id}, {"word", w.toString()}}.dump() << "\n";
}

inline json idOrNull(const DecodeState& s) {
    return s.status == DecodeStatus::LockedOn ? json(s.identifier) : json(nullptr);
}

inline void decodeStream(const CodeSet& set, const std::string& bits, bool csv, std::ostream& out) {
    DecodeState state;
    std::vector<CodeId> votes;
    std::optional<std::size_t> lockBit;
    for (char c : bits) {
        if (c != '0' && c != '1') throw FormatError("invalid bit symbol '" + std::string(1, c) + "' in --stream");
        state = pushBit(state, set.table, c - '0');
        votes.push_back(state.lastVote);
        if (!lockBit && state.status == DecodeStatus::LockedOn) lockBit = votes.size();
    }
    if (csv) {
        out << "bit,vote,locked_id\n";
        DecodeState replay;
        for (std::size_t i = 0; i < bits.size(); ++i) {
            replay = pushBit(replay, set.table, bits[i] - '0');
            out << i + 1 << ',' << replay.lastVote << ','
                << (replay.status == DecodeStatus::LockedOn ? replay.identifier : kUnknownId) << "\n";
        }
        return;
    }
    out << json{{"votes", votes},
                {"id", idOrNull(state)},
                {"lock_bit", lockBit ? json(*lockBit) : json(nullptr)}}
               .dump()
        << "\n";
}

inline void decodeTrace(const CodeSet& set, const std::string& path, const std::string& scheme, bool csv,
                        std::ostream& out) {
    const auto traces = loadTraces(path);
    struct Result {
        std::uint64_t track;
        std::size_t samples;
        std::string bits;
        std::optional<CodeId> id;
    };
    std::vector<Result> results;
    for (const auto& t : traces) {
        Result r{t.trackId, t.samples.size(), {}, std::nullopt};
        if (scheme == "auto") {
            detail::TrackDecoder dec(set.book.bits);
            for (const auto& s : t.samples) dec.push(s, set.table);
            r.id = dec.identifier();
            const bool hue = dec.hueEvidence() || !dec.intensityEvidence();
            for (int b : hue ? dec.hueBits : dec.intensityBits) r.bits += char('0' + b);
        } else {
            StreamingBitClassifier slicer(scheme == "hue" ? BitScheme::Hue : BitScheme::Intensity, set.book.bits);
            DecodeState state;
            for (const auto& s : t.samples)
                for (int b : slicer.push(s)) {
                    state = pushBit(state, set.table, b);
                    r.bits += char('0' + b);
                }
            if (state.status == DecodeStatus::LockedOn) r.id = state.identifier;
        }
        results.push_back(std::move(r));
    }
    if (csv) {
        out << "track_id,samples,bits,id\n";
        for (const auto& r : results)
            out << r.track << ',' << r.samples << ',' << r.bits << ',' << (r.id ? std::to_string(*r.id) : "") << "\n";
        return;
    }
    auto arr = json::array();
    for (const auto& r : results)
        arr.push_back({{"track", r.track},
                       {"samples", r.samples},
                       {"bits", r.bits},
                       {"id", r.id ? json(*r.id) : json(nullptr)}});
    out << json{{"tracks", std::move(arr)}}.dump() << "\n";
}

inline void simulateCmd(const Options& o, std::ostream& out) {
    const ScenarioConfig cfg = loadScenario(o.scenario);
    std::vector<SampleTrace> traces;
    RunOptions run;
    run.debugTruth = o.debugTruth;
    if (!o.traceOut.empty()) run.traces = &traces;
    const ScenarioReport report = runScenario(cfg, run);
    if (!o.traceOut.empty()) {
        std::ostringstream s;
        writeTraces(s, traces);
        writeFile(o.traceOut, s.str());
    }
    const json doc = reportToJson(report);
    const std::string text = doc.dump(2) + "\n";
    if (o.out.empty() && !o.csv) {
        out << text;
        return;
    }
    if (!o.out.empty()) writeFile(o.out, text);
    if (o.csv) {
        out << "index,id,word,scheme,locked,lock_on_s,id_accuracy,insertions,deletions,flips\n";
        for (const auto& f : report.flashers)
            out << f.index << ',' << f.id << ',' << f.word << ',' << f.scheme << ',' << (f.locked ? 1 : 0)
                << ',' << (f.lockOnTime ? json(*f.lockOnTime).dump() : "") << ',' << json(f.idAccuracy).dump() << ','
                << f.insertions << ',' << f.deletions << ',' << f.flips << "\n";
        return;
    }
    out << json{{"out", o.out},
                {"frames", report.frames.size()},
                {"flashers_identified", report.flashersIdentified},
                {"frames_with_pose", report.framesWithPose},
                {"pose_rmse", doc["summary"]["pose_rmse"]},
                {"max_desync_s", report.maxDesync}}
               .dump()
        << "\n";
}

/// Runs one command line. Returns the process exit code.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Cyclic coded-light identification: code-books, decoding, channel and pose simulation"};
    app.require_subcommand(1);
    Options o;

    auto* codebook = app.add_subcommand("codebook", "Generate or summarize code-books");
    codebook->require_subcommand(1);
    auto* gen = codebook->add_subcommand("gen", "Generate one code-book with its lookup table");
    gen->add_option("--bits", o.bits, "Word length n")->required()->check(CLI::Range(2, 24));
    gen->add_option("--mode", o.mode, "initial|robust")->check(CLI::IsMember({"initial", "robust"}));
    gen->add_option("--out", o.out, "Output file (stdout when omitted)");
    gen->add_flag("--csv", o.csv, "Word list as CSV");

    auto* report = codebook->add_subcommand("report", "Code-book sizes and lock-on tradeoff grid");
    report->add_option("--bits", o.bitRange, "N or LO..HI")->required();
    report->add_option("--jobs", o.jobs, "Parallel generators")->check(CLI::Range(1u, 64u));
    report->add_flag("--csv", o.csv);

    auto* enc = app.add_subcommand("encode", "Word transmitted by an identifier");
    enc->add_option("--book", o.book, "Code-book JSON")->required();
    enc->add_option("--id", o.id, "Identifier (1-based)")->required();
    enc->add_flag("--csv", o.csv);

    auto* dec = app.add_subcommand("decode", "Decode a bit stream or a sample trace");
    dec->add_option("--book", o.book, "Code-book JSON")->required();
    auto* streamOpt = dec->add_option("--stream", o.stream, "Bit string, e.g. 1101110111");
    auto* traceOpt = dec->add_option("--trace", o.trace, "Trace CSV");
    streamOpt->excludes(traceOpt);
    dec->add_option("--scheme", o.scheme, "Trace bit scheme")->check(CLI::IsMember({"auto", "hue", "intensity"}));
    dec->add_flag("--csv", o.csv);

    auto* sync = app.add_subcommand("sync-interval", "Heartbeat period for a desync budget");
    sync->add_option("--delta-max", o.deltaMax, "Allowed desync, seconds")->required();
    sync->add_option("--rho-ppm", o.rhoPpm, "Maximum drift, ppm")->required();
    sync->add_flag("--csv", o.csv);

    auto* lock = app.add_subcommand("lockon", "Lock-on time in seconds (truncated to hundredths)");
    lock->add_option("--bits", o.bits, "Word length n")->required()->check(CLI::Range(1, 63));
    lock->add_option("--fps", o.fps, "Frame rate")->required();
    lock->add_flag("--csv", o.csv);

    auto* sim = app.add_subcommand("simulate", "Run a scenario end to end");
    sim->add_option("--scenario", o.scenario, "Scenario JSON")->required();
    sim->add_option("--out", o.out, "Report file (stdout when omitted)");
    sim->add_flag("--debug-truth", o.debugTruth, "Include ground-truth positions in the report");
    sim->add_option("--trace-out", o.traceOut, "Write per-track samples as CSV");
    sim->add_flag("--csv", o.csv, "Per-flasher summary as CSV");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
        if (*dec && !*streamOpt && !*traceOpt) throw CLI::RequiredError("--stream or --trace");
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (*gen) {
            codebookGen(o, out);
        } else if (*report) {
            codebookReport(o, out);
        } else if (*enc) {
            encodeCmd(o, out);
        } else if (*dec) {
            const CodeSet set = loadCodeSet(o.book);
            if (*streamOpt)
                decodeStream(set, o.stream, o.csv, out);
            else
                decodeTrace(set, o.trace, o.scheme, o.csv, out);
        } else if (*sync) {
            out << formatNumber(syncInterval(o.deltaMax, o.rhoPpm)) << "\n";
        } else if (*lock) {
            lockOnTime(o.bits, o.fps);  // argument checks
            out << formatHundredths(lockOnHundredthsTruncated(o.bits, o.fps)) << "\n";
        } else if (*sim) {
            simulateCmd(o, out);
        }
    } catch (const CLI::ValidationError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitDomain;
    }
    return kExitOk;
}

}  // namespace cyclight::cli
