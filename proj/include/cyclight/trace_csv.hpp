#pragma once

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cyclight/error.hpp"
#include "cyclight/signal.hpp"

namespace cyclight {

inline constexpr const char* kTraceHeader = "track_id,t,intensity,hue,row,col";

inline void writeTraces(std::ostream& out, const std::vector<SampleTrace>& traces) {
    out << kTraceHeader << '\n';
    std::ostringstream line;
    line.precision(17);
    for (const auto& trace : traces) {
        for (const auto& s : trace.samples) {
            line.str({});
            line << trace.trackId << ',' << s.timestamp << ',' << s.intensity << ',' << s.hue << ',' << s.pixel.row << ','
                 << s.pixel.col << '\n';
            out << line.str();
        }
    }
}

namespace detail {

inline double parseField(const std::string& text, std::size_t lineNo) {
    double v = 0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc{} || ptr != end) throw FormatError("trace line " + std::to_string(lineNo) + ": bad number '" + text + "'");
    return v;
}

}  // namespace detail

/// Traces keyed by track_id, in order of first appearance.
/// Samples must be strictly increasing in time within a track.
inline std::vector<SampleTrace> readTraces(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("trace file is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kTraceHeader) throw FormatError(std::string("trace header must be '") + kTraceHeader + "'");

    std::vector<SampleTrace> traces;
    std::map<std::uint64_t, std::size_t> slot;
    std::size_t lineNo = 1;
    while (std::getline(in, line)) {
        ++lineNo;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
        if (fields.size() != 6) throw FormatError("trace line " + std::to_string(lineNo) + ": expected 6 columns");
        std::uint64_t id = 0;
        auto [ptr, ec] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), id);
        if (ec != std::errc{} || ptr != fields[0].data() + fields[0].size())
            throw FormatError("trace line " + std::to_string(lineNo) + ": bad track_id '" + fields[0] + "'");
        FlashSample s{detail::parseField(fields[1], lineNo), detail::parseField(fields[2], lineNo),
                      detail::parseField(fields[3], lineNo),
                      {detail::parseField(fields[4], lineNo), detail::parseField(fields[5], lineNo)}};
        auto [it, fresh] = slot.try_emplace(id, traces.size());
        if (fresh) traces.push_back(SampleTrace{id, {}, 0, false});
        auto& trace = traces[it->second];
        if (!trace.samples.empty() && !(s.timestamp > trace.samples.back().timestamp))
            throw FormatError("trace line " + std::to_string(lineNo) + ": timestamps must increase within a track");
        trace.samples.push_back(s);
    }
    return traces;
}

inline std::vector<SampleTrace> loadTraces(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open trace file " + path);
    return readTraces(in);
}

}  // namespace cyclight
