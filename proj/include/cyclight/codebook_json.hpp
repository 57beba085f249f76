#pragma once

#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "cyclight/codebook.hpp"

namespace cyclight {

enum class TableEncoding { Dense, Runs };

/// {n, mode, words: ["0111", ...], table: [...] | {encoding: "runs", size, runs: [[offset, length, id], ...]}}
///
/// Runs cover only nonzero stretches; every slot not covered is 0.
inline nlohmann::json codeSetToJson(const CodeSet& set, TableEncoding encoding) {
    nlohmann::json j;
    j["n"] = set.book.bits;
    j["mode"] = std::string(toString(set.book.mode));
    auto words = nlohmann::json::array();
    for (const auto& w : set.book.words) words.push_back(w.toString());
    j["words"] = std::move(words);

    const auto& entries = set.table.entries;
    if (encoding == TableEncoding::Dense) {
        j["table"] = entries;
        return j;
    }
    auto runs = nlohmann::json::array();
    for (std::size_t i = 0; i < entries.size();) {
        if (entries[i] == kUnknownId) {
            ++i;
            continue;
        }
        std::size_t k = i;
        while (k < entries.size() && entries[k] == entries[i]) ++k;
        runs.push_back({i, k - i, entries[i]});
        i = k;
    }
    j["table"] = {{"encoding", "runs"}, {"size", entries.size()}, {"runs", std::move(runs)}};
    return j;
}

inline TableEncoding defaultEncoding(int bits) { return bits <= 12 ? TableEncoding::Dense : TableEncoding::Runs; }

/// Parses and validates a serialized code-book. Throws FormatError on any inconsistency.
inline CodeSet codeSetFromJson(const nlohmann::json& j) {
    CodeSet set;
    try {
        set.book.bits = j.at("n").get<int>();
        set.book.mode = parseCodebookMode(j.at("mode").get<std::string>());
        set.table.bits = set.book.bits;
        set.table.mode = set.book.mode;
        const int n = set.book.bits;
        if (n < 2 || n > 24) throw FormatError("n = " + std::to_string(n) + " outside [2, 24]");

        std::set<std::uint64_t> seen;
        for (const auto& w : j.at("words")) {
            auto word = BitWord::fromString(w.get<std::string>());
            if (word.size() != n) throw FormatError("word '" + word.toString() + "' has wrong length");
            if (canonicalRotation(word) != word) throw FormatError("word '" + word.toString() + "' is not canonical");
            if (detail::isTrivial(static_cast<std::uint32_t>(word.value()), n))
                throw FormatError("trivial word '" + word.toString() + "'");
            if (!seen.insert(word.value()).second) throw FormatError("duplicate word '" + word.toString() + "'");
            set.book.words.push_back(word);
        }

        const std::size_t size = std::size_t{1} << (n + 1);
        const auto& table = j.at("table");
        if (table.is_array()) {
            set.table.entries = table.get<std::vector<CodeId>>();
        } else {
            if (table.at("encoding").get<std::string>() != "runs") throw FormatError("unknown table encoding");
            if (table.at("size").get<std::size_t>() != size) throw FormatError("table size mismatch");
            set.table.entries.assign(size, kUnknownId);
            for (const auto& run : table.at("runs")) {
                const auto offset = run.at(0).get<std::size_t>();
                const auto length = run.at(1).get<std::size_t>();
                const auto id = run.at(2).get<CodeId>();
                if (offset + length > size) throw FormatError("table run out of bounds");
                std::fill_n(set.table.entries.begin() + static_cast<std::ptrdiff_t>(offset), length, id);
            }
        }
        if (set.table.entries.size() != size)
            throw FormatError("table has " + std::to_string(set.table.entries.size()) + " entries, expected " +
                              std::to_string(size));
        for (CodeId id : set.table.entries)
            if (id > set.book.size()) throw FormatError("table references identifier " + std::to_string(id));
        for (std::size_t k = 0; k < set.book.size(); ++k)
            for (int i = 0; i < n; ++i)
                if (set.table.entries[set.book.words[k].rotated(i).value()] != k + 1)
                    throw FormatError("rotation of '" + set.book.words[k].toString() + "' not mapped to its identifier");
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("code-book JSON: ") + e.what());
    }
    return set;
}

inline CodeSet loadCodeSet(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open code-book file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("code-book '" + path + "': " + e.what());
    }
    return codeSetFromJson(j);
}

}  // namespace cyclight
