#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hypercl/error.hpp"
#include "hypercl/losses.hpp"

namespace hypercl {

// C-STS JSONL: {"sentence1", "sentence2", "condition", "label", "pair_id"} per line.

inline std::vector<CstsQuadruplet> read_csts_jsonl(std::istream& is, const std::string& source = "<stream>") {
    std::vector<CstsQuadruplet> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto row = nlohmann::json::parse(line);
            CstsQuadruplet q;
            q.sentence1 = row.at("sentence1").get<std::string>();
            q.sentence2 = row.at("sentence2").get<std::string>();
            q.condition = row.at("condition").get<std::string>();
            q.label = row.at("label").get<double>();
            q.pair_id = row.at("pair_id").get<std::int64_t>();
            out.push_back(std::move(q));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(source + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

inline std::vector<CstsQuadruplet> read_csts_jsonl(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open C-STS file: " + path);
    return read_csts_jsonl(is, path);
}

inline void write_csts_jsonl(std::span<const CstsQuadruplet> items, std::ostream& os) {
    for (const auto& q : items) {
        nlohmann::json row = {{"sentence1", q.sentence1},
                              {"sentence2", q.sentence2},
                              {"condition", q.condition},
                              {"label", q.label},
                              {"pair_id", q.pair_id}};
        os << row.dump() << '\n';
    }
}

inline void write_csts_jsonl(std::span<const CstsQuadruplet> items, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open for writing: " + path);
    write_csts_jsonl(items, os);
}

// KG triples: "head<TAB>relation<TAB>tail" per line.

inline std::vector<KgTriple> read_kg_tsv(std::istream& is, const std::string& source = "<stream>") {
    std::vector<KgTriple> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto a = line.find('\t');
        const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
        if (a == std::string::npos || b == std::string::npos || line.find('\t', b + 1) != std::string::npos) {
            throw FormatError(source + ":" + std::to_string(lineno) + ": expected head<TAB>relation<TAB>tail");
        }
        KgTriple t{line.substr(0, a), line.substr(a + 1, b - a - 1), line.substr(b + 1)};
        if (t.head.empty() || t.relation.empty() || t.tail.empty()) {
            throw FormatError(source + ":" + std::to_string(lineno) + ": empty field");
        }
        out.push_back(std::move(t));
    }
    return out;
}

inline std::vector<KgTriple> read_kg_tsv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open KG file: " + path);
    return read_kg_tsv(is, path);
}

inline void write_kg_tsv(std::span<const KgTriple> triples, std::ostream& os) {
    for (const auto& t : triples) os << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
}

inline void write_kg_tsv(std::span<const KgTriple> triples, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open for writing: " + path);
    write_kg_tsv(triples, os);
}

}  // namespace hypercl
