#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtot/backend.hpp"
#include "dtot/errors.hpp"
#include "dtot/promptgen.hpp"

namespace dtot {

/// One embedded development-set entry available for demonstration retrieval.
struct DevEntry {
    std::string id;
    std::string statement;
    DemoLabel label = DemoLabel::Benign;
    std::optional<std::string> rationale;
    std::vector<double> embedding;
};

struct DevSet {
    std::vector<DevEntry> entries;

    size_t dimension() const { return entries.empty() ? 0 : entries.front().embedding.size(); }
};

/// Unembedded row used to build a DevSet.
struct DevSeed {
    std::string id;
    std::string statement;
    DemoLabel label = DemoLabel::Benign;
    std::optional<std::string> rationale;
};

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw ValidationError("cosine_similarity: dimension mismatch (" +
                              std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0)
        throw DomainError("cosine_similarity is undefined for a zero vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Embeds every row. min_per_class > 0 additionally enforces that each class
/// can serve that many demonstrations.
inline DevSet build_devset(const std::vector<DevSeed>& rows, Embedder& embedder,
                           size_t min_per_class = 0) {
    DevSet set;
    size_t toxic = 0, benign = 0;
    for (const auto& row : rows) {
        DevEntry e;
        e.id = row.id;
        e.statement = row.statement;
        e.label = row.label;
        e.rationale = row.rationale;
        e.embedding = embedder.embed(row.statement);
        (row.label == DemoLabel::Toxic ? toxic : benign)++;
        set.entries.push_back(std::move(e));
    }
    if (min_per_class > 0 && (toxic < min_per_class || benign < min_per_class))
        throw ValidationError("development set is starved: need at least " +
                              std::to_string(min_per_class) + " entries per class, have " +
                              std::to_string(toxic) + " toxic / " + std::to_string(benign) +
                              " benign");
    return set;
}

inline void save_devset(const DevSet& set, std::ostream& out) {
    for (const auto& e : set.entries) {
        nlohmann::ordered_json j;
        j["id"] = e.id;
        j["statement"] = e.statement;
        j["label"] = e.label == DemoLabel::Toxic ? "toxic" : "benign";
        if (e.rationale)
            j["rationale"] = *e.rationale;
        else
            j["rationale"] = nullptr;
        j["embedding"] = e.embedding;
        out << j.dump() << "\n";
    }
}

inline DevSet load_devset(std::istream& in) {
    DevSet set;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("devset line " + std::to_string(lineno) + ": " + e.what());
        }
        DevEntry e;
        e.id = j.at("id").get<std::string>();
        e.statement = j.at("statement").get<std::string>();
        std::string label = j.at("label").get<std::string>();
        if (label == "toxic")
            e.label = DemoLabel::Toxic;
        else if (label == "benign")
            e.label = DemoLabel::Benign;
        else
            throw ParseError("devset line " + std::to_string(lineno) +
                             ": label must be 'toxic' or 'benign'");
        if (j.contains("rationale") && !j.at("rationale").is_null())
            e.rationale = j.at("rationale").get<std::string>();
        e.embedding = j.at("embedding").get<std::vector<double>>();
        if (!set.entries.empty() && e.embedding.size() != set.dimension())
            throw ValidationError("devset line " + std::to_string(lineno) +
                                  ": embedding dimension differs from earlier entries");
        set.entries.push_back(std::move(e));
    }
    return set;
}

inline DevSet load_devset_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open devset file: " + path);
    return load_devset(in);
}

/// The K most similar toxic and K most similar benign entries, by cosine
/// similarity to the input statement. Ties break on entry id ascending; an
/// entry whose text equals the input statement exactly is excluded. The
/// returned 2K demonstrations are merged in descending similarity, toxic
/// before benign at equal similarity.
///
/// with_rationales selects only rationale-bearing entries (skipped ids are
/// reported through `warnings`) and keeps rationales on the result; otherwise
/// rationales are stripped.
inline std::vector<Demonstration> select_demonstrations(const std::string& statement,
                                                        const DevSet& devset,
                                                        Embedder& embedder, int k,
                                                        bool with_rationales = false,
                                                        std::vector<std::string>* warnings = nullptr) {
    if (k < 1) throw ValidationError("demonstration count K must be >= 1");
    if (devset.entries.empty()) throw ValidationError("development set is empty");
    std::vector<double> query = embedder.embed(statement);
    if (query.size() != devset.dimension())
        throw ValidationError("embedder dimension " + std::to_string(query.size()) +
                              " does not match devset dimension " +
                              std::to_string(devset.dimension()));

    struct Scored {
        double sim;
        const DevEntry* entry;
    };
    std::vector<Scored> toxic, benign;
    for (const auto& e : devset.entries) {
        if (e.statement == statement) continue;  // self-exclusion, exact text match
        if (with_rationales && !e.rationale) {
            if (warnings)
                warnings->push_back("devset entry '" + e.id +
                                    "' has no rationale and was skipped");
            continue;
        }
        Scored s{cosine_similarity(query, e.embedding), &e};
        (e.label == DemoLabel::Toxic ? toxic : benign).push_back(s);
    }
    auto by_sim_then_id = [](const Scored& a, const Scored& b) {
        if (a.sim != b.sim) return a.sim > b.sim;
        return a.entry->id < b.entry->id;
    };
    std::sort(toxic.begin(), toxic.end(), by_sim_then_id);
    std::sort(benign.begin(), benign.end(), by_sim_then_id);
    if (toxic.size() < static_cast<size_t>(k) || benign.size() < static_cast<size_t>(k))
        throw ValidationError("development set is starved after exclusions: need " +
                              std::to_string(k) + " per class, have " +
                              std::to_string(toxic.size()) + " toxic / " +
                              std::to_string(benign.size()) + " benign eligible");

    std::vector<Scored> merged;
    merged.insert(merged.end(), toxic.begin(), toxic.begin() + k);
    merged.insert(merged.end(), benign.begin(), benign.begin() + k);
    std::sort(merged.begin(), merged.end(), [](const Scored& a, const Scored& b) {
        if (a.sim != b.sim) return a.sim > b.sim;
        if (a.entry->label != b.entry->label) return a.entry->label == DemoLabel::Toxic;
        return a.entry->id < b.entry->id;
    });

    std::vector<Demonstration> out;
    out.reserve(merged.size());
    for (const auto& s : merged) {
        Demonstration d;
        d.statement = s.entry->statement;
        d.label = s.entry->label;
        if (with_rationales) d.rationale = s.entry->rationale;
        out.push_back(std::move(d));
    }
    return out;
}

} // namespace dtot
