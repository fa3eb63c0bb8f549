#pragma once

#include <fstream>
#include <istream>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtot/backend.hpp"
#include "dtot/errors.hpp"
#include "dtot/util.hpp"

namespace dtot {

/// One canned exchange. statement_id "*" matches any id, which lets a single
/// scenario serve ad-hoc CLI invocations.
struct ScenarioEntry {
    std::string statement_id;
    std::string context_category;
    std::string variant;  // "detect" or "classify"
    std::string reply_text;
    std::map<std::string, double> logprob_table;  // continuation -> logprob
};

/// Deterministic offline backend replaying a scenario file. Lookups are pure
/// functions of the call key, so byte-identical reruns produce byte-identical
/// transcripts regardless of thread interleaving.
class ScriptedBackend : public Backend {
public:
    ScriptedBackend(BackendKind kind, std::vector<ScenarioEntry> entries) : kind_(kind) {
        for (auto& e : entries) {
            for (const auto& [cont, lp] : e.logprob_table) {
                if (lp > 0.0)
                    throw ValidationError("scenario logprob for '" + cont +
                                          "' is positive; log-probabilities must be <= 0");
            }
            Key key{e.statement_id, e.context_category, e.variant};
            if (!entries_.emplace(key, std::move(e)).second)
                throw ValidationError("duplicate scenario entry for (" + std::get<0>(key) +
                                      ", " + std::get<1>(key) + ", " + std::get<2>(key) + ")");
        }
    }

    static ScriptedBackend load(BackendKind kind, std::istream& in) {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("scenario file is not valid JSON: ") + e.what());
        }
        if (!doc.is_array()) throw ParseError("scenario file must be a JSON array of entries");
        std::vector<ScenarioEntry> entries;
        for (const auto& j : doc) {
            ScenarioEntry e;
            e.statement_id = j.at("statement_id").get<std::string>();
            e.context_category = j.at("context_category").get<std::string>();
            e.variant = j.at("variant").get<std::string>();
            if (e.variant != "detect" && e.variant != "classify")
                throw ParseError("scenario variant must be 'detect' or 'classify', got '" +
                                 e.variant + "'");
            e.reply_text = j.at("reply_text").get<std::string>();
            if (j.contains("logprob_table")) {
                for (const auto& [k, v] : j.at("logprob_table").items())
                    e.logprob_table[k] = v.get<double>();
            }
            entries.push_back(std::move(e));
        }
        return ScriptedBackend(kind, std::move(entries));
    }

    static ScriptedBackend load_file(BackendKind kind, const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ParseError("cannot open scenario file: " + path);
        return load(kind, in);
    }

    BackendKind kind() const override { return kind_; }

    ModelResponse complete(const CompletionCall& call) override {
        const ScenarioEntry& entry = lookup(call);
        return parse_response(entry.reply_text, kind_);
    }

    double sequence_logprob(const CompletionCall& call,
                            const std::string& continuation) override {
        if (kind_ == BackendKind::BlackBox)
            throw UnsupportedOperationError(
                "sequence_logprob is not available on a black-box backend");
        if (continuation.empty()) return 0.0;
        const ScenarioEntry& entry = lookup(call);
        auto it = entry.logprob_table.find(continuation);
        if (it == entry.logprob_table.end())
            throw ScenarioMissError("scenario entry (" + call.statement_id + ", " +
                                    call.context_category + ", " + variant_key(call.variant) +
                                    ") has no logprob for continuation '" + continuation + "'");
        return it->second;
    }

private:
    using Key = std::tuple<std::string, std::string, std::string>;

    const ScenarioEntry& lookup(const CompletionCall& call) const {
        Key exact{call.statement_id, call.context_category, variant_key(call.variant)};
        auto it = entries_.find(exact);
        if (it == entries_.end()) {
            Key wild{"*", call.context_category, variant_key(call.variant)};
            it = entries_.find(wild);
        }
        if (it == entries_.end())
            throw ScenarioMissError("no scenario entry for (" + call.statement_id + ", " +
                                    call.context_category + ", " + variant_key(call.variant) +
                                    ")");
        return it->second;
    }

    BackendKind kind_;
    std::map<Key, ScenarioEntry> entries_;
};

/// Seeded hash-projection embedder: deterministic, fixed dimension, no model.
/// Equal strings always map to equal vectors.
class HashEmbedder : public Embedder {
public:
    explicit HashEmbedder(size_t dimension, std::uint64_t seed = 0)
        : dimension_(dimension), seed_(seed) {
        if (dimension_ == 0) throw ValidationError("embedder dimension must be >= 1");
    }

    size_t dimension() const override { return dimension_; }

    std::vector<double> embed(const std::string& text) override {
        std::vector<double> v(dimension_);
        std::uint64_t base = fnv1a64(text) ^ seed_;
        for (size_t i = 0; i < dimension_; ++i) {
            std::uint64_t x = splitmix64(base + 0x9E3779B97F4A7C15ULL * (i + 1));
            // 53 high bits -> [0,1) -> [-1,1)
            double unit = static_cast<double>(x >> 11) * (1.0 / 9007199254740992.0);
            v[i] = 2.0 * unit - 1.0;
        }
        return v;
    }

private:
    size_t dimension_;
    std::uint64_t seed_;
};

} // namespace dtot
