#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtot/backend.hpp"
#include "dtot/engine.hpp"
#include "dtot/errors.hpp"
#include "dtot/util.hpp"

namespace dtot {

struct DatasetEntry {
    std::string id;
    std::string statement;
    int gold_label = 0;  // toxic = 1
    std::optional<int> toxicity_level;
};

struct LabeledDataset {
    std::vector<DatasetEntry> entries;
};

enum class DatasetFormat { Csv, Jsonl };

namespace detail {

/// Minimal RFC 4180 reader: quoted fields, "" escapes, quoted newlines.
inline std::vector<std::vector<std::string>> read_csv(std::istream& in) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool row_started = false;
    char c;
    while (in.get(c)) {
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field += '"';
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        switch (c) {
            case '"':
                quoted = true;
                row_started = true;
                break;
            case ',':
                row.push_back(field);
                field.clear();
                row_started = true;
                break;
            case '\r':
                break;
            case '\n':
                if (row_started || !field.empty() || !row.empty()) {
                    row.push_back(field);
                    rows.push_back(row);
                }
                row.clear();
                field.clear();
                row_started = false;
                break;
            default:
                field += c;
                row_started = true;
        }
    }
    if (row_started || !field.empty() || !row.empty()) {
        row.push_back(field);
        rows.push_back(row);
    }
    return rows;
}

inline int parse_label(const std::string& raw, size_t lineno) {
    std::string v = trim(raw);
    if (v == "0") return 0;
    if (v == "1") return 1;
    throw ValidationError("line " + std::to_string(lineno) + ": label must be 0 or 1, got '" +
                          raw + "'");
}

} // namespace detail

/// Loads `id,text,label[,level]` rows (CSV, optional header) or JSONL objects
/// with fields id/text/label[/level]. Errors carry line numbers.
inline LabeledDataset load_dataset(std::istream& in, DatasetFormat format) {
    LabeledDataset ds;
    std::set<std::string> ids;
    auto add_entry = [&](DatasetEntry e, size_t lineno) {
        if (e.id.empty())
            throw ValidationError("line " + std::to_string(lineno) + ": empty id");
        if (!ids.insert(e.id).second)
            throw ValidationError("line " + std::to_string(lineno) + ": duplicate id '" +
                                  e.id + "'");
        ds.entries.push_back(std::move(e));
    };

    if (format == DatasetFormat::Csv) {
        auto rows = detail::read_csv(in);
        for (size_t i = 0; i < rows.size(); ++i) {
            size_t lineno = i + 1;
            const auto& row = rows[i];
            if (i == 0 && row.size() >= 3 && trim(row[0]) == "id" && trim(row[1]) == "text")
                continue;  // header
            if (row.size() < 3 || row.size() > 4)
                throw ParseError("line " + std::to_string(lineno) +
                                 ": expected 3 or 4 columns (id,text,label[,level]), got " +
                                 std::to_string(row.size()));
            DatasetEntry e;
            e.id = trim(row[0]);
            e.statement = row[1];
            e.gold_label = detail::parse_label(row[2], lineno);
            if (row.size() == 4 && !trim(row[3]).empty()) {
                try {
                    e.toxicity_level = std::stoi(trim(row[3]));
                } catch (const std::exception&) {
                    throw ParseError("line " + std::to_string(lineno) +
                                     ": level must be an integer, got '" + row[3] + "'");
                }
            }
            add_entry(std::move(e), lineno);
        }
        return ds;
    }

    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
        }
        DatasetEntry e;
        e.id = j.at("id").is_string() ? j.at("id").get<std::string>()
                                      : j.at("id").dump();
        e.statement = j.at("text").get<std::string>();
        if (j.at("label").is_number_integer()) {
            int label = j.at("label").get<int>();
            if (label != 0 && label != 1)
                throw ValidationError("line " + std::to_string(lineno) +
                                      ": label must be 0 or 1");
            e.gold_label = label;
        } else {
            e.gold_label = detail::parse_label(j.at("label").get<std::string>(), lineno);
        }
        if (j.contains("level") && !j.at("level").is_null())
            e.toxicity_level = j.at("level").get<int>();
        add_entry(std::move(e), lineno);
    }
    return ds;
}

inline LabeledDataset load_dataset_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open dataset file: " + path);
    bool jsonl = path.size() >= 6 && path.compare(path.size() - 6, 6, ".jsonl") == 0;
    return load_dataset(in, jsonl ? DatasetFormat::Jsonl : DatasetFormat::Csv);
}

/// Drops entries at the ambiguous toxicity level (default 3). Every entry
/// must carry a level.
inline LabeledDataset filter_ambiguous(const LabeledDataset& ds, int excluded_level = 3) {
    LabeledDataset out;
    for (const auto& e : ds.entries) {
        if (!e.toxicity_level)
            throw ValidationError("entry '" + e.id + "' has no toxicity level");
        if (*e.toxicity_level != excluded_level) out.entries.push_back(e);
    }
    return out;
}

/// Disjoint uniform samples, reproducible for a given seed. The shuffle is a
/// hand-rolled Fisher-Yates over mt19937_64 so splits are identical across
/// standard libraries.
inline std::pair<LabeledDataset, LabeledDataset> sample_split(const LabeledDataset& ds,
                                                              size_t n_train, size_t n_test,
                                                              std::uint64_t seed) {
    if (n_train + n_test > ds.entries.size())
        throw ValidationError("insufficient data: requested " + std::to_string(n_train) +
                              " + " + std::to_string(n_test) + " from " +
                              std::to_string(ds.entries.size()) + " entries");
    std::vector<size_t> idx(ds.entries.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    for (size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[rng() % i]);
    LabeledDataset train, test;
    for (size_t i = 0; i < n_train; ++i) train.entries.push_back(ds.entries[idx[i]]);
    for (size_t i = 0; i < n_test; ++i) test.entries.push_back(ds.entries[idx[n_train + i]]);
    return {std::move(train), std::move(test)};
}

/// Toxic-class score of one detection, for ranking metrics. White-box: the
/// final answer probability, complemented for No answers. Black-box: absent
/// unless rating_as_score maps the self-reported rating to rating/100.
inline std::optional<double> score_of(const DetectionResult& result, BackendKind kind,
                                      bool rating_as_score = false) {
    if (result.answer == Answer::Unparsed) return std::nullopt;
    if (kind == BackendKind::WhiteBox) {
        return result.answer == Answer::Yes ? result.final_confidence
                                            : 1.0 - result.final_confidence;
    }
    if (!rating_as_score) return std::nullopt;
    if (result.trace.empty() || !result.trace.back().response.toxicity_rating)
        return std::nullopt;
    return *result.trace.back().response.toxicity_rating / 100.0;
}

struct Prediction {
    int gold = 0;                    // toxic = 1
    std::optional<int> predicted;    // absent when the answer was unparseable
    std::optional<double> score;     // toxic-class score when available
};

struct EvalReport {
    double accuracy = 0.0;
    double f1 = 0.0;        // binary F1, toxic class positive
    double macro_f1 = 0.0;  // mean of the per-class F1 scores
    double auc = 0.0;
    bool auc_available = false;
    long tp = 0, fp = 0, tn = 0, fn = 0;
    size_t total = 0;
};

/// Accuracy and toxic-class F1 over all predictions, plus rank-statistic AUC
/// when every parsed prediction carries a score. Macro F1 averages the
/// per-class F1 scores and is reported alongside without replacing the
/// binary figure.
///
/// An unparseable prediction counts as the wrong label (a miss on toxic gold,
/// a false alarm on benign gold) and is excluded from AUC. AUC is the
/// Mann-Whitney statistic with ties counting one half, computed via midranks.
inline EvalReport metrics(const std::vector<Prediction>& predictions) {
    if (predictions.empty()) throw ValidationError("metrics over an empty prediction list");
    EvalReport rep;
    rep.total = predictions.size();
    for (const auto& p : predictions) {
        if (p.gold != 0 && p.gold != 1)
            throw ValidationError("gold labels must be 0 or 1");
        int predicted = p.predicted ? *p.predicted : 1 - p.gold;
        if (p.gold == 1)
            (predicted == 1 ? rep.tp : rep.fn)++;
        else
            (predicted == 1 ? rep.fp : rep.tn)++;
    }
    rep.accuracy = static_cast<double>(rep.tp + rep.tn) / static_cast<double>(rep.total);
    auto f1_of = [](long tp, long fp, long fn) {
        double precision =
            tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        double recall =
            tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall)
                                        : 0.0;
    };
    rep.f1 = f1_of(rep.tp, rep.fp, rep.fn);
    rep.macro_f1 = (rep.f1 + f1_of(rep.tn, rep.fn, rep.fp)) / 2.0;

    // AUC over parsed predictions, only when all of them are scored.
    std::vector<std::pair<double, int>> scored;
    size_t parsed = 0;
    for (const auto& p : predictions) {
        if (!p.predicted) continue;
        ++parsed;
        if (p.score) scored.emplace_back(*p.score, p.gold);
    }
    size_t n_pos = 0, n_neg = 0;
    for (const auto& [s, y] : scored) (y == 1 ? n_pos : n_neg)++;
    if (parsed == 0 || scored.size() != parsed || n_pos == 0 || n_neg == 0) {
        rep.auc_available = false;
        return rep;
    }
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double pos_rank_sum = 0.0;
    size_t i = 0;
    while (i < scored.size()) {
        size_t j = i;
        while (j < scored.size() && scored[j].first == scored[i].first) ++j;
        double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (size_t k = i; k < j; ++k)
            if (scored[k].second == 1) pos_rank_sum += midrank;
        i = j;
    }
    double n1 = static_cast<double>(n_pos);
    double n0 = static_cast<double>(n_neg);
    rep.auc = (pos_rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n0);
    rep.auc_available = true;
    return rep;
}

} // namespace dtot
