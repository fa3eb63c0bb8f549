#pragma once

#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtot/backend.hpp"
#include "dtot/context_tree.hpp"
#include "dtot/engine.hpp"
#include "dtot/errors.hpp"
#include "dtot/promptgen.hpp"

namespace dtot {

enum class LabelSource { LlmLabel, HumanLabel };

inline const char* to_string(LabelSource s) {
    return s == LabelSource::LlmLabel ? "llm" : "human";
}

/// Label encoding for fine-tuning targets: Yes -> 1, No -> 0.
inline int label_encoding(Answer a) {
    if (a == Answer::Yes) return 1;
    if (a == Answer::No) return 0;
    throw DomainError("Unparsed answers have no label encoding");
}

/// One fine-tuning record. When built from human labels, the rationale is
/// kept only where the teacher agreed with the gold label (rationale_mask);
/// when built from teacher labels alone, the mask is always on.
struct DistillRecord {
    std::string id;
    std::string input;
    Answer target_answer = Answer::No;
    std::optional<std::string> target_rationale;
    bool rationale_mask = false;
    LabelSource source = LabelSource::LlmLabel;
};

/// The teacher-side fields a record is built from.
struct TeacherSample {
    std::string id;
    std::string statement;
    Answer answer = Answer::Unparsed;
    std::string rationale;
};

inline TeacherSample teacher_sample(const DetectionResult& r) {
    return TeacherSample{r.statement_id, r.statement, r.answer, r.rationale};
}

enum class DistillMode { WithLabels, WithoutLabels };

struct DistillBuild {
    std::vector<DistillRecord> records;
    size_t skipped_unparsed = 0;

    double mask_rate() const {
        if (records.empty()) return 0.0;
        size_t on = 0;
        for (const auto& r : records)
            if (r.rationale_mask) ++on;
        return static_cast<double>(on) / static_cast<double>(records.size());
    }
};

/// Builds fine-tuning records from teacher detections.
///
/// The student input is the plain white-box detection prompt at the tree
/// root, with no demonstrations: the student answers the root question
/// directly. WithoutLabels targets the teacher's (answer, rationale).
/// WithLabels targets the gold answer and attaches the teacher rationale only
/// on agreement. Unparsed teacher answers are skipped and counted.
inline DistillBuild build_records(const std::vector<TeacherSample>& detections,
                                  const std::map<std::string, int>& gold_labels,
                                  DistillMode mode, const ContextNode& student_root,
                                  const PromptTemplates& templates) {
    DistillBuild out;
    for (const auto& d : detections) {
        if (d.answer == Answer::Unparsed) {
            ++out.skipped_unparsed;
            continue;
        }
        DistillRecord rec;
        rec.id = d.id;
        rec.input = templates
                        .render_detection(d.statement, student_root, BackendKind::WhiteBox)
                        .text;
        if (mode == DistillMode::WithoutLabels) {
            rec.target_answer = d.answer;
            rec.target_rationale = d.rationale;
            rec.rationale_mask = true;
            rec.source = LabelSource::LlmLabel;
        } else {
            auto it = gold_labels.find(d.id);
            if (it == gold_labels.end())
                throw ValidationError("missing gold label for statement '" + d.id + "'");
            int gold = it->second;
            if (gold != 0 && gold != 1)
                throw ValidationError("gold label for '" + d.id + "' must be 0 or 1");
            rec.target_answer = gold == 1 ? Answer::Yes : Answer::No;
            rec.rationale_mask = label_encoding(d.answer) == gold;
            if (rec.rationale_mask) rec.target_rationale = d.rationale;
            rec.source = LabelSource::HumanLabel;
        }
        out.records.push_back(std::move(rec));
    }
    return out;
}

/// Writes records as JSONL with a stable field order; returns lines written.
inline size_t export_jsonl(const std::vector<DistillRecord>& records, std::ostream& out) {
    for (const auto& rec : records) {
        nlohmann::ordered_json j;
        j["id"] = rec.id;
        j["input"] = rec.input;
        j["target_answer"] = to_string(rec.target_answer);
        if (rec.target_rationale)
            j["target_rationale"] = *rec.target_rationale;
        else
            j["target_rationale"] = nullptr;
        j["rationale_mask"] = rec.rationale_mask;
        j["label_source"] = to_string(rec.source);
        out << j.dump() << "\n";
    }
    return records.size();
}

inline std::vector<DistillRecord> import_jsonl(std::istream& in) {
    std::vector<DistillRecord> records;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("records line " + std::to_string(lineno) + ": " + e.what());
        }
        DistillRecord rec;
        rec.id = j.at("id").get<std::string>();
        rec.input = j.at("input").get<std::string>();
        std::string answer = j.at("target_answer").get<std::string>();
        if (answer == "Yes")
            rec.target_answer = Answer::Yes;
        else if (answer == "No")
            rec.target_answer = Answer::No;
        else
            throw ParseError("records line " + std::to_string(lineno) +
                             ": target_answer must be Yes or No");
        if (!j.at("target_rationale").is_null())
            rec.target_rationale = j.at("target_rationale").get<std::string>();
        rec.rationale_mask = j.at("rationale_mask").get<bool>();
        std::string source = j.at("label_source").get<std::string>();
        if (source == "llm")
            rec.source = LabelSource::LlmLabel;
        else if (source == "human")
            rec.source = LabelSource::HumanLabel;
        else
            throw ParseError("records line " + std::to_string(lineno) +
                             ": label_source must be llm or human");
        records.push_back(std::move(rec));
    }
    return records;
}

/// Per-record loss decomposition over externally supplied token
/// log-probabilities, for validating a downstream trainer's masking.
struct LossBreakdown {
    double answer_ce = 0.0;
    double rationale_ce = 0.0;
    double lambda = 1.0;
    double total = 0.0;
};

/// total = answer_ce + lambda * rationale_ce, where each CE term is the
/// negated token-level mean log-probability. With the mask off the rationale
/// inputs are never read, so the result is independent of them.
inline LossBreakdown distill_loss(const std::vector<double>& answer_token_logprobs,
                                  const std::vector<double>& rationale_token_logprobs,
                                  bool rationale_mask, double lambda = 1.0) {
    if (answer_token_logprobs.empty())
        throw ValidationError("distill_loss requires at least one answer token");
    if (lambda < 0.0) throw DomainError("lambda must be >= 0");
    auto neg_mean = [](const std::vector<double>& lps) {
        double sum = 0.0;
        for (double lp : lps) {
            if (lp > 0.0) throw DomainError("token log-probabilities must be <= 0");
            sum += lp;
        }
        return -sum / static_cast<double>(lps.size());
    };
    LossBreakdown out;
    out.lambda = lambda;
    out.answer_ce = neg_mean(answer_token_logprobs);
    out.rationale_ce =
        rationale_mask && !rationale_token_logprobs.empty() ? neg_mean(rationale_token_logprobs)
                                                            : 0.0;
    out.total = out.answer_ce + lambda * out.rationale_ce;
    return out;
}

} // namespace dtot
