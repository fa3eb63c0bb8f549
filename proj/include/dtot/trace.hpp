#pragma once

#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtot/engine.hpp"
#include "dtot/errors.hpp"
#include "dtot/util.hpp"

namespace dtot {

/// One JSONL line per step; the last step of a detection is marked final and
/// carries the fields a distillation pass needs.
inline void write_trace(std::ostream& out, const DetectionResult& result) {
    for (size_t i = 0; i < result.trace.size(); ++i) {
        const StepRecord& rec = result.trace[i];
        nlohmann::ordered_json j;
        j["statement_id"] = result.statement_id;
        j["statement"] = result.statement;
        j["step"] = rec.step_index;
        j["context_category"] = rec.context_category;
        j["variant"] = variant_key(rec.prompt.variant);
        j["answer"] = to_string(rec.response.answer);
        if (rec.response.toxicity_rating)
            j["toxicity_rating"] = *rec.response.toxicity_rating;
        else
            j["toxicity_rating"] = nullptr;
        j["rationale"] = rec.response.rationale;
        j["raw_reply"] = rec.response.raw_text;
        j["confidence"] = rec.verdict.score;
        j["verdict"] = to_string(rec.verdict.decision);
        if (rec.selected_child)
            j["selected_child"] = *rec.selected_child;
        else
            j["selected_child"] = nullptr;
        j["final"] = i + 1 == result.trace.size();
        out << j.dump() << "\n";
    }
}

inline void write_outcome_trace(std::ostream& out, const DetectionOutcome& outcome) {
    if (outcome.result) {
        write_trace(out, *outcome.result);
        return;
    }
    nlohmann::ordered_json j;
    j["statement_id"] = outcome.statement_id;
    j["error"] = outcome.error;
    j["final"] = true;
    out << j.dump() << "\n";
}

/// The final step of one recorded detection.
struct TraceFinal {
    std::string statement_id;
    std::string statement;
    Answer answer = Answer::Unparsed;
    std::string rationale;
    double confidence = 0.0;
};

/// Reads back the final steps from a trace stream, skipping error entries.
inline std::vector<TraceFinal> read_trace_finals(std::istream& in) {
    std::vector<TraceFinal> finals;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("trace line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!j.value("final", false)) continue;
        if (j.contains("error")) continue;
        TraceFinal f;
        f.statement_id = j.at("statement_id").get<std::string>();
        f.statement = j.at("statement").get<std::string>();
        std::string answer = j.at("answer").get<std::string>();
        f.answer = answer == "Yes" ? Answer::Yes
                 : answer == "No" ? Answer::No
                                  : Answer::Unparsed;
        f.rationale = j.at("rationale").get<std::string>();
        f.confidence = j.at("confidence").get<double>();
        finals.push_back(std::move(f));
    }
    return finals;
}

inline std::vector<TraceFinal> read_trace_finals_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open trace file: " + path);
    return read_trace_finals(in);
}

} // namespace dtot
