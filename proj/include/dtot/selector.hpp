#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dtot/backend.hpp"
#include "dtot/context_tree.hpp"
#include "dtot/errors.hpp"
#include "dtot/promptgen.hpp"
#include "dtot/util.hpp"

namespace dtot {

enum class RelevanceSource { BlackBoxClass, WhiteBoxLogprob };

/// Per-child relevance scores, index-aligned with the child list. Black-box
/// scores are one-hot (or all-zero when the classification reply matched no
/// category); white-box scores are candidate-rationale log-probabilities.
struct RelevanceScores {
    std::vector<double> scores;
    RelevanceSource source = RelevanceSource::BlackBoxClass;
};

/// child_index is the 1-based position of the chosen child. used_fallback is
/// set when the black-box classification failed and the first child was
/// chosen by default.
struct Selection {
    int child_index = 1;
    bool used_fallback = false;
};

struct SelectorConfig {
    /// Divide each candidate's log-probability by its whitespace token count.
    /// Raw (unnormalized) scores systematically favor shorter candidates.
    bool length_normalized = true;
};

struct CandidateRationale {
    int child_index = 0;  // 1-based
    std::string text;
};

inline std::vector<CandidateRationale> make_candidate_rationales(
    const std::vector<ContextNode>& children) {
    std::vector<CandidateRationale> out;
    out.reserve(children.size());
    for (size_t j = 0; j < children.size(); ++j)
        out.push_back({static_cast<int>(j) + 1, candidate_rationale_text(children[j].category)});
    return out;
}

/// Matches a free-form classification reply to one category: case-insensitive
/// exact match first, then unique substring match, else nullopt. Returns the
/// 0-based index.
inline std::optional<size_t> match_category_reply(const std::string& reply,
                                                  const std::vector<std::string>& categories) {
    std::string norm = trim(reply);
    while (!norm.empty() && (norm.back() == '.' || norm.back() == '"' || norm.back() == '\''))
        norm.pop_back();
    norm = trim(norm);
    for (size_t i = 0; i < categories.size(); ++i)
        if (iequals(norm, categories[i])) return i;
    std::optional<size_t> unique;
    for (size_t i = 0; i < categories.size(); ++i) {
        if (ifind(reply, categories[i]) != std::string_view::npos) {
            if (unique) return std::nullopt;  // ambiguous
            unique = i;
        }
    }
    return unique;
}

/// Black-box relevance: ask the model which child category the rationale is
/// most relevant to, then one-hot encode its choice. An unmatched or
/// ambiguous reply yields all-zero scores.
inline RelevanceScores relevance_blackbox(Backend& backend, const PromptTemplates& templates,
                                          const std::string& rationale,
                                          const std::vector<std::string>& child_categories,
                                          const std::string& statement_id,
                                          const std::string& parent_category,
                                          const DecodingConfig& decoding = {}) {
    if (child_categories.empty())
        throw ValidationError("relevance_blackbox needs at least one child category");
    RenderedPrompt prompt =
        templates.render_classification(rationale, child_categories, parent_category);
    CompletionCall call{statement_id, prompt.context_category, prompt.variant, prompt.text,
                        decoding};
    ModelResponse reply = backend.complete(call);
    RelevanceScores out;
    out.source = RelevanceSource::BlackBoxClass;
    out.scores.assign(child_categories.size(), 0.0);
    if (auto hit = match_category_reply(reply.raw_text, child_categories))
        out.scores[*hit] = 1.0;
    return out;
}

/// White-box relevance: score each candidate rationale as a continuation of
/// the detection prompt, length-normalized by default.
inline RelevanceScores relevance_whitebox(Backend& backend, const CompletionCall& detect_call,
                                          const std::vector<CandidateRationale>& candidates,
                                          const SelectorConfig& cfg = {}) {
    if (backend.kind() != BackendKind::WhiteBox)
        throw UnsupportedOperationError("relevance_whitebox requires a white-box backend");
    if (candidates.empty())
        throw ValidationError("relevance_whitebox needs at least one candidate");
    RelevanceScores out;
    out.source = RelevanceSource::WhiteBoxLogprob;
    out.scores.reserve(candidates.size());
    for (const auto& cand : candidates) {
        double lp = backend.sequence_logprob(detect_call, cand.text);
        if (cfg.length_normalized) {
            size_t tokens = whitespace_token_count(cand.text);
            if (tokens > 0) lp /= static_cast<double>(tokens);
        }
        out.scores.push_back(lp);
    }
    return out;
}

/// Argmax with lowest-index tie-break. All-zero black-box scores mean the
/// classification failed; the first child is returned with used_fallback set.
inline Selection select(const RelevanceScores& relevance) {
    if (relevance.scores.empty()) throw ValidationError("cannot select from empty scores");
    size_t best = 0;
    for (size_t j = 1; j < relevance.scores.size(); ++j)
        if (relevance.scores[j] > relevance.scores[best]) best = j;
    Selection sel;
    sel.child_index = static_cast<int>(best) + 1;
    if (relevance.source == RelevanceSource::BlackBoxClass) {
        bool all_zero = true;
        for (double s : relevance.scores)
            if (s != 0.0) all_zero = false;
        sel.used_fallback = all_zero;
    }
    return sel;
}

} // namespace dtot
