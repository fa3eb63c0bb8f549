#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>

#include "dtot/backend.hpp"
#include "dtot/errors.hpp"

namespace dtot {

/// Thresholds for the confidence checker. For black-box models a
/// self-reported toxicity rating outside the OPEN interval (s_low, s_high)
/// counts as confident, so with the defaults a rating of exactly 0 or
/// exactly 90 is already confident. For white-box models the score is the
/// probability of the emitted answer.
struct ConfidenceConfig {
    int s_low = 0;
    int s_high = 90;
    double s_delta = 0.9;

    /// NormalizedVerbalizers: p = exp(L_answer) / (exp(L_yes) + exp(L_no)),
    /// length-invariant and comparable to s_delta. RawSequence: p is the raw
    /// probability of the full reply text, which shrinks with reply length.
    enum class WhiteBoxScore { NormalizedVerbalizers, RawSequence };
    WhiteBoxScore whitebox_score = WhiteBoxScore::NormalizedVerbalizers;

    void validate() const {
        if (!(0 <= s_low && s_low < s_high && s_high <= 100))
            throw ValidationError("confidence thresholds must satisfy 0 <= s_low < s_high <= 100");
        if (!(0.0 <= s_delta && s_delta <= 1.0))
            throw ValidationError("s_delta must lie in [0, 1]");
    }
};

enum class Decision { Confident, Unconfident };

inline const char* to_string(Decision d) {
    return d == Decision::Confident ? "Confident" : "Unconfident";
}

struct ConfidenceVerdict {
    double score = 0.0;
    Decision decision = Decision::Unconfident;
};

/// Scores a continuation given the prompt of the step under evaluation.
/// Returns nullopt when the backend cannot score it; the caller treats that
/// as zero confidence.
using LogprobProvider = std::function<std::optional<double>(const std::string& continuation)>;

/// Self-confidence score of one model response, in [0, 1].
///
/// Black-box: indicator of the rating falling outside (s_low, s_high); a
/// missing rating scores 0 so the engine re-prompts. White-box: probability
/// of the emitted answer, by default normalized over the Yes/No verbalizers.
inline double confidence_score(const ModelResponse& response, BackendKind kind,
                               const ConfidenceConfig& cfg,
                               const LogprobProvider& logprob = nullptr) {
    // An unparseable answer scores 0 regardless of any rating: there is no
    // answer to be confident about, so the engine re-prompts.
    if (response.answer == Answer::Unparsed) return 0.0;
    if (kind == BackendKind::BlackBox) {
        if (!response.toxicity_rating) return 0.0;
        int rating = *response.toxicity_rating;
        bool outside = rating <= cfg.s_low || rating >= cfg.s_high;
        return outside ? 1.0 : 0.0;
    }
    if (!logprob) return 0.0;
    if (cfg.whitebox_score == ConfidenceConfig::WhiteBoxScore::RawSequence) {
        std::optional<double> lp = logprob(response.raw_text);
        if (!lp || !std::isfinite(*lp)) return 0.0;
        double p = std::exp(*lp);
        return p < 0.0 ? 0.0 : (p > 1.0 ? 1.0 : p);
    }
    std::optional<double> l_yes = logprob("Yes");
    std::optional<double> l_no = logprob("No");
    if (!l_yes || !l_no) return 0.0;
    double m = std::max(*l_yes, *l_no);
    if (!std::isfinite(m)) return 0.0;  // both verbalizers impossible
    double p_yes = std::exp(*l_yes - m);
    double p_no = std::exp(*l_no - m);
    double p_answer = response.answer == Answer::Yes ? p_yes : p_no;
    return p_answer / (p_yes + p_no);
}

/// Confident iff score >= s_delta (closed lower bound).
inline ConfidenceVerdict check(double score, const ConfidenceConfig& cfg) {
    if (!(score >= 0.0 && score <= 1.0))
        throw DomainError("confidence score must lie in [0, 1]");
    return ConfidenceVerdict{score,
                             score >= cfg.s_delta ? Decision::Confident : Decision::Unconfident};
}

} // namespace dtot
