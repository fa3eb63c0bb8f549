#pragma once

#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dtot/errors.hpp"
#include "dtot/util.hpp"

namespace dtot {

/// BlackBox models expose generated text only; WhiteBox models can also score
/// a continuation with token log-probabilities.
enum class BackendKind { BlackBox, WhiteBox };

enum class Answer { Yes, No, Unparsed };

inline const char* to_string(Answer a) {
    switch (a) {
        case Answer::Yes: return "Yes";
        case Answer::No: return "No";
        default: return "Unparsed";
    }
}

inline const char* to_string(BackendKind k) {
    return k == BackendKind::BlackBox ? "blackbox" : "whitebox";
}

/// Which prompt the model is being shown. Detection prompts ask about the
/// statement under a context; classification prompts route a rationale to one
/// of the child categories.
enum class PromptVariant { DetectBlackBox, DetectWhiteBox, Classify };

inline const char* variant_key(PromptVariant v) {
    return v == PromptVariant::Classify ? "classify" : "detect";
}

/// Structured view of one model reply. Parse failures never throw; they
/// degrade to answer=Unparsed / absent rating, which downstream treats as
/// low confidence.
struct ModelResponse {
    std::string raw_text;
    Answer answer = Answer::Unparsed;
    std::optional<int> toxicity_rating;  // 0..100 when present
    std::string rationale;
    std::optional<std::vector<std::pair<std::string, double>>> answer_token_logprobs;
};

struct DecodingConfig {
    double temperature = 0.0;
    int max_tokens = 512;
    bool request_logprobs = false;
    int top_logprobs = 20;
};

/// Everything a backend needs to serve one model call. Scripted backends key
/// on (statement_id, context_category, variant); live backends send
/// prompt_text and ignore the key fields.
struct CompletionCall {
    std::string statement_id;
    std::string context_category;
    PromptVariant variant = PromptVariant::DetectBlackBox;
    std::string prompt_text;
    DecodingConfig decoding;
};

namespace detail {

inline std::optional<Answer> parse_yes_no(std::string_view word) {
    size_t b = 0;
    size_t e = word.size();
    auto is_junk = [](char c) {
        return c == '"' || c == '\'' || c == '.' || c == ',' || c == ':' || c == ';' ||
               c == '!' || c == ')' || c == '(';
    };
    while (b < e && is_junk(word[b])) ++b;
    while (e > b && is_junk(word[e - 1])) --e;
    std::string_view core = word.substr(b, e - b);
    if (iequals(core, "yes")) return Answer::Yes;
    if (iequals(core, "no")) return Answer::No;
    return std::nullopt;
}

inline std::string first_word(std::string_view s) {
    size_t b = 0;
    while (b < s.size() && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    size_t e = b;
    while (e < s.size() && !std::isspace(static_cast<unsigned char>(s[e]))) ++e;
    return std::string(s.substr(b, e - b));
}

/// First "<n>/100" after a "level" keyword; absent when out of [0,100] or
/// when no level keyword exists at all.
inline std::optional<int> parse_rating(const std::string& raw) {
    size_t level_pos = ifind(raw, "level");
    if (level_pos == std::string_view::npos) return std::nullopt;
    static const std::regex rating_re(R"(([0-9]{1,3})\s*/\s*100)");
    std::smatch m;
    std::string tail = raw.substr(level_pos);
    if (!std::regex_search(tail, m, rating_re)) return std::nullopt;
    int value = std::stoi(m[1].str());
    if (value < 0 || value > 100) return std::nullopt;
    return value;
}

} // namespace detail

/// Extract (answer, rating, rationale) from raw model text.
///
/// BlackBox replies follow the requested layout: a Yes/No token after
/// "Answer:", a rating as "<n>/100" after a level keyword, and free text
/// after "Rationale:". WhiteBox replies open with the Yes/No token itself;
/// the rationale is whatever follows a "Rationale:" marker if present, else
/// the remainder after the answer token and its separator.
inline ModelResponse parse_response(const std::string& raw_text, BackendKind kind) {
    ModelResponse r;
    r.raw_text = raw_text;
    if (kind == BackendKind::BlackBox) {
        size_t apos = ifind(raw_text, "answer:");
        if (apos != std::string_view::npos) {
            std::string word = detail::first_word(
                std::string_view(raw_text).substr(apos + std::string_view("answer:").size()));
            if (auto a = detail::parse_yes_no(word)) r.answer = *a;
        }
        r.toxicity_rating = detail::parse_rating(raw_text);
        size_t rpos = ifind(raw_text, "rationale:");
        if (rpos != std::string_view::npos)
            r.rationale = trim(std::string_view(raw_text)
                                   .substr(rpos + std::string_view("rationale:").size()));
        return r;
    }
    // WhiteBox: answer token opens the assistant text.
    std::string body = trim(raw_text);
    std::string word = detail::first_word(body);
    auto a = detail::parse_yes_no(word);
    if (!a) return r;
    r.answer = *a;
    std::string_view rest = std::string_view(body).substr(word.size());
    size_t skip = 0;
    while (skip < rest.size() &&
           (std::isspace(static_cast<unsigned char>(rest[skip])) || rest[skip] == ',' ||
            rest[skip] == '.' || rest[skip] == ':' || rest[skip] == ';'))
        ++skip;
    rest = rest.substr(skip);
    size_t rpos = ifind(rest, "rationale:");
    if (rpos != std::string_view::npos)
        r.rationale = trim(rest.substr(rpos + std::string_view("rationale:").size()));
    else
        r.rationale = trim(rest);
    return r;
}

/// Model access abstraction. Implementations must be shareable across
/// concurrent detection tasks; every call is independent.
class Backend {
public:
    virtual ~Backend() = default;

    virtual BackendKind kind() const = 0;

    virtual ModelResponse complete(const CompletionCall& call) = 0;

    /// log Pr[continuation | prompt], summed over the continuation's tokens.
    /// Always <= 0; exactly 0 for the empty continuation. WhiteBox only:
    /// BlackBox backends throw UnsupportedOperationError.
    virtual double sequence_logprob(const CompletionCall& call,
                                    const std::string& continuation) = 0;
};

/// Text-to-vector provider with a fixed output dimension.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual size_t dimension() const = 0;
    virtual std::vector<double> embed(const std::string& text) = 0;
};

} // namespace dtot
