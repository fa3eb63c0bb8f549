#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dtot/backend.hpp"
#include "dtot/context_tree.hpp"
#include "dtot/errors.hpp"
#include "dtot/util.hpp"

namespace dtot {

enum class DemoLabel { Toxic, Benign };

/// A labeled example serialized ahead of the target statement in few-shot
/// prompts. Rationale is present only when demonstrations carry rationales.
struct Demonstration {
    std::string statement;
    DemoLabel label = DemoLabel::Benign;
    std::optional<std::string> rationale;
};

struct RenderedPrompt {
    std::string text;
    PromptVariant variant = PromptVariant::DetectBlackBox;
    std::string context_category;
    int demo_count = 0;
};

/// Renders detection and classification prompts. The default templates are
/// normative: golden files under golden/ lock their rendered bytes, and any
/// template edit must update the goldens. A template directory can override
/// them at runtime; files are used byte-verbatim.
///
/// Placeholders: {context}, {statement}, {category}, {examples} in detection
/// templates; {rationale}, {menu} in the classification template. Substituted
/// values are never re-scanned, so braces inside user text stay literal.
class PromptTemplates {
public:
    static PromptTemplates defaults() {
        PromptTemplates t;
        t.blackbox_detect_ =
            "Context: {context}.\n"
            "{examples}"
            "Sentence: {statement}.\n"
            "Does this sentence contain {category} content?\n"
            "First, answer in \"Yes\" or \"No\".\n"
            "Second, rate the {category} level out of 100.\n"
            "Third, explain your rationale briefly.\n"
            "The output format is given below:\n"
            "Answer: ...\n"
            "{category} level: .../100.\n"
            "Rationale: ...";
        t.whitebox_detect_ =
            "{context}.\n"
            "{examples}"
            "### Human: \"{statement}\". Does this sentence contain {category} content?\n"
            "Answer yes or no, and explain your answer.\n"
            "### Assistant:";
        t.classify_ =
            "Rationale: {rationale}\n"
            "The rationale above refers to one of the following categories:\n"
            "{menu}"
            "Which single category is the rationale most relevant to? "
            "Answer with the category name only.";
        return t;
    }

    /// Expects blackbox_detect.txt, whitebox_detect.txt, classify.txt.
    static PromptTemplates from_directory(const std::string& dir) {
        PromptTemplates t;
        t.blackbox_detect_ = read_file(dir + "/blackbox_detect.txt");
        t.whitebox_detect_ = read_file(dir + "/whitebox_detect.txt");
        t.classify_ = read_file(dir + "/classify.txt");
        return t;
    }

    /// Substitutes the node's context and category into the detection
    /// template for `kind`, serializing demonstrations (if any) ahead of the
    /// target statement in the order given.
    RenderedPrompt render_detection(const std::string& statement, const ContextNode& node,
                                    BackendKind kind,
                                    const std::vector<Demonstration>& demos = {}) const {
        if (statement.empty()) throw ValidationError("statement must be non-empty");
        const std::string& tpl =
            kind == BackendKind::BlackBox ? blackbox_detect_ : whitebox_detect_;
        std::map<std::string, std::string> vars{
            {"context", node.context_text},
            {"statement", statement},
            {"category", node.category},
            {"examples", render_examples(demos, kind)},
        };
        RenderedPrompt p;
        p.text = expand_placeholders(tpl, vars);
        p.variant = kind == BackendKind::BlackBox ? PromptVariant::DetectBlackBox
                                                  : PromptVariant::DetectWhiteBox;
        p.context_category = node.category;
        p.demo_count = static_cast<int>(demos.size());
        return p;
    }

    /// Numbered category menu asking which single category the rationale is
    /// most relevant to. `parent_category` keys the exchange for scripted
    /// replay and tracing; it does not appear in the prompt.
    RenderedPrompt render_classification(const std::string& rationale,
                                         const std::vector<std::string>& categories,
                                         const std::string& parent_category = "") const {
        if (categories.empty())
            throw ValidationError("classification prompt needs at least one category");
        std::string menu;
        for (size_t i = 0; i < categories.size(); ++i)
            menu += std::to_string(i + 1) + ". " + categories[i] + "\n";
        std::map<std::string, std::string> vars{
            {"rationale", rationale.empty() ? std::string("(no rationale given)") : rationale},
            {"menu", menu},
        };
        RenderedPrompt p;
        p.text = expand_placeholders(classify_, vars);
        p.variant = PromptVariant::Classify;
        p.context_category = parent_category;
        p.demo_count = 0;
        return p;
    }

    /// Identity of the loaded templates, recorded in run manifests.
    std::uint64_t content_hash() const {
        return fnv1a64(blackbox_detect_ + "\x1f" + whitebox_detect_ + "\x1f" + classify_);
    }

private:
    static std::string render_examples(const std::vector<Demonstration>& demos,
                                       BackendKind kind) {
        if (demos.empty()) return "";
        std::string out = "Here are some examples:\n";
        for (const auto& d : demos) {
            const char* answer = d.label == DemoLabel::Toxic ? "Yes" : "No";
            if (kind == BackendKind::BlackBox) {
                out += "Sentence: " + d.statement + ".\n";
                out += std::string("Answer: ") + answer + "\n";
                if (d.rationale) out += "Rationale: " + *d.rationale + "\n";
                out += "\n";
            } else {
                out += "Sentence: \"" + d.statement + "\". Answer: " + answer + ".";
                if (d.rationale) out += " Rationale: " + *d.rationale;
                out += "\n";
            }
        }
        return out;
    }

    std::string blackbox_detect_;
    std::string whitebox_detect_;
    std::string classify_;
};

/// Fixed candidate-rationale text for a child category, phrased so it is
/// relevant to that category alone. Categories already ending in "content"
/// are not suffixed again.
inline std::string candidate_rationale_text(const std::string& category) {
    const std::string suffix = "content";
    bool ends_with_content =
        category.size() >= suffix.size() &&
        category.compare(category.size() - suffix.size(), suffix.size(), suffix) == 0;
    if (ends_with_content) return "This statement contains " + category + ".";
    return "This statement contains " + category + " content.";
}

} // namespace dtot
