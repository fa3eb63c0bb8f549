#pragma once

#include <atomic>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dtot/backend.hpp"
#include "dtot/confidence.hpp"
#include "dtot/context_tree.hpp"
#include "dtot/errors.hpp"
#include "dtot/promptgen.hpp"
#include "dtot/selector.hpp"

namespace dtot {

enum class PromptMode { ZeroShot, FewShot, FewShotRationale };

inline const char* to_string(PromptMode m) {
    switch (m) {
        case PromptMode::ZeroShot: return "zeroshot";
        case PromptMode::FewShot: return "fs";
        default: return "fsr";
    }
}

struct DtotConfig {
    int max_steps = 2;  // T
    ConfidenceConfig confidence;
    PromptMode mode = PromptMode::ZeroShot;
    int demos_per_class = 3;  // K
    /// On budget exhaustion return the highest-scoring step instead of the
    /// last one.
    bool return_best = false;
    SelectorConfig selector;
    DecodingConfig decoding;

    void validate() const {
        if (max_steps < 1) throw ValidationError("max_steps must be >= 1");
        if (mode != PromptMode::ZeroShot && demos_per_class < 1)
            throw ValidationError("demos_per_class must be >= 1 in few-shot modes");
        confidence.validate();
    }
};

/// One iteration of the loop: the prompt shown, the reply, its verdict, and
/// (when the loop descended) the 1-based index of the chosen child.
struct StepRecord {
    int step_index = 0;
    std::string context_category;
    RenderedPrompt prompt;
    ModelResponse response;
    ConfidenceVerdict verdict;
    std::optional<int> selected_child;
};

struct DetectionResult {
    std::string statement_id;
    std::string statement;
    Answer answer = Answer::Unparsed;
    std::string rationale;
    double final_confidence = 0.0;
    std::vector<StepRecord> trace;
};

/// Raised when a backend failure interrupts a detection; carries whatever
/// trace had accumulated.
class DetectionAborted : public Error {
public:
    DetectionAborted(const std::string& what, std::vector<StepRecord> partial)
        : Error(what), partial_trace_(std::move(partial)) {}

    const std::vector<StepRecord>& partial_trace() const { return partial_trace_; }

private:
    std::vector<StepRecord> partial_trace_;
};

/// Supplies demonstrations for one statement in few-shot modes.
using DemoProvider = std::function<std::vector<Demonstration>(const std::string& statement)>;

/// Runs the confidence-gated detection loop for one statement.
///
/// Starting at the tree root, each step renders the detection prompt for the
/// current context, obtains a reply, and checks its confidence. A confident
/// answer stops the loop. An unconfident answer descends to the most relevant
/// child context when one exists and step budget remains; otherwise the last
/// answer is returned with its low confidence recorded in the trace.
inline DetectionResult detect(const std::string& statement_id, const std::string& statement,
                              const ContextTree& tree, Backend& backend,
                              const PromptTemplates& templates, const DtotConfig& cfg,
                              const DemoProvider& demo_provider = nullptr) {
    cfg.validate();
    std::vector<Demonstration> demos;
    if (cfg.mode != PromptMode::ZeroShot) {
        if (!demo_provider)
            throw ValidationError("few-shot mode requires a demonstration provider");
        demos = demo_provider(statement);
    }

    std::vector<StepRecord> trace;
    const ContextNode* node = &tree.root();
    int t = 0;
    try {
        for (;;) {
            RenderedPrompt prompt = templates.render_detection(statement, *node,
                                                               backend.kind(), demos);
            CompletionCall call{statement_id, prompt.context_category, prompt.variant,
                                prompt.text, cfg.decoding};
            ModelResponse response = backend.complete(call);

            LogprobProvider provider;
            if (backend.kind() == BackendKind::WhiteBox) {
                provider = [&backend, call](const std::string& continuation)
                    -> std::optional<double> {
                    try {
                        return backend.sequence_logprob(call, continuation);
                    } catch (const ScenarioMissError&) {
                        return std::nullopt;
                    } catch (const UnsupportedOperationError&) {
                        return std::nullopt;
                    }
                };
            }
            double score = confidence_score(response, backend.kind(), cfg.confidence, provider);
            ConfidenceVerdict verdict = check(score, cfg.confidence);

            trace.push_back(StepRecord{t, node->category, prompt, response, verdict,
                                       std::nullopt});

            bool has_children = !node->children.empty();
            bool budget_left = t + 1 < cfg.max_steps;
            if (verdict.decision == Decision::Confident || !has_children || !budget_left)
                break;

            std::vector<std::string> child_categories;
            child_categories.reserve(node->children.size());
            for (const auto& c : node->children) child_categories.push_back(c.category);

            RelevanceScores scores =
                backend.kind() == BackendKind::BlackBox
                    ? relevance_blackbox(backend, templates, response.rationale,
                                         child_categories, statement_id, node->category,
                                         cfg.decoding)
                    : relevance_whitebox(backend, call,
                                         make_candidate_rationales(node->children),
                                         cfg.selector);
            Selection sel = select(scores);
            trace.back().selected_child = sel.child_index;
            node = &node->children[static_cast<size_t>(sel.child_index - 1)];
            ++t;
        }
    } catch (const Error& e) {
        throw DetectionAborted(e.what(), std::move(trace));
    }

    const StepRecord* final_step = &trace.back();
    if (cfg.return_best && trace.back().verdict.decision == Decision::Unconfident) {
        for (const auto& rec : trace)
            if (rec.verdict.score > final_step->verdict.score) final_step = &rec;
    }
    DetectionResult result;
    result.statement_id = statement_id;
    result.statement = statement;
    result.answer = final_step->response.answer;
    result.rationale = final_step->response.rationale;
    result.final_confidence = final_step->verdict.score;
    result.trace = std::move(trace);
    return result;
}

struct Statement {
    std::string id;
    std::string text;
};

/// Batch outcome: either a result or an error message with the partial trace.
struct DetectionOutcome {
    std::string statement_id;
    std::optional<DetectionResult> result;
    std::string error;
    std::vector<StepRecord> partial_trace;
};

/// Runs detections concurrently up to `parallelism` workers. Results come
/// back in input order regardless of completion order, and one statement's
/// failure never aborts the batch.
inline std::vector<DetectionOutcome> detect_batch(const std::vector<Statement>& statements,
                                                  const ContextTree& tree, Backend& backend,
                                                  const PromptTemplates& templates,
                                                  const DtotConfig& cfg, int parallelism = 1,
                                                  const DemoProvider& demo_provider = nullptr) {
    if (parallelism < 1) throw ValidationError("parallelism must be >= 1");
    std::vector<DetectionOutcome> outcomes(statements.size());

    auto run_one = [&](size_t i) {
        outcomes[i].statement_id = statements[i].id;
        try {
            outcomes[i].result = detect(statements[i].id, statements[i].text, tree, backend,
                                        templates, cfg, demo_provider);
        } catch (const DetectionAborted& e) {
            outcomes[i].error = e.what();
            outcomes[i].partial_trace = e.partial_trace();
        } catch (const std::exception& e) {
            outcomes[i].error = e.what();
        }
    };

    size_t workers = std::min<size_t>(static_cast<size_t>(parallelism), statements.size());
    if (workers <= 1) {
        for (size_t i = 0; i < statements.size(); ++i) run_one(i);
        return outcomes;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                size_t i = next.fetch_add(1);
                if (i >= statements.size()) return;
                run_one(i);
            }
        });
    }
    for (auto& th : pool) th.join();
    return outcomes;
}

} // namespace dtot
