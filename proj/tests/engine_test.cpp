#include "dtot/engine.hpp"

#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "dtot/scripted_backend.hpp"
#include "dtot/trace.hpp"
#include "test_support.hpp"

using dtot::Answer;
using dtot::BackendKind;
using dtot::Decision;
using dtot::detect;
using dtot::detect_batch;
using dtot::DtotConfig;
using dtot::ScenarioEntry;
using dtot::ScriptedBackend;
using dtot::Statement;
using testsupport::blackbox_reply;
using testsupport::default_tree;

namespace {

// Root answers with rating 50 (unconfident), routes to hate speech, and the
// child answers with rating 95 (confident).
std::vector<ScenarioEntry> descend_scenario(const std::string& id = "s1") {
    return {
        {id, "toxic", "detect",
         blackbox_reply("Yes", 50, "the statement attacks a group", "toxic"), {}},
        {id, "toxic", "classify", "hate speech", {}},
        {id, "hate speech", "detect",
         blackbox_reply("Yes", 95, "targets an ethnicity", "hate speech"), {}},
    };
}

DtotConfig default_config() {
    DtotConfig cfg;  // T=2, thresholds (0, 90), s_delta 0.9
    return cfg;
}

} // namespace

TEST(Detect, DescendsOnUnconfidentAnswer) {
    auto tree = default_tree();
    ScriptedBackend backend(BackendKind::BlackBox, descend_scenario());
    auto templates = dtot::PromptTemplates::defaults();
    auto result = detect("s1", "they are all criminals", tree, backend, templates,
                         default_config());
    ASSERT_EQ(result.trace.size(), 2u);
    EXPECT_EQ(result.trace[0].context_category, "toxic");
    EXPECT_EQ(result.trace[0].verdict.decision, Decision::Unconfident);
    ASSERT_TRUE(result.trace[0].selected_child.has_value());
    EXPECT_EQ(*result.trace[0].selected_child, 1);
    EXPECT_EQ(result.trace[1].context_category, "hate speech");
    EXPECT_EQ(result.trace[1].verdict.decision, Decision::Confident);
    EXPECT_FALSE(result.trace[1].selected_child.has_value());
    // Final answer comes from the second step.
    EXPECT_EQ(result.answer, Answer::Yes);
    EXPECT_EQ(result.rationale, "targets an ethnicity");
    EXPECT_EQ(result.final_confidence, 1.0);
    EXPECT_EQ(result.statement, "they are all criminals");
}

TEST(Detect, StopsImmediatelyWhenConfident) {
    auto tree = default_tree();
    ScriptedBackend backend(
        BackendKind::BlackBox,
        {{"s1", "toxic", "detect", blackbox_reply("Yes", 95, "clear slur", "toxic"), {}}});
    auto templates = dtot::PromptTemplates::defaults();
    auto result = detect("s1", "x", tree, backend, templates, default_config());
    ASSERT_EQ(result.trace.size(), 1u);
    EXPECT_EQ(result.trace[0].verdict.decision, Decision::Confident);
    EXPECT_FALSE(result.trace[0].selected_child.has_value());
    EXPECT_EQ(result.answer, Answer::Yes);
}

TEST(Detect, BudgetExhaustionReturnsLastAnswer) {
    auto tree = default_tree();
    ScriptedBackend backend(
        BackendKind::BlackBox,
        {{"s1", "toxic", "detect", blackbox_reply("Yes", 50, "maybe", "toxic"), {}},
         {"s1", "toxic", "classify", "hate speech", {}},
         {"s1", "hate speech", "detect", blackbox_reply("No", 50, "unsure", "hate speech"),
          {}}});
    auto templates = dtot::PromptTemplates::defaults();
    auto result = detect("s1", "x", tree, backend, templates, default_config());
    ASSERT_EQ(result.trace.size(), 2u);
    EXPECT_EQ(result.trace[1].verdict.decision, Decision::Unconfident);
    EXPECT_EQ(result.answer, Answer::No);  // last answer, flagged unconfident
    EXPECT_EQ(result.final_confidence, 0.0);
    // The leaf has no children: no selection was recorded on the final step.
    EXPECT_FALSE(result.trace[1].selected_child.has_value());
}

TEST(Detect, MaxStepsOneNeverSelects) {
    auto tree = default_tree();
    ScriptedBackend backend(
        BackendKind::BlackBox,
        {{"s1", "toxic", "detect", blackbox_reply("Yes", 50, "maybe", "toxic"), {}}});
    auto templates = dtot::PromptTemplates::defaults();
    DtotConfig cfg = default_config();
    cfg.max_steps = 1;
    auto result = detect("s1", "x", tree, backend, templates, cfg);
    ASSERT_EQ(result.trace.size(), 1u);
    EXPECT_FALSE(result.trace[0].selected_child.has_value());
}

TEST(Detect, UnparsedAnswerIsUnconfident) {
    auto tree = default_tree();
    ScriptedBackend backend(
        BackendKind::BlackBox,
        {{"s1", "toxic", "detect", "no structure at all", {}},
         {"s1", "toxic", "classify", "bullying content", {}},
         {"s1", "bullying content", "detect",
          blackbox_reply("No", 0, "harmless", "bullying content"), {}}});
    auto templates = dtot::PromptTemplates::defaults();
    auto result = detect("s1", "x", tree, backend, templates, default_config());
    ASSERT_EQ(result.trace.size(), 2u);
    EXPECT_EQ(result.trace[0].response.answer, Answer::Unparsed);
    EXPECT_EQ(result.trace[0].verdict.score, 0.0);
    EXPECT_EQ(result.trace[1].context_category, "bullying content");
    EXPECT_EQ(result.answer, Answer::No);
}

TEST(Detect, SingleNodeTreeStopsAtLeaf) {
    std::istringstream in(R"({"category": "toxic", "context": "def"})");
    auto tree = dtot::ContextTree::load(in);
    ScriptedBackend backend(
        BackendKind::BlackBox,
        {{"s1", "toxic", "detect", blackbox_reply("Yes", 50, "unsure", "toxic"), {}}});
    auto templates = dtot::PromptTemplates::defaults();
    auto result = detect("s1", "x", tree, backend, templates, default_config());
    ASSERT_EQ(result.trace.size(), 1u);
    EXPECT_EQ(result.trace[0].verdict.decision, Decision::Unconfident);
}

TEST(Detect, TransportFailureCarriesPartialTrace) {
    auto tree = default_tree();
    // The classify entry is missing, so the first step aborts mid-selection.
    ScriptedBackend backend(
        BackendKind::BlackBox,
        {{"s1", "toxic", "detect", blackbox_reply("Yes", 50, "maybe", "toxic"), {}}});
    auto templates = dtot::PromptTemplates::defaults();
    try {
        detect("s1", "x", tree, backend, templates, default_config());
        FAIL() << "expected DetectionAborted";
    } catch (const dtot::DetectionAborted& e) {
        ASSERT_EQ(e.partial_trace().size(), 1u);
        EXPECT_EQ(e.partial_trace()[0].context_category, "toxic");
    }
}

TEST(Detect, FewShotModeRequiresProvider) {
    auto tree = default_tree();
    ScriptedBackend backend(BackendKind::BlackBox, descend_scenario());
    auto templates = dtot::PromptTemplates::defaults();
    DtotConfig cfg = default_config();
    cfg.mode = dtot::PromptMode::FewShot;
    EXPECT_THROW(detect("s1", "x", tree, backend, templates, cfg), dtot::ValidationError);
}

TEST(Detect, WhiteBoxFlowUsesLogprobs) {
    auto tree = default_tree();
    // Root: p(Yes) ~ 0.5 -> unconfident. Candidate rationales route to the
    // violent content child, where p(Yes) ~ 0.995 -> confident.
    std::map<std::string, double> root_table{
        {"Yes", std::log(0.5)},
        {"No", std::log(0.5)},
        {"This statement contains hate speech content.", -5.0},
        {"This statement contains biased content.", -4.0},
        {"This statement contains sexual content.", -4.5},
        {"This statement contains violent content.", -1.0},
        {"This statement contains bullying content.", -6.0},
    };
    std::map<std::string, double> child_table{{"Yes", std::log(0.995)},
                                              {"No", std::log(0.005)}};
    ScriptedBackend backend(
        BackendKind::WhiteBox,
        {{"s1", "toxic", "detect", "Yes, this sentence contains toxic content.", root_table},
         {"s1", "violent content", "detect",
          "Yes, this sentence contains violent content. Rationale: threatens harm.",
          child_table}});
    auto templates = dtot::PromptTemplates::defaults();
    auto result = detect("s1", "x", tree, backend, templates, default_config());
    ASSERT_EQ(result.trace.size(), 2u);
    EXPECT_EQ(result.trace[0].verdict.decision, Decision::Unconfident);
    EXPECT_NEAR(result.trace[0].verdict.score, 0.5, 1e-12);
    EXPECT_EQ(*result.trace[0].selected_child, 4);
    EXPECT_EQ(result.trace[1].context_category, "violent content");
    EXPECT_EQ(result.trace[1].verdict.decision, Decision::Confident);
    EXPECT_NEAR(result.final_confidence, 0.995, 1e-12);
    EXPECT_EQ(result.rationale, "threatens harm.");
}

TEST(Detect, ReturnBestPicksHighestScoringStep) {
    auto tree = default_tree();
    std::map<std::string, double> root_table{
        {"Yes", std::log(0.8)},
        {"No", std::log(0.2)},
        {"This statement contains hate speech content.", -1.0},
        {"This statement contains biased content.", -2.0},
        {"This statement contains sexual content.", -3.0},
        {"This statement contains violent content.", -4.0},
        {"This statement contains bullying content.", -5.0},
    };
    std::map<std::string, double> child_table{{"Yes", std::log(0.4)}, {"No", std::log(0.6)}};
    std::vector<ScenarioEntry> entries{
        {"s1", "toxic", "detect", "Yes, toxic.", root_table},
        {"s1", "hate speech", "detect", "No, not hate speech.", child_table}};
    auto templates = dtot::PromptTemplates::defaults();

    ScriptedBackend backend(BackendKind::WhiteBox, entries);
    DtotConfig cfg = default_config();
    auto last = detect("s1", "x", tree, backend, templates, cfg);
    EXPECT_EQ(last.answer, Answer::No);
    EXPECT_NEAR(last.final_confidence, 0.6, 1e-12);

    cfg.return_best = true;
    auto best = detect("s1", "x", tree, backend, templates, cfg);
    EXPECT_EQ(best.answer, Answer::Yes);  // step 0 scored 0.8 > 0.6
    EXPECT_NEAR(best.final_confidence, 0.8, 1e-12);
    EXPECT_EQ(best.trace.size(), 2u);  // the trace still holds both steps
}

TEST(DetectBatch, PreservesInputOrder) {
    auto tree = default_tree();
    std::vector<ScenarioEntry> entries;
    std::vector<Statement> statements;
    for (int i = 0; i < 10; ++i) {
        std::string id = "s" + std::to_string(i);
        entries.push_back({id, "toxic", "detect",
                           blackbox_reply(i % 2 == 0 ? "Yes" : "No", 95, "r", "toxic"), {}});
        statements.push_back({id, "statement " + std::to_string(i)});
    }
    ScriptedBackend backend(BackendKind::BlackBox, entries);
    auto templates = dtot::PromptTemplates::defaults();
    auto outcomes = detect_batch(statements, tree, backend, templates, default_config(), 4);
    ASSERT_EQ(outcomes.size(), 10u);
    for (int i = 0; i < 10; ++i) {
        EXPECT_EQ(outcomes[static_cast<size_t>(i)].statement_id, "s" + std::to_string(i));
        ASSERT_TRUE(outcomes[static_cast<size_t>(i)].result.has_value());
        EXPECT_EQ(outcomes[static_cast<size_t>(i)].result->answer,
                  i % 2 == 0 ? Answer::Yes : Answer::No);
    }
}

TEST(DetectBatch, FailuresBecomeErrorEntries) {
    auto tree = default_tree();
    std::vector<ScenarioEntry> entries;
    std::vector<Statement> statements;
    for (int i = 0; i < 10; ++i) {
        std::string id = "s" + std::to_string(i);
        if (i != 7)  // s7 has no scenario entry
            entries.push_back(
                {id, "toxic", "detect", blackbox_reply("Yes", 95, "r", "toxic"), {}});
        statements.push_back({id, "statement"});
    }
    ScriptedBackend backend(BackendKind::BlackBox, entries);
    auto templates = dtot::PromptTemplates::defaults();
    auto outcomes = detect_batch(statements, tree, backend, templates, default_config(), 3);
    size_t ok = 0, failed = 0;
    for (const auto& o : outcomes) (o.result ? ok : failed)++;
    EXPECT_EQ(ok, 9u);
    EXPECT_EQ(failed, 1u);
    EXPECT_FALSE(outcomes[7].result.has_value());
    EXPECT_NE(outcomes[7].error.find("s7"), std::string::npos);
}

TEST(DetectBatch, ParallelismDoesNotChangeResults) {
    auto tree = default_tree();
    std::vector<ScenarioEntry> entries;
    std::vector<Statement> statements;
    std::mt19937 rng(3);
    for (int i = 0; i < 24; ++i) {
        std::string id = "s" + std::to_string(i);
        int rating = static_cast<int>(rng() % 101);
        entries.push_back({id, "toxic", "detect",
                           blackbox_reply("Yes", rating, "r" + id, "toxic"), {}});
        entries.push_back({id, "toxic", "classify", "sexual content", {}});
        entries.push_back({id, "sexual content", "detect",
                           blackbox_reply("No", 95, "child " + id, "sexual content"), {}});
        statements.push_back({id, "statement " + id});
    }
    ScriptedBackend backend(BackendKind::BlackBox, entries);
    auto templates = dtot::PromptTemplates::defaults();
    auto seq = detect_batch(statements, tree, backend, templates, default_config(), 1);
    auto par = detect_batch(statements, tree, backend, templates, default_config(), 8);
    ASSERT_EQ(seq.size(), par.size());
    for (size_t i = 0; i < seq.size(); ++i) {
        std::ostringstream a, b;
        ASSERT_TRUE(seq[i].result && par[i].result);
        dtot::write_trace(a, *seq[i].result);
        dtot::write_trace(b, *par[i].result);
        EXPECT_EQ(a.str(), b.str());
    }
}

TEST(DetectBatch, InvalidParallelismRejected) {
    auto tree = default_tree();
    ScriptedBackend backend(BackendKind::BlackBox, {});
    auto templates = dtot::PromptTemplates::defaults();
    EXPECT_THROW(detect_batch({}, tree, backend, templates, default_config(), 0),
                 dtot::ValidationError);
}

TEST(Detect, RepromptBoundaryUnderDefaultThresholds) {
    auto tree = default_tree();
    auto templates = dtot::PromptTemplates::defaults();
    for (int rating = 0; rating <= 100; ++rating) {
        ScriptedBackend backend(
            BackendKind::BlackBox,
            {{"s", "toxic", "detect", blackbox_reply("Yes", rating, "r", "toxic"), {}},
             {"s", "toxic", "classify", "hate speech", {}},
             {"s", "hate speech", "detect",
              blackbox_reply("Yes", 95, "r", "hate speech"), {}}});
        auto result = detect("s", "x", tree, backend, templates, default_config());
        bool reprompted = result.trace.size() == 2;
        EXPECT_EQ(reprompted, rating >= 1 && rating <= 89) << "rating " << rating;
    }
}

TEST(DetectFuzz, TerminationAndMonotonePaths) {
    std::mt19937 rng(2024);
    auto templates = dtot::PromptTemplates::defaults();
    for (int i = 0; i < 100; ++i) {
        auto fuzz = testsupport::make_fuzz_case(rng, 4);
        ScriptedBackend backend(BackendKind::BlackBox, fuzz.entries);
        DtotConfig cfg = default_config();
        cfg.max_steps = 1 + static_cast<int>(rng() % 4);
        auto result = detect("s", "anything", fuzz.tree, backend, templates, cfg);
        EXPECT_LE(result.trace.size(), static_cast<size_t>(cfg.max_steps));
        EXPECT_GE(result.trace.size(), 1u);
        for (size_t t = 0; t + 1 < result.trace.size(); ++t) {
            EXPECT_EQ(result.trace[t].verdict.decision, Decision::Unconfident);
            const auto* parent = fuzz.tree.find(result.trace[t].context_category);
            ASSERT_NE(parent, nullptr);
            ASSERT_TRUE(result.trace[t].selected_child.has_value());
            int child = *result.trace[t].selected_child;
            ASSERT_GE(child, 1);
            ASSERT_LE(child, static_cast<int>(parent->children.size()));
            EXPECT_EQ(parent->children[static_cast<size_t>(child - 1)].category,
                      result.trace[t + 1].context_category);
        }
    }
}

TEST(TraceRoundTrip, FinalsComeBack) {
    auto tree = default_tree();
    ScriptedBackend backend(BackendKind::BlackBox, descend_scenario());
    auto templates = dtot::PromptTemplates::defaults();
    auto result = detect("s1", "they are all criminals", tree, backend, templates,
                         default_config());
    std::ostringstream out;
    dtot::write_trace(out, result);
    std::istringstream in(out.str());
    auto finals = dtot::read_trace_finals(in);
    ASSERT_EQ(finals.size(), 1u);
    EXPECT_EQ(finals[0].statement_id, "s1");
    EXPECT_EQ(finals[0].statement, "they are all criminals");
    EXPECT_EQ(finals[0].answer, Answer::Yes);
    EXPECT_EQ(finals[0].rationale, "targets an ethnicity");
    EXPECT_EQ(finals[0].confidence, 1.0);
}
