#include "dtot/promptgen.hpp"

#include <gtest/gtest.h>

#include "test_support.hpp"

using dtot::BackendKind;
using dtot::PromptTemplates;
using dtot::PromptVariant;
using testsupport::default_tree;
using testsupport::fixture_demos;
using testsupport::read_bytes;
using testsupport::repo_path;

namespace {

std::string golden(const std::string& name) {
    return read_bytes(repo_path("golden/" + name));
}

} // namespace

TEST(PromptGen, BlackBoxRootMatchesGolden) {
    auto tree = default_tree();
    auto t = PromptTemplates::defaults();
    auto p = t.render_detection("hello", tree.root(), BackendKind::BlackBox);
    EXPECT_EQ(p.text, golden("blackbox_root.txt"));
    EXPECT_EQ(p.variant, PromptVariant::DetectBlackBox);
    EXPECT_EQ(p.context_category, "toxic");
    EXPECT_EQ(p.demo_count, 0);
}

TEST(PromptGen, WhiteBoxRootMatchesGolden) {
    auto tree = default_tree();
    auto t = PromptTemplates::defaults();
    auto p = t.render_detection("hello", tree.root(), BackendKind::WhiteBox);
    EXPECT_EQ(p.text, golden("whitebox_root.txt"));
    EXPECT_EQ(p.variant, PromptVariant::DetectWhiteBox);
}

TEST(PromptGen, AllChildVariantsMatchGoldens) {
    auto tree = default_tree();
    auto t = PromptTemplates::defaults();
    for (const auto& child : tree.root().children) {
        std::string name = child.category;
        for (auto& c : name)
            if (c == ' ') c = '_';
        auto p = t.render_detection("hello", child, BackendKind::BlackBox);
        EXPECT_EQ(p.text, golden("blackbox_" + name + ".txt")) << child.category;
    }
    auto w = t.render_detection("hello", tree.root().children[0], BackendKind::WhiteBox);
    EXPECT_EQ(w.text, golden("whitebox_hate_speech.txt"));
}

TEST(PromptGen, FewShotVariantsMatchGoldens) {
    auto tree = default_tree();
    auto t = PromptTemplates::defaults();
    auto fs = t.render_detection("hello", tree.root(), BackendKind::BlackBox,
                                 fixture_demos(false));
    EXPECT_EQ(fs.text, golden("blackbox_root_fs.txt"));
    EXPECT_EQ(fs.demo_count, 6);
    auto fsr = t.render_detection("hello", tree.root(), BackendKind::BlackBox,
                                  fixture_demos(true));
    EXPECT_EQ(fsr.text, golden("blackbox_root_fsr.txt"));
    auto wfs = t.render_detection("hello", tree.root(), BackendKind::WhiteBox,
                                  fixture_demos(false));
    EXPECT_EQ(wfs.text, golden("whitebox_root_fs.txt"));
    auto wfsr = t.render_detection("hello", tree.root(), BackendKind::WhiteBox,
                                   fixture_demos(true));
    EXPECT_EQ(wfsr.text, golden("whitebox_root_fsr.txt"));
}

TEST(PromptGen, ClassificationMatchesGolden) {
    auto tree = default_tree();
    auto t = PromptTemplates::defaults();
    std::vector<std::string> cats;
    for (const auto& c : tree.root().children) cats.push_back(c.category);
    auto p = t.render_classification("The statement stereotypes immigrants as criminals.",
                                     cats, "toxic");
    EXPECT_EQ(p.text, golden("classify_default.txt"));
    EXPECT_EQ(p.variant, PromptVariant::Classify);
    EXPECT_EQ(p.context_category, "toxic");
}

TEST(PromptGen, ClassificationNumbersEveryCategory) {
    auto t = PromptTemplates::defaults();
    auto p = t.render_classification("r", {"hate speech", "biased content"});
    EXPECT_NE(p.text.find("1. hate speech"), std::string::npos);
    EXPECT_NE(p.text.find("2. biased content"), std::string::npos);
}

TEST(PromptGen, EmptyRationaleGetsPlaceholder) {
    auto t = PromptTemplates::defaults();
    auto p = t.render_classification("", {"hate speech"});
    EXPECT_NE(p.text.find("(no rationale given)"), std::string::npos);
}

TEST(PromptGen, QuestionNamesCurrentCategoryOnly) {
    auto tree = default_tree();
    auto t = PromptTemplates::defaults();
    for (const auto& child : tree.root().children) {
        auto p = t.render_detection("some text", child, BackendKind::BlackBox);
        EXPECT_NE(p.text.find("contain " + child.category + " content?"), std::string::npos);
        EXPECT_EQ(p.text.find("contain toxic content?"), std::string::npos);
    }
}

TEST(PromptGen, RenderingIsDeterministic) {
    auto tree = default_tree();
    auto t = PromptTemplates::defaults();
    auto a = t.render_detection("hello", tree.root(), BackendKind::BlackBox,
                                fixture_demos(true));
    auto b = t.render_detection("hello", tree.root(), BackendKind::BlackBox,
                                fixture_demos(true));
    EXPECT_EQ(a.text, b.text);
}

TEST(PromptGen, DemosSerializeInGivenOrder) {
    auto tree = default_tree();
    auto t = PromptTemplates::defaults();
    auto demos = fixture_demos(false);
    auto p = t.render_detection("hello", tree.root(), BackendKind::BlackBox, demos);
    size_t pos = 0;
    for (const auto& d : demos) {
        size_t at = p.text.find(d.statement, pos);
        ASSERT_NE(at, std::string::npos) << d.statement;
        pos = at;
    }
}

TEST(PromptGen, FsrRendersRationaleLinesFsDoesNot) {
    auto tree = default_tree();
    auto t = PromptTemplates::defaults();
    auto fs = t.render_detection("hello", tree.root(), BackendKind::BlackBox,
                                 fixture_demos(false));
    auto fsr = t.render_detection("hello", tree.root(), BackendKind::BlackBox,
                                  fixture_demos(true));
    // The zero-shot tail ends with a literal "Rationale: ..." format line.
    EXPECT_EQ(fs.text.find("Rationale: The statement"), std::string::npos);
    EXPECT_NE(fsr.text.find("Rationale: The statement"), std::string::npos);
}

TEST(PromptGen, BracesInUserTextStayLiteral) {
    auto tree = default_tree();
    auto t = PromptTemplates::defaults();
    auto p = t.render_detection("weird {category} text", tree.root(), BackendKind::BlackBox);
    EXPECT_NE(p.text.find("Sentence: weird {category} text."), std::string::npos);
}

TEST(PromptGen, EmptyInputsRejected) {
    auto tree = default_tree();
    auto t = PromptTemplates::defaults();
    EXPECT_THROW(t.render_detection("", tree.root(), BackendKind::BlackBox),
                 dtot::ValidationError);
    EXPECT_THROW(t.render_classification("r", {}), dtot::ValidationError);
}

TEST(PromptGen, TemplateDirectoryOverride) {
    testsupport::TempDir dir;
    testsupport::write_file(dir.file("blackbox_detect.txt"),
                            "Q: {statement} about {category}?\n{examples}");
    testsupport::write_file(dir.file("whitebox_detect.txt"), "W: {statement}");
    testsupport::write_file(dir.file("classify.txt"), "C: {rationale}\n{menu}");
    auto t = PromptTemplates::from_directory(dir.str());
    auto tree = default_tree();
    auto p = t.render_detection("hi", tree.root(), BackendKind::BlackBox);
    EXPECT_EQ(p.text, "Q: hi about toxic?\n");
    EXPECT_NE(t.content_hash(), PromptTemplates::defaults().content_hash());
}

TEST(PromptGen, CandidateRationaleText) {
    EXPECT_EQ(dtot::candidate_rationale_text("hate speech"),
              "This statement contains hate speech content.");
    EXPECT_EQ(dtot::candidate_rationale_text("biased content"),
              "This statement contains biased content.");
}
