#include "dtot/context_tree.hpp"

#include <sstream>

#include <gtest/gtest.h>

#include "test_support.hpp"

using dtot::ContextTree;

TEST(ContextTree, LoadsDefaultTree) {
    auto tree = testsupport::default_tree();
    EXPECT_EQ(tree.root().category, "toxic");
    ASSERT_EQ(tree.root().children.size(), 5u);
    EXPECT_EQ(tree.root().children[0].category, "hate speech");
    EXPECT_EQ(tree.root().children[1].category, "biased content");
    EXPECT_EQ(tree.root().children[2].category, "sexual content");
    EXPECT_EQ(tree.root().children[3].category, "violent content");
    EXPECT_EQ(tree.root().children[4].category, "bullying content");
    EXPECT_EQ(tree.depth(), 2);
    EXPECT_EQ(tree.node_count(), 6u);
}

TEST(ContextTree, SingleNodeTreeHasDepthOne) {
    std::istringstream in(R"({"category": "toxic", "context": "def"})");
    auto tree = ContextTree::load(in);
    EXPECT_EQ(tree.depth(), 1);
    EXPECT_TRUE(tree.root().children.empty());
}

TEST(ContextTree, DuplicateCategoryRejected) {
    std::istringstream in(R"({
        "category": "toxic", "context": "def",
        "children": [
            {"category": "hate speech", "context": "a"},
            {"category": "hate speech", "context": "b"}
        ]})");
    EXPECT_THROW(ContextTree::load(in), dtot::ValidationError);
}

TEST(ContextTree, EmptyContextRejected) {
    std::istringstream in(R"({"category": "toxic", "context": ""})");
    EXPECT_THROW(ContextTree::load(in), dtot::ValidationError);
}

TEST(ContextTree, EmptyCategoryRejected) {
    std::istringstream in(R"({"category": "", "context": "def"})");
    EXPECT_THROW(ContextTree::load(in), dtot::ValidationError);
}

TEST(ContextTree, MalformedJsonIsParseError) {
    std::istringstream in("{not json");
    EXPECT_THROW(ContextTree::load(in), dtot::ParseError);
    std::istringstream missing(R"({"category": "toxic"})");
    EXPECT_THROW(ContextTree::load(missing), dtot::ParseError);
}

TEST(ContextTree, ChildrenInFileOrder) {
    auto tree = testsupport::default_tree();
    const auto& children = tree.children_of(tree.root());
    ASSERT_EQ(children.size(), 5u);
    EXPECT_EQ(children[0].category, "hate speech");
    EXPECT_EQ(children[4].category, "bullying content");
    for (const auto& child : children) EXPECT_NE(child.category, tree.root().category);
}

TEST(ContextTree, LeafHasNoChildren) {
    auto tree = testsupport::default_tree();
    const dtot::ContextNode* leaf = tree.find("hate speech");
    ASSERT_NE(leaf, nullptr);
    EXPECT_TRUE(tree.children_of(*leaf).empty());
}

TEST(ContextTree, ForeignNodeIsUnknown) {
    auto tree = testsupport::default_tree();
    std::istringstream in(R"({"category": "spam", "context": "def"})");
    auto other = ContextTree::load(in);
    EXPECT_THROW(tree.children_of(other.root()), dtot::UnknownNodeError);
}

TEST(ContextTree, SerializeRoundTrips) {
    auto tree = testsupport::default_tree();
    std::istringstream in(tree.serialize());
    auto reloaded = ContextTree::load(in);
    EXPECT_EQ(tree.root(), reloaded.root());
    EXPECT_EQ(tree.depth(), reloaded.depth());
}

TEST(ContextTree, StableAcrossLoads) {
    auto a = testsupport::default_tree();
    auto b = testsupport::default_tree();
    EXPECT_EQ(a.root(), b.root());
}
