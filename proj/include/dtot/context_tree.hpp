#pragma once

#include <algorithm>
#include <fstream>
#include <istream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtot/errors.hpp"

namespace dtot {

/// One context in the universe: a short category label plus the full
/// definition paragraph injected into prompts. Children are ordered; their
/// file position is the child index used for tie-breaking downstream.
struct ContextNode {
    std::string category;
    std::string context_text;
    std::vector<ContextNode> children;
};

/// Static mapping from a parent context to its list of child contexts, each
/// child a finer-grained subcategory of its parent. Immutable after load and
/// safe to share across concurrent detection tasks.
class ContextTree {
public:
    static ContextTree load(std::istream& in) {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("tree file is not valid JSON: ") + e.what());
        }
        ContextTree tree;
        tree.root_ = parse_node(doc);
        std::set<std::string> seen;
        validate_node(tree.root_, seen);
        tree.depth_ = node_depth(tree.root_);
        return tree;
    }

    static ContextTree load_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ParseError("cannot open tree file: " + path);
        return load(in);
    }

    const ContextNode& root() const { return root_; }

    /// Longest root-to-leaf path counted in nodes; 1 for a lone root.
    int depth() const { return depth_; }

    /// Category is the node key; categories are unique tree-wide.
    const ContextNode* find(const std::string& category) const {
        return find_in(root_, category);
    }

    /// Child contexts of `node` in file order; empty for leaves.
    /// Throws UnknownNodeError when `node` does not belong to this tree.
    const std::vector<ContextNode>& children_of(const ContextNode& node) const {
        const ContextNode* found = find(node.category);
        if (found == nullptr)
            throw UnknownNodeError("node '" + node.category + "' is not part of this tree");
        return found->children;
    }

    size_t node_count() const { return count_nodes(root_); }

    nlohmann::ordered_json to_json() const { return node_to_json(root_); }

    std::string serialize() const { return to_json().dump(2); }

private:
    static ContextNode parse_node(const nlohmann::json& j) {
        if (!j.is_object()) throw ParseError("tree node must be a JSON object");
        ContextNode node;
        if (!j.contains("category") || !j.at("category").is_string())
            throw ParseError("tree node is missing string field 'category'");
        if (!j.contains("context") || !j.at("context").is_string())
            throw ParseError("tree node is missing string field 'context'");
        node.category = j.at("category").get<std::string>();
        node.context_text = j.at("context").get<std::string>();
        if (j.contains("children")) {
            if (!j.at("children").is_array())
                throw ParseError("tree node field 'children' must be an array");
            for (const auto& child : j.at("children")) node.children.push_back(parse_node(child));
        }
        return node;
    }

    static void validate_node(const ContextNode& node, std::set<std::string>& seen) {
        if (node.category.empty()) throw ValidationError("tree node has an empty category");
        if (node.context_text.empty())
            throw ValidationError("tree node '" + node.category + "' has an empty context");
        if (!seen.insert(node.category).second)
            throw ValidationError("duplicate category in tree: '" + node.category + "'");
        for (const auto& child : node.children) validate_node(child, seen);
    }

    static int node_depth(const ContextNode& node) {
        int best = 0;
        for (const auto& child : node.children) best = std::max(best, node_depth(child));
        return best + 1;
    }

    static size_t count_nodes(const ContextNode& node) {
        size_t n = 1;
        for (const auto& child : node.children) n += count_nodes(child);
        return n;
    }

    static const ContextNode* find_in(const ContextNode& node, const std::string& category) {
        if (node.category == category) return &node;
        for (const auto& child : node.children) {
            if (const ContextNode* hit = find_in(child, category)) return hit;
        }
        return nullptr;
    }

    static nlohmann::ordered_json node_to_json(const ContextNode& node) {
        nlohmann::ordered_json j;
        j["category"] = node.category;
        j["context"] = node.context_text;
        auto children = nlohmann::ordered_json::array();
        for (const auto& child : node.children) children.push_back(node_to_json(child));
        j["children"] = children;
        return j;
    }

    ContextNode root_;
    int depth_ = 1;
};

inline bool operator==(const ContextNode& a, const ContextNode& b) {
    return a.category == b.category && a.context_text == b.context_text &&
           a.children == b.children;
}

} // namespace dtot
