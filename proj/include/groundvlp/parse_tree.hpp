#pragma once

// Constituency parse trees, read from Penn-style bracketed text such as
// "(NP (DT a) (NN cat))" or from a JSON node array.

#include <cctype>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "groundvlp/error.hpp"

namespace groundvlp {

struct ParseNode {
  std::string label;
  std::string word;  // non-empty only for preterminals
  std::vector<std::size_t> children;
  std::size_t span_begin = 0;  // leaf positions covered, [begin, end)
  std::size_t span_end = 0;

  bool is_preterminal() const { return children.empty(); }
};

/// Nodes stored in preorder; node 0 is the root.
class ParseTree {
 public:
  ParseTree() = default;

  const std::vector<ParseNode>& nodes() const { return nodes_; }
  bool empty() const { return nodes_.empty(); }
  const ParseNode& root() const { return nodes_.front(); }
  const ParseNode& node(std::size_t i) const { return nodes_[i]; }

  /// Preterminal node indices, left to right.
  std::vector<std::size_t> leaves() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].is_preterminal()) out.push_back(i);
    return out;
  }

  static ParseTree from_bracketed(std::string_view text);
  static ParseTree from_json(const nlohmann::json& j);

 private:
  friend class TreeBuilder;
  std::vector<ParseNode> nodes_;
};

class TreeBuilder {
 public:
  explicit TreeBuilder(ParseTree& tree) : tree_(tree) {}

  std::size_t add(std::string label, std::string word) {
    tree_.nodes_.push_back({std::move(label), std::move(word), {}, 0, 0});
    return tree_.nodes_.size() - 1;
  }
  ParseNode& at(std::size_t i) { return tree_.nodes_[i]; }

  // Assigns leaf spans; nodes must already be in preorder.
  void finish() { assign_spans(0); }

 private:
  void assign_spans(std::size_t i) {
    auto& n = tree_.nodes_[i];
    n.span_begin = next_leaf_;
    if (n.is_preterminal()) {
      ++next_leaf_;
    } else {
      for (std::size_t c : n.children) assign_spans(c);
    }
    tree_.nodes_[i].span_end = next_leaf_;
  }

  ParseTree& tree_;
  std::size_t next_leaf_ = 0;
};

namespace detail {

class BracketReader {
 public:
  explicit BracketReader(std::string_view text) : text_(text) {}

  ParseTree read() {
    ParseTree tree;
    TreeBuilder builder(tree);
    skip_space();
    if (pos_ >= text_.size()) throw Error(Errc::kEmptyTree, "tree", "no brackets found");
    read_node(builder);
    skip_space();
    if (pos_ != text_.size()) fail("trailing text after the root bracket");
    builder.finish();
    return tree;
  }

 private:
  std::size_t read_node(TreeBuilder& builder) {
    expect('(');
    skip_space();
    std::string label;
    if (peek() != '(') label = atom();
    skip_space();
    const std::size_t self = builder.add(label, "");
    if (peek() == '(') {
      while (peek() == '(') {
        const std::size_t child = read_node(builder);
        builder.at(self).children.push_back(child);
        skip_space();
      }
    } else {
      if (label.empty()) fail("preterminal without a label");
      if (peek() == ')') fail("node '" + label + "' has neither word nor children");
      builder.at(self).word = atom();
      skip_space();
    }
    expect(')');
    return self;
  }

  std::string atom() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) &&
           text_[pos_] != '(' && text_[pos_] != ')')
      ++pos_;
    if (pos_ == start) fail("expected a label or word");
    return std::string(text_.substr(start, pos_ - start));
  }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(Errc::kParse, "tree", what + " at offset " + std::to_string(pos_));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline ParseTree ParseTree::from_bracketed(std::string_view text) {
  return detail::BracketReader(text).read();
}

/// {"root": 0, "nodes": [{"label": "NP", "children": [1, 2]},
///                       {"label": "DT", "word": "a"}, ...]}
inline ParseTree ParseTree::from_json(const nlohmann::json& j) try {
  if (!j.is_object() || !j.contains("nodes") || !j["nodes"].is_array())
    throw Error(Errc::kParse, "tree", "expected an object with a 'nodes' array");
  const auto& nodes = j["nodes"];
  if (nodes.empty()) throw Error(Errc::kEmptyTree, "tree", "no nodes");
  const std::size_t root = j.value("root", std::size_t{0});
  if (root >= nodes.size()) throw Error(Errc::kParse, "tree.root", "root index out of range");

  std::vector<int> parents(nodes.size(), -1);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (const auto& c : nodes[i].value("children", nlohmann::json::array())) {
      const auto child = c.get<std::size_t>();
      if (child >= nodes.size() || child == root || parents[child] != -1)
        throw Error(Errc::kParse, "tree.nodes", "node " + std::to_string(child) +
                                                    " has an invalid or repeated parent");
      parents[child] = static_cast<int>(i);
    }
  }

  // Re-emit in preorder so spans and leaf order follow the tree.
  ParseTree tree;
  TreeBuilder builder(tree);
  std::size_t visited = 0;
  auto emit = [&](auto&& self, std::size_t src) -> std::size_t {
    if (++visited > nodes.size()) throw Error(Errc::kParse, "tree.nodes", "cycle detected");
    const auto& n = nodes[src];
    const std::size_t dst =
        builder.add(n.value("label", std::string{}), n.value("word", std::string{}));
    const auto children = n.value("children", std::vector<std::size_t>{});
    if (children.empty() == builder.at(dst).word.empty())
      throw Error(Errc::kParse, "tree.nodes",
                  "node " + std::to_string(src) + " needs exactly one of word or children");
    for (std::size_t c : children) {
      const std::size_t child = self(self, c);
      builder.at(dst).children.push_back(child);
    }
    return dst;
  };
  emit(emit, root);
  if (visited != nodes.size())
    throw Error(Errc::kParse, "tree.nodes", "nodes unreachable from the root");
  builder.finish();
  return tree;
} catch (const nlohmann::json::exception& e) {
  throw Error(Errc::kParse, "tree", e.what());
}

}  // namespace groundvlp
