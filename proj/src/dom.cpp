#include "mindact/dom.hpp"

#include <algorithm>
#include <stdexcept>

#include "mindact/error.hpp"
#include "mindact/text.hpp"

namespace mindact {

bool BoundingBox::contains(const BoundingBox& inner) const {
  return inner.x >= x && inner.y >= y && inner.x + inner.width <= x + width &&
         inner.y + inner.height <= y + height;
}

std::optional<std::string_view> DomNode::attr(std::string_view name) const {
  for (const auto& [key, value] : attributes) {
    if (key == name) return std::string_view(value);
  }
  return std::nullopt;
}

DomTree::DomTree(NodeId root, std::map<NodeId, DomNode> nodes, std::string source_id,
                 bool has_layout)
    : root_(root),
      nodes_(std::move(nodes)),
      source_id_(std::move(source_id)),
      has_layout_(has_layout) {
  auto root_it = nodes_.find(root_);
  if (root_it == nodes_.end()) throw InvalidTreeError("root id not present in node map");
  if (root_it->second.parent) throw InvalidTreeError("root node has a parent");
  for (const auto& [id, node] : nodes_) {
    if (node.node_id != id) throw InvalidTreeError("node map key disagrees with node_id");
    if (id != root_ && !node.parent)
      throw InvalidTreeError("non-root node " + std::to_string(id) + " has no parent");
    if (node.parent) {
      auto p = nodes_.find(*node.parent);
      if (p == nodes_.end())
        throw InvalidTreeError("node " + std::to_string(id) + " has unknown parent");
      const auto& siblings = p->second.children;
      if (std::count(siblings.begin(), siblings.end(), id) != 1)
        throw InvalidTreeError("parent of node " + std::to_string(id) + " does not list it");
    }
    for (NodeId child : node.children) {
      auto c = nodes_.find(child);
      if (c == nodes_.end() || c->second.parent != id)
        throw InvalidTreeError("child link " + std::to_string(id) + "->" +
                               std::to_string(child) + " is inconsistent");
    }
  }

  // Iterative walk; every node has exactly one parent listing it, so a walk
  // from the root that reaches every node is also cycle-free.
  preorder_.reserve(nodes_.size());
  std::vector<NodeId> stack{root_};
  while (!stack.empty()) {
    NodeId id = stack.back();
    stack.pop_back();
    if (preorder_.size() >= nodes_.size()) throw InvalidTreeError("cycle detected");
    preorder_.push_back(id);
    const auto& children = nodes_.at(id).children;
    for (auto it = children.rbegin(); it != children.rend(); ++it) stack.push_back(*it);
  }
  if (preorder_.size() != nodes_.size())
    throw InvalidTreeError("tree has nodes unreachable from the root");
  for (std::size_t i = 0; i < preorder_.size(); ++i) position_[preorder_[i]] = i;
}

const DomNode& DomTree::find(NodeId id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end())
    throw NotFoundError("node " + std::to_string(id) + " not found in " + source_id_);
  return it->second;
}

std::size_t DomTree::document_position(NodeId id) const {
  auto it = position_.find(id);
  if (it == position_.end())
    throw NotFoundError("node " + std::to_string(id) + " not found in " + source_id_);
  return it->second;
}

bool DomTree::is_ancestor(NodeId ancestor, NodeId node) const {
  std::optional<NodeId> cur = find(node).parent;
  while (cur) {
    if (*cur == ancestor) return true;
    cur = find(*cur).parent;
  }
  return false;
}

const DomNode& find_node(const DomTree& tree, NodeId id) { return tree.find(id); }

std::vector<std::reference_wrapper<const DomNode>> iter_preorder(const DomTree& tree) {
  std::vector<std::reference_wrapper<const DomNode>> out;
  out.reserve(tree.size());
  for (NodeId id : tree.preorder()) out.emplace_back(tree.nodes().at(id));
  return out;
}

NodeId DomTreeBuilder::add(std::optional<NodeId> parent, std::string tag, Attributes attributes,
                           std::string direct_text) {
  NodeId id = next_++;
  DomNode node;
  node.node_id = id;
  node.tag = std::move(tag);
  node.attributes = std::move(attributes);
  node.direct_text = std::move(direct_text);
  node.parent = parent;
  if (parent) {
    nodes_.at(*parent).children.push_back(id);
  } else {
    if (root_) throw InvalidTreeError("tree already has a root");
    root_ = id;
  }
  nodes_.emplace(id, std::move(node));
  return id;
}

DomNode& DomTreeBuilder::node(NodeId id) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw NotFoundError("node " + std::to_string(id) + " not built");
  return it->second;
}

DomTree DomTreeBuilder::build() && {
  if (!root_) throw InvalidTreeError("empty tree");
  return DomTree(*root_, std::move(nodes_), std::move(source_id_), has_layout_);
}

std::string_view op_kind_name(OpKind kind) {
  switch (kind) {
    case OpKind::Click:
      return "CLICK";
    case OpKind::Type:
      return "TYPE";
    case OpKind::Select:
      return "SELECT";
  }
  return "CLICK";
}

std::optional<OpKind> parse_op_kind(std::string_view text) {
  std::string s = to_upper(collapse_whitespace(text));
  if (s == "CLICK" || s == "HOVER" || s == "ENTER" || s == "PRESS ENTER" ||
      s == "CLICK (FAKE)")
    return OpKind::Click;
  if (s == "TYPE") return OpKind::Type;
  if (s == "SELECT" || s == "SELECT OPTION") return OpKind::Select;
  return std::nullopt;
}

Operation::Operation(OpKind kind, std::string value) : kind_(kind), value_(std::move(value)) {
  if (kind_ == OpKind::Click && !value_.empty())
    throw std::invalid_argument("CLICK operation must not carry a value");
  if (kind_ != OpKind::Click && value_.empty())
    throw std::invalid_argument(std::string(op_kind_name(kind_)) +
                                " operation requires a non-empty value");
}

}  // namespace mindact
