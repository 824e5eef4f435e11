#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mindact {

using NodeId = std::int32_t;

/// Post-rendering box in CSS pixels.
struct BoundingBox {
  double x = 0;
  double y = 0;
  double width = 0;
  double height = 0;

  double area() const { return width * height; }
  /// True when `inner` lies entirely inside this box (edges inclusive).
  bool contains(const BoundingBox& inner) const;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

using Attributes = std::vector<std::pair<std::string, std::string>>;

struct DomNode {
  NodeId node_id = 0;
  std::string tag;          // lowercase
  Attributes attributes;    // source order
  std::string direct_text;  // whitespace-collapsed text of immediate text children
  std::vector<NodeId> children;
  std::optional<NodeId> parent;
  bool visible = true;
  std::optional<BoundingBox> bbox;
  // Set by pruning on nodes kept only to connect salient descendants to the root.
  bool structural = false;

  std::optional<std::string_view> attr(std::string_view name) const;
  bool has_attr(std::string_view name) const { return attr(name).has_value(); }
};

/// Immutable page snapshot. Construction validates the tree invariants
/// (unique ids, consistent parent/child links, acyclic, all reachable).
class DomTree {
 public:
  DomTree(NodeId root, std::map<NodeId, DomNode> nodes, std::string source_id,
          bool has_layout = false);

  NodeId root() const { return root_; }
  const std::map<NodeId, DomNode>& nodes() const { return nodes_; }
  const std::string& source_id() const { return source_id_; }
  bool has_layout() const { return has_layout_; }
  std::size_t size() const { return nodes_.size(); }

  bool contains(NodeId id) const { return nodes_.count(id) != 0; }
  /// Throws NotFoundError for unknown ids.
  const DomNode& find(NodeId id) const;

  /// Node ids in depth-first pre-order, siblings in document order. This is
  /// the canonical document order.
  const std::vector<NodeId>& preorder() const { return preorder_; }
  /// Position of `id` in preorder(); throws NotFoundError.
  std::size_t document_position(NodeId id) const;

  bool is_ancestor(NodeId ancestor, NodeId node) const;

 private:
  NodeId root_;
  std::map<NodeId, DomNode> nodes_;
  std::string source_id_;
  bool has_layout_;
  std::vector<NodeId> preorder_;
  std::map<NodeId, std::size_t> position_;
};

const DomNode& find_node(const DomTree& tree, NodeId id);
std::vector<std::reference_wrapper<const DomNode>> iter_preorder(const DomTree& tree);

/// Incremental construction helper used by the parser and by tests.
class DomTreeBuilder {
 public:
  explicit DomTreeBuilder(std::string source_id = {}) : source_id_(std::move(source_id)) {}

  /// Adds a node as the last child of `parent` (or as the root when parent is
  /// empty) and returns its id. Ids are assigned sequentially from 0.
  NodeId add(std::optional<NodeId> parent, std::string tag, Attributes attributes = {},
             std::string direct_text = {});
  DomNode& node(NodeId id);
  void set_layout(bool has_layout) { has_layout_ = has_layout; }
  DomTree build() &&;

 private:
  std::string source_id_;
  std::map<NodeId, DomNode> nodes_;
  std::optional<NodeId> root_;
  NodeId next_ = 0;
  bool has_layout_ = false;
};

enum class OpKind { Click, Type, Select };

std::string_view op_kind_name(OpKind kind);
/// Accepts CLICK/TYPE/SELECT plus the variants recorded as clicks
/// (HOVER, ENTER, PRESS ENTER, CLICK (FAKE)); case-insensitive.
std::optional<OpKind> parse_op_kind(std::string_view text);

class Operation {
 public:
  /// Throws std::invalid_argument when the kind/value pairing is invalid.
  Operation(OpKind kind, std::string value);

  static Operation click() { return Operation(OpKind::Click, {}); }
  static Operation type(std::string value) { return Operation(OpKind::Type, std::move(value)); }
  static Operation select(std::string value) {
    return Operation(OpKind::Select, std::move(value));
  }

  OpKind kind() const { return kind_; }
  const std::string& value() const { return value_; }

  friend bool operator==(const Operation&, const Operation&) = default;

 private:
  OpKind kind_;
  std::string value_;
};

struct StepRecord {
  int index = 0;
  std::string snapshot_ref;
  NodeId target_node = 0;
  Operation operation = Operation::click();
};

struct TaskRecord {
  std::string task_id;
  std::string description;
  std::string website;
  std::string domain;
  std::string top_domain;
  std::vector<StepRecord> steps;
};

/// A model's (target element, operation) decision for one step.
struct PredictedAction {
  std::optional<NodeId> element;
  std::optional<Operation> operation;
  int rounds_used = 0;
  int model_calls = 0;
};

}  // namespace mindact
