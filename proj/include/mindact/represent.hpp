#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mindact/dom.hpp"
#include "mindact/prune.hpp"

namespace mindact {

struct ReprConfig {
  std::vector<std::string> salient_attributes = PruneConfig{}.salient_attributes;
  std::size_t max_tokens_per_segment = 30;
  int child_depth = 1;
  bool include_parent = true;
  std::size_t max_history = 5;
  bool lowercase = true;
};

struct ElementText {
  NodeId node_id = 0;
  std::string text;
  std::size_t token_count = 0;  // words in the element's own segment
};

struct QueryText {
  std::string text;
  std::size_t history_len = 0;
};

/// A node's own content: salient attribute values in configured order, then
/// its direct text, jointly cut to the word cap. Never contains "id=".
struct ElementSegment {
  std::string attributes;
  std::string text;

  std::string joined() const;
  std::size_t word_count() const;
};

ElementSegment element_segment(const DomNode& node, const ReprConfig& cfg);

/// `[<parent>] <tag segment> <child> ... </child>` on one line, lowercased.
/// Throws NotFoundError for an unknown id.
ElementText represent_element(const DomTree& tree, NodeId id, const ReprConfig& cfg = {});

/// History line: `[role-or-tag]  <element label> -> KIND[: value]`. The label
/// keeps its case and is cut to 50 characters followed by "...".
std::string format_action(const StepRecord& step, const DomTree& tree);
std::string format_action(const DomTree& tree, NodeId element, const Operation& op);

using SnapshotResolver = std::function<const DomTree&(const std::string& source_id)>;

/// `Task: <description>\nPrevious actions:\n` followed by the last
/// min(upto_step, max_history) gold actions, or `None`.
QueryText build_query(const TaskRecord& task, std::size_t upto_step, const SnapshotResolver& trees,
                      const ReprConfig& cfg = {});
/// Same layout with caller-supplied history lines (predicted-history runs).
QueryText build_query_with_history(const std::string& description,
                                   const std::vector<std::string>& history, const ReprConfig& cfg = {});

}  // namespace mindact
