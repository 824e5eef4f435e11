#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mindact/corpus.hpp"
#include "mindact/dom.hpp"

namespace mindact {

struct PruneConfig {
  std::vector<std::string> salient_attributes{"aria-label", "title", "alt",  "placeholder", "value",
                                              "role",       "type",  "name", "label"};
  std::size_t min_text_length = 1;
  bool keep_structural_ancestors = true;
};

struct PruneStats {
  std::size_t nodes_before = 0;
  std::size_t nodes_after = 0;
  std::optional<bool> target_retained;
  // Set when nothing on the page was salient and only the root survived.
  bool all_pruned = false;
};

struct PruneResult {
  DomTree tree;
  PruneStats stats;
};

/// A node is salient when it is visible, is not a non-content tag, and either
/// has text, carries a non-empty salient attribute, or is an interactive tag.
bool is_salient(const DomNode& node, const PruneConfig& config);

/// Keeps exactly the salient nodes, plus (with keep_structural_ancestors) the
/// ancestors linking them to the root; without it, salient nodes are
/// re-attached to their nearest retained ancestor. The root always survives.
/// Node ids and document order are preserved. Nodes kept only for
/// connectivity are flagged `structural`.
PruneResult prune_tree(const DomTree& tree, const PruneConfig& config,
                       std::optional<NodeId> target = std::nullopt);

/// Ids of the retained, non-structural nodes in document order: the elements
/// a ranker scores.
std::vector<NodeId> rankable_nodes(const DomTree& pruned);

/// Fraction of steps whose target, or any member of its acceptable set,
/// survives pruning as a rankable node. Throws Error on an empty corpus.
double pruning_recall(const Corpus& corpus, const PruneConfig& config);

}  // namespace mindact
