#include "mindact/prune.hpp"

#include <map>
#include <unordered_set>

#include "mindact/error.hpp"
#include "mindact/eval.hpp"
#include "mindact/text.hpp"

namespace mindact {
namespace {

const std::unordered_set<std::string_view> kNeverSalient = {"script", "style",    "meta",    "link",
                                                            "head",   "noscript", "template"};
const std::unordered_set<std::string_view> kInteractive = {"a",      "button", "input",   "select",
                                                           "option", "textarea", "label"};

}  // namespace

bool is_salient(const DomNode& node, const PruneConfig& config) {
  if (!node.visible) return false;
  if (kNeverSalient.count(node.tag)) return false;
  if (kInteractive.count(node.tag)) return true;
  if (utf8_length(node.direct_text) >= config.min_text_length) return true;
  for (const auto& name : config.salient_attributes) {
    auto value = node.attr(name);
    if (value && !trim(*value).empty()) return true;
  }
  return false;
}

PruneResult prune_tree(const DomTree& tree, const PruneConfig& config, std::optional<NodeId> target) {
  if (config.salient_attributes.empty()) throw ConfigError("salient_attributes must not be empty");

  std::map<NodeId, bool> keep;  // id -> salient
  for (NodeId id : tree.preorder()) {
    const DomNode& node = tree.find(id);
    if (!is_salient(node, config)) continue;
    keep[id] = true;
    if (!config.keep_structural_ancestors) continue;
    for (auto p = node.parent; p && !keep.count(*p); p = tree.find(*p).parent) keep[*p] = false;
  }
  bool nothing_salient = true;
  for (const auto& [id, salient] : keep) nothing_salient = nothing_salient && !salient;
  if (!keep.count(tree.root())) keep[tree.root()] = false;

  std::map<NodeId, DomNode> nodes;
  for (NodeId id : tree.preorder()) {
    auto k = keep.find(id);
    if (k == keep.end()) continue;
    DomNode copy = tree.find(id);
    copy.children.clear();
    copy.structural = !k->second;
    copy.parent.reset();
    for (auto p = tree.find(id).parent; p; p = tree.find(*p).parent) {
      if (keep.count(*p)) {
        copy.parent = *p;
        break;
      }
    }
    if (copy.parent) nodes.at(*copy.parent).children.push_back(id);
    nodes.emplace(id, std::move(copy));
  }

  PruneStats stats;
  stats.nodes_before = tree.size();
  stats.nodes_after = nodes.size();
  stats.all_pruned = nothing_salient;
  if (target) stats.target_retained = keep.count(*target) && keep.at(*target);
  return {DomTree(tree.root(), std::move(nodes), tree.source_id(), tree.has_layout()), stats};
}

std::vector<NodeId> rankable_nodes(const DomTree& pruned) {
  std::vector<NodeId> out;
  for (NodeId id : pruned.preorder())
    if (!pruned.find(id).structural) out.push_back(id);
  return out;
}

double pruning_recall(const Corpus& corpus, const PruneConfig& config) {
  std::size_t steps = 0, hits = 0;
  std::map<std::string, DomTree> cache;
  for (const auto& task : corpus.tasks) {
    for (const auto& step : task.steps) {
      const DomTree& raw = corpus.snapshot(step.snapshot_ref);
      auto it = cache.find(step.snapshot_ref);
      if (it == cache.end()) it = cache.emplace(step.snapshot_ref, prune_tree(raw, config).tree).first;
      const DomTree& pruned = it->second;
      ++steps;
      for (NodeId id : acceptable_set(raw, step.target_node).ids) {
        if (pruned.contains(id) && !pruned.find(id).structural) {
          ++hits;
          break;
        }
      }
    }
  }
  if (steps == 0) throw Error("pruning recall is undefined on an empty corpus");
  return static_cast<double>(hits) / static_cast<double>(steps);
}

}  // namespace mindact
