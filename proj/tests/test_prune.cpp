#include <doctest.h>

#include <random>

#include "mindact/error.hpp"
#include "mindact/html.hpp"
#include "mindact/prune.hpp"
#include "support.hpp"

using namespace mindact;

namespace {

std::set<NodeId> ids_of(const DomTree& t) {
  std::set<NodeId> out;
  for (const auto& [id, n] : t.nodes()) out.insert(id);
  return out;
}

// One single-step task per page, each clicking the given node.
Corpus corpus_of(const std::vector<std::pair<std::string, NodeId>>& pages) {
  std::vector<TaskRecord> tasks;
  std::map<std::string, std::shared_ptr<const DomTree>> snaps;
  for (std::size_t i = 0; i < pages.size(); ++i) {
    std::string ref = "p" + std::to_string(i);
    snaps[ref] = std::make_shared<const DomTree>(parse_snapshot(pages[i].first, std::nullopt, ref));
    tasks.push_back({"t" + std::to_string(i), "task", "w", "d", "Travel", {{0, ref, pages[i].second,
                                                                           Operation::click()}}});
  }
  return make_corpus(std::move(tasks), std::move(snaps));
}

void check_pruned_invariants(const DomTree& raw, const DomTree& pruned) {
  auto before = ids_of(raw);
  for (NodeId id : pruned.preorder()) {
    CHECK(before.count(id));
    const DomNode& n = pruned.find(id);
    if (n.parent) {
      CHECK(pruned.contains(*n.parent));
      CHECK(raw.is_ancestor(*n.parent, id));
    }
  }
  // Document order preserved.
  std::vector<NodeId> filtered;
  for (NodeId id : raw.preorder())
    if (pruned.contains(id)) filtered.push_back(id);
  CHECK(filtered == pruned.preorder());
  CHECK(pruned.root() == raw.root());
}

}  // namespace

TEST_CASE("salience follows tag, text and attribute rules") {
  PruneConfig cfg;
  DomTree t = parse_snapshot(
      "<script>x()</script><button aria-label=\"Search\"></button><div></div><div>text</div>"
      "<div title=\"tip\"></div><div title=\"  \"></div><div class=\"only-class\"></div><span hidden>gone</span>");
  int div_index = 0;
  for (const DomNode& n : iter_preorder(t)) {
    if (n.tag == "script") CHECK_FALSE(is_salient(n, cfg));
    if (n.tag == "button") CHECK(is_salient(n, cfg));
    if (n.tag == "span") CHECK_FALSE(is_salient(n, cfg));
    if (n.tag == "div") {
      bool expected[] = {false, true, true, false, false};
      CHECK_MESSAGE(is_salient(n, cfg) == expected[div_index], "div ", div_index);
      ++div_index;
    }
  }
  PruneConfig strict;
  strict.min_text_length = 5;
  DomTree short_text = parse_snapshot("<div>abcd</div>");
  for (const DomNode& n : iter_preorder(short_text))
    if (n.tag == "div") CHECK_FALSE(is_salient(n, strict));
}

TEST_CASE("a root with a script and a button prunes to root and button") {
  DomTreeBuilder b;
  NodeId root = b.add(std::nullopt, "div");
  b.add(root, "script", {}, "track()");
  NodeId button = b.add(root, "button");
  DomTree t = std::move(b).build();
  PruneResult r = prune_tree(t, {}, button);
  CHECK(ids_of(r.tree) == std::set<NodeId>{root, button});
  CHECK(r.stats.nodes_before == 3);
  CHECK(r.stats.nodes_after == 2);
  CHECK(r.stats.target_retained == true);
  CHECK(r.tree.find(root).structural);
  CHECK_FALSE(r.tree.find(button).structural);
  CHECK(rankable_nodes(r.tree) == std::vector<NodeId>{button});
}

TEST_CASE("structural ancestors keep salient nodes connected") {
  DomTree t = parse_snapshot("<div><div><section><a href=x>Go</a></section></div></div><div><div></div></div>");
  PruneResult r = prune_tree(t, {});
  check_pruned_invariants(t, r.tree);
  for (const DomNode& n : iter_preorder(r.tree))
    if (n.tag == "a") CHECK(r.tree.find(*n.parent).tag == "section");
  CHECK(r.stats.nodes_after < r.stats.nodes_before);
}

TEST_CASE("without structural ancestors nodes attach to the nearest kept ancestor") {
  DomTree t = parse_snapshot("<div><div><a href=x>Go</a></div></div>");
  PruneConfig cfg;
  cfg.keep_structural_ancestors = false;
  PruneResult r = prune_tree(t, cfg);
  for (const DomNode& n : iter_preorder(r.tree)) {
    if (n.tag == "a") CHECK(*n.parent == r.tree.root());
    CHECK_FALSE((n.tag == "div"));
  }
  check_pruned_invariants(t, r.tree);
}

TEST_CASE("a page with nothing salient prunes to its root and says so") {
  DomTree t = parse_snapshot("<div><div></div><script>x</script></div>");
  PruneResult r = prune_tree(t, {}, 3);
  CHECK(r.tree.size() == 1);
  CHECK(r.stats.all_pruned);
  CHECK(r.stats.target_retained == false);
  CHECK(rankable_nodes(r.tree).empty());
}

TEST_CASE("an empty salient attribute list is a configuration error") {
  PruneConfig cfg;
  cfg.salient_attributes.clear();
  CHECK_THROWS_AS(prune_tree(parse_snapshot("<p>x</p>"), cfg), ConfigError);
}

TEST_CASE("pruning recall counts acceptable-set survivors") {
  Corpus buttons = corpus_of({{"<button>a</button>", 3}, {"<div><button>b</button></div>", 4}});
  CHECK(pruning_recall(buttons, {}) == doctest::Approx(1.0));

  // A text-less, attribute-less div whose acceptable set is also pruned.
  Corpus bare = corpus_of({{"<div></div>", 3}});
  CHECK(pruning_recall(bare, {}) == doctest::Approx(0.0));

  // Target is a bare div inside a button: the button survives, so it counts.
  Corpus inside = corpus_of({{"<button><div></div></button>", 4}});
  CHECK(pruning_recall(inside, {}) == doctest::Approx(1.0));

  std::vector<std::pair<std::string, NodeId>> pages;
  for (int i = 0; i < 9; ++i) pages.push_back({"<a href=x>link</a>", 3});
  pages.push_back({"<div><div></div></div>", 4});
  CHECK(pruning_recall(corpus_of(pages), {}) == doctest::Approx(0.9).epsilon(1e-12));

  CHECK_THROWS_AS(pruning_recall(Corpus{}, {}), Error);
}

TEST_CASE("pruning is a connected, order-preserving, idempotent subset on random trees") {
  std::mt19937_64 rng(99);
  for (int round = 0; round < 300; ++round) {
    DomTree t = testing::random_tree(rng, 5 + static_cast<int>(rng() % 80));
    PruneConfig cfg;
    PruneResult once = prune_tree(t, cfg);
    check_pruned_invariants(t, once.tree);
    CHECK(once.stats.nodes_after <= once.stats.nodes_before);
    PruneResult twice = prune_tree(once.tree, cfg);
    CHECK(ids_of(twice.tree) == ids_of(once.tree));
    CHECK(rankable_nodes(twice.tree) == rankable_nodes(once.tree));
    CHECK(testing::canonical(twice.tree) == testing::canonical(once.tree));

    // Adding a salient attribute never shrinks the output.
    PruneConfig wider = cfg;
    wider.salient_attributes.push_back("class");
    CHECK(prune_tree(t, wider).stats.nodes_after >= once.stats.nodes_after);
  }
}

TEST_CASE("the fixture pages shrink by at least 40% while keeping targets") {
  Corpus corpus = load_corpus(testing::corpus_manifest());
  double before = 0, after = 0;
  for (const auto& task : corpus.tasks) {
    for (const auto& step : task.steps) {
      const DomTree& raw = corpus.snapshot(step.snapshot_ref);
      PruneResult r = prune_tree(raw, {}, step.target_node);
      check_pruned_invariants(raw, r.tree);
      before += static_cast<double>(r.stats.nodes_before);
      after += static_cast<double>(r.stats.nodes_after);
    }
  }
  CHECK(1.0 - after / before >= 0.40);
  CHECK(pruning_recall(corpus, {}) >= 0.90);
}
