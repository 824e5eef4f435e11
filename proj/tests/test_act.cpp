#include <doctest.h>

#include <cmath>
#include <mutex>
#include <numeric>
#include <random>

#include "mindact/act.hpp"
#include "mindact/error.hpp"
#include "mindact/html.hpp"
#include "support.hpp"

using namespace mindact;

namespace {

DomTree pruned_page(const std::string& html) { return prune_tree(parse_snapshot(html), {}).tree; }

// A page with `n` buttons labelled b0..b{n-1}, pruned.
DomTree button_page(int n) {
  std::string html = "<div>";
  for (int i = 0; i < n; ++i) html += "<button>b" + std::to_string(i) + "</button>";
  return pruned_page(html + "</div>");
}

CandidateSet all_candidates(const DomTree& pruned) {
  std::vector<ScoredElement> scores;
  for (NodeId id : rankable_nodes(pruned)) scores.push_back({id, 0.0});
  return top_k(scores, scores.size());
}

const QueryText kQuery{"Task: press a button\nPrevious actions:\nNone", 0};

ActConfig fast_config() {
  ActConfig cfg;
  cfg.max_in_flight = 1;
  return cfg;
}

// Picks the option whose node id is `gold` when offered, else option B.
CallbackClient always_pick(NodeId gold) {
  return CallbackClient([gold](const ChatRequest& r) {
    for (std::size_t i = 0; i < r.option_ids.size(); ++i)
      if (r.option_ids[i] == gold) return std::string("Answer: ") + ChoiceGroup::letter_for(i) + ".\nAction: CLICK";
    return std::string("Answer: B.\nAction: CLICK");
  });
}

int count_lines_starting(const std::string& text, const std::string& prefix) {
  int n = 0;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) n += line.rfind(prefix, 0) == 0;
  return n;
}

}  // namespace

TEST_CASE("snippets keep ancestors, neighbours and candidate subtrees") {
  DomTree p = pruned_page("<div><button>Book</button><a href=x>Home</a><span>Info</span></div>");
  // html 0, body 2, div 3, button 4, a 5, span 6
  std::vector<NodeId> cands{4};
  Snippet s = build_snippet(p, cands, fast_config());
  CHECK(s.text == "<html> <body> <div> <button id=0> book </button> <a> home </a> </div> </body> </html>");
  CHECK(s.included_ids == std::set<NodeId>{0, 2, 3, 4, 5});
  CHECK(s.candidate_forms == std::vector<std::string>{"<button id=0> book </button>"});

  Snippet plain = build_snippet(p, cands, fast_config(), false);
  CHECK(plain.text.find("id=") == std::string::npos);
  CHECK(plain.candidate_forms == std::vector<std::string>{"<button> book </button>"});

  std::vector<NodeId> two{6, 4};
  Snippet s2 = build_snippet(p, two, fast_config());
  CHECK(s2.text == "<html> <body> <div> <button id=1> book </button> <a> home </a> <span id=0> info </span> </div> "
                   "</body> </html>");
  CHECK(s2.candidate_forms == std::vector<std::string>{"<span id=0> info </span>", "<button id=1> book </button>"});

  std::vector<NodeId> dup{4, 4};
  CHECK_THROWS_AS(build_snippet(p, dup, fast_config()), SnippetError);
}

TEST_CASE("over budget, neighbours go before candidate descendants") {
  DomTree p = pruned_page(
      "<div><a href=1>left neighbour text</a><button><span>inner label</span></button><a href=2>right neighbour "
      "text</a></div>");
  std::vector<NodeId> cands{5};  // the button
  ActConfig cfg = fast_config();
  Snippet full = build_snippet(p, cands, cfg);
  CHECK(full.text.find("neighbour") != std::string::npos);
  CHECK(full.text.find("inner label") != std::string::npos);

  cfg.char_budget = full.text.size() - 1;
  Snippet trimmed = build_snippet(p, cands, cfg);
  CHECK(trimmed.text.size() <= cfg.char_budget);
  CHECK(trimmed.text.find("right neighbour") == std::string::npos);  // document end goes first
  CHECK(trimmed.text.find("inner label") != std::string::npos);

  cfg.char_budget = std::string("<html> <body> <div> <button id=0 /> </div> </body> </html>").size();
  Snippet minimal = build_snippet(p, cands, cfg);
  CHECK(minimal.text == "<html> <body> <div> <button id=0 /> </div> </body> </html>");

  cfg.char_budget = 20;
  CHECK_THROWS_AS(build_snippet(p, cands, cfg), SnippetError);

  std::mt19937_64 rng(12);
  for (int round = 0; round < 100; ++round) {
    DomTree t = prune_tree(testing::random_tree(rng, 60), {}).tree;
    auto ranked = rankable_nodes(t);
    if (ranked.empty()) continue;
    std::vector<NodeId> group(ranked.begin(), ranked.begin() + std::min<std::ptrdiff_t>(5, ranked.size()));
    ActConfig c = fast_config();
    c.char_budget = 150 + rng() % 400;
    try {
      Snippet s = build_snippet(t, group, c);
      CHECK(s.text.size() <= c.char_budget);
      for (NodeId id : group) CHECK(s.included_ids.count(id));
      for (std::size_t k = 0; k < group.size(); ++k)
        CHECK(s.text.find("id=" + std::to_string(k)) != std::string::npos);
    } catch (const SnippetError&) {
    }
  }
}

TEST_CASE("candidates are chunked in rank order, optionally shuffled") {
  std::vector<NodeId> fifty(50);
  std::iota(fifty.begin(), fifty.end(), 0);
  auto groups = chunk_candidates(fifty, 5);
  CHECK(groups.size() == 10);
  CHECK(groups[0] == std::vector<NodeId>{0, 1, 2, 3, 4});
  CHECK(groups[9] == std::vector<NodeId>{45, 46, 47, 48, 49});

  std::vector<NodeId> seven{1, 2, 3, 4, 5, 6, 7};
  auto g7 = chunk_candidates(seven, 5);
  REQUIRE(g7.size() == 2);
  CHECK(g7[0].size() == 5);
  CHECK(g7[1] == std::vector<NodeId>{6, 7});
  CHECK(chunk_candidates(std::vector<NodeId>{}, 5).empty());
  CHECK_THROWS_AS(chunk_candidates(seven, 0), std::invalid_argument);

  auto a = chunk_candidates(fifty, 5, true, 42);
  auto b = chunk_candidates(fifty, 5, true, 42);
  CHECK(a == b);
  CHECK(a != groups);
  std::vector<NodeId> flat;
  for (const auto& g : a) flat.insert(flat.end(), g.begin(), g.end());
  std::sort(flat.begin(), flat.end());
  CHECK(flat == fifty);
}

TEST_CASE("a choice prompt holds the system turn, demonstrations and lettered options") {
  DomTree p = button_page(3);
  std::vector<NodeId> opts = rankable_nodes(p);
  ChoiceGroup g = build_choice_group(p, opts, kQuery, fast_config());
  REQUIRE(g.prompt.size() == 8);
  CHECK(g.prompt[0].role == "system");
  CHECK(g.prompt[0].content == kActionSystemPrompt);
  for (std::size_t i = 1; i < 7; ++i) CHECK(g.prompt[i].role == (i % 2 ? "user" : "assistant"));
  const std::string& last = g.prompt.back().content;
  CHECK(g.prompt.back().role == "user");
  CHECK(last.find(kQuery.text) != std::string::npos);
  CHECK(last.find("\nA. None of the above") != std::string::npos);
  CHECK(last.find("\nB. <button id=0> b0 </button>") != std::string::npos);
  CHECK(last.find("\nD. <button id=2> b2 </button>") != std::string::npos);
  CHECK(last.find("\nE. ") == std::string::npos);
  CHECK(g.options == opts);

  // Demonstrations follow the same layout as the real question.
  CHECK(count_lines_starting(g.prompt[1].content, "A. None of the above") == 1);
  CHECK(g.prompt[2].content.rfind("Answer: ", 0) == 0);

  ActConfig none = fast_config();
  none.demonstrations = 0;
  CHECK(build_choice_group(p, opts, kQuery, none).prompt.size() == 2);
  none.demonstrations = 4;
  CHECK_THROWS_AS(build_choice_group(p, opts, kQuery, none), ConfigError);
  DomTree six = button_page(6);
  CHECK_THROWS_AS(build_choice_group(six, rankable_nodes(six), kQuery, fast_config()), std::invalid_argument);
}

TEST_CASE("option lines show the first words of each candidate") {
  DomTree p = pruned_page("<button>one two three four five six seven eight nine ten eleven twelve</button>");
  auto opts = rankable_nodes(p);
  ChoiceGroup g = build_choice_group(p, opts, kQuery, fast_config());
  const std::string& last = g.prompt.back().content;
  const std::string expected = "\nB. <button id=0> one two three four five six seven eight";
  CHECK(last.substr(last.size() - expected.size()) == expected);
}

TEST_CASE("model answers parse into a letter, an action and a value") {
  ModelAnswer a = parse_model_answer("Answer: B.\nAction: TYPE\nValue: Denver");
  CHECK(a.parsed);
  CHECK(a.choice_letter == 'B');
  CHECK(a.operation() == Operation::type("Denver"));

  ModelAnswer b = parse_model_answer("Thinking...\nanswer: c\naction: click.");
  CHECK(b.choice_letter == 'C');
  CHECK(b.operation() == Operation::click());

  ModelAnswer c = parse_model_answer("Answer: A.");
  CHECK(c.parsed);
  CHECK(c.choice_letter == 'A');
  CHECK_FALSE(c.operation().has_value());

  ModelAnswer d = parse_model_answer("I would click the button.");
  CHECK_FALSE(d.parsed);
  CHECK(d.choice_letter == 'A');

  CHECK_FALSE(parse_model_answer("Answer: Bob").parsed);
  CHECK_FALSE(parse_model_answer("Answer: B.\nAction: TYPE").operation().has_value());
  CHECK(parse_model_answer("Answer: D\nAction: SELECT\nValue: 2 adults").operation() == Operation::select("2 adults"));
  CHECK_FALSE(parse_model_answer("Answer: B.\nAction: DRAG").operation().has_value());
  CHECK(parse_model_answer("Answer: (B)").parsed == false);
}

TEST_CASE("reduction narrows fifty candidates in three rounds") {
  DomTree p = button_page(50);
  CandidateSet cands = all_candidates(p);
  REQUIRE(cands.items.size() == 50);
  NodeId gold = cands.items[37].node_id;

  CallbackClient picker = always_pick(gold);
  ReductionTrace trace;
  PredictedAction got = reduce_to_single(cands, kQuery, p, picker, fast_config(), "t#0", &trace);
  CHECK(got.element == gold);
  CHECK(got.operation == Operation::click());
  CHECK(got.model_calls == 13);
  CHECK(got.rounds_used == 3);
  REQUIRE(trace.rounds.size() == 3);
  CHECK(trace.rounds[1].size() == 10);
  CHECK(trace.rounds[2].size() == 2);

  CallbackClient none([](const ChatRequest&) { return std::string("Answer: A."); });
  PredictedAction nothing = reduce_to_single(cands, kQuery, p, none, fast_config());
  CHECK_FALSE(nothing.element.has_value());
  CHECK_FALSE(nothing.operation.has_value());
  CHECK(nothing.model_calls == 10);
  CHECK(nothing.rounds_used == 1);

  DomTree four = button_page(4);
  CallbackClient b_only([](const ChatRequest&) { return std::string("Answer: C.\nAction: TYPE\nValue: x"); });
  PredictedAction small = reduce_to_single(all_candidates(four), kQuery, four, b_only, fast_config());
  CHECK(small.model_calls == 1);
  CHECK(small.element == all_candidates(four).items[1].node_id);
  CHECK(small.operation == Operation::type("x"));

  CHECK_THROWS_AS(reduce_to_single(CandidateSet{}, kQuery, p, none, fast_config()), PredictionError);
}

TEST_CASE("reduction terminates with bounded calls for arbitrary replies") {
  const std::vector<std::string> replies{"Answer: A.", "Answer: B.", "Answer: C.\nAction: CLICK", "Answer: E.",
                                         "Answer: F.", "garbage", "Answer: Z.", "Answer: D.\nAction: TYPE\nValue: q"};
  std::mt19937_64 rng(77);
  for (int round = 0; round < 1000; ++round) {
    int n = 1 + static_cast<int>(rng() % 60);
    static std::map<int, DomTree> pages;
    if (!pages.count(n)) pages.emplace(n, button_page(n));
    const DomTree& p = pages.at(n);
    CandidateSet cands = all_candidates(p);
    std::uint64_t local_seed = rng();
    std::mutex mu;
    std::mt19937_64 reply_rng(local_seed);
    CallbackClient client([&](const ChatRequest&) {
      std::lock_guard lock(mu);
      return replies[reply_rng() % replies.size()];
    });
    ActConfig cfg = fast_config();
    cfg.shuffle = rng() % 2;
    cfg.seed = rng();
    cfg.demonstrations = 0;
    ReductionTrace trace;
    PredictedAction got = reduce_to_single(cands, kQuery, p, client, cfg, "k", &trace);
    int max_rounds = 1 + static_cast<int>(std::ceil(std::log(static_cast<double>(n)) / std::log(5.0)));
    CHECK(got.rounds_used <= max_rounds);
    int bound = 0;
    for (const auto& r : trace.rounds) bound += static_cast<int>((r.size() + 4) / 5);
    CHECK(got.model_calls == bound);
    for (std::size_t i = 1; i < trace.rounds.size(); ++i)
      CHECK(trace.rounds[i].size() <= (trace.rounds[i - 1].size() + 4) / 5);
    if (got.element) {
      auto ids = cands.ids();
      CHECK(std::find(ids.begin(), ids.end(), *got.element) != ids.end());
    }
  }
}

TEST_CASE("client failures during reduction surface as prediction errors") {
  DomTree p = button_page(12);
  CallbackClient failing([](const ChatRequest&) -> std::string { throw PredictionError("model down"); });
  ActConfig cfg = fast_config();
  cfg.max_in_flight = 4;
  CHECK_THROWS_AS(reduce_to_single(all_candidates(p), kQuery, p, failing, cfg), PredictionError);
}

TEST_CASE("the right element with the wrong operation still picks the element") {
  DomTree p = button_page(7);
  CandidateSet cands = all_candidates(p);
  NodeId gold = cands.items[6].node_id;
  CallbackClient typer([gold](const ChatRequest& r) {
    for (std::size_t i = 0; i < r.option_ids.size(); ++i)
      if (r.option_ids[i] == gold)
        return std::string("Answer: ") + ChoiceGroup::letter_for(i) + ".\nAction: TYPE\nValue: hello";
    return std::string("Answer: A.");
  });
  PredictedAction got = reduce_to_single(cands, kQuery, p, typer, fast_config());
  CHECK(got.element == gold);
  CHECK(got.operation == Operation::type("hello"));
}

TEST_CASE("an oracle model recovers the gold action whenever ranking keeps it") {
  Corpus corpus = load_corpus(testing::corpus_manifest());
  std::map<std::string, GoldOracleClient::Gold> gold;
  for (const auto& t : corpus.tasks)
    for (const auto& s : t.steps)
      gold[step_key(t.task_id, s.index)] = {acceptable_set(corpus.snapshot(s.snapshot_ref), s.target_node).ids,
                                           s.operation};
  GoldOracleClient oracle(gold);
  // Remembers the last generation request so ambiguous forms can be detected.
  ChatRequest last;
  std::mutex mu;
  CallbackClient spy([&](const ChatRequest& r) {
    std::lock_guard lock(mu);
    last = r;
    return oracle.complete(r);
  });
  PredictConfig cfg;
  cfg.act.max_in_flight = 2;
  int eligible = 0, ambiguous = 0;
  for (const auto& t : corpus.tasks) {
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
      const StepRecord& s = t.steps[i];
      AcceptableSet acc = acceptable_set(corpus.snapshot(s.snapshot_ref), s.target_node);
      for (bool generation : {false, true}) {
        auto predict = generation ? predict_step_generation : predict_step_multichoice;
        StepPrediction pred = predict(t, i, corpus, spy, cfg, nullptr);
        CHECK(pred.task_id == t.task_id);
        CHECK_FALSE(pred.error.has_value());
        if (pred.gold_rank == 0) {
          CHECK((!pred.action.element || !acc.contains(*pred.action.element)));
          continue;
        }
        if (generation) {
          // Identical serializations cannot be told apart by the emitted text.
          std::set<std::string> gold_forms, other_forms;
          for (std::size_t j = 0; j < last.option_ids.size(); ++j)
            (acc.contains(last.option_ids[j]) ? gold_forms : other_forms).insert(last.option_forms[j]);
          bool clash = std::any_of(gold_forms.begin(), gold_forms.end(),
                                   [&](const std::string& f) { return other_forms.count(f) != 0; });
          if (clash) {
            ++ambiguous;
            CHECK(pred.action.element.has_value());
            continue;
          }
        }
        ++eligible;
        CHECK_MESSAGE((pred.action.element && acc.contains(*pred.action.element)), step_key(t.task_id, s.index),
                      std::string(generation ? " generation" : " multichoice"));
        CHECK(pred.action.operation == s.operation);
      }
    }
  }
  CHECK(eligible >= 100);
  CHECK(ambiguous < 10);
}

TEST_CASE("generated elements are matched exactly, then lexically") {
  std::vector<NodeId> ids{10, 11, 12};
  std::vector<std::string> forms{"<button> search flights </button>", "<a> hotel deals </a>",
                                 "<input from city />"};
  CHECK(match_generated_element("<A>  Hotel deals </a>", ids, forms, 0.5) == 11);
  CHECK(match_generated_element("the search flights button", ids, forms, 0.5) == 10);
  CHECK_FALSE(match_generated_element("None", ids, forms, 0.5).has_value());
  CHECK_FALSE(match_generated_element("", ids, forms, 0.5).has_value());
  CHECK_FALSE(match_generated_element("weather forecast", ids, forms, 0.5).has_value());
}

TEST_CASE("generation prompts list no option ids and parse the emitted element") {
  Corpus corpus = load_corpus(testing::corpus_manifest());
  const TaskRecord& task = corpus.tasks.front();
  PredictConfig cfg;
  std::vector<ChatMessage> seen;
  CallbackClient none([&](const ChatRequest& r) {
    seen = r.messages;
    return std::string("Element: none");
  });
  StepPrediction pred = predict_step_generation(task, 0, corpus, none, cfg);
  CHECK_FALSE(pred.action.element.has_value());
  CHECK(pred.action.model_calls == 1);
  REQUIRE(seen.size() == 2);
  CHECK(seen[1].content.find(" id=") == std::string::npos);
  CHECK(seen[1].content.find("Element:") != std::string::npos);

  CallbackClient failing([](const ChatRequest&) -> std::string { throw PredictionError("down"); });
  StepPrediction err = predict_step_generation(task, 0, corpus, failing, cfg);
  CHECK(err.error.has_value());
  StepPrediction err2 = predict_step_multichoice(task, 0, corpus, failing, cfg);
  CHECK(err2.error.has_value());
}
