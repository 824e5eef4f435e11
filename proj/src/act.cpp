#include "mindact/act.hpp"

#include <algorithm>
#include <map>

#include "mindact/error.hpp"
#include "mindact/eval.hpp"
#include "mindact/parallel.hpp"
#include "mindact/rng.hpp"
#include "mindact/text.hpp"

namespace mindact {

const char* const kActionSystemPrompt =
    "You are a helpful assistant that is great at website design, navigation, and executing tasks for the user";

namespace {

constexpr const char* kFence = "```";
constexpr const char* kTaskLead = "Based on the HTML webpage above, try to complete the following task:";
constexpr const char* kChoiceLead =
    "What should be the next action? Please select from the following choices (If the correct action is not in "
    "the page above, please select A. 'None of the above'):";
constexpr const char* kGenerationLead =
    "What should be the next action? Write the target element exactly as it appears in the page above, then the "
    "operation, in this format:\nElement: <element>\nAction: <CLICK, TYPE or SELECT>\nValue: <value, if any>";

std::string user_turn(const std::string& snippet, const std::string& query, const std::vector<std::string>& options) {
  std::string out = std::string(kFence) + "\n" + snippet + "\n" + kFence + "\n" + kTaskLead + "\n" + query + "\n" +
                    kChoiceLead + "\n\nA. None of the above";
  for (std::size_t i = 0; i < options.size(); ++i)
    out += std::string("\n") + ChoiceGroup::letter_for(i) + ". " + options[i];
  return out;
}

struct Demonstration {
  const char* snippet;
  const char* query;
  std::vector<std::string> options;
  const char* answer;
};

const std::vector<Demonstration>& demonstrations() {
  static const std::vector<Demonstration> demos = {
      {"<html> <div> <form search> <input id=0 search destinations text /> <button id=1 submit> <span> search "
       "</span> </button> </form> <div id=2> <h2> popular destinations </h2> </div> </div> </html>",
       "Task: Find a hotel in Denver for two adults next weekend\nPrevious actions:\nNone",
       {"<input id=0 search destinations text />", "<button id=1 submit> <span> search </span> </button>",
        "<div id=2> <h2> popular destinations </h2> </div>"},
       "Answer: B.\nAction: TYPE\nValue: Denver"},
      {"<html> <div> <nav> <a id=0 careers> careers </a> <a id=1 press> press room </a> </nav> <footer> <a id=2 "
       "privacy> privacy policy </a> </footer> </div> </html>",
       "Task: Rent a compact car at Seattle airport from June 3 to June 6\nPrevious actions:\n[combobox]  Pick-up "
       "location -> TYPE: Seattle\n[option]  Seattle-Tacoma International Airport (SEA) -> CLICK",
       {"<a id=0 careers> careers </a>", "<a id=1 press> press room </a>", "<a id=2 privacy> privacy policy </a>"},
       "Answer: A."},
      {"<html> <div> <main> <ul results> <li id=0> <span> 2 stops </span> </li> <li> <button id=1 select nonstop "
       "flight> <span> nonstop </span> </button> </li> <li id=2> <span> 1 stop </span> </li> </ul> </main> </div> "
       "</html>",
       "Task: Book the cheapest nonstop flight from Boston to Chicago on May 12\nPrevious actions:\n[button]  "
       "Search flights -> CLICK",
       {"<li id=0> <span> 2 stops </span> </li>", "<button id=1 select nonstop flight> <span> nonstop </span>",
        "<li id=2> <span> 1 stop </span> </li>"},
       "Answer: C.\nAction: CLICK"},
  };
  return demos;
}

std::string normalize_form(std::string_view s) { return to_lower(collapse_whitespace(s)); }

// Renders the included part of the tree. `forms` receives the subtree text of
// each candidate, keyed by node id.
class SnippetRenderer {
 public:
  SnippetRenderer(const DomTree& tree, const std::set<NodeId>& included, const std::map<NodeId, std::size_t>& ids,
                  const ReprConfig& repr)
      : tree_(tree), included_(included), ids_(ids), repr_(repr) {}

  std::string render(std::map<NodeId, std::string>* forms) {
    std::string out;
    render_node(tree_.root(), out, forms);
    return out;
  }

 private:
  void render_node(NodeId id, std::string& out, std::map<NodeId, std::string>* forms) {
    const std::size_t start = out.size();
    const DomNode& node = tree_.find(id);
    ElementSegment seg = element_segment(node, repr_);
    out += "<" + node.tag;
    if (auto it = ids_.find(id); it != ids_.end()) out += " id=" + std::to_string(it->second);
    if (!seg.attributes.empty()) out += " " + seg.attributes;
    bool has_children = std::any_of(node.children.begin(), node.children.end(),
                                    [&](NodeId c) { return included_.count(c) != 0; });
    if (!has_children && seg.text.empty()) {
      out += " />";
    } else {
      out += ">";
      if (!seg.text.empty()) out += " " + seg.text;
      for (NodeId child : node.children) {
        if (!included_.count(child)) continue;
        out += " ";
        render_node(child, out, forms);
      }
      out += " </" + node.tag + ">";
    }
    if (forms && ids_.count(id)) (*forms)[id] = out.substr(start);
  }

  const DomTree& tree_;
  const std::set<NodeId>& included_;
  const std::map<NodeId, std::size_t>& ids_;
  const ReprConfig& repr_;
};

std::optional<std::string> find_field(std::string_view reply, std::string_view label, std::size_t from,
                                      std::size_t* at = nullptr) {
  std::string lower = to_lower(reply);
  std::size_t pos = lower.find(to_lower(label), from);
  if (pos == std::string::npos) return std::nullopt;
  std::size_t start = pos + label.size();
  std::size_t end = reply.find('\n', start);
  if (at) *at = pos;
  return trim(reply.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
}

std::string strip_trailing_punct(std::string s) {
  while (!s.empty() && (s.back() == '.' || s.back() == ',' || s.back() == ';' || s.back() == ':' ||
                        s.back() == ')' || s.back() == '!' || s.back() == '*'))
    s.pop_back();
  return trim(s);
}

PredictedAction action_from(NodeId element, const ModelAnswer& answer, int rounds, int calls) {
  PredictedAction out;
  out.element = element;
  out.operation = answer.operation();
  out.rounds_used = rounds;
  out.model_calls = calls;
  return out;
}

struct StepContext {
  const DomTree* raw = nullptr;
  DomTree pruned;
  QueryText query;
  CandidateSet candidates;
  AcceptableSet acceptable;
  bool gold_retained = false;
};

StepContext prepare_step(const TaskRecord& task, std::size_t step_index, const Corpus& corpus,
                         const PredictConfig& cfg, const std::vector<std::string>* history) {
  if (step_index >= task.steps.size())
    throw PredictionError("task " + task.task_id + " has no step " + std::to_string(step_index));
  const StepRecord& step = task.steps[step_index];
  const DomTree& raw = corpus.snapshot(step.snapshot_ref);
  auto pruned = prune_tree(raw, cfg.prune, step.target_node);
  auto resolver = [&](const std::string& id) -> const DomTree& { return corpus.snapshot(id); };
  QueryText query = history ? build_query_with_history(task.description, *history, cfg.repr)
                            : build_query(task, step_index, resolver, cfg.repr);
  auto scores = score_page(query, pruned.tree, cfg.scorer, cfg.repr);
  CandidateSet cands = top_k(scores, cfg.k, step_key(task.task_id, step.index));
  return {&raw,
          std::move(pruned.tree),
          std::move(query),
          std::move(cands),
          acceptable_set(raw, step.target_node),
          pruned.stats.target_retained.value_or(false)};
}

std::size_t best_rank(const CandidateSet& cands, const AcceptableSet& acceptable) {
  for (std::size_t i = 0; i < cands.items.size(); ++i)
    if (acceptable.contains(cands.items[i].node_id)) return i + 1;
  return 0;
}

}  // namespace

Snippet build_snippet(const DomTree& pruned, std::span<const NodeId> candidates, const ActConfig& cfg,
                      bool inject_ids) {
  std::set<NodeId> protected_ids;
  std::set<NodeId> included;
  std::map<NodeId, std::size_t> marker;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    NodeId id = candidates[k];
    const DomNode& node = pruned.find(id);
    if (!marker.emplace(id, k).second) throw SnippetError("candidate " + std::to_string(id) + " listed twice");
    for (std::optional<NodeId> cur = id; cur; cur = pruned.find(*cur).parent) protected_ids.insert(*cur);

    std::vector<std::pair<NodeId, int>> stack{{id, 0}};
    while (!stack.empty()) {
      auto [cur, depth] = stack.back();
      stack.pop_back();
      included.insert(cur);
      if (depth >= cfg.candidate_depth) continue;
      for (NodeId c : pruned.find(cur).children) stack.push_back({c, depth + 1});
    }
    if (node.parent && cfg.neighbor_radius > 0) {
      const auto& siblings = pruned.find(*node.parent).children;
      auto pos = static_cast<long>(std::find(siblings.begin(), siblings.end(), id) - siblings.begin());
      long lo = std::max(0L, pos - cfg.neighbor_radius);
      long hi = std::min(static_cast<long>(siblings.size()) - 1, pos + cfg.neighbor_radius);
      for (long i = lo; i <= hi; ++i) included.insert(siblings[static_cast<std::size_t>(i)]);
    }
  }
  included.insert(protected_ids.begin(), protected_ids.end());
  std::map<NodeId, std::size_t> ids = inject_ids ? marker : std::map<NodeId, std::size_t>{};

  std::vector<NodeId> removable;
  for (auto it = pruned.preorder().rbegin(); it != pruned.preorder().rend(); ++it)
    if (included.count(*it) && !protected_ids.count(*it)) removable.push_back(*it);

  std::map<NodeId, std::string> forms;
  std::string text = SnippetRenderer(pruned, included, ids, cfg.repr).render(&forms);
  // Neighbours go first, candidate descendants after them, each from the end.
  std::stable_partition(removable.begin(), removable.end(), [&](NodeId id) {
    return std::none_of(candidates.begin(), candidates.end(), [&](NodeId c) { return pruned.is_ancestor(c, id); });
  });
  std::size_t next = 0;
  while (text.size() > cfg.char_budget && next < removable.size()) {
    included.erase(removable[next++]);
    text = SnippetRenderer(pruned, included, ids, cfg.repr).render(&forms);
  }
  if (text.size() > cfg.char_budget)
    throw SnippetError("snippet of " + std::to_string(text.size()) + " characters exceeds the budget of " +
                       std::to_string(cfg.char_budget) + " even with only candidates and their ancestors");

  Snippet out;
  out.text = std::move(text);
  out.included_ids = std::move(included);
  out.char_budget = cfg.char_budget;
  out.candidates.assign(candidates.begin(), candidates.end());
  for (NodeId id : out.candidates) {
    // Without injected ids the renderer does not track forms; render the
    // candidate subtree on its own.
    if (!forms.count(id)) {
      std::map<NodeId, std::size_t> self{{id, 0}};
      std::map<NodeId, std::string> one;
      SnippetRenderer r(pruned, out.included_ids, self, cfg.repr);
      r.render(&one);
      std::string form = one[id];
      std::string marker_text = " id=0";
      if (auto at = form.find(marker_text); at != std::string::npos) form.erase(at, marker_text.size());
      forms[id] = form;
    }
    out.candidate_forms.push_back(forms[id]);
  }
  return out;
}

std::vector<std::vector<NodeId>> chunk_candidates(std::span<const NodeId> candidates, std::size_t group_size,
                                                  bool shuffle, std::uint64_t seed) {
  if (group_size < 1) throw std::invalid_argument("group_size must be at least 1");
  std::vector<NodeId> order(candidates.begin(), candidates.end());
  if (shuffle) Rng(seed).shuffle(order);
  std::vector<std::vector<NodeId>> groups;
  for (std::size_t i = 0; i < order.size(); i += group_size)
    groups.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                        order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + group_size)));
  return groups;
}

std::vector<ChatMessage> build_mcq_prompt(const Snippet& snippet, const QueryText& query, const ActConfig& cfg) {
  std::vector<ChatMessage> messages{{"system", kActionSystemPrompt}};
  const auto& demos = demonstrations();
  if (cfg.demonstrations < 0 || static_cast<std::size_t>(cfg.demonstrations) > demos.size())
    throw ConfigError("demonstrations must be between 0 and " + std::to_string(demos.size()));
  for (int i = 0; i < cfg.demonstrations; ++i) {
    const auto& d = demos[static_cast<std::size_t>(i)];
    messages.push_back({"user", user_turn(d.snippet, d.query, d.options)});
    messages.push_back({"assistant", d.answer});
  }
  std::vector<std::string> options;
  for (const auto& form : snippet.candidate_forms) options.push_back(truncate_words(form, cfg.option_words));
  messages.push_back({"user", user_turn(snippet.text, query.text, options)});
  return messages;
}

ChoiceGroup build_choice_group(const DomTree& pruned, std::span<const NodeId> options, const QueryText& query,
                               const ActConfig& cfg) {
  if (options.size() > 5) throw std::invalid_argument("a choice group holds at most 5 candidates");
  Snippet snippet = build_snippet(pruned, options, cfg, true);
  return {std::vector<NodeId>(options.begin(), options.end()), build_mcq_prompt(snippet, query, cfg)};
}

std::optional<Operation> ModelAnswer::operation() const {
  if (!operation_kind) return std::nullopt;
  if (*operation_kind == OpKind::Click) return Operation::click();
  if (!value || value->empty()) return std::nullopt;
  return Operation(*operation_kind, *value);
}

ModelAnswer parse_model_answer(std::string_view reply) {
  ModelAnswer out;
  out.raw = std::string(reply);
  std::size_t at = 0;
  auto answer = find_field(reply, "answer:", 0, &at);
  if (!answer || answer->empty()) return out;
  char letter = (*answer)[0];
  if (letter >= 'a' && letter <= 'z') letter = static_cast<char>(letter - 'a' + 'A');
  bool boundary = answer->size() == 1 || !std::isalnum(static_cast<unsigned char>((*answer)[1]));
  if (letter < 'A' || letter > 'Z' || !boundary) return out;
  out.choice_letter = letter;
  out.parsed = true;
  if (letter == 'A') return out;
  if (auto action = find_field(reply, "action:", at)) out.operation_kind = parse_op_kind(strip_trailing_punct(*action));
  if (out.operation_kind && *out.operation_kind != OpKind::Click) {
    if (auto value = find_field(reply, "value:", at); value && !value->empty()) out.value = *value;
  }
  return out;
}

PredictedAction reduce_to_single(const CandidateSet& candidates, const QueryText& query, const DomTree& pruned,
                                 ChatClient& client, const ActConfig& cfg, const std::string& key,
                                 ReductionTrace* trace) {
  if (candidates.items.empty()) throw PredictionError("no candidates to choose from");
  std::vector<NodeId> current = candidates.ids();
  int rounds = 0, calls = 0;
  const std::uint64_t base_seed = mix_seed(cfg.seed, std::stoull(fnv1a_hex(key), nullptr, 16));
  while (true) {
    ++rounds;
    if (trace) trace->rounds.push_back(current);
    auto groups = chunk_candidates(current, cfg.group_size, cfg.shuffle, mix_seed(base_seed, rounds));
    std::vector<ModelAnswer> answers(groups.size());
    parallel_for(groups.size(), std::max(1u, cfg.max_in_flight), [&](std::size_t g) {
      ChoiceGroup group = build_choice_group(pruned, groups[g], query, cfg);
      ChatRequest req{group.prompt, group.options, {}, key};
      answers[g] = parse_model_answer(client.complete(req));
    });
    calls += static_cast<int>(groups.size());

    std::vector<std::pair<NodeId, const ModelAnswer*>> winners;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const ModelAnswer& a = answers[g];
      std::size_t index = static_cast<std::size_t>(a.choice_letter - 'B');
      bool valid = a.parsed && a.choice_letter != 'A' && index < groups[g].size();
      if (!a.parsed || (a.choice_letter != 'A' && !valid)) {
        if (trace) ++trace->unparseable;
      }
      if (valid) winners.emplace_back(groups[g][index], &a);
    }
    if (winners.empty()) {
      PredictedAction none;
      none.rounds_used = rounds;
      none.model_calls = calls;
      return none;
    }
    if (winners.size() == 1) return action_from(winners[0].first, *winners[0].second, rounds, calls);
    current.clear();
    for (const auto& w : winners) current.push_back(w.first);
  }
}

std::string step_key(const std::string& task_id, int step_index) {
  return task_id + "#" + std::to_string(step_index);
}

StepPrediction predict_step_multichoice(const TaskRecord& task, std::size_t step_index, const Corpus& corpus,
                                        ChatClient& client, const PredictConfig& cfg,
                                        const std::vector<std::string>* history) {
  StepPrediction out;
  out.task_id = task.task_id;
  out.step = step_index < task.steps.size() ? task.steps[step_index].index : static_cast<int>(step_index);
  StepContext ctx = prepare_step(task, step_index, corpus, cfg, history);
  out.candidates = ctx.candidates;
  out.gold_rank = best_rank(ctx.candidates, ctx.acceptable);
  out.gold_retained = ctx.gold_retained;
  if (ctx.candidates.items.empty()) return out;
  try {
    out.action = reduce_to_single(ctx.candidates, ctx.query, ctx.pruned, client, cfg.act,
                                  step_key(task.task_id, out.step));
  } catch (const SnippetError& e) {
    out.error = e.what();
  } catch (const MissingReplyError&) {
    throw;
  } catch (const PredictionError& e) {
    out.error = e.what();
  }
  return out;
}

std::vector<ChatMessage> build_generation_prompt(const Snippet& snippet, const QueryText& query) {
  std::string user = std::string(kFence) + "\n" + snippet.text + "\n" + kFence + "\n" + kTaskLead + "\n" +
                     query.text + "\n" + kGenerationLead;
  return {{"system", kActionSystemPrompt}, {"user", user}};
}

std::optional<NodeId> match_generated_element(std::string_view emitted, std::span<const NodeId> candidates,
                                              std::span<const std::string> forms, double threshold) {
  const std::string target = normalize_form(emitted);
  if (target.empty() || target == "none") return std::nullopt;
  for (std::size_t i = 0; i < candidates.size() && i < forms.size(); ++i)
    if (normalize_form(forms[i]) == target) return candidates[i];
  std::optional<NodeId> best;
  double best_score = threshold;
  for (std::size_t i = 0; i < candidates.size() && i < forms.size(); ++i) {
    double s = lexical_score(target, forms[i]);
    if (s >= best_score && (!best || s > best_score)) {
      best = candidates[i];
      best_score = s;
    }
  }
  return best;
}

StepPrediction predict_step_generation(const TaskRecord& task, std::size_t step_index, const Corpus& corpus,
                                       ChatClient& client, const PredictConfig& cfg,
                                       const std::vector<std::string>* history) {
  StepPrediction out;
  out.task_id = task.task_id;
  out.step = step_index < task.steps.size() ? task.steps[step_index].index : static_cast<int>(step_index);
  StepContext ctx = prepare_step(task, step_index, corpus, cfg, history);
  out.candidates = ctx.candidates;
  out.gold_rank = best_rank(ctx.candidates, ctx.acceptable);
  out.gold_retained = ctx.gold_retained;
  if (ctx.candidates.items.empty()) return out;

  std::vector<NodeId> ids = ctx.candidates.ids();
  std::optional<Snippet> snippet;
  // Lowest-ranked candidates are dropped until the snippet fits.
  while (!ids.empty() && !snippet) {
    try {
      snippet = build_snippet(ctx.pruned, ids, cfg.act, false);
    } catch (const SnippetError& e) {
      if (ids.size() == 1) {
        out.error = e.what();
        return out;
      }
      ids.pop_back();
    }
  }
  ChatRequest req{build_generation_prompt(*snippet, ctx.query), snippet->candidates, snippet->candidate_forms,
                  step_key(task.task_id, out.step)};
  std::string reply;
  try {
    reply = client.complete(req);
  } catch (const MissingReplyError&) {
    throw;
  } catch (const PredictionError& e) {
    out.error = e.what();
    return out;
  }
  out.action.rounds_used = 1;
  out.action.model_calls = 1;
  std::string emitted;
  if (auto element = find_field(reply, "element:", 0)) emitted = *element;
  else emitted = trim(reply.substr(0, reply.find('\n')));
  out.action.element =
      match_generated_element(emitted, snippet->candidates, snippet->candidate_forms, cfg.act.match_threshold);
  if (out.action.element) {
    ModelAnswer parsed = parse_model_answer("Answer: B.\n" + reply);
    out.action.operation = parsed.operation();
  }
  return out;
}

}  // namespace mindact
