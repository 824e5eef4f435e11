#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mindact/chat.hpp"
#include "mindact/corpus.hpp"
#include "mindact/dom.hpp"
#include "mindact/prune.hpp"
#include "mindact/rank.hpp"
#include "mindact/represent.hpp"

namespace mindact {

struct ActConfig {
  std::size_t group_size = 5;
  bool shuffle = false;
  std::uint64_t seed = 0;
  int neighbor_radius = 1;
  int candidate_depth = 2;  // descendant levels shown under each candidate
  std::size_t char_budget = 8000;
  std::size_t option_words = 10;  // words of a candidate shown on its option line
  int demonstrations = 3;
  double match_threshold = 0.5;  // generation mode fallback match
  unsigned max_in_flight = 4;
  ReprConfig repr;
};

/// Pruned-HTML excerpt around a group of candidates, one line.
struct Snippet {
  std::string text;
  std::set<NodeId> included_ids;
  std::size_t char_budget = 0;
  std::vector<NodeId> candidates;
  std::vector<std::string> candidate_forms;  // subtree serialization per candidate
};

/// Keeps the root-to-candidate paths, `candidate_depth` levels below each
/// candidate and `neighbor_radius` siblings on each side. Candidate k is
/// rendered as `<tag id=k ...>` when `inject_ids`. Over budget, neighbours and
/// candidate descendants are dropped from the end of the document first;
/// throws SnippetError if the candidates and their ancestors alone do not fit.
Snippet build_snippet(const DomTree& pruned, std::span<const NodeId> candidates, const ActConfig& cfg,
                      bool inject_ids = true);

/// Rank-ordered chunks of `group_size`; with cfg.shuffle the candidates are
/// first shuffled with `seed`.
std::vector<std::vector<NodeId>> chunk_candidates(std::span<const NodeId> candidates, std::size_t group_size,
                                                  bool shuffle = false, std::uint64_t seed = 0);

struct ChoiceGroup {
  std::vector<NodeId> options;  // option B is options[0]
  std::vector<ChatMessage> prompt;

  static char letter_for(std::size_t option_index) { return static_cast<char>('B' + option_index); }
};

extern const char* const kActionSystemPrompt;

std::vector<ChatMessage> build_mcq_prompt(const Snippet& snippet, const QueryText& query, const ActConfig& cfg);
ChoiceGroup build_choice_group(const DomTree& pruned, std::span<const NodeId> options, const QueryText& query,
                               const ActConfig& cfg);

struct ModelAnswer {
  char choice_letter = 'A';
  std::optional<OpKind> operation_kind;
  std::optional<std::string> value;
  std::string raw;
  bool parsed = false;  // false when no Answer line was found

  /// The operation when it is well-formed (TYPE/SELECT need a value).
  std::optional<Operation> operation() const;
};

/// Reads the first `Answer: <letter>`, then `Action:` and `Value:` lines.
/// Replies without an Answer line come back unparsed with choice A.
ModelAnswer parse_model_answer(std::string_view reply);

struct ReductionTrace {
  std::vector<std::vector<NodeId>> rounds;  // candidates entering each round
  int unparseable = 0;
};

/// Queries every group, keeps the non-A winners and regroups them until one
/// element remains or every group answers A. Operation and value come from
/// the final winning reply. Client failures raise PredictionError.
PredictedAction reduce_to_single(const CandidateSet& candidates, const QueryText& query, const DomTree& pruned,
                                 ChatClient& client, const ActConfig& cfg, const std::string& step_key = {},
                                 ReductionTrace* trace = nullptr);

struct PredictConfig {
  PruneConfig prune;
  ReprConfig repr;
  ScorerSpec scorer;
  std::size_t k = 50;
  ActConfig act;
};

struct StepPrediction {
  std::string task_id;
  int step = 0;
  PredictedAction action;
  CandidateSet candidates;
  std::size_t gold_rank = 0;  // best rank of an acceptable element, 0 if none
  bool gold_retained = false;
  std::optional<std::string> error;
};

std::string step_key(const std::string& task_id, int step_index);

/// prune -> query -> score -> top-k -> multi-choice reduction for one step.
/// `history` overrides the gold action history when given.
StepPrediction predict_step_multichoice(const TaskRecord& task, std::size_t step_index, const Corpus& corpus,
                                        ChatClient& client, const PredictConfig& cfg,
                                        const std::vector<std::string>* history = nullptr);

/// Generation baseline: one prompt with every candidate in the snippet; the
/// model writes the element out and it is matched back to a candidate.
StepPrediction predict_step_generation(const TaskRecord& task, std::size_t step_index, const Corpus& corpus,
                                       ChatClient& client, const PredictConfig& cfg,
                                       const std::vector<std::string>* history = nullptr);

std::vector<ChatMessage> build_generation_prompt(const Snippet& snippet, const QueryText& query);
/// Matches an emitted element string to a candidate: exact normalized match
/// first, then the best lexical score at or above the threshold.
std::optional<NodeId> match_generated_element(std::string_view emitted, std::span<const NodeId> candidates,
                                              std::span<const std::string> forms, double threshold);

}  // namespace mindact
