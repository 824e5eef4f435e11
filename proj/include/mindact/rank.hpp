#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "mindact/corpus.hpp"
#include "mindact/dom.hpp"
#include "mindact/prune.hpp"
#include "mindact/represent.hpp"

namespace mindact {

struct ScoredElement {
  NodeId node_id = 0;
  double score = 0;  // higher is better
};

struct CandidateSet {
  std::string query_ref;
  std::vector<ScoredElement> items;  // descending score, ties in document order
  std::size_t k = 0;

  std::vector<NodeId> ids() const;
  /// 1-based rank of `id`, 0 when absent.
  std::size_t rank_of(NodeId id) const;
};

enum class ScorerKind { Lexical, Remote };

struct ScorerSpec {
  ScorerKind kind = ScorerKind::Lexical;
  std::string endpoint;  // http://host:port/path, Remote only
  std::size_t batch_size = 64;
  unsigned max_in_flight = 4;
  int max_retries = 3;
  int initial_backoff_ms = 100;
  int timeout_ms = 30000;
};

/// Cosine similarity of term-frequency vectors over lowercased alphanumeric
/// tokens. 0 when either side has no tokens.
double lexical_score(std::string_view query, std::string_view element);
double lexical_score(const QueryText& query, const ElementText& element);

/// Scores every rankable node of a pruned page, returned in document order.
/// Remote scoring posts `{"query", "elements": [{"id", "text"}]}` batches and
/// expects `{"scores": [{"id", "score"}]}` covering exactly the sent ids.
/// Throws RankingError (carrying the page id) once retries are exhausted.
std::vector<ScoredElement> score_page(const QueryText& query, const DomTree& pruned,
                                      const ScorerSpec& scorer, const ReprConfig& repr = {});

/// The k best scores; equal scores keep their input order, so callers pass
/// scores in document order. Throws std::invalid_argument for k < 1.
CandidateSet top_k(const std::vector<ScoredElement>& scores, std::size_t k, std::string query_ref = {});

int recall_at_k(const CandidateSet& candidates, const std::set<NodeId>& acceptable);
/// Mean of per-step recall values.
double mean_recall(const std::vector<int>& per_step);

struct ExportOptions {
  std::size_t neg_per_pos = 5;
  std::uint64_t seed = 0;
  bool expand_acceptable = false;
  PruneConfig prune;
  ReprConfig repr;
};

struct ExportSummary {
  std::size_t pairs = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t skipped_steps = 0;  // gold target pruned away
};

/// Writes cross-encoder training pairs as JSON lines
/// `{"task_id", "step", "node_id", "query", "element_text", "label"}`.
/// Throws IoError when the file cannot be written.
ExportSummary export_training_pairs(const Corpus& corpus, const ExportOptions& options,
                                    const std::filesystem::path& out);
/// Same content as a string, for callers that manage their own output.
std::string training_pairs_jsonl(const Corpus& corpus, const ExportOptions& options,
                                 ExportSummary* summary = nullptr);

}  // namespace mindact
