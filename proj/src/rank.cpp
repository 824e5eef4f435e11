#include "mindact/rank.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include "json.hpp"
#include <stdexcept>

#include "http.hpp"
#include "mindact/error.hpp"
#include "mindact/eval.hpp"
#include "mindact/parallel.hpp"
#include "mindact/rng.hpp"
#include "mindact/text.hpp"

namespace mindact {

using nlohmann::json;

std::vector<NodeId> CandidateSet::ids() const {
  std::vector<NodeId> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(item.node_id);
  return out;
}

std::size_t CandidateSet::rank_of(NodeId id) const {
  for (std::size_t i = 0; i < items.size(); ++i)
    if (items[i].node_id == id) return i + 1;
  return 0;
}

double lexical_score(std::string_view query, std::string_view element) {
  std::map<std::string, double> q, e;
  for (auto& t : alnum_tokens(query)) q[t] += 1;
  for (auto& t : alnum_tokens(element)) e[t] += 1;
  if (q.empty() || e.empty()) return 0.0;
  double dot = 0, nq = 0, ne = 0;
  for (const auto& [tok, c] : q) {
    nq += c * c;
    auto it = e.find(tok);
    if (it != e.end()) dot += c * it->second;
  }
  for (const auto& [tok, c] : e) ne += c * c;
  return std::clamp(dot / (std::sqrt(nq) * std::sqrt(ne)), 0.0, 1.0);
}

double lexical_score(const QueryText& query, const ElementText& element) {
  return lexical_score(query.text, element.text);
}

namespace {

std::vector<double> score_remote_batch(const std::string& query, const std::vector<ElementText>& batch,
                                       const ScorerSpec& scorer, const std::string& page_id) {
  json request = {{"query", query}, {"elements", json::array()}};
  for (const auto& e : batch) request["elements"].push_back({{"id", e.node_id}, {"text", e.text}});
  std::string body;
  try {
    body = detail::post_json(scorer.endpoint, request.dump(), {},
                             {scorer.max_retries, scorer.initial_backoff_ms, scorer.timeout_ms});
  } catch (const Error& err) {
    throw RankingError(page_id, err.what());
  }

  std::map<NodeId, double> by_id;
  try {
    json response = json::parse(body);
    for (const auto& s : response.at("scores")) {
      NodeId id = s.at("id").get<NodeId>();
      double score = s.at("score").get<double>();
      if (!std::isfinite(score)) throw ProtocolError("non-finite score for id " + std::to_string(id));
      if (!by_id.emplace(id, score).second) throw ProtocolError("duplicate id " + std::to_string(id));
    }
  } catch (const json::exception& e) {
    throw RankingError(page_id, std::string("malformed scorer response: ") + e.what());
  } catch (const ProtocolError& e) {
    throw RankingError(page_id, e.what());
  }
  if (by_id.size() != batch.size())
    throw RankingError(page_id, "scorer response does not cover exactly the requested ids");
  std::vector<double> out;
  for (const auto& e : batch) {
    auto it = by_id.find(e.node_id);
    if (it == by_id.end())
      throw RankingError(page_id, "scorer response is missing id " + std::to_string(e.node_id));
    out.push_back(it->second);
  }
  return out;
}

}  // namespace

std::vector<ScoredElement> score_page(const QueryText& query, const DomTree& pruned, const ScorerSpec& scorer,
                                      const ReprConfig& repr) {
  std::vector<ElementText> elements;
  for (NodeId id : rankable_nodes(pruned)) elements.push_back(represent_element(pruned, id, repr));
  std::vector<ScoredElement> out(elements.size());
  if (scorer.kind == ScorerKind::Lexical) {
    for (std::size_t i = 0; i < elements.size(); ++i)
      out[i] = {elements[i].node_id, lexical_score(query, elements[i])};
    return out;
  }
  if (scorer.endpoint.empty()) throw ConfigError("remote scorer requires an endpoint");
  const std::size_t batch = std::max<std::size_t>(1, scorer.batch_size);
  const std::size_t batches = (elements.size() + batch - 1) / batch;
  parallel_for(batches, std::max(1u, scorer.max_in_flight), [&](std::size_t b) {
    std::size_t begin = b * batch;
    std::size_t end = std::min(elements.size(), begin + batch);
    std::vector<ElementText> slice(elements.begin() + static_cast<std::ptrdiff_t>(begin),
                                   elements.begin() + static_cast<std::ptrdiff_t>(end));
    auto scores = score_remote_batch(query.text, slice, scorer, pruned.source_id());
    for (std::size_t i = begin; i < end; ++i) out[i] = {elements[i].node_id, scores[i - begin]};
  });
  return out;
}

CandidateSet top_k(const std::vector<ScoredElement>& scores, std::size_t k, std::string query_ref) {
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  CandidateSet out{std::move(query_ref), scores, k};
  std::stable_sort(out.items.begin(), out.items.end(),
                   [](const ScoredElement& a, const ScoredElement& b) { return a.score > b.score; });
  if (out.items.size() > k) out.items.resize(k);
  return out;
}

int recall_at_k(const CandidateSet& candidates, const std::set<NodeId>& acceptable) {
  for (const auto& item : candidates.items)
    if (acceptable.count(item.node_id)) return 1;
  return 0;
}

double mean_recall(const std::vector<int>& per_step) {
  if (per_step.empty()) return 0.0;
  double sum = 0;
  for (int r : per_step) sum += r;
  return sum / static_cast<double>(per_step.size());
}

std::string training_pairs_jsonl(const Corpus& corpus, const ExportOptions& options, ExportSummary* summary) {
  ExportSummary local;
  std::map<std::string, DomTree> pruned_cache;
  auto resolver = [&](const std::string& id) -> const DomTree& { return corpus.snapshot(id); };
  std::string out;
  std::uint64_t stream = 0;
  for (const auto& task : corpus.tasks) {
    for (std::size_t i = 0; i < task.steps.size(); ++i, ++stream) {
      const StepRecord& step = task.steps[i];
      const DomTree& raw = corpus.snapshot(step.snapshot_ref);
      auto it = pruned_cache.find(step.snapshot_ref);
      if (it == pruned_cache.end()) it = pruned_cache.emplace(step.snapshot_ref, prune_tree(raw, options.prune).tree).first;
      const DomTree& pruned = it->second;
      if (!pruned.contains(step.target_node) || pruned.find(step.target_node).structural) {
        ++local.skipped_steps;
        continue;
      }
      const AcceptableSet acceptable = acceptable_set(raw, step.target_node);
      const QueryText query = build_query(task, i, resolver, options.repr);

      auto emit = [&](NodeId id, int label) {
        json line = {{"task_id", task.task_id},
                     {"step", step.index},
                     {"node_id", id},
                     {"query", query.text},
                     {"element_text", represent_element(pruned, id, options.repr).text},
                     {"label", label}};
        out += line.dump() + "\n";
        ++local.pairs;
        (label ? local.positives : local.negatives) += 1;
      };

      emit(step.target_node, 1);
      std::vector<NodeId> negatives;
      for (NodeId id : rankable_nodes(pruned)) {
        if (!acceptable.contains(id)) negatives.push_back(id);
        else if (options.expand_acceptable && id != step.target_node) emit(id, 1);
      }
      Rng rng(mix_seed(options.seed, stream));
      for (NodeId id : rng.sample(std::move(negatives), options.neg_per_pos)) emit(id, 0);
    }
  }
  if (summary) *summary = local;
  return out;
}

ExportSummary export_training_pairs(const Corpus& corpus, const ExportOptions& options,
                                    const std::filesystem::path& out) {
  ExportSummary summary;
  std::string content = training_pairs_jsonl(corpus, options, &summary);
  std::ofstream file(out, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write training pairs to " + out.string());
  file << content;
  if (!file) throw IoError("failed writing training pairs to " + out.string());
  return summary;
}

}  // namespace mindact
