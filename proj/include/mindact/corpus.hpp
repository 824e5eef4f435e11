#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "mindact/dom.hpp"

namespace mindact {

struct Corpus {
  std::vector<TaskRecord> tasks;
  std::map<std::string, std::shared_ptr<const DomTree>> snapshots;

  const DomTree& snapshot(const std::string& source_id) const;
  const TaskRecord& task(const std::string& task_id) const;
  std::size_t step_count() const;
};

struct LoadOptions {
  /// Parallel snapshot parsing; 0 means hardware concurrency.
  unsigned jobs = 1;
};

/// Loads a corpus manifest:
///   {"tasks": [{"task_id", "description", "website", "domain", "top_domain",
///               "steps": [{"snapshot", "target", "op", "value"}]}]}
/// Snapshot paths are relative to the manifest. A layout sidecar for
/// `page.html` is picked up from `page.layout.json` when present.
/// Throws IngestError naming the offending task on any schema violation.
Corpus load_corpus(const std::filesystem::path& manifest, const LoadOptions& options = {});

/// Builds a corpus from already-parsed parts, validating the same invariants
/// as load_corpus.
Corpus make_corpus(std::vector<TaskRecord> tasks,
                   std::map<std::string, std::shared_ptr<const DomTree>> snapshots);

struct SplitParams {
  std::vector<std::string> holdout_domains{"Information", "Service"};
  std::size_t websites_per_domain = 10;
  double cross_task_fraction = 0.20;
};

struct SplitAssignment {
  std::set<std::string> train;
  std::set<std::string> cross_task;
  std::set<std::string> cross_website;
  std::set<std::string> cross_domain;

  /// Split name of a task id, or empty when the id is unassigned.
  std::string split_of(const std::string& task_id) const;
  const std::set<std::string>& get(const std::string& split_name) const;
};

inline constexpr const char* kSplitNames[] = {"train", "cross_task", "cross_website",
                                              "cross_domain"};

/// Assigns the generalization splits: holdout top-level domains go to
/// cross_domain, then `websites_per_domain` sampled websites per remaining
/// top-level domain go to cross_website, then floor(N * cross_task_fraction)
/// of the rest go to cross_task. Deterministic for a fixed seed.
SplitAssignment make_splits(const Corpus& corpus, std::uint64_t seed,
                            const SplitParams& params = {});

std::string splits_to_json(const SplitAssignment& splits);
SplitAssignment splits_from_json(const std::string& text);

}  // namespace mindact
