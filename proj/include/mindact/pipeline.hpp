#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mindact/act.hpp"
#include "mindact/chat.hpp"
#include "mindact/corpus.hpp"
#include "mindact/eval.hpp"
#include "mindact/prune.hpp"
#include "mindact/rank.hpp"
#include "mindact/represent.hpp"

namespace mindact {

enum class PredictMode { MultiChoice, Generation };

struct PipelineConfig {
  std::filesystem::path corpus;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out = "out";
  unsigned jobs = 1;

  PruneConfig prune;
  ReprConfig repr;
  ScorerSpec scorer;
  std::size_t k = 50;
  ActConfig act;
  PredictMode mode = PredictMode::MultiChoice;
  bool predicted_history = false;  // experimental: feed predictions back as history

  std::string client = "scripted";  // scripted | remote | oracle
  std::filesystem::path replies;
  std::filesystem::path record_replies;
  ModelClientSpec model;

  SplitParams splits;
  std::optional<std::string> split;  // restrict predict/evaluate to one split
  std::filesystem::path splits_file;

  std::size_t neg_per_pos = 5;
  bool expand_acceptable = false;

  PredictConfig predict_config() const;
};

/// Defaults as a JSON object, the shape config files and overrides use:
/// top-level `corpus`, `seed`, `out`, `jobs` plus sections `prune`, `repr`,
/// `rank`, `act`, `model`, `split`, `export`.
std::string default_config_json();
/// Parses a config document (merged over the defaults). Unknown keys and
/// ill-typed values raise ConfigError.
PipelineConfig config_from_json(const std::string& text, const std::vector<std::string>& overrides = {});
PipelineConfig load_config(const std::optional<std::filesystem::path>& path,
                           const std::vector<std::string>& overrides = {});
std::string config_to_json(const PipelineConfig& config);

/// Requires a seed when shuffling, sampling negatives or computing splits.
void require_seed(const PipelineConfig& config, const std::string& why);

/// Oracle answering with each step's gold element and operation.
GoldOracleClient make_oracle_client(const Corpus& corpus);

/// Runs prediction for the given tasks (every task when empty). Results are
/// in corpus order whatever the job count. Steps whose prediction failed
/// carry `error`; a stage failure (ranking, configuration) is rethrown after
/// the finished tasks have been handed to `completed`, when set.
std::vector<StepPrediction> run_predictions(const Corpus& corpus, const PipelineConfig& config, ChatClient& client,
                                            const std::set<std::string>& task_filter = {},
                                            std::vector<StepPrediction>* completed = nullptr);

std::string prediction_to_json(const StepPrediction& prediction);
std::string predictions_to_jsonl(const std::vector<StepPrediction>& predictions);
std::vector<StepPrediction> predictions_from_jsonl(const std::string& text);

/// Scores predictions against the gold annotation. Tasks without any
/// prediction are left out; missing steps of a predicted task score 0.
std::vector<TaskScore> score_predictions(const Corpus& corpus, const std::vector<StepPrediction>& predictions);
EvalReport evaluate_predictions(const Corpus& corpus, const std::vector<StepPrediction>& predictions,
                                const std::optional<SplitAssignment>& splits);

/// Entry point of the command-line tool, exposed for tests. Returns the exit
/// status: 0 on success, 1 on a stage error, 2 on a usage error.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mindact
