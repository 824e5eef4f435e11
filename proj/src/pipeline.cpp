#include "mindact/pipeline.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>

#include "json.hpp"
#include "mindact/error.hpp"
#include "mindact/parallel.hpp"
#include "mindact/text.hpp"

namespace mindact {

using nlohmann::json;

namespace {

json defaults_json() {
  PipelineConfig d;
  return {
      {"corpus", ""},
      {"seed", nullptr},
      {"out", "out"},
      {"jobs", d.jobs},
      {"prune",
       {{"salient_attributes", d.prune.salient_attributes},
        {"min_text_length", d.prune.min_text_length},
        {"keep_structural_ancestors", d.prune.keep_structural_ancestors}}},
      {"repr",
       {{"salient_attributes", d.repr.salient_attributes},
        {"max_tokens_per_segment", d.repr.max_tokens_per_segment},
        {"child_depth", d.repr.child_depth},
        {"include_parent", d.repr.include_parent},
        {"max_history", d.repr.max_history},
        {"lowercase", d.repr.lowercase}}},
      {"rank",
       {{"k", d.k},
        {"scorer", "lexical"},
        {"endpoint", ""},
        {"batch_size", d.scorer.batch_size},
        {"max_in_flight", d.scorer.max_in_flight},
        {"max_retries", d.scorer.max_retries},
        {"initial_backoff_ms", d.scorer.initial_backoff_ms},
        {"timeout_ms", d.scorer.timeout_ms}}},
      {"act",
       {{"mode", "multichoice"},
        {"group_size", d.act.group_size},
        {"shuffle", d.act.shuffle},
        {"neighbor_radius", d.act.neighbor_radius},
        {"candidate_depth", d.act.candidate_depth},
        {"char_budget", d.act.char_budget},
        {"option_words", d.act.option_words},
        {"demonstrations", d.act.demonstrations},
        {"match_threshold", d.act.match_threshold},
        {"max_in_flight", d.act.max_in_flight},
        {"predicted_history", d.predicted_history}}},
      {"model",
       {{"client", d.client},
        {"replies", ""},
        {"record_replies", ""},
        {"endpoint", ""},
        {"model_name", d.model.model_name},
        {"temperature", d.model.temperature},
        {"max_retries", d.model.max_retries},
        {"initial_backoff_ms", d.model.initial_backoff_ms},
        {"timeout_ms", d.model.timeout_ms}}},
      {"split",
       {{"holdout_domains", d.splits.holdout_domains},
        {"websites_per_domain", d.splits.websites_per_domain},
        {"cross_task_fraction", d.splits.cross_task_fraction},
        {"name", nullptr},
        {"file", ""}}},
      {"export", {{"neg_per_pos", d.neg_per_pos}, {"expand_acceptable", d.expand_acceptable}}},
  };
}

// Reports keys of `doc` that the defaults do not know.
void check_keys(const json& doc, const json& defaults, const std::string& prefix) {
  if (!doc.is_object()) throw ConfigError("config " + (prefix.empty() ? "document" : prefix) + " must be an object");
  for (const auto& [key, value] : doc.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!defaults.contains(key)) throw ConfigError("unknown config key " + path);
    if (defaults[key].is_object()) check_keys(value, defaults[key], path);
  }
}

// Like a merge patch, except that null is a value rather than a deletion.
void merge_into(json& doc, const json& user) {
  for (const auto& [key, value] : user.items()) {
    if (value.is_object() && doc.contains(key) && doc[key].is_object()) merge_into(doc[key], value);
    else doc[key] = value;
  }
}

void apply_override(json& doc, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like section.key=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* cur = &doc;
  std::size_t start = 0;
  while (true) {
    std::size_t dot = path.find('.', start);
    std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!cur->is_object() || !cur->contains(key)) throw ConfigError("unknown config key " + path);
    cur = &(*cur)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (cur->is_object()) throw ConfigError("override must name a leaf key: " + path);
  *cur = value;
}

class Reader {
 public:
  explicit Reader(const json& doc) : doc_(doc) {}

  const json& at(const std::string& path) const {
    const json* cur = &doc_;
    std::size_t start = 0;
    while (true) {
      std::size_t dot = path.find('.', start);
      cur = &cur->at(path.substr(start, dot == std::string::npos ? std::string::npos : dot - start));
      if (dot == std::string::npos) return *cur;
      start = dot + 1;
    }
  }
  std::string str(const std::string& path) const {
    const json& v = at(path);
    if (!v.is_string()) fail(path, "a string");
    return v.get<std::string>();
  }
  std::optional<std::string> opt_str(const std::string& path) const {
    if (at(path).is_null()) return std::nullopt;
    return str(path);
  }
  bool boolean(const std::string& path) const {
    const json& v = at(path);
    if (!v.is_boolean()) fail(path, "true or false");
    return v.get<bool>();
  }
  std::uint64_t uint(const std::string& path) const {
    const json& v = at(path);
    if (!v.is_number_unsigned()) fail(path, "a non-negative integer");
    return v.get<std::uint64_t>();
  }
  int integer(const std::string& path) const {
    const json& v = at(path);
    if (!v.is_number_integer()) fail(path, "an integer");
    return v.get<int>();
  }
  double number(const std::string& path) const {
    const json& v = at(path);
    if (!v.is_number()) fail(path, "a number");
    return v.get<double>();
  }
  std::vector<std::string> strings(const std::string& path) const {
    const json& v = at(path);
    if (!v.is_array() || !std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); }))
      fail(path, "a list of strings");
    return v.get<std::vector<std::string>>();
  }

 private:
  [[noreturn]] static void fail(const std::string& path, const std::string& expected) {
    throw ConfigError("config key " + path + " must be " + expected);
  }
  const json& doc_;
};

PipelineConfig from_document(const json& doc) {
  Reader r(doc);
  PipelineConfig c;
  c.corpus = r.str("corpus");
  if (!r.at("seed").is_null()) c.seed = r.uint("seed");
  c.out = r.str("out");
  c.jobs = static_cast<unsigned>(r.uint("jobs"));

  c.prune.salient_attributes = r.strings("prune.salient_attributes");
  c.prune.min_text_length = r.uint("prune.min_text_length");
  c.prune.keep_structural_ancestors = r.boolean("prune.keep_structural_ancestors");

  c.repr.salient_attributes = r.strings("repr.salient_attributes");
  c.repr.max_tokens_per_segment = r.uint("repr.max_tokens_per_segment");
  c.repr.child_depth = r.integer("repr.child_depth");
  c.repr.include_parent = r.boolean("repr.include_parent");
  c.repr.max_history = r.uint("repr.max_history");
  c.repr.lowercase = r.boolean("repr.lowercase");

  c.k = r.uint("rank.k");
  if (c.k < 1) throw ConfigError("rank.k must be at least 1");
  const std::string scorer = r.str("rank.scorer");
  if (scorer == "lexical") c.scorer.kind = ScorerKind::Lexical;
  else if (scorer == "remote") c.scorer.kind = ScorerKind::Remote;
  else throw ConfigError("rank.scorer must be lexical or remote");
  c.scorer.endpoint = r.str("rank.endpoint");
  c.scorer.batch_size = r.uint("rank.batch_size");
  c.scorer.max_in_flight = static_cast<unsigned>(r.uint("rank.max_in_flight"));
  c.scorer.max_retries = r.integer("rank.max_retries");
  c.scorer.initial_backoff_ms = r.integer("rank.initial_backoff_ms");
  c.scorer.timeout_ms = r.integer("rank.timeout_ms");

  const std::string mode = r.str("act.mode");
  if (mode == "multichoice") c.mode = PredictMode::MultiChoice;
  else if (mode == "generation") c.mode = PredictMode::Generation;
  else throw ConfigError("act.mode must be multichoice or generation");
  c.act.group_size = r.uint("act.group_size");
  if (c.act.group_size < 1 || c.act.group_size > 5) throw ConfigError("act.group_size must be between 1 and 5");
  c.act.shuffle = r.boolean("act.shuffle");
  c.act.neighbor_radius = r.integer("act.neighbor_radius");
  c.act.candidate_depth = r.integer("act.candidate_depth");
  c.act.char_budget = r.uint("act.char_budget");
  c.act.option_words = r.uint("act.option_words");
  c.act.demonstrations = r.integer("act.demonstrations");
  c.act.match_threshold = r.number("act.match_threshold");
  c.act.max_in_flight = static_cast<unsigned>(r.uint("act.max_in_flight"));
  c.predicted_history = r.boolean("act.predicted_history");

  c.client = r.str("model.client");
  if (c.client != "scripted" && c.client != "remote" && c.client != "oracle")
    throw ConfigError("model.client must be scripted, remote or oracle");
  c.replies = r.str("model.replies");
  c.record_replies = r.str("model.record_replies");
  c.model.endpoint = r.str("model.endpoint");
  c.model.model_name = r.str("model.model_name");
  c.model.temperature = r.number("model.temperature");
  c.model.max_retries = r.integer("model.max_retries");
  c.model.initial_backoff_ms = r.integer("model.initial_backoff_ms");
  c.model.timeout_ms = r.integer("model.timeout_ms");

  c.splits.holdout_domains = r.strings("split.holdout_domains");
  c.splits.websites_per_domain = r.uint("split.websites_per_domain");
  c.splits.cross_task_fraction = r.number("split.cross_task_fraction");
  c.split = r.opt_str("split.name");
  if (c.split && std::find(std::begin(kSplitNames), std::end(kSplitNames), *c.split) == std::end(kSplitNames))
    throw ConfigError("unknown split " + *c.split);
  c.splits_file = r.str("split.file");

  c.neg_per_pos = r.uint("export.neg_per_pos");
  c.expand_acceptable = r.boolean("export.expand_acceptable");

  if (c.seed) c.act.seed = *c.seed;
  c.act.repr = c.repr;
  c.model.demonstrations = c.act.demonstrations;
  c.model.max_in_flight = c.act.max_in_flight;
  return c;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json operation_json(const std::optional<Operation>& op) {
  if (!op) return nullptr;
  return {{"kind", op_kind_name(op->kind())}, {"value", op->value()}};
}

}  // namespace

PredictConfig PipelineConfig::predict_config() const {
  PredictConfig p;
  p.prune = prune;
  p.repr = repr;
  p.scorer = scorer;
  p.k = k;
  p.act = act;
  p.act.repr = repr;
  if (seed) p.act.seed = *seed;
  return p;
}

std::string default_config_json() { return defaults_json().dump(2) + "\n"; }

PipelineConfig config_from_json(const std::string& text, const std::vector<std::string>& overrides) {
  json defaults = defaults_json();
  json doc = defaults;
  if (!trim(text).empty()) {
    json user = json::parse(text, nullptr, false);
    if (user.is_discarded()) throw ConfigError("config is not valid JSON");
    check_keys(user, defaults, "");
    merge_into(doc, user);
  }
  for (const auto& o : overrides) apply_override(doc, o);
  try {
    return from_document(doc);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
}

PipelineConfig load_config(const std::optional<std::filesystem::path>& path,
                           const std::vector<std::string>& overrides) {
  return config_from_json(path ? read_file(*path) : std::string{}, overrides);
}

std::string config_to_json(const PipelineConfig& c) {
  json doc = defaults_json();
  doc["corpus"] = c.corpus.string();
  doc["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  doc["out"] = c.out.string();
  doc["jobs"] = c.jobs;
  doc["prune"] = {{"salient_attributes", c.prune.salient_attributes},
                  {"min_text_length", c.prune.min_text_length},
                  {"keep_structural_ancestors", c.prune.keep_structural_ancestors}};
  doc["repr"] = {{"salient_attributes", c.repr.salient_attributes},
                 {"max_tokens_per_segment", c.repr.max_tokens_per_segment},
                 {"child_depth", c.repr.child_depth},
                 {"include_parent", c.repr.include_parent},
                 {"max_history", c.repr.max_history},
                 {"lowercase", c.repr.lowercase}};
  doc["rank"] = {{"k", c.k},
                 {"scorer", c.scorer.kind == ScorerKind::Lexical ? "lexical" : "remote"},
                 {"endpoint", c.scorer.endpoint},
                 {"batch_size", c.scorer.batch_size},
                 {"max_in_flight", c.scorer.max_in_flight},
                 {"max_retries", c.scorer.max_retries},
                 {"initial_backoff_ms", c.scorer.initial_backoff_ms},
                 {"timeout_ms", c.scorer.timeout_ms}};
  doc["act"] = {{"mode", c.mode == PredictMode::MultiChoice ? "multichoice" : "generation"},
                {"group_size", c.act.group_size},
                {"shuffle", c.act.shuffle},
                {"neighbor_radius", c.act.neighbor_radius},
                {"candidate_depth", c.act.candidate_depth},
                {"char_budget", c.act.char_budget},
                {"option_words", c.act.option_words},
                {"demonstrations", c.act.demonstrations},
                {"match_threshold", c.act.match_threshold},
                {"max_in_flight", c.act.max_in_flight},
                {"predicted_history", c.predicted_history}};
  doc["model"] = {{"client", c.client},
                  {"replies", c.replies.string()},
                  {"record_replies", c.record_replies.string()},
                  {"endpoint", c.model.endpoint},
                  {"model_name", c.model.model_name},
                  {"temperature", c.model.temperature},
                  {"max_retries", c.model.max_retries},
                  {"initial_backoff_ms", c.model.initial_backoff_ms},
                  {"timeout_ms", c.model.timeout_ms}};
  doc["split"] = {{"holdout_domains", c.splits.holdout_domains},
                  {"websites_per_domain", c.splits.websites_per_domain},
                  {"cross_task_fraction", c.splits.cross_task_fraction},
                  {"name", c.split ? json(*c.split) : json(nullptr)},
                  {"file", c.splits_file.string()}};
  doc["export"] = {{"neg_per_pos", c.neg_per_pos}, {"expand_acceptable", c.expand_acceptable}};
  return doc.dump(2) + "\n";
}

void require_seed(const PipelineConfig& config, const std::string& why) {
  if (!config.seed) throw ConfigError("a seed is required for " + why + " (pass --seed or set seed in the config)");
}

GoldOracleClient make_oracle_client(const Corpus& corpus) {
  std::map<std::string, GoldOracleClient::Gold> gold;
  for (const auto& task : corpus.tasks)
    for (const auto& step : task.steps)
      gold[step_key(task.task_id, step.index)] = {
          acceptable_set(corpus.snapshot(step.snapshot_ref), step.target_node).ids, step.operation};
  return GoldOracleClient(std::move(gold));
}

std::vector<StepPrediction> run_predictions(const Corpus& corpus, const PipelineConfig& config, ChatClient& client,
                                            const std::set<std::string>& task_filter,
                                            std::vector<StepPrediction>* completed) {
  if (config.act.shuffle) require_seed(config, "shuffled candidate groups");
  std::vector<const TaskRecord*> tasks;
  for (const auto& t : corpus.tasks)
    if (task_filter.empty() || task_filter.count(t.task_id)) tasks.push_back(&t);

  const PredictConfig pc = config.predict_config();
  std::vector<std::vector<StepPrediction>> per_task(tasks.size());
  std::vector<std::exception_ptr> failures(tasks.size());
  parallel_for(tasks.size(), config.jobs, [&](std::size_t i) {
    const TaskRecord& task = *tasks[i];
    try {
      std::vector<std::string> history;
      for (std::size_t s = 0; s < task.steps.size(); ++s) {
        const std::vector<std::string>* hist = config.predicted_history ? &history : nullptr;
        StepPrediction p = config.mode == PredictMode::MultiChoice
                               ? predict_step_multichoice(task, s, corpus, client, pc, hist)
                               : predict_step_generation(task, s, corpus, client, pc, hist);
        if (config.predicted_history && p.action.element && p.action.operation)
          history.push_back(format_action(corpus.snapshot(task.steps[s].snapshot_ref), *p.action.element,
                                          *p.action.operation));
        per_task[i].push_back(std::move(p));
      }
    } catch (...) {
      failures[i] = std::current_exception();
    }
  });

  std::vector<StepPrediction> out;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (failures[i]) {
      if (completed) *completed = out;
      std::rethrow_exception(failures[i]);
    }
    for (auto& p : per_task[i]) out.push_back(std::move(p));
  }
  if (completed) *completed = out;
  return out;
}

std::string prediction_to_json(const StepPrediction& p) {
  json candidates = json::array();
  for (const auto& item : p.candidates.items) candidates.push_back({{"id", item.node_id}, {"score", item.score}});
  json line = {{"task_id", p.task_id},
               {"step", p.step},
               {"element", p.action.element ? json(*p.action.element) : json(nullptr)},
               {"operation", operation_json(p.action.operation)},
               {"rounds_used", p.action.rounds_used},
               {"model_calls", p.action.model_calls},
               {"gold_rank", p.gold_rank},
               {"gold_retained", p.gold_retained},
               {"k", p.candidates.k},
               {"candidates", candidates},
               {"error", p.error ? json(*p.error) : json(nullptr)}};
  return line.dump();
}

std::string predictions_to_jsonl(const std::vector<StepPrediction>& predictions) {
  std::string out;
  for (const auto& p : predictions) out += prediction_to_json(p) + "\n";
  return out;
}

std::vector<StepPrediction> predictions_from_jsonl(const std::string& text) {
  std::vector<StepPrediction> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      json j = json::parse(line);
      StepPrediction p;
      p.task_id = j.at("task_id").get<std::string>();
      p.step = j.at("step").get<int>();
      if (!j.at("element").is_null()) p.action.element = j["element"].get<NodeId>();
      if (!j.at("operation").is_null()) {
        auto kind = parse_op_kind(j["operation"].at("kind").get<std::string>());
        if (!kind) throw IngestError("unknown operation kind on line " + std::to_string(lineno));
        p.action.operation = Operation(*kind, j["operation"].at("value").get<std::string>());
      }
      p.action.rounds_used = j.value("rounds_used", 0);
      p.action.model_calls = j.value("model_calls", 0);
      p.gold_rank = j.value("gold_rank", std::size_t{0});
      p.gold_retained = j.value("gold_retained", false);
      p.candidates.query_ref = step_key(p.task_id, p.step);
      p.candidates.k = j.value("k", std::size_t{0});
      if (j.contains("candidates"))
        for (const auto& c : j["candidates"])
          p.candidates.items.push_back({c.at("id").get<NodeId>(), c.at("score").get<double>()});
      if (j.contains("error") && !j["error"].is_null()) p.error = j["error"].get<std::string>();
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw IngestError("malformed prediction on line " + std::to_string(lineno) + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw IngestError("invalid operation on line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<TaskScore> score_predictions(const Corpus& corpus, const std::vector<StepPrediction>& predictions) {
  std::map<std::pair<std::string, int>, const StepPrediction*> by_step;
  std::set<std::string> predicted_tasks;
  for (const auto& p : predictions) {
    by_step[{p.task_id, p.step}] = &p;
    predicted_tasks.insert(p.task_id);
  }
  for (const auto& id : predicted_tasks) corpus.task(id);  // unknown task ids are an error

  std::vector<TaskScore> out;
  for (const auto& task : corpus.tasks) {
    if (!predicted_tasks.count(task.task_id)) continue;
    TaskScore score{task.task_id, {}};
    for (const auto& step : task.steps) {
      PredictedAction action;
      if (auto it = by_step.find({task.task_id, step.index}); it != by_step.end()) action = it->second->action;
      AcceptableSet acceptable = acceptable_set(corpus.snapshot(step.snapshot_ref), step.target_node,
                                                step_key(task.task_id, step.index));
      score.steps.push_back(score_step(action, step, acceptable));
    }
    out.push_back(std::move(score));
  }
  return out;
}

EvalReport evaluate_predictions(const Corpus& corpus, const std::vector<StepPrediction>& predictions,
                                const std::optional<SplitAssignment>& splits) {
  return aggregate_report(score_predictions(corpus, predictions), splits);
}

// ---------------------------------------------------------------------------
// Command line

namespace {

struct Flags {
  std::optional<std::string> config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> k;
  std::optional<std::string> scorer;
  std::optional<std::string> client;
  std::optional<std::string> replies;
  std::optional<std::string> record_replies;
  std::optional<std::string> mode;
  std::optional<std::string> split;
  std::optional<std::string> splits_file;
  std::optional<unsigned> jobs;
  std::optional<std::string> out;
  std::optional<std::string> corpus;
  std::optional<std::string> predictions;
  std::vector<std::string> reports;
};

// Tracks files written so a failure manifest can list the partial outputs.
class Outputs {
 public:
  explicit Outputs(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::filesystem::path path(const std::string& name) const { return dir_ / name; }

  void write(const std::string& name, const std::string& content) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    const auto p = path(name);
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + p.string());
    f << content;
    f.close();
    if (!f) throw IoError("failed writing " + p.string());
    written_.push_back(p.string());
  }

  void failure(const std::string& command, const std::string& kind, const std::string& message) {
    json doc = {{"command", command}, {"error_type", kind}, {"error", message}, {"outputs", written_}};
    try {
      write("failure.json", doc.dump(2) + "\n");
    } catch (const Error&) {
      // Nothing more to do when the output directory itself is unwritable.
    }
  }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> written_;
};

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const IngestError*>(&e)) return "ingest";
  if (dynamic_cast<const SplitError*>(&e)) return "split";
  if (dynamic_cast<const RankingError*>(&e)) return "ranking";
  if (dynamic_cast<const SnippetError*>(&e)) return "snippet";
  if (dynamic_cast<const PredictionError*>(&e)) return "prediction";
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const IoError*>(&e)) return "io";
  if (dynamic_cast<const ProtocolError*>(&e)) return "protocol";
  return "internal";
}

std::string fmt_fraction(double v) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(4);
  ss << v;
  return ss.str();
}

Corpus require_corpus(const PipelineConfig& c) {
  if (c.corpus.empty()) throw ConfigError("no corpus given (pass --corpus or set corpus in the config)");
  return load_corpus(c.corpus, {c.jobs});
}

std::optional<SplitAssignment> resolve_splits(const PipelineConfig& c, const Corpus* corpus, bool required) {
  std::filesystem::path file = c.splits_file;
  if (file.empty() && std::filesystem::exists(c.out / "splits.json")) file = c.out / "splits.json";
  if (!file.empty()) return splits_from_json(read_file(file));
  if (!required) return std::nullopt;
  if (!corpus) throw ConfigError("a split file is required (pass --splits)");
  require_seed(c, "computing splits");
  return make_splits(*corpus, *c.seed, c.splits);
}

std::set<std::string> split_filter(const PipelineConfig& c, const Corpus& corpus) {
  if (!c.split) return {};
  auto splits = resolve_splits(c, &corpus, true);
  const auto& ids = splits->get(*c.split);
  if (ids.empty()) throw SplitError("split " + *c.split + " holds no tasks");
  return ids;
}

void cmd_ingest(const PipelineConfig& c, Outputs& outputs, std::ostream& out) {
  Corpus corpus = require_corpus(c);
  std::set<std::string> websites, domains;
  for (const auto& t : corpus.tasks) {
    websites.insert(t.website);
    domains.insert(t.top_domain);
  }
  json summary = {{"tasks", corpus.tasks.size()},
                  {"steps", corpus.step_count()},
                  {"snapshots", corpus.snapshots.size()},
                  {"websites", websites.size()},
                  {"top_domains", domains.size()}};
  outputs.write("ingest.json", summary.dump(2) + "\n");
  out << "corpus ok: " << corpus.tasks.size() << " tasks, " << corpus.step_count() << " steps, "
      << corpus.snapshots.size() << " snapshots\n";
}

void cmd_split(const PipelineConfig& c, Outputs& outputs, std::ostream& out) {
  require_seed(c, "computing splits");
  Corpus corpus = require_corpus(c);
  SplitAssignment s = make_splits(corpus, *c.seed, c.splits);
  outputs.write("splits.json", splits_to_json(s));
  out << "train " << s.train.size() << ", cross_task " << s.cross_task.size() << ", cross_website "
      << s.cross_website.size() << ", cross_domain " << s.cross_domain.size() << "\n";
}

struct StepRef {
  const TaskRecord* task;
  std::size_t index;
};

std::vector<StepRef> all_steps(const Corpus& corpus, const std::set<std::string>& filter = {}) {
  std::vector<StepRef> steps;
  for (const auto& t : corpus.tasks)
    if (filter.empty() || filter.count(t.task_id))
      for (std::size_t i = 0; i < t.steps.size(); ++i) steps.push_back({&t, i});
  return steps;
}

void cmd_prune(const PipelineConfig& c, Outputs& outputs, std::ostream& out) {
  Corpus corpus = require_corpus(c);
  auto steps = all_steps(corpus);
  std::vector<PruneStats> stats(steps.size());
  std::vector<int> recalled(steps.size());
  parallel_for(steps.size(), c.jobs, [&](std::size_t i) {
    const StepRecord& step = steps[i].task->steps[steps[i].index];
    const DomTree& raw = corpus.snapshot(step.snapshot_ref);
    auto result = prune_tree(raw, c.prune, step.target_node);
    stats[i] = result.stats;
    for (NodeId id : acceptable_set(raw, step.target_node).ids)
      if (result.tree.contains(id) && !result.tree.find(id).structural) recalled[i] = 1;
  });
  std::string lines;
  double before = 0, after = 0, hits = 0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const StepRecord& step = steps[i].task->steps[steps[i].index];
    json line = {{"task_id", steps[i].task->task_id},
                 {"step", step.index},
                 {"snapshot", step.snapshot_ref},
                 {"nodes_before", stats[i].nodes_before},
                 {"nodes_after", stats[i].nodes_after},
                 {"target_retained", stats[i].target_retained.value_or(false)},
                 {"target_recalled", recalled[i] == 1},
                 {"all_pruned", stats[i].all_pruned}};
    lines += line.dump() + "\n";
    before += static_cast<double>(stats[i].nodes_before);
    after += static_cast<double>(stats[i].nodes_after);
    hits += recalled[i];
  }
  outputs.write("prune_stats.jsonl", lines);
  const double n = static_cast<double>(std::max<std::size_t>(steps.size(), 1));
  json summary = {{"steps", steps.size()},
                  {"mean_nodes_before", before / n},
                  {"mean_nodes_after", after / n},
                  {"node_reduction", before > 0 ? 1.0 - after / before : 0.0},
                  {"target_recall", steps.empty() ? 0.0 : hits / n}};
  outputs.write("prune_summary.json", summary.dump(2) + "\n");
  out << "pruned " << steps.size() << " steps: " << summary["mean_nodes_before"].get<double>() << " -> "
      << summary["mean_nodes_after"].get<double>() << " nodes on average, target recall "
      << fmt_fraction(summary["target_recall"].get<double>()) << "\n";
}

void cmd_rank(const PipelineConfig& c, Outputs& outputs, std::ostream& out) {
  Corpus corpus = require_corpus(c);
  auto steps = all_steps(corpus, split_filter(c, corpus));
  std::vector<CandidateSet> sets(steps.size());
  std::vector<int> recall(steps.size());
  auto resolver = [&](const std::string& id) -> const DomTree& { return corpus.snapshot(id); };
  parallel_for(steps.size(), c.jobs, [&](std::size_t i) {
    const TaskRecord& task = *steps[i].task;
    const StepRecord& step = task.steps[steps[i].index];
    const DomTree& raw = corpus.snapshot(step.snapshot_ref);
    auto pruned = prune_tree(raw, c.prune, step.target_node);
    QueryText query = build_query(task, steps[i].index, resolver, c.repr);
    sets[i] = top_k(score_page(query, pruned.tree, c.scorer, c.repr), c.k, step_key(task.task_id, step.index));
    recall[i] = recall_at_k(sets[i], acceptable_set(raw, step.target_node).ids);
  });
  std::string lines;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    json items = json::array();
    for (const auto& item : sets[i].items) items.push_back({{"id", item.node_id}, {"score", item.score}});
    json line = {{"task_id", steps[i].task->task_id},
                 {"step", steps[i].task->steps[steps[i].index].index},
                 {"query_ref", sets[i].query_ref},
                 {"k", sets[i].k},
                 {"candidates", items},
                 {"recall", recall[i]}};
    lines += line.dump() + "\n";
  }
  outputs.write("candidates.jsonl", lines);
  json summary = {{"k", c.k}, {"steps", steps.size()}, {"recall_at_k", mean_recall(recall)}};
  outputs.write("rank_summary.json", summary.dump(2) + "\n");
  out << "recall@" << c.k << " = " << fmt_fraction(mean_recall(recall)) << " over " << steps.size() << " steps\n";
}

void cmd_export(const PipelineConfig& c, Outputs& outputs, std::ostream& out) {
  require_seed(c, "negative sampling");
  Corpus corpus = require_corpus(c);
  ExportOptions opts;
  opts.neg_per_pos = c.neg_per_pos;
  opts.seed = *c.seed;
  opts.expand_acceptable = c.expand_acceptable;
  opts.prune = c.prune;
  opts.repr = c.repr;
  ExportSummary summary;
  outputs.write("train_pairs.jsonl", training_pairs_jsonl(corpus, opts, &summary));
  out << summary.pairs << " pairs (" << summary.positives << " positive, " << summary.negatives << " negative), "
      << summary.skipped_steps << " steps skipped\n";
}

void cmd_predict(const PipelineConfig& c, Outputs& outputs, std::ostream& out) {
  Corpus corpus = require_corpus(c);
  auto filter = split_filter(c, corpus);

  std::unique_ptr<ChatClient> base;
  if (c.client == "scripted") {
    if (c.replies.empty()) throw ConfigError("the scripted client needs --replies");
    base = std::make_unique<ScriptedClient>(ScriptedClient::from_file(c.replies));
  } else if (c.client == "remote") {
    base = std::make_unique<RemoteChatClient>(c.model);
  } else {
    base = std::make_unique<GoldOracleClient>(make_oracle_client(corpus));
  }
  std::optional<RecordingClient> recorder;
  ChatClient* client = base.get();
  if (!c.record_replies.empty()) client = &recorder.emplace(*base);

  std::vector<StepPrediction> done;
  try {
    done = run_predictions(corpus, c, *client, filter, &done);
  } catch (...) {
    outputs.write("predictions.jsonl", predictions_to_jsonl(done));
    if (recorder) recorder->save(c.record_replies);
    throw;
  }
  outputs.write("predictions.jsonl", predictions_to_jsonl(done));
  if (recorder) recorder->save(c.record_replies);
  std::size_t calls = 0, errors = 0;
  for (const auto& p : done) {
    calls += static_cast<std::size_t>(p.action.model_calls);
    errors += p.error ? 1 : 0;
  }
  out << "predicted " << done.size() << " steps with " << calls << " model calls, " << errors << " step errors\n";
}

void cmd_evaluate(const PipelineConfig& c, const Flags& flags, Outputs& outputs, std::ostream& out) {
  Corpus corpus = require_corpus(c);
  const std::filesystem::path pred_path =
      flags.predictions ? std::filesystem::path(*flags.predictions) : c.out / "predictions.jsonl";
  auto predictions = predictions_from_jsonl(read_file(pred_path));
  auto splits = resolve_splits(c, &corpus, c.split.has_value());
  if (c.split) {
    const auto& keep = splits->get(*c.split);
    std::erase_if(predictions, [&](const StepPrediction& p) { return !keep.count(p.task_id); });
  }
  auto scores = score_predictions(corpus, predictions);

  std::map<std::pair<std::string, int>, const StepPrediction*> by_step;
  for (const auto& p : predictions) by_step[{p.task_id, p.step}] = &p;
  std::string trace;
  for (const auto& ts : scores) {
    const TaskRecord& task = corpus.task(ts.task_id);
    for (std::size_t i = 0; i < task.steps.size(); ++i) {
      const StepRecord& step = task.steps[i];
      auto it = by_step.find({task.task_id, step.index});
      const StepPrediction* p = it == by_step.end() ? nullptr : it->second;
      json line = {{"task_id", task.task_id},
                   {"step", step.index},
                   {"split", splits ? json(splits->split_of(task.task_id)) : json(nullptr)},
                   {"predicted", p && p->action.element ? json(*p->action.element) : json(nullptr)},
                   {"gold", step.target_node},
                   {"gold_rank", p ? p->gold_rank : 0},
                   {"element_acc", ts.steps[i].element_acc},
                   {"op_f1", ts.steps[i].op_f1},
                   {"step_success", ts.steps[i].step_success}};
      trace += line.dump() + "\n";
    }
  }
  EvalReport report = aggregate_report(std::move(scores), splits);
  outputs.write("report.json", report_to_json(report));
  outputs.write("report.csv", report_to_csv(report));
  outputs.write("trace.jsonl", trace);
  const SplitMetrics& all = report.splits.at("all");
  out << "tasks " << all.tasks << ", steps " << all.steps;
  if (all.step_sr) out << ", element acc " << fmt_fraction(*all.element_acc) << ", op f1 " << fmt_fraction(*all.op_f1)
                       << ", step_sr " << fmt_fraction(*all.step_sr) << ", sr " << fmt_fraction(*all.sr);
  out << "\n";
}

void cmd_report(const PipelineConfig& c, const Flags& flags, Outputs& outputs, std::ostream& out) {
  std::vector<std::pair<std::string, EvalReport>> rows;
  std::vector<std::string> specs = flags.reports;
  if (specs.empty()) specs.push_back("MindAct=" + (c.out / "report.json").string());
  for (const auto& spec : specs) {
    auto eq = spec.find('=');
    std::string name = eq == std::string::npos ? std::filesystem::path(spec).parent_path().filename().string()
                                               : spec.substr(0, eq);
    std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
    if (name.empty()) name = "run";
    rows.emplace_back(name, report_from_json(read_file(path)));
  }
  std::string table = format_report_table(rows);
  outputs.write("report.txt", table);
  out << table;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Web-agent pipeline: prune, rank, predict and evaluate.", "mindact"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "JSON config file");
  app.add_option("--set", f.sets, "Override a config value, section.key=value (repeatable)");
  app.add_option("--corpus", f.corpus, "Corpus manifest");
  app.add_option("--seed", f.seed, "Seed for splits, sampling and shuffling");
  app.add_option("--k", f.k, "Candidates kept after ranking")->check(CLI::PositiveNumber);
  app.add_option("--scorer", f.scorer, "Candidate scorer")->check(CLI::IsMember({"lexical", "remote"}));
  app.add_option("--client", f.client, "Model client")->check(CLI::IsMember({"scripted", "remote", "oracle"}));
  app.add_option("--replies", f.replies, "Scripted replies file");
  app.add_option("--record-replies", f.record_replies, "Save every model reply to this file");
  app.add_option("--mode", f.mode, "Prediction mode")->check(CLI::IsMember({"multichoice", "generation"}));
  app.add_option("--split", f.split, "Restrict to one split")
      ->check(CLI::IsMember({"train", "cross_task", "cross_website", "cross_domain"}));
  app.add_option("--splits", f.splits_file, "Split assignment file");
  app.add_option("--jobs", f.jobs, "Worker threads (0 = all cores)");
  app.add_option("--out", f.out, "Output directory");

  const std::vector<std::pair<const char*, const char*>> commands = {
      {"ingest", "Validate a corpus"},
      {"split", "Assign tasks to generalization splits"},
      {"prune", "Prune every step's snapshot and report statistics"},
      {"rank", "Rank candidates and report recall@k"},
      {"export-train", "Write ranker training pairs"},
      {"predict", "Predict the action of every step"},
      {"evaluate", "Score predictions against the gold actions"},
      {"report", "Print a results table from one or more reports"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);
  app.get_subcommand("evaluate")->add_option("--predictions", f.predictions, "Predictions file");
  app.get_subcommand("report")->add_option("reports", f.reports, "Reports as NAME=PATH");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  PipelineConfig cfg;
  try {
    std::vector<std::string> sets = f.sets;
    auto set = [&](const char* key, const std::string& value) { sets.push_back(std::string(key) + "=" + value); };
    auto quoted = [](const std::string& s) { return json(s).dump(); };
    if (f.corpus) set("corpus", quoted(*f.corpus));
    if (f.seed) set("seed", std::to_string(*f.seed));
    if (f.k) set("rank.k", std::to_string(*f.k));
    if (f.scorer) set("rank.scorer", quoted(*f.scorer));
    if (f.client) set("model.client", quoted(*f.client));
    if (f.replies) set("model.replies", quoted(*f.replies));
    if (f.record_replies) set("model.record_replies", quoted(*f.record_replies));
    if (f.mode) set("act.mode", quoted(*f.mode));
    if (f.split) set("split.name", quoted(*f.split));
    if (f.splits_file) set("split.file", quoted(*f.splits_file));
    if (f.jobs) set("jobs", std::to_string(*f.jobs));
    if (f.out) set("out", quoted(*f.out));
    cfg = load_config(f.config ? std::optional<std::filesystem::path>(*f.config) : std::nullopt, sets);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  Outputs outputs(cfg.out);
  try {
    if (command == "ingest") cmd_ingest(cfg, outputs, out);
    else if (command == "split") cmd_split(cfg, outputs, out);
    else if (command == "prune") cmd_prune(cfg, outputs, out);
    else if (command == "rank") cmd_rank(cfg, outputs, out);
    else if (command == "export-train") cmd_export(cfg, outputs, out);
    else if (command == "predict") cmd_predict(cfg, outputs, out);
    else if (command == "evaluate") cmd_evaluate(cfg, f, outputs, out);
    else cmd_report(cfg, f, outputs, out);
  } catch (const std::exception& e) {
    outputs.failure(command, error_kind(e), e.what());
    err << "error: " << command << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace mindact
