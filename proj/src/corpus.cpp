#include "mindact/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include "json.hpp"
#include <sstream>

#include "mindact/error.hpp"
#include "mindact/html.hpp"
#include "mindact/parallel.hpp"
#include "mindact/rng.hpp"
#include "mindact/text.hpp"

namespace mindact {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string required_string(const json& obj, const char* key, const std::string& task_id) {
  auto it = obj.find(key);
  if (it == obj.end()) throw IngestError(task_id, std::string("missing field '") + key + "'");
  if (!it->is_string()) throw IngestError(task_id, std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

StepRecord parse_step(const json& s, int index, const std::string& task_id) {
  if (!s.is_object()) throw IngestError(task_id, "step " + std::to_string(index) + " is not an object");
  StepRecord step;
  step.index = index;
  step.snapshot_ref = required_string(s, "snapshot", task_id);
  auto target = s.find("target");
  if (target == s.end() || !target->is_number_integer())
    throw IngestError(task_id, "step " + std::to_string(index) + " needs an integer 'target'");
  step.target_node = target->get<NodeId>();
  std::string op = required_string(s, "op", task_id);
  auto kind = parse_op_kind(op);
  if (!kind) throw IngestError(task_id, "step " + std::to_string(index) + " has unknown operation '" + op + "'");
  std::string value = s.contains("value") && s["value"].is_string() ? s["value"].get<std::string>() : "";
  // Hover and Enter are recorded as clicks; whatever value they carried is not an argument.
  if (*kind == OpKind::Click && to_upper(trim(op)) != "CLICK") value.clear();
  try {
    step.operation = Operation(*kind, std::move(value));
  } catch (const std::invalid_argument& e) {
    throw IngestError(task_id, "step " + std::to_string(index) + ": " + e.what());
  }
  return step;
}

void validate(const Corpus& corpus) {
  std::set<std::string> seen;
  for (const auto& task : corpus.tasks) {
    if (task.task_id.empty()) throw IngestError("task with empty task_id");
    if (!seen.insert(task.task_id).second) throw IngestError(task.task_id, "duplicate task_id");
    if (trim(task.description).empty()) throw IngestError(task.task_id, "empty description");
    if (task.steps.empty()) throw IngestError(task.task_id, "task has no steps");
    int previous = -1;
    for (const auto& step : task.steps) {
      if (step.index <= previous) throw IngestError(task.task_id, "step indices must increase");
      previous = step.index;
      auto it = corpus.snapshots.find(step.snapshot_ref);
      if (it == corpus.snapshots.end() || !it->second)
        throw IngestError(task.task_id, "unresolved snapshot " + step.snapshot_ref);
      if (!it->second->contains(step.target_node))
        throw IngestError(task.task_id, "target node " + std::to_string(step.target_node) +
                                            " does not exist in " + step.snapshot_ref);
    }
  }
}

}  // namespace

const DomTree& Corpus::snapshot(const std::string& source_id) const {
  auto it = snapshots.find(source_id);
  if (it == snapshots.end() || !it->second) throw NotFoundError("unknown snapshot " + source_id);
  return *it->second;
}

const TaskRecord& Corpus::task(const std::string& task_id) const {
  for (const auto& t : tasks)
    if (t.task_id == task_id) return t;
  throw NotFoundError("unknown task " + task_id);
}

std::size_t Corpus::step_count() const {
  std::size_t n = 0;
  for (const auto& t : tasks) n += t.steps.size();
  return n;
}

Corpus make_corpus(std::vector<TaskRecord> tasks,
                   std::map<std::string, std::shared_ptr<const DomTree>> snapshots) {
  Corpus corpus{std::move(tasks), std::move(snapshots)};
  validate(corpus);
  return corpus;
}

Corpus load_corpus(const fs::path& manifest, const LoadOptions& options) {
  json doc;
  try {
    doc = json::parse(read_file(manifest));
  } catch (const json::exception& e) {
    throw IngestError("manifest " + manifest.string() + " is not valid JSON: " + e.what());
  }
  if (!doc.is_object() || !doc.contains("tasks") || !doc["tasks"].is_array())
    throw IngestError("manifest must be an object with a 'tasks' array");

  Corpus corpus;
  std::vector<std::string> snapshot_refs;
  std::vector<std::string> first_user;  // task that first references each snapshot
  for (const auto& t : doc["tasks"]) {
    std::string id = t.is_object() && t.contains("task_id") && t["task_id"].is_string()
                         ? t["task_id"].get<std::string>()
                         : std::string{};
    if (id.empty()) throw IngestError("task without a string 'task_id'");
    TaskRecord task;
    task.task_id = id;
    task.description = required_string(t, "description", id);
    task.website = required_string(t, "website", id);
    task.domain = required_string(t, "domain", id);
    task.top_domain = required_string(t, "top_domain", id);
    if (!t.contains("steps") || !t["steps"].is_array()) throw IngestError(id, "missing 'steps' array");
    int index = 0;
    for (const auto& s : t["steps"]) {
      task.steps.push_back(parse_step(s, index++, id));
      const std::string& ref = task.steps.back().snapshot_ref;
      if (std::find(snapshot_refs.begin(), snapshot_refs.end(), ref) == snapshot_refs.end()) {
        snapshot_refs.push_back(ref);
        first_user.push_back(id);
      }
    }
    corpus.tasks.push_back(std::move(task));
  }

  const fs::path base = manifest.parent_path();
  std::vector<std::shared_ptr<const DomTree>> parsed(snapshot_refs.size());
  parallel_for(snapshot_refs.size(), options.jobs, [&](std::size_t i) {
    const fs::path page = base / snapshot_refs[i];
    if (!fs::exists(page)) throw IngestError(first_user[i], "snapshot file not found: " + page.string());
    fs::path sidecar = page;
    sidecar.replace_extension(".layout.json");
    std::optional<LayoutSidecar> layout;
    if (fs::exists(sidecar)) layout = parse_layout_sidecar(read_file(sidecar));
    parsed[i] = std::make_shared<const DomTree>(parse_snapshot(read_file(page), layout, snapshot_refs[i]));
  });
  for (std::size_t i = 0; i < snapshot_refs.size(); ++i) corpus.snapshots[snapshot_refs[i]] = parsed[i];
  validate(corpus);
  return corpus;
}

std::string SplitAssignment::split_of(const std::string& task_id) const {
  if (train.count(task_id)) return "train";
  if (cross_task.count(task_id)) return "cross_task";
  if (cross_website.count(task_id)) return "cross_website";
  if (cross_domain.count(task_id)) return "cross_domain";
  return {};
}

const std::set<std::string>& SplitAssignment::get(const std::string& split_name) const {
  if (split_name == "train") return train;
  if (split_name == "cross_task") return cross_task;
  if (split_name == "cross_website") return cross_website;
  if (split_name == "cross_domain") return cross_domain;
  throw ConfigError("unknown split '" + split_name + "'");
}

SplitAssignment make_splits(const Corpus& corpus, std::uint64_t seed, const SplitParams& params) {
  if (params.cross_task_fraction < 0 || params.cross_task_fraction > 1)
    throw SplitError("cross_task_fraction must lie in [0, 1]");
  const std::set<std::string> holdout(params.holdout_domains.begin(), params.holdout_domains.end());
  SplitAssignment out;
  std::vector<const TaskRecord*> remaining;
  for (const auto& task : corpus.tasks) {
    if (task.website.empty() || task.top_domain.empty())
      throw SplitError("task " + task.task_id + " lacks a website or top_domain label");
    if (holdout.count(task.top_domain)) out.cross_domain.insert(task.task_id);
    else remaining.push_back(&task);
  }

  Rng rng(seed);
  // Domains and websites are visited in sorted order so the draw sequence
  // depends only on the corpus content, not on manifest order.
  std::map<std::string, std::set<std::string>> websites_by_domain;
  for (const auto* task : remaining) websites_by_domain[task->top_domain].insert(task->website);
  std::set<std::string> held_websites;
  for (const auto& [domain, websites] : websites_by_domain) {
    if (websites.size() < params.websites_per_domain)
      throw SplitError("top-level domain " + domain + " has " + std::to_string(websites.size()) +
                       " websites, fewer than the " + std::to_string(params.websites_per_domain) +
                       " requested");
    auto picked = rng.sample(std::vector<std::string>(websites.begin(), websites.end()),
                             params.websites_per_domain);
    held_websites.insert(picked.begin(), picked.end());
  }

  std::vector<std::string> pool;
  for (const auto* task : remaining) {
    if (held_websites.count(task->website)) out.cross_website.insert(task->task_id);
    else pool.push_back(task->task_id);
  }
  std::sort(pool.begin(), pool.end());
  const auto n_cross_task = static_cast<std::size_t>(
      std::floor(static_cast<double>(pool.size()) * params.cross_task_fraction + 1e-9));
  auto picked = rng.sample(pool, n_cross_task);
  out.cross_task.insert(picked.begin(), picked.end());
  for (const auto& id : pool)
    if (!out.cross_task.count(id)) out.train.insert(id);
  return out;
}

std::string splits_to_json(const SplitAssignment& splits) {
  json doc = json::object();
  for (const char* name : kSplitNames) {
    const auto& ids = splits.get(name);
    doc[name] = std::vector<std::string>(ids.begin(), ids.end());
  }
  return doc.dump(2) + "\n";
}

SplitAssignment splits_from_json(const std::string& text) {
  SplitAssignment out;
  try {
    json doc = json::parse(text);
    for (const auto& id : doc.at("train")) out.train.insert(id.get<std::string>());
    for (const auto& id : doc.at("cross_task")) out.cross_task.insert(id.get<std::string>());
    for (const auto& id : doc.at("cross_website")) out.cross_website.insert(id.get<std::string>());
    for (const auto& id : doc.at("cross_domain")) out.cross_domain.insert(id.get<std::string>());
  } catch (const json::exception& e) {
    throw IngestError(std::string("malformed split file: ") + e.what());
  }
  std::set<std::string> seen;
  for (const char* name : kSplitNames)
    for (const auto& id : out.get(name))
      if (!seen.insert(id).second) throw IngestError("task " + id + " appears in more than one split");
  return out;
}

}  // namespace mindact
