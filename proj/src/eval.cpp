#include "mindact/eval.hpp"

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <map>
#include "json.hpp"
#include <sstream>
#include <unordered_set>

#include "mindact/error.hpp"
#include "mindact/text.hpp"

namespace mindact {

using nlohmann::json;

namespace {

const std::unordered_set<std::string_view> kClickableTags = {"a",      "button", "input",    "select",
                                                             "option", "textarea", "label", "summary"};
const std::unordered_set<std::string_view> kClickableRoles = {
    "button", "link", "checkbox", "radio", "tab", "menuitem", "option", "combobox", "switch"};

std::map<std::string, int> op_tokens(const Operation& op) {
  std::map<std::string, int> counts;
  for (auto& tok : split_whitespace(to_lower(std::string(op_kind_name(op.kind())) + " " + op.value())))
    ++counts[tok];
  return counts;
}

double mean(const std::vector<double>& xs) {
  double sum = 0;
  for (double x : xs) sum += x;
  return xs.empty() ? 0.0 : sum / static_cast<double>(xs.size());
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_optional(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

}  // namespace

bool is_clickable(const DomNode& node) {
  if (kClickableTags.count(node.tag)) return true;
  if (auto role = node.attr("role"); role && kClickableRoles.count(to_lower(trim(*role)))) return true;
  return node.has_attr("onclick");
}

AcceptableSet acceptable_set(const DomTree& tree, NodeId target, std::string step_ref) {
  AcceptableSet out{std::move(step_ref), {target}};
  NodeId top = target;
  for (std::optional<NodeId> cur = target; cur; cur = tree.find(*cur).parent) {
    if (is_clickable(tree.find(*cur))) {
      top = *cur;
      break;
    }
  }
  out.ids.insert(top);
  const DomNode& top_node = tree.find(top);
  std::vector<NodeId> stack(top_node.children.rbegin(), top_node.children.rend());
  while (!stack.empty()) {
    const DomNode& node = tree.find(stack.back());
    stack.pop_back();
    bool inside = true;
    if (tree.has_layout() && top_node.bbox && node.bbox) inside = top_node.bbox->contains(*node.bbox);
    else if (tree.has_layout()) inside = false;
    if (node.visible && inside) out.ids.insert(node.node_id);
    stack.insert(stack.end(), node.children.rbegin(), node.children.rend());
  }
  return out;
}

int element_accuracy(std::optional<NodeId> predicted, const AcceptableSet& acceptable) {
  return predicted && acceptable.contains(*predicted) ? 1 : 0;
}

double operation_f1(const std::optional<Operation>& predicted, const Operation& gold) {
  if (!predicted) return 0.0;
  auto p = op_tokens(*predicted);
  auto g = op_tokens(gold);
  int common = 0, np = 0, ng = 0;
  for (const auto& [tok, n] : p) {
    np += n;
    auto it = g.find(tok);
    if (it != g.end()) common += std::min(n, it->second);
  }
  for (const auto& [tok, n] : g) ng += n;
  if (common == 0) return 0.0;
  double precision = static_cast<double>(common) / np;
  double recall = static_cast<double>(common) / ng;
  return 2 * precision * recall / (precision + recall);
}

StepScore score_step(const PredictedAction& predicted, const StepRecord& gold,
                     const AcceptableSet& acceptable) {
  StepScore s;
  s.element_acc = element_accuracy(predicted.element, acceptable);
  s.op_f1 = operation_f1(predicted.operation, gold.operation);
  s.step_success = (s.element_acc == 1 && s.op_f1 == 1.0) ? 1 : 0;
  return s;
}

int step_success(const PredictedAction& predicted, const StepRecord& gold,
                 const AcceptableSet& acceptable) {
  return score_step(predicted, gold, acceptable).step_success;
}

int task_success(std::span<const StepScore> steps) {
  if (steps.empty()) throw Error("task success is undefined for a task without steps");
  int product = 1;
  for (const auto& s : steps) product *= s.step_success;
  return product;
}

double TaskScore::mean_element_acc() const {
  std::vector<double> xs;
  for (const auto& s : steps) xs.push_back(s.element_acc);
  return mean(xs);
}

double TaskScore::mean_op_f1() const {
  std::vector<double> xs;
  for (const auto& s : steps) xs.push_back(s.op_f1);
  return mean(xs);
}

double TaskScore::mean_step_success() const {
  std::vector<double> xs;
  for (const auto& s : steps) xs.push_back(s.step_success);
  return mean(xs);
}

SplitMetrics macro_metrics(std::span<const TaskScore> tasks) {
  SplitMetrics m;
  m.tasks = tasks.size();
  if (tasks.empty()) return m;
  std::vector<double> ea, f1, ssr, sr;
  for (const auto& t : tasks) {
    m.steps += t.steps.size();
    ea.push_back(t.mean_element_acc());
    f1.push_back(t.mean_op_f1());
    ssr.push_back(t.mean_step_success());
    sr.push_back(t.success());
  }
  m.element_acc = mean(ea);
  m.op_f1 = mean(f1);
  m.step_sr = mean(ssr);
  m.sr = mean(sr);
  return m;
}

EvalReport aggregate_report(std::vector<TaskScore> per_task, const std::optional<SplitAssignment>& splits) {
  for (const auto& t : per_task)
    if (t.steps.empty()) throw Error("task " + t.task_id + " has no scored steps");
  EvalReport report;
  report.tasks = std::move(per_task);
  report.splits["all"] = macro_metrics(report.tasks);
  if (splits) {
    for (const char* name : kSplitNames) {
      std::vector<TaskScore> members;
      for (const auto& t : report.tasks)
        if (splits->get(name).count(t.task_id)) members.push_back(t);
      report.splits[name] = macro_metrics(members);
    }
  }
  return report;
}

std::string report_to_json(const EvalReport& report) {
  json doc;
  json splits = json::object();
  for (const auto& [name, m] : report.splits) {
    splits[name] = {{"tasks", m.tasks},
                    {"steps", m.steps},
                    {"element_acc", optional_number(m.element_acc)},
                    {"op_f1", optional_number(m.op_f1)},
                    {"step_sr", optional_number(m.step_sr)},
                    {"sr", optional_number(m.sr)}};
  }
  doc["splits"] = splits;
  json tasks = json::array();
  for (const auto& t : report.tasks) {
    json steps = json::array();
    for (const auto& s : t.steps)
      steps.push_back({{"element_acc", s.element_acc}, {"op_f1", s.op_f1}, {"step_success", s.step_success}});
    tasks.push_back({{"task_id", t.task_id},
                     {"element_acc", t.mean_element_acc()},
                     {"op_f1", t.mean_op_f1()},
                     {"step_sr", t.mean_step_success()},
                     {"success", t.success()},
                     {"steps", steps}});
  }
  doc["tasks"] = tasks;
  return doc.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  EvalReport report;
  try {
    json doc = json::parse(text);
    for (const auto& [name, m] : doc.at("splits").items()) {
      SplitMetrics sm;
      sm.tasks = m.at("tasks").get<std::size_t>();
      sm.steps = m.at("steps").get<std::size_t>();
      sm.element_acc = read_optional(m, "element_acc");
      sm.op_f1 = read_optional(m, "op_f1");
      sm.step_sr = read_optional(m, "step_sr");
      sm.sr = read_optional(m, "sr");
      report.splits[name] = sm;
    }
    for (const auto& t : doc.at("tasks")) {
      TaskScore ts;
      ts.task_id = t.at("task_id").get<std::string>();
      for (const auto& s : t.at("steps"))
        ts.steps.push_back({s.at("element_acc").get<int>(), s.at("op_f1").get<double>(),
                            s.at("step_success").get<int>()});
      report.tasks.push_back(std::move(ts));
    }
  } catch (const json::exception& e) {
    throw IngestError(std::string("malformed evaluation report: ") + e.what());
  }
  return report;
}

std::string report_to_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "split,metric,value\n";
  out << std::setprecision(17);
  for (const auto& [name, m] : report.splits) {
    const std::pair<const char*, const std::optional<double>*> metrics[] = {
        {"element_acc", &m.element_acc}, {"op_f1", &m.op_f1}, {"step_sr", &m.step_sr}, {"sr", &m.sr}};
    for (const auto& [metric, value] : metrics) {
      out << name << ',' << metric << ',';
      if (*value) out << **value;
      out << '\n';
    }
  }
  return out.str();
}

std::string format_report_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  const char* columns[] = {"cross_task", "cross_website", "cross_domain"};
  const char* headers[] = {"Cross-Task", "Cross-Website", "Cross-Domain"};
  auto cell = [](const std::optional<double>& v) {
    char buf[16];
    if (!v) return std::string("     -");
    std::snprintf(buf, sizeof buf, "%6.1f", 100.0 * *v);
    return std::string(buf);
  };
  std::size_t name_width = 8;
  for (const auto& [name, _] : rows) name_width = std::max(name_width, name.size());

  std::ostringstream out;
  out << std::string(name_width, ' ');
  for (const char* h : headers) {
    std::string title = h;
    const std::size_t width = 34;
    std::size_t pad = width > title.size() ? (width - title.size()) / 2 : 0;
    out << " | " << std::string(pad, ' ') << title << std::string(width - pad - title.size(), ' ');
  }
  out << "\n" << std::string(name_width, ' ');
  for (int i = 0; i < 3; ++i) out << " | " << "Ele.Acc    Op.F1  Step SR       SR";
  out << "\n" << std::string(name_width + 3 * 37, '-') << "\n";
  for (const auto& [name, report] : rows) {
    out << name << std::string(name_width - name.size(), ' ');
    for (const char* col : columns) {
      auto it = report.splits.find(col);
      SplitMetrics m = it == report.splits.end() ? SplitMetrics{} : it->second;
      out << " | " << " " << cell(m.element_acc) << "   " << cell(m.op_f1) << "   " << cell(m.step_sr)
          << "   " << cell(m.sr);
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace mindact
