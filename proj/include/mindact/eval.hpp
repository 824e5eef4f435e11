#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mindact/corpus.hpp"
#include "mindact/dom.hpp"

namespace mindact {

/// Elements equivalent to an annotated target: the nearest clickable
/// ancestor-or-self, its visible descendants inside its box, and the target.
struct AcceptableSet {
  std::string step_ref;
  std::set<NodeId> ids;

  bool contains(NodeId id) const { return ids.count(id) != 0; }
};

bool is_clickable(const DomNode& node);

/// Without layout data the box-containment test degrades to plain descent.
AcceptableSet acceptable_set(const DomTree& tree, NodeId target, std::string step_ref = {});

int element_accuracy(std::optional<NodeId> predicted, const AcceptableSet& acceptable);

/// Token-level F1 between "KIND value" strings, lowercased and split on
/// whitespace, counted as multisets. A missing prediction scores 0.
double operation_f1(const std::optional<Operation>& predicted, const Operation& gold);

struct StepScore {
  int element_acc = 0;
  double op_f1 = 0;
  int step_success = 0;
};

int step_success(const PredictedAction& predicted, const StepRecord& gold,
                 const AcceptableSet& acceptable);
StepScore score_step(const PredictedAction& predicted, const StepRecord& gold,
                     const AcceptableSet& acceptable);

/// 1 iff every step succeeded. Throws Error on an empty list.
int task_success(std::span<const StepScore> steps);

struct TaskScore {
  std::string task_id;
  std::vector<StepScore> steps;

  double mean_element_acc() const;
  double mean_op_f1() const;
  double mean_step_success() const;
  int success() const { return task_success(steps); }
};

/// Macro averages over the tasks of one split. Metrics are absent (not zero)
/// when the split holds no scored task.
struct SplitMetrics {
  std::size_t tasks = 0;
  std::size_t steps = 0;
  std::optional<double> element_acc;
  std::optional<double> op_f1;
  std::optional<double> step_sr;
  std::optional<double> sr;
};

struct EvalReport {
  std::vector<TaskScore> tasks;
  // Keyed by split name; "all" covers every scored task.
  std::map<std::string, SplitMetrics> splits;
};

SplitMetrics macro_metrics(std::span<const TaskScore> tasks);

/// Step metrics are averaged within each task, then across tasks; SR is the
/// mean task success. With `splits`, one row per split plus "all".
EvalReport aggregate_report(std::vector<TaskScore> per_task,
                            const std::optional<SplitAssignment>& splits);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);
/// Rows `split,metric,value`; absent metrics are written as an empty value.
std::string report_to_csv(const EvalReport& report);
/// Fixed-width table: one row per method, a column group per split with
/// Ele. Acc, Op. F1, Step SR and SR in percent.
std::string format_report_table(const std::vector<std::pair<std::string, EvalReport>>& rows);

}  // namespace mindact
