#include "mindact/represent.hpp"

#include "mindact/error.hpp"
#include "mindact/text.hpp"

namespace mindact {
namespace {

constexpr std::size_t kHistoryLabelChars = 50;

// The "id=" marker is reserved for option ids injected into prompts.
std::string strip_reserved(std::string s) {
  for (std::size_t at = 0; (at = to_lower(s).find("id=", at)) != std::string::npos; at += 4)
    s.insert(at + 2, " ");
  return s;
}

std::string prepare(std::string_view s, const ReprConfig& cfg) {
  std::string out = collapse_whitespace(s);
  if (cfg.lowercase) out = to_lower(out);
  return strip_reserved(std::move(out));
}

void render_children(const DomTree& tree, const DomNode& node, int depth, const ReprConfig& cfg,
                     std::string& out) {
  if (depth <= 0) return;
  for (NodeId child_id : node.children) {
    const DomNode& child = tree.find(child_id);
    ElementSegment seg = element_segment(child, cfg);
    out += " <" + child.tag;
    if (!seg.attributes.empty()) out += " " + seg.attributes;
    out += ">";
    if (!seg.text.empty()) out += " " + seg.text;
    render_children(tree, child, depth - 1, cfg, out);
    out += " </" + child.tag + ">";
  }
}

std::string subtree_text(const DomTree& tree, NodeId id) {
  std::vector<std::string> parts;
  std::vector<NodeId> stack{id};
  while (!stack.empty()) {
    const DomNode& n = tree.find(stack.back());
    stack.pop_back();
    if (!n.direct_text.empty()) parts.push_back(n.direct_text);
    stack.insert(stack.end(), n.children.rbegin(), n.children.rend());
  }
  return collapse_whitespace(join(parts, " "));
}

std::string first_attribute(const DomNode& node, std::initializer_list<std::string_view> names) {
  for (auto name : names) {
    if (auto v = node.attr(name)) {
      std::string value = collapse_whitespace(*v);
      if (!value.empty()) return value;
    }
  }
  return {};
}

}  // namespace

std::string ElementSegment::joined() const {
  if (attributes.empty()) return text;
  if (text.empty()) return attributes;
  return attributes + " " + text;
}

std::size_t ElementSegment::word_count() const { return split_whitespace(joined()).size(); }

ElementSegment element_segment(const DomNode& node, const ReprConfig& cfg) {
  std::vector<std::string> attr_words;
  for (const auto& name : cfg.salient_attributes) {
    auto value = node.attr(name);
    if (!value) continue;
    for (auto& w : split_whitespace(prepare(*value, cfg))) attr_words.push_back(std::move(w));
  }
  auto text_words = split_whitespace(prepare(node.direct_text, cfg));
  const std::size_t cap = cfg.max_tokens_per_segment;
  if (attr_words.size() > cap) attr_words.resize(cap);
  if (text_words.size() > cap - attr_words.size()) text_words.resize(cap - attr_words.size());
  return {join(attr_words, " "), join(text_words, " ")};
}

ElementText represent_element(const DomTree& tree, NodeId id, const ReprConfig& cfg) {
  const DomNode& node = tree.find(id);
  ElementSegment seg = element_segment(node, cfg);
  std::string out;
  if (cfg.include_parent && node.parent) out += "<" + tree.find(*node.parent).tag + "> ";
  out += "<" + node.tag + " " + seg.joined() + ">";
  render_children(tree, node, cfg.child_depth, cfg, out);
  return {id, std::move(out), seg.word_count()};
}

std::string format_action(const DomTree& tree, NodeId element, const Operation& op) {
  const DomNode& node = tree.find(element);
  std::string label = first_attribute(node, {"role"});
  if (label.empty()) label = node.tag;

  std::string text;
  if (node.tag == "input" || node.tag == "select" || node.tag == "textarea") {
    text = first_attribute(node, {"aria-label", "placeholder", "title", "name", "value", "alt"});
    if (text.empty()) text = subtree_text(tree, element);
  } else {
    text = subtree_text(tree, element);
    if (text.empty()) text = first_attribute(node, {"aria-label", "title", "alt", "value", "placeholder", "name"});
  }
  if (utf8_length(text) > kHistoryLabelChars) text = utf8_take(text, kHistoryLabelChars) + "...";

  std::string line = "[" + label + "]  " + text + " -> " + std::string(op_kind_name(op.kind()));
  if (op.kind() != OpKind::Click) line += ": " + op.value();
  return line;
}

std::string format_action(const StepRecord& step, const DomTree& tree) {
  return format_action(tree, step.target_node, step.operation);
}

QueryText build_query_with_history(const std::string& description, const std::vector<std::string>& history,
                                   const ReprConfig& cfg) {
  if (trim(description).empty()) throw Error("task description is empty");
  std::size_t first = history.size() > cfg.max_history ? history.size() - cfg.max_history : 0;
  std::string text = "Task: " + description + "\nPrevious actions:\n";
  if (first == history.size()) {
    text += "None";
  } else {
    for (std::size_t i = first; i < history.size(); ++i) {
      if (i > first) text += "\n";
      text += history[i];
    }
  }
  return {std::move(text), history.size() - first};
}

QueryText build_query(const TaskRecord& task, std::size_t upto_step, const SnapshotResolver& trees,
                      const ReprConfig& cfg) {
  if (upto_step > task.steps.size())
    throw Error("step " + std::to_string(upto_step) + " is past the end of task " + task.task_id);
  std::size_t first = upto_step > cfg.max_history ? upto_step - cfg.max_history : 0;
  std::vector<std::string> history;
  for (std::size_t i = first; i < upto_step; ++i) {
    const StepRecord& step = task.steps[i];
    history.push_back(format_action(step, trees(step.snapshot_ref)));
  }
  return build_query_with_history(task.description, history, cfg);
}

}  // namespace mindact
