#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mindact/corpus.hpp"
#include "mindact/dom.hpp"
#include "mindact/eval.hpp"
#include "mindact/text.hpp"

namespace testing {

using namespace mindact;

inline std::filesystem::path fixtures() { return MINDACT_FIXTURE_DIR; }
inline std::filesystem::path corpus_manifest() { return fixtures() / "corpus" / "manifest.json"; }

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& content) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
}

// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mindact-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Same rendering as tests/oracle/freeze_html5lib.py.
inline std::string canonical(const DomTree& tree, NodeId id) {
  const DomNode& n = tree.find(id);
  std::string out = n.tag;
  if (!n.attributes.empty()) {
    out += "[";
    for (std::size_t i = 0; i < n.attributes.size(); ++i) {
      if (i) out += ",";
      out += n.attributes[i].first + "=" + n.attributes[i].second;
    }
    out += "]";
  }
  if (!n.direct_text.empty()) out += nlohmann::json(n.direct_text).dump(-1, ' ', false);
  if (!n.children.empty()) {
    out += "(";
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      if (i) out += " ";
      out += canonical(tree, n.children[i]);
    }
    out += ")";
  }
  return out;
}

inline std::string canonical(const DomTree& tree) { return canonical(tree, tree.root()); }

// Random trees for property tests: a mix of salient and filler nodes, some
// hidden subtrees, parent chosen uniformly among existing nodes.
inline DomTree random_tree(std::mt19937_64& rng, int n, bool with_layout = false) {
  static const char* tags[] = {"div", "span", "button", "a", "input", "script", "section", "p", "li", "img"};
  static const char* words[] = {"book", "flight", "search", "hotel", "", "", "next", "cart"};
  DomTreeBuilder b("random");
  b.add(std::nullopt, "html");
  for (int i = 1; i < n; ++i) {
    NodeId parent = static_cast<NodeId>(rng() % static_cast<std::uint64_t>(i));
    std::string tag = tags[rng() % 10];
    Attributes attrs;
    if (rng() % 4 == 0) attrs.push_back({"aria-label", words[rng() % 8]});
    if (rng() % 5 == 0) attrs.push_back({"class", "c" + std::to_string(rng() % 7)});
    NodeId id = b.add(parent, tag, attrs, words[rng() % 8]);
    DomNode& node = b.node(id);
    bool hidden = rng() % 12 == 0 || !b.node(parent).visible;
    node.visible = !hidden;
  }
  if (with_layout) {
    b.set_layout(true);
    // Boxes nested by construction, with an occasional overflowing child.
    std::map<NodeId, BoundingBox> boxes;
    for (NodeId id = 0; id < n; ++id) {
      DomNode& node = b.node(id);
      if (!node.parent) {
        boxes[id] = {0, 0, 1000, 1000};
      } else {
        const BoundingBox& pb = boxes[*node.parent];
        double w = pb.width * 0.8, h = pb.height * 0.8;
        BoundingBox box{pb.x + pb.width * 0.1, pb.y + pb.height * 0.1, w, h};
        if (rng() % 8 == 0) box.width = pb.width * 1.5;
        boxes[id] = box;
      }
      node.bbox = boxes[id];
    }
  }
  return std::move(b).build();
}

// ---------------------------------------------------------------------------
// Brute-force metric oracle written directly from the metric definitions:
// token lists are compared by counting, not with the library's helpers.

struct OracleStep {
  std::optional<NodeId> predicted;
  std::optional<std::pair<std::string, std::string>> predicted_op;  // kind, value
  std::set<NodeId> acceptable;
  std::pair<std::string, std::string> gold_op;
};

inline std::vector<std::string> oracle_tokens(const std::string& kind, const std::string& value) {
  std::vector<std::string> out;
  std::string cur;
  std::string s = kind + " " + value;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '\n') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline double oracle_f1(const std::optional<std::pair<std::string, std::string>>& pred,
                        const std::pair<std::string, std::string>& gold) {
  if (!pred) return 0.0;
  auto p = oracle_tokens(pred->first, pred->second);
  auto g = oracle_tokens(gold.first, gold.second);
  // Greedy multiset matching: each gold token can be consumed once.
  std::vector<bool> used(g.size(), false);
  double common = 0;
  for (const auto& t : p) {
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (!used[j] && g[j] == t) {
        used[j] = true;
        common += 1;
        break;
      }
    }
  }
  if (common == 0) return 0.0;
  double precision = common / static_cast<double>(p.size());
  double recall = common / static_cast<double>(g.size());
  return 2 * precision * recall / (precision + recall);
}

struct OracleMetrics {
  double element_acc = 0, op_f1 = 0, step_sr = 0, sr = 0;
};

inline OracleMetrics oracle_macro(const std::vector<std::vector<OracleStep>>& tasks) {
  OracleMetrics m;
  for (const auto& steps : tasks) {
    double ea = 0, f1 = 0, ss = 0;
    bool all = true;
    for (const auto& s : steps) {
      double e = s.predicted && s.acceptable.count(*s.predicted) ? 1.0 : 0.0;
      double f = oracle_f1(s.predicted_op, s.gold_op);
      double ok = (e == 1.0 && std::fabs(f - 1.0) < 1e-12) ? 1.0 : 0.0;
      ea += e;
      f1 += f;
      ss += ok;
      all = all && ok == 1.0;
    }
    const double n = static_cast<double>(steps.size());
    m.element_acc += ea / n;
    m.op_f1 += f1 / n;
    m.step_sr += ss / n;
    m.sr += all ? 1.0 : 0.0;
  }
  const double t = static_cast<double>(tasks.size());
  m.element_acc /= t;
  m.op_f1 /= t;
  m.step_sr /= t;
  m.sr /= t;
  return m;
}

inline Operation make_op(const std::pair<std::string, std::string>& op) {
  return Operation(*parse_op_kind(op.first), op.second);
}

// Random synthetic scoring problem: up to `max_steps` steps per task, random
// acceptable sets over ids 0..9 and operations drawn from a small vocabulary
// so that partial token overlaps are common.
inline std::vector<std::vector<OracleStep>> random_scoring_tasks(std::mt19937_64& rng, int tasks, int max_steps) {
  static const std::vector<std::pair<std::string, std::string>> ops = {
      {"CLICK", ""},          {"TYPE", "new york"}, {"TYPE", "new york city"}, {"TYPE", "york new"},
      {"SELECT", "2 adults"}, {"SELECT", "adults"}, {"TYPE", "New York"},     {"SELECT", "pickup"}};
  std::vector<std::vector<OracleStep>> out(static_cast<std::size_t>(tasks));
  for (auto& steps : out) {
    int n = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_steps));
    for (int i = 0; i < n; ++i) {
      OracleStep s;
      int size = 1 + static_cast<int>(rng() % 3);
      for (int j = 0; j < size; ++j) s.acceptable.insert(static_cast<NodeId>(rng() % 10));
      if (rng() % 5) s.predicted = static_cast<NodeId>(rng() % 10);
      s.gold_op = ops[rng() % ops.size()];
      if (rng() % 6) s.predicted_op = ops[rng() % ops.size()];
      // Bias toward correct steps so task successes occur.
      if (rng() % 3 == 0) {
        s.predicted = *s.acceptable.begin();
        s.predicted_op = s.gold_op;
      }
      steps.push_back(s);
    }
  }
  return out;
}

}  // namespace testing
