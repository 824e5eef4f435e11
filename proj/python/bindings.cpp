#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "mindact/act.hpp"
#include "mindact/error.hpp"
#include "mindact/eval.hpp"
#include "mindact/html.hpp"
#include "mindact/pipeline.hpp"
#include "mindact/prune.hpp"
#include "mindact/rank.hpp"
#include "mindact/represent.hpp"

namespace py = pybind11;
using namespace mindact;

namespace {

Operation to_operation(const std::string& kind, const std::string& value) {
  auto k = parse_op_kind(kind);
  if (!k) throw py::value_error("unknown operation kind: " + kind);
  return Operation(*k, value);
}

std::optional<Operation> to_optional_operation(const std::optional<std::string>& kind, const std::string& value) {
  if (!kind) return std::nullopt;
  return to_operation(*kind, value);
}

}  // namespace

PYBIND11_MODULE(_mindact, m) {
  m.doc() = "Web agent pipeline core: DOM pruning, ranking, multi-choice prediction, evaluation";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<NotFoundError>(m, "NotFoundError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<IngestError>(m, "IngestError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<PredictionError>(m, "PredictionError", base.ptr());

  py::class_<BoundingBox>(m, "BoundingBox")
      .def_readonly("x", &BoundingBox::x)
      .def_readonly("y", &BoundingBox::y)
      .def_readonly("width", &BoundingBox::width)
      .def_readonly("height", &BoundingBox::height);

  py::class_<DomNode>(m, "DomNode")
      .def_readonly("node_id", &DomNode::node_id)
      .def_readonly("tag", &DomNode::tag)
      .def_readonly("attributes", &DomNode::attributes)
      .def_readonly("direct_text", &DomNode::direct_text)
      .def_readonly("children", &DomNode::children)
      .def_readonly("parent", &DomNode::parent)
      .def_readonly("visible", &DomNode::visible)
      .def_readonly("bbox", &DomNode::bbox)
      .def_readonly("structural", &DomNode::structural);

  py::class_<DomTree>(m, "DomTree")
      .def_property_readonly("root", &DomTree::root)
      .def_property_readonly("source_id", &DomTree::source_id)
      .def_property_readonly("has_layout", &DomTree::has_layout)
      .def("__len__", &DomTree::size)
      .def("__contains__", &DomTree::contains)
      .def("find", &DomTree::find, py::return_value_policy::reference_internal)
      .def("preorder", &DomTree::preorder)
      .def("is_ancestor", &DomTree::is_ancestor);

  m.def(
      "parse_snapshot",
      [](const std::string& html, std::optional<std::string> layout_json, std::string source_id) {
        std::optional<LayoutSidecar> layout;
        if (layout_json) layout = parse_layout_sidecar(*layout_json);
        return parse_snapshot(html, layout, std::move(source_id));
      },
      py::arg("html"), py::arg("layout_json") = py::none(), py::arg("source_id") = "");

  py::class_<PruneStats>(m, "PruneStats")
      .def_readonly("nodes_before", &PruneStats::nodes_before)
      .def_readonly("nodes_after", &PruneStats::nodes_after)
      .def_readonly("target_retained", &PruneStats::target_retained)
      .def_readonly("all_pruned", &PruneStats::all_pruned);

  m.def(
      "prune",
      [](const DomTree& tree, std::optional<NodeId> target) {
        PruneResult r = prune_tree(tree, {}, target);
        return py::make_tuple(std::move(r.tree), r.stats);
      },
      py::arg("tree"), py::arg("target") = py::none());
  m.def("rankable_nodes", &rankable_nodes);

  m.def("represent_element",
        [](const DomTree& tree, NodeId id) { return represent_element(tree, id).text; });
  m.def("lexical_score", py::overload_cast<std::string_view, std::string_view>(&lexical_score));
  m.def(
      "top_k",
      [](const std::vector<std::pair<NodeId, double>>& scores, std::size_t k) {
        std::vector<ScoredElement> items;
        for (const auto& [id, s] : scores) items.push_back({id, s});
        return top_k(items, k).ids();
      },
      "Node ids of the k best scores; ties keep input order.");

  m.def(
      "parse_model_answer",
      [](const std::string& reply) {
        ModelAnswer a = parse_model_answer(reply);
        py::dict out;
        out["parsed"] = a.parsed;
        out["choice"] = std::string(1, a.choice_letter);
        auto op = a.operation();
        out["operation"] = op ? py::cast(std::string(op_kind_name(op->kind()))) : py::none();
        out["value"] = op ? py::cast(op->value()) : py::none();
        return out;
      });

  m.def(
      "acceptable_set", [](const DomTree& tree, NodeId target) { return acceptable_set(tree, target).ids; });
  m.def(
      "operation_f1",
      [](std::optional<std::string> pred_kind, const std::string& pred_value, const std::string& gold_kind,
         const std::string& gold_value) {
        return operation_f1(to_optional_operation(pred_kind, pred_value), to_operation(gold_kind, gold_value));
      },
      py::arg("pred_kind"), py::arg("pred_value"), py::arg("gold_kind"), py::arg("gold_value"));

  m.def(
      "run_command",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_command(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      "Run a CLI command in-process; returns (exit_code, stdout, stderr).");
}
