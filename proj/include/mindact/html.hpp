#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "mindact/dom.hpp"

namespace mindact {

/// One entry of a layout sidecar: the rendered box of a node plus the
/// renderer's own visibility verdict.
struct LayoutEntry {
  BoundingBox box;
  bool visible = true;
};

using LayoutSidecar = std::map<NodeId, LayoutEntry>;

/// Parses `{ "<node_id>": {"x":f,"y":f,"w":f,"h":f,"visible":bool} }`.
/// Throws IngestError on malformed input.
LayoutSidecar parse_layout_sidecar(std::string_view json_text);

bool looks_like_mhtml(std::string_view data);
/// Returns the decoded body of the first text/html part of an MHTML archive.
/// Throws IngestError when no such part exists.
std::string extract_mhtml_html(std::string_view data);

/// True when the node itself carries a marker that hides it and its subtree:
/// `hidden`, `aria-hidden="true"`, inline display:none / visibility:hidden,
/// `<input type=hidden>`, or a non-rendered head-level tag.
bool has_hidden_marker(const DomNode& node);

/// Parses HTML (or an MHTML container) into a DomTree. Node ids are assigned
/// in document order starting at 0 for the <html> element; <head> and <body>
/// are synthesized when absent, as an HTML5 parser would.
///
/// Malformed markup never fails: unclosed elements are closed at EOF, stray
/// end tags are dropped, and the usual implied end tags (p, li, option, dd/dt,
/// table cells) are generated. Only empty input is an error.
///
/// With a layout sidecar, bboxes are attached and a node is visible only if it
/// has a positive-area box that the renderer marked visible; hidden markers
/// always propagate to descendants.
DomTree parse_snapshot(std::string_view input, const std::optional<LayoutSidecar>& layout = {},
                       std::string source_id = {});

}  // namespace mindact
