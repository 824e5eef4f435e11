#include "mindact/html.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <initializer_list>
#include "json.hpp"
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mindact/error.hpp"
#include "mindact/text.hpp"

namespace mindact {
namespace {

using TagSet = std::unordered_set<std::string_view>;

bool in(const TagSet& set, std::string_view tag) { return set.count(tag) != 0; }

const TagSet kVoid = {"area", "base", "basefont", "bgsound", "br",    "col",   "embed",
                      "hr",   "img",  "input",    "keygen",  "link",  "meta",  "param",
                      "source", "track", "wbr"};

const TagSet kRawText = {"script", "style", "xmp", "iframe", "noembed", "noframes"};
const TagSet kRcData = {"title", "textarea"};

const TagSet kHeadContent = {"base",     "basefont", "bgsound", "link",  "meta",
                             "noframes", "script",   "style",   "template", "title"};

const TagSet kClosesP = {"address", "article", "aside",      "blockquote", "center", "details",
                         "dialog",  "dir",     "div",        "dl",         "fieldset",
                         "figcaption", "figure", "footer",   "header",     "hgroup", "main",
                         "menu",    "nav",     "ol",         "p",          "section",
                         "summary", "ul",      "pre",        "listing",    "form",   "hr",
                         "h1",      "h2",      "h3",         "h4",         "h5",     "h6"};

const TagSet kHeadings = {"h1", "h2", "h3", "h4", "h5", "h6"};

const TagSet kImpliedEnd = {"dd", "dt", "li", "optgroup", "option", "p", "rb", "rp", "rt", "rtc"};

const TagSet kScopeBoundary = {"applet", "caption", "html",  "table",    "td",
                               "th",     "marquee", "object", "template"};

const TagSet kSpecial = {
    "address", "applet",  "area",     "article",  "aside",     "base",     "basefont",
    "bgsound", "blockquote", "body",  "br",       "button",    "caption",  "center",
    "col",     "colgroup", "dd",      "details",  "dir",       "div",      "dl",
    "dt",      "embed",   "fieldset", "figcaption", "figure",  "footer",   "form",
    "frame",   "frameset", "h1",      "h2",       "h3",        "h4",       "h5",
    "h6",      "head",    "header",   "hgroup",   "hr",        "html",     "iframe",
    "img",     "input",   "keygen",   "li",       "link",      "listing",  "main",
    "marquee", "menu",    "meta",     "nav",      "noembed",   "noframes", "noscript",
    "object",  "ol",      "p",        "param",    "plaintext", "pre",      "script",
    "section", "select",  "source",   "style",    "summary",   "table",    "tbody",
    "td",      "template", "textarea", "tfoot",   "th",        "thead",    "title",
    "tr",      "track",   "ul",       "wbr",      "xmp"};

const TagSet kNonRendered = {"head",   "script", "style",    "title",   "meta",
                             "link",   "base",   "noscript", "template"};

// ---------------------------------------------------------------------------
// Character references

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp == 0 || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) cp = 0xFFFD;
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

const std::unordered_map<std::string_view, std::uint32_t>& named_entities() {
  static const std::unordered_map<std::string_view, std::uint32_t> table = {
      {"amp", '&'},      {"lt", '<'},       {"gt", '>'},       {"quot", '"'},
      {"apos", '\''},    {"nbsp", 0xA0},    {"copy", 0xA9},    {"reg", 0xAE},
      {"trade", 0x2122}, {"times", 0xD7},   {"divide", 0xF7},  {"hellip", 0x2026},
      {"mdash", 0x2014}, {"ndash", 0x2013}, {"lsquo", 0x2018}, {"rsquo", 0x2019},
      {"ldquo", 0x201C}, {"rdquo", 0x201D}, {"laquo", 0xAB},   {"raquo", 0xBB},
      {"bull", 0x2022},  {"middot", 0xB7},  {"euro", 0x20AC},  {"pound", 0xA3},
      {"yen", 0xA5},     {"cent", 0xA2},    {"deg", 0xB0},     {"plusmn", 0xB1},
      {"para", 0xB6},    {"sect", 0xA7},    {"larr", 0x2190},  {"rarr", 0x2192},
      {"uarr", 0x2191},  {"darr", 0x2193},  {"check", 0x2713}, {"star", 0x2606},
      {"thinsp", 0x2009}, {"ensp", 0x2002}, {"emsp", 0x2003},  {"zwnj", 0x200C},
      {"zwj", 0x200D}};
  return table;
}

std::string decode_entities(std::string_view s) {
  if (s.find('&') == std::string_view::npos) return std::string(s);
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] != '&') {
      out.push_back(s[i++]);
      continue;
    }
    std::size_t semi = s.find(';', i + 1);
    if (semi != std::string_view::npos && semi - i <= 32) {
      std::string_view name = s.substr(i + 1, semi - i - 1);
      if (!name.empty() && name[0] == '#') {
        std::uint32_t cp = 0;
        bool ok = name.size() > 1;
        bool hex = ok && (name[1] == 'x' || name[1] == 'X');
        std::size_t start = hex ? 2 : 1;
        if (start >= name.size()) ok = false;
        for (std::size_t k = start; ok && k < name.size(); ++k) {
          char c = name[k];
          int digit = -1;
          if (c >= '0' && c <= '9') digit = c - '0';
          else if (hex && c >= 'a' && c <= 'f') digit = c - 'a' + 10;
          else if (hex && c >= 'A' && c <= 'F') digit = c - 'A' + 10;
          if (digit < 0) ok = false;
          else if (cp < 0x110000) cp = cp * (hex ? 16 : 10) + static_cast<std::uint32_t>(digit);
        }
        if (ok) {
          append_utf8(out, cp);
          i = semi + 1;
          continue;
        }
      } else {
        auto it = named_entities().find(name);
        if (it != named_entities().end()) {
          append_utf8(out, it->second);
          i = semi + 1;
          continue;
        }
      }
    }
    out.push_back(s[i++]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tokenizer

struct Token {
  enum class Kind { StartTag, EndTag, Text, Doctype, Comment } kind;
  std::string name;  // tag name or text data
  Attributes attributes;
  bool self_closing = false;
};

bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f'; }
bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

class Tokenizer {
 public:
  explicit Tokenizer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    std::string text;
    auto flush = [&] {
      if (!text.empty()) {
        out.push_back({Token::Kind::Text, decode_entities(text), {}, false});
        text.clear();
      }
    };
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c != '<') {
        text.push_back(c);
        ++pos_;
        continue;
      }
      std::string_view rest = src_.substr(pos_);
      if (rest.substr(0, 4) == "<!--") {
        flush();
        std::size_t end = src_.find("-->", pos_ + 4);
        pos_ = end == std::string_view::npos ? src_.size() : end + 3;
        out.push_back({Token::Kind::Comment, {}, {}, false});
      } else if (rest.size() > 1 && (rest[1] == '!' || rest[1] == '?')) {
        flush();
        std::size_t end = src_.find('>', pos_);
        std::string_view body = src_.substr(pos_ + 2, (end == std::string_view::npos ? src_.size() : end) - pos_ - 2);
        if (istarts_with(body, "doctype")) out.push_back({Token::Kind::Doctype, std::string(body), {}, false});
        else out.push_back({Token::Kind::Comment, {}, {}, false});
        pos_ = end == std::string_view::npos ? src_.size() : end + 1;
      } else if (rest.size() > 2 && rest[1] == '/' && is_alpha(rest[2])) {
        flush();
        pos_ += 2;
        std::string name = read_name();
        std::size_t end = src_.find('>', pos_);
        pos_ = end == std::string_view::npos ? src_.size() : end + 1;
        out.push_back({Token::Kind::EndTag, std::move(name), {}, false});
      } else if (rest.size() > 2 && rest[1] == '/' && rest[2] == '>') {
        pos_ += 3;  // "</>" is dropped
      } else if (rest.size() > 1 && is_alpha(rest[1])) {
        flush();
        ++pos_;
        Token tok{Token::Kind::StartTag, read_name(), {}, false};
        read_attributes(tok);
        std::string tag = tok.name;
        out.push_back(std::move(tok));
        if (in(kRawText, tag) || in(kRcData, tag)) read_raw_text(tag, in(kRcData, tag), out);
        else if (tag == "plaintext") {
          out.push_back({Token::Kind::Text, std::string(src_.substr(pos_)), {}, false});
          pos_ = src_.size();
        }
      } else {
        text.push_back(c);
        ++pos_;
      }
    }
    flush();
    return out;
  }

 private:
  std::string read_name() {
    std::string name;
    while (pos_ < src_.size() && !is_ws(src_[pos_]) && src_[pos_] != '/' && src_[pos_] != '>')
      name.push_back(src_[pos_++]);
    return to_lower(name);
  }

  void skip_ws() {
    while (pos_ < src_.size() && is_ws(src_[pos_])) ++pos_;
  }

  void read_attributes(Token& tok) {
    while (pos_ < src_.size()) {
      skip_ws();
      if (pos_ >= src_.size()) return;
      char c = src_[pos_];
      if (c == '>') {
        ++pos_;
        return;
      }
      if (c == '/') {
        ++pos_;
        if (pos_ < src_.size() && src_[pos_] == '>') {
          tok.self_closing = true;
          ++pos_;
          return;
        }
        continue;
      }
      std::string name;
      name.push_back(src_[pos_++]);  // a leading '=' is part of the name
      while (pos_ < src_.size() && !is_ws(src_[pos_]) && src_[pos_] != '/' &&
             src_[pos_] != '>' && src_[pos_] != '=')
        name.push_back(src_[pos_++]);
      skip_ws();
      std::string value;
      if (pos_ < src_.size() && src_[pos_] == '=') {
        ++pos_;
        skip_ws();
        if (pos_ < src_.size() && (src_[pos_] == '"' || src_[pos_] == '\'')) {
          char quote = src_[pos_++];
          std::size_t end = src_.find(quote, pos_);
          if (end == std::string_view::npos) end = src_.size();
          value = decode_entities(src_.substr(pos_, end - pos_));
          pos_ = std::min(end + 1, src_.size());
        } else {
          std::size_t start = pos_;
          while (pos_ < src_.size() && !is_ws(src_[pos_]) && src_[pos_] != '>') ++pos_;
          value = decode_entities(src_.substr(start, pos_ - start));
        }
      }
      name = to_lower(name);
      bool dup = std::any_of(tok.attributes.begin(), tok.attributes.end(),
                             [&](const auto& a) { return a.first == name; });
      if (!dup) tok.attributes.emplace_back(std::move(name), std::move(value));
    }
  }

  void read_raw_text(const std::string& tag, bool decode, std::vector<Token>& out) {
    std::size_t search = pos_;
    std::size_t end = src_.size();
    std::size_t after = src_.size();
    while (true) {
      std::size_t lt = src_.find("</", search);
      if (lt == std::string_view::npos) break;
      std::string_view cand = src_.substr(lt + 2, tag.size());
      std::size_t next = lt + 2 + tag.size();
      if (iequals(cand, tag) &&
          (next >= src_.size() || is_ws(src_[next]) || src_[next] == '>' || src_[next] == '/')) {
        end = lt;
        std::size_t gt = src_.find('>', next);
        after = gt == std::string_view::npos ? src_.size() : gt + 1;
        break;
      }
      search = lt + 2;
    }
    std::string_view body = src_.substr(pos_, end - pos_);
    if (!body.empty())
      out.push_back({Token::Kind::Text, decode ? decode_entities(body) : std::string(body), {}, false});
    out.push_back({Token::Kind::EndTag, tag, {}, false});
    pos_ = after;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Tree construction

class TreeConstructor {
 public:
  explicit TreeConstructor(std::string source_id) : builder_(std::move(source_id)) {
    html_ = builder_.add(std::nullopt, "html");
    stack_.push_back(html_);
    text_.emplace_back();
    text_open_.push_back(false);
  }

  void feed(const std::vector<Token>& tokens) {
    for (const auto& tok : tokens) {
      switch (tok.kind) {
        case Token::Kind::Doctype:
          if (istarts_with(trim(tok.name.substr(7)), "html")) standards_mode_ = true;
          break;
        case Token::Kind::Text:
          on_text(tok.name);
          break;
        case Token::Kind::StartTag:
          on_start(tok);
          break;
        case Token::Kind::EndTag:
          on_end(tok.name);
          break;
        case Token::Kind::Comment:
          text_open_[static_cast<std::size_t>(current())] = false;
          break;
      }
    }
    if (!head_) ensure_head();
    if (!body_) ensure_body();
  }

  DomTreeBuilder& builder() { return builder_; }
  const std::vector<std::vector<std::string>>& text() const { return text_; }

 private:
  const std::string& tag_of(NodeId id) { return builder_.node(id).tag; }
  NodeId current() const { return stack_.back(); }

  NodeId insert(NodeId parent, const std::string& tag, const Attributes& attrs) {
    NodeId id = builder_.add(parent, tag, attrs);
    text_.emplace_back();
    text_open_[static_cast<std::size_t>(parent)] = false;
    text_open_.push_back(false);
    return id;
  }

  NodeId push(const std::string& tag, const Attributes& attrs = {}) {
    NodeId id = insert(current(), tag, attrs);
    stack_.push_back(id);
    return id;
  }

  void ensure_head() {
    if (head_) return;
    head_ = push("head");
  }

  // Leaves "in head" and opens the body (implicitly unless a <body> tag is given).
  void ensure_body(const Attributes& attrs = {}) {
    if (body_) return;
    if (!head_) ensure_head();
    auto it = std::find(stack_.begin(), stack_.end(), *head_);
    if (it != stack_.end()) stack_.erase(it, stack_.end());
    body_ = push("body", attrs);
  }

  static void merge_attributes(DomNode& node, const Attributes& attrs) {
    for (const auto& a : attrs)
      if (!node.has_attr(a.first)) node.attributes.push_back(a);
  }

  bool has_in_scope(std::string_view tag, const TagSet& extra = {}) {
    for (auto it = stack_.rbegin(); it != stack_.rend(); ++it) {
      const std::string& t = tag_of(*it);
      if (t == tag) return true;
      if (in(kScopeBoundary, t) || in(extra, t)) return false;
    }
    return false;
  }

  bool has_in_table_scope(std::string_view tag) {
    for (auto it = stack_.rbegin(); it != stack_.rend(); ++it) {
      const std::string& t = tag_of(*it);
      if (t == tag) return true;
      if (t == "html" || t == "table" || t == "template") return false;
    }
    return false;
  }

  bool in_select() {
    for (auto it = stack_.rbegin(); it != stack_.rend(); ++it) {
      const std::string& t = tag_of(*it);
      if (t == "select") return true;
      if (t != "option" && t != "optgroup") return false;
    }
    return false;
  }

  void generate_implied_end_tags(std::string_view except = {}) {
    while (stack_.size() > 1) {
      const std::string& t = tag_of(current());
      if (!in(kImpliedEnd, t) || t == except) break;
      stack_.pop_back();
    }
  }

  void pop_until(std::string_view tag) {
    while (stack_.size() > 1) {
      bool match = tag_of(current()) == tag;
      stack_.pop_back();
      if (match) break;
    }
  }

  void pop_until_any(const TagSet& tags) {
    while (stack_.size() > 1) {
      bool match = in(tags, tag_of(current()));
      stack_.pop_back();
      if (match) break;
    }
  }

  void close_p_in_button_scope() {
    if (has_in_scope("p", {"button"})) {
      generate_implied_end_tags("p");
      pop_until("p");
    }
  }

  void on_text(const std::string& data) {
    if (!body_) {
      bool raw_in_head = head_ && current() != *head_ && current() != html_;
      if (!raw_in_head) {
        if (trim(data).empty()) return;
        ensure_body();
      }
    }
    // Text runs separated only by dropped markup form one text node.
    const auto cur = static_cast<std::size_t>(current());
    if (text_open_[cur] && !text_[cur].empty()) text_[cur].back() += data;
    else text_[cur].push_back(data);
    text_open_[cur] = true;
  }

  void on_start(const Token& tok) {
    const std::string& tag = tok.name;
    if (tag == "html") {
      merge_attributes(builder_.node(html_), tok.attributes);
      return;
    }
    if (!body_) {
      if (tag == "head") {
        if (!head_) head_ = push("head", tok.attributes);
        return;
      }
      if (tag == "body") {
        ensure_body(tok.attributes);
        return;
      }
      if (in(kHeadContent, tag)) {
        ensure_head();
        if (current() == html_) stack_.push_back(*head_);
        insert_element(tok);
        return;
      }
      ensure_body();
    }
    if (tag == "body") {
      merge_attributes(builder_.node(*body_), tok.attributes);
      return;
    }
    if (tag == "head") return;
    if (tag == "frameset") return;
    if (tag == "form" && std::any_of(stack_.begin(), stack_.end(), [&](NodeId id) { return tag_of(id) == "form"; }))
      return;

    if (in_select()) {
      if (tag == "option" || tag == "optgroup") {
        if (tag_of(current()) == "option") stack_.pop_back();
        if (tag == "optgroup" && tag_of(current()) == "optgroup") stack_.pop_back();
        insert_element(tok);
        return;
      }
      if (tag == "select" || tag == "input" || tag == "keygen" || tag == "textarea") {
        pop_until("select");
        if (tag == "select") return;
      } else if (tag != "script" && tag != "template" && tag != "hr") {
        return;  // ignored inside <select>
      }
    }

    if (in(kClosesP, tag)) close_p_in_button_scope();
    if (in(kHeadings, tag) && in(kHeadings, tag_of(current()))) stack_.pop_back();

    if (tag == "li" || tag == "dd" || tag == "dt") {
      const TagSet targets = tag == "li" ? TagSet{"li"} : TagSet{"dd", "dt"};
      for (auto it = stack_.rbegin(); it != stack_.rend(); ++it) {
        const std::string& t = tag_of(*it);
        if (in(targets, t)) {
          generate_implied_end_tags(t);
          pop_until(t);
          break;
        }
        if (in(kSpecial, t) && t != "address" && t != "div" && t != "p") break;
      }
      close_p_in_button_scope();
    } else if (tag == "button") {
      if (has_in_scope("button")) {
        generate_implied_end_tags();
        pop_until("button");
      }
    } else if (tag == "a") {
      for (auto it = stack_.rbegin(); it != stack_.rend(); ++it) {
        const std::string& t = tag_of(*it);
        if (t == "a") {
          pop_until("a");
          break;
        }
        if (in(kScopeBoundary, t)) break;
      }
    } else if (tag == "option" || tag == "optgroup") {
      if (tag_of(current()) == "option") stack_.pop_back();
    } else if (tag == "table") {
      if (standards_mode_) close_p_in_button_scope();
    } else if (tag == "tbody" || tag == "thead" || tag == "tfoot") {
      if (!has_in_table_scope("table")) return;
      close_table_section(true);
    } else if (tag == "tr") {
      if (!has_in_table_scope("table")) return;
      close_cell();
      if (has_in_table_scope("tr")) pop_until("tr");
      if (tag_of(current()) == "table") push("tbody");
    } else if (tag == "td" || tag == "th") {
      if (!has_in_table_scope("table")) return;
      close_cell();
      const std::string& cur = tag_of(current());
      if (cur == "table") push("tbody");
      if (cur == "table" || cur == "tbody" || cur == "thead" || cur == "tfoot") push("tr");
    } else if (tag == "caption" || tag == "colgroup" || tag == "col") {
      if (!has_in_table_scope("table")) return;
    }

    std::string name = tag == "image" ? "img" : tag;
    Token adjusted = tok;
    adjusted.name = name;
    insert_element(adjusted);
  }

  void close_cell() {
    if (has_in_table_scope("td") || has_in_table_scope("th")) {
      generate_implied_end_tags();
      pop_until_any({"td", "th"});
    }
  }

  void close_table_section(bool include_sections) {
    close_cell();
    if (has_in_table_scope("tr")) pop_until("tr");
    if (include_sections) {
      for (auto it = stack_.rbegin(); it != stack_.rend(); ++it) {
        const std::string& t = tag_of(*it);
        if (t == "tbody" || t == "thead" || t == "tfoot") {
          pop_until_any({"tbody", "thead", "tfoot"});
          break;
        }
        if (t == "table" || t == "html") break;
      }
    }
  }

  bool in_foreign() {
    return std::any_of(stack_.begin(), stack_.end(), [&](NodeId id) {
      const std::string& t = tag_of(id);
      return t == "svg" || t == "math";
    });
  }

  void insert_element(const Token& tok) {
    bool foreign_self_closing = tok.self_closing && (tok.name == "svg" || tok.name == "math" || in_foreign());
    if (in(kVoid, tok.name) || foreign_self_closing) {
      insert(current(), tok.name, tok.attributes);
    } else {
      push(tok.name, tok.attributes);
    }
  }

  void on_end(const std::string& tag) {
    if (tag == "html" || tag == "body") {
      if (!body_) ensure_body();
      return;
    }
    if (!body_) {
      if (tag == "head") {
        if (head_ && current() == *head_) stack_.pop_back();
        return;
      }
      if (head_ && current() != *head_ && current() != html_ && tag_of(current()) == tag) {
        stack_.pop_back();
        return;
      }
      if (tag != "br" && tag != "p") return;
      ensure_body();
    }
    if (tag == "br") {
      insert(current(), "br", {});
      return;
    }
    if (tag == "p") {
      if (!has_in_scope("p", {"button"})) push("p");
      generate_implied_end_tags("p");
      pop_until("p");
      return;
    }
    if (tag == "li") {
      if (has_in_scope("li", {"ol", "ul"})) {
        generate_implied_end_tags("li");
        pop_until("li");
      }
      return;
    }
    if (in(kHeadings, tag)) {
      bool any = std::any_of(kHeadings.begin(), kHeadings.end(),
                             [&](std::string_view h) { return has_in_scope(h); });
      if (any) {
        generate_implied_end_tags();
        pop_until_any(kHeadings);
      }
      return;
    }
    if (tag == "td" || tag == "th" || tag == "tr" || tag == "table" || tag == "tbody" ||
        tag == "thead" || tag == "tfoot" || tag == "caption") {
      if (has_in_table_scope(tag)) {
        generate_implied_end_tags();
        pop_until(tag);
      }
      return;
    }
    if (tag == "select") {
      if (in_select()) pop_until("select");
      return;
    }
    if (in(kSpecial, tag)) {
      if (has_in_scope(tag)) {
        generate_implied_end_tags();
        pop_until(tag);
      }
      return;
    }
    // Any other end tag: close the nearest matching element unless a special
    // element sits above it.
    for (std::size_t i = stack_.size(); i-- > 1;) {
      const std::string& t = tag_of(stack_[i]);
      if (t == tag) {
        generate_implied_end_tags(tag);
        stack_.resize(i);
        return;
      }
      if (in(kSpecial, t)) return;
    }
  }

  DomTreeBuilder builder_;
  std::vector<bool> text_open_;  // last thing added to the node was text
  NodeId html_;
  std::optional<NodeId> head_;
  std::optional<NodeId> body_;
  std::vector<NodeId> stack_;
  std::vector<std::vector<std::string>> text_;  // indexed by node id
  bool standards_mode_ = false;
};

std::string decode_quoted_printable(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  auto hex = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '=') {
      out.push_back(s[i]);
      continue;
    }
    if (i + 1 < s.size() && s[i + 1] == '\n') {
      i += 1;
    } else if (i + 2 < s.size() && s[i + 1] == '\r' && s[i + 2] == '\n') {
      i += 2;
    } else if (i + 2 < s.size() && hex(s[i + 1]) >= 0 && hex(s[i + 2]) >= 0) {
      out.push_back(static_cast<char>(hex(s[i + 1]) * 16 + hex(s[i + 2])));
      i += 2;
    } else {
      out.push_back('=');
    }
  }
  return out;
}

std::string decode_base64(std::string_view s) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::string out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : s) {
    int v = value(c);
    if (v < 0) continue;
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<char>((acc >> bits) & 0xFF));
    }
  }
  return out;
}

struct MimePart {
  std::map<std::string, std::string> headers;  // lowercase names
  std::string_view body;
};

MimePart split_headers(std::string_view part) {
  MimePart out;
  std::size_t pos = 0;
  std::string last;
  while (pos < part.size()) {
    std::size_t eol = part.find('\n', pos);
    if (eol == std::string_view::npos) eol = part.size();
    std::string_view line = part.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = eol + 1;
    if (line.empty()) break;
    if ((line[0] == ' ' || line[0] == '\t') && !last.empty()) {
      out.headers[last] += " " + trim(line);
      continue;
    }
    std::size_t colon = line.find(':');
    if (colon == std::string_view::npos) continue;
    last = to_lower(trim(line.substr(0, colon)));
    out.headers[last] = trim(line.substr(colon + 1));
  }
  out.body = pos < part.size() ? part.substr(pos) : std::string_view{};
  return out;
}

std::string header_param(const std::string& header, std::string_view name) {
  std::string lower = to_lower(header);
  std::size_t at = lower.find(std::string(name) + "=");
  if (at == std::string::npos) return {};
  std::size_t start = at + name.size() + 1;
  if (start < header.size() && header[start] == '"') {
    std::size_t end = header.find('"', start + 1);
    return header.substr(start + 1, end == std::string::npos ? std::string::npos : end - start - 1);
  }
  std::size_t end = header.find_first_of("; \t", start);
  return header.substr(start, end == std::string::npos ? std::string::npos : end - start);
}

}  // namespace

bool has_hidden_marker(const DomNode& node) {
  if (in(kNonRendered, node.tag)) return true;
  if (node.has_attr("hidden")) return true;
  if (auto v = node.attr("aria-hidden"); v && iequals(trim(*v), "true")) return true;
  if (node.tag == "input") {
    if (auto t = node.attr("type"); t && iequals(trim(*t), "hidden")) return true;
  }
  if (auto style = node.attr("style")) {
    std::string compact;
    for (char c : to_lower(*style))
      if (!is_ws(c)) compact.push_back(c);
    std::size_t start = 0;
    while (start <= compact.size()) {
      std::size_t end = compact.find(';', start);
      if (end == std::string::npos) end = compact.size();
      std::string decl = compact.substr(start, end - start);
      if (auto bang = decl.find('!'); bang != std::string::npos) decl.resize(bang);
      if (decl == "display:none" || decl == "visibility:hidden") return true;
      start = end + 1;
    }
  }
  return false;
}

LayoutSidecar parse_layout_sidecar(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw IngestError(std::string("layout sidecar is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw IngestError("layout sidecar must be a JSON object");
  LayoutSidecar out;
  for (const auto& [key, entry] : doc.items()) {
    NodeId id = 0;
    try {
      std::size_t used = 0;
      id = std::stoi(key, &used);
      if (used != key.size()) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      throw IngestError("layout sidecar key is not a node id: " + key);
    }
    try {
      LayoutEntry e;
      e.box.x = entry.at("x").get<double>();
      e.box.y = entry.at("y").get<double>();
      e.box.width = entry.at("w").get<double>();
      e.box.height = entry.at("h").get<double>();
      e.visible = entry.value("visible", true);
      if (e.box.width < 0 || e.box.height < 0)
        throw IngestError("negative box size for node " + key);
      out.emplace(id, e);
    } catch (const nlohmann::json::exception& ex) {
      throw IngestError("layout entry for node " + key + " is malformed: " + ex.what());
    }
  }
  return out;
}

bool looks_like_mhtml(std::string_view data) {
  std::string head = to_lower(data.substr(0, std::min<std::size_t>(data.size(), 4096)));
  return head.find("multipart/related") != std::string::npos &&
         head.find("mime-version") != std::string::npos;
}

std::string extract_mhtml_html(std::string_view data) {
  MimePart top = split_headers(data);
  std::string boundary = header_param(top.headers["content-type"], "boundary");
  if (boundary.empty()) throw IngestError("MHTML container without a multipart boundary");
  std::string delim = "--" + boundary;
  std::size_t pos = data.find(delim);
  while (pos != std::string_view::npos) {
    std::size_t start = pos + delim.size();
    if (data.substr(start, 2) == "--") break;
    std::size_t next = data.find(delim, start);
    std::string_view part = data.substr(start, (next == std::string_view::npos ? data.size() : next) - start);
    while (!part.empty() && (part.front() == '\r' || part.front() == '\n')) part.remove_prefix(1);
    MimePart mp = split_headers(part);
    if (istarts_with(mp.headers["content-type"], "text/html")) {
      std::string encoding = to_lower(mp.headers["content-transfer-encoding"]);
      if (encoding == "quoted-printable") return decode_quoted_printable(mp.body);
      if (encoding == "base64") return decode_base64(mp.body);
      return std::string(mp.body);
    }
    pos = next;
  }
  throw IngestError("MHTML container has no text/html part");
}

DomTree parse_snapshot(std::string_view input, const std::optional<LayoutSidecar>& layout,
                       std::string source_id) {
  if (trim(input).empty()) throw IngestError("empty snapshot" + (source_id.empty() ? std::string{} : ": " + source_id));
  std::string html = looks_like_mhtml(input) ? extract_mhtml_html(input) : std::string(input);
  if (html.size() >= 3 && static_cast<unsigned char>(html[0]) == 0xEF &&
      static_cast<unsigned char>(html[1]) == 0xBB && static_cast<unsigned char>(html[2]) == 0xBF)
    html.erase(0, 3);

  TreeConstructor tc(source_id);
  tc.feed(Tokenizer(html).run());
  DomTreeBuilder& b = tc.builder();
  for (std::size_t i = 0; i < tc.text().size(); ++i)
    b.node(static_cast<NodeId>(i)).direct_text = collapse_whitespace(join(tc.text()[i], " "));
  b.set_layout(layout.has_value());

  // Visibility: hidden markers propagate; layout only affects the node itself.
  std::vector<bool> marker_hidden(tc.text().size(), false);
  for (std::size_t i = 0; i < tc.text().size(); ++i) {
    DomNode& node = b.node(static_cast<NodeId>(i));
    bool hidden = has_hidden_marker(node) || (node.parent && marker_hidden[static_cast<std::size_t>(*node.parent)]);
    marker_hidden[i] = hidden;
    node.visible = !hidden;
    if (layout) {
      auto it = layout->find(node.node_id);
      if (it == layout->end()) {
        node.visible = false;
      } else {
        node.bbox = it->second.box;
        node.visible = node.visible && it->second.visible && it->second.box.area() > 0;
      }
    }
  }
  return std::move(b).build();
}

}  // namespace mindact
