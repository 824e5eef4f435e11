#include "mindact/chat.hpp"

#include <cstdlib>
#include <fstream>
#include "json.hpp"
#include <sstream>

#include "http.hpp"
#include "mindact/error.hpp"
#include "mindact/text.hpp"

namespace mindact {

using nlohmann::json;

std::string prompt_hash(const std::vector<ChatMessage>& messages) {
  std::string canonical;
  for (const auto& m : messages) {
    canonical += m.role;
    canonical += '\x1f';
    canonical += m.content;
    canonical += '\x1e';
  }
  return fnv1a_hex(canonical);
}

std::string format_answer_operation(const Operation& op) {
  std::string out = "Action: " + std::string(op_kind_name(op.kind()));
  if (op.kind() != OpKind::Click) out += "\nValue: " + op.value();
  return out;
}

RemoteChatClient::RemoteChatClient(ModelClientSpec spec) : spec_(std::move(spec)) {
  if (spec_.endpoint.empty()) throw ConfigError("remote model client requires an endpoint");
  if (spec_.temperature < 0) throw ConfigError("temperature must be non-negative");
  if (const char* token = std::getenv("MINDACT_MODEL_TOKEN")) token_ = token;
}

std::string RemoteChatClient::complete(const ChatRequest& request) {
  json body = {{"model", spec_.model_name}, {"temperature", spec_.temperature}, {"messages", json::array()}};
  for (const auto& m : request.messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  std::map<std::string, std::string> headers;
  if (!token_.empty()) headers["Authorization"] = "Bearer " + token_;
  std::string raw;
  try {
    raw = detail::post_json(spec_.endpoint, body.dump(), headers,
                            {spec_.max_retries, spec_.initial_backoff_ms, spec_.timeout_ms});
  } catch (const Error& e) {
    throw PredictionError(std::string("model request failed: ") + e.what());
  }
  try {
    json reply = json::parse(raw);
    if (reply.contains("choices")) return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    if (reply.contains("content")) return reply.at("content").get<std::string>();
    return reply.at("reply").get<std::string>();
  } catch (const json::exception& e) {
    throw PredictionError(std::string("malformed model reply: ") + e.what());
  }
}

ScriptedClient::ScriptedClient(std::map<std::string, std::string> replies, std::optional<std::string> fallback)
    : replies_(std::move(replies)), fallback_(std::move(fallback)) {}

ScriptedClient ScriptedClient::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read scripted replies " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    json doc = json::parse(ss.str());
    std::map<std::string, std::string> replies;
    if (doc.contains("replies"))
      for (const auto& [hash, reply] : doc["replies"].items()) replies[hash] = reply.get<std::string>();
    std::optional<std::string> fallback;
    if (doc.contains("default") && doc["default"].is_string()) fallback = doc["default"].get<std::string>();
    return ScriptedClient(std::move(replies), std::move(fallback));
  } catch (const json::exception& e) {
    throw IngestError("malformed scripted replies " + path.string() + ": " + e.what());
  }
}

std::string ScriptedClient::complete(const ChatRequest& request) {
  const std::string hash = prompt_hash(request.messages);
  auto it = replies_.find(hash);
  if (it != replies_.end()) return it->second;
  if (fallback_) return *fallback_;
  throw MissingReplyError("no scripted reply for prompt " + hash);
}

std::string RecordingClient::complete(const ChatRequest& request) {
  std::string reply = inner_.complete(request);
  std::lock_guard lock(mu_);
  replies_[prompt_hash(request.messages)] = reply;
  return reply;
}

std::string RecordingClient::to_json() const {
  std::lock_guard lock(mu_);
  json doc = {{"replies", replies_}};
  return doc.dump(2) + "\n";
}

void RecordingClient::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json();
}

std::string GoldOracleClient::complete(const ChatRequest& request) {
  auto it = gold_.find(request.step_key);
  if (it == gold_.end()) throw PredictionError("oracle has no gold for step " + request.step_key);
  const Gold& gold = it->second;
  if (!request.option_forms.empty()) {
    for (std::size_t i = 0; i < request.option_ids.size() && i < request.option_forms.size(); ++i)
      if (gold.acceptable.count(request.option_ids[i]))
        return "Element: " + request.option_forms[i] + "\n" + format_answer_operation(gold.operation);
    return "Element: none";
  }
  for (std::size_t i = 0; i < request.option_ids.size(); ++i) {
    if (gold.acceptable.count(request.option_ids[i])) {
      char letter = static_cast<char>('B' + i);
      return std::string("Answer: ") + letter + ".\n" + format_answer_operation(gold.operation);
    }
  }
  return "Answer: A.";
}

}  // namespace mindact
