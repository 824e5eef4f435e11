#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mindact/dom.hpp"

namespace mindact {

struct ChatMessage {
  std::string role;  // system | user | assistant
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

/// One model invocation. Besides the wire messages it carries the node ids
/// behind the offered options so offline clients can answer without parsing
/// the prompt; remote clients ignore everything but `messages`.
struct ChatRequest {
  std::vector<ChatMessage> messages;
  std::vector<NodeId> option_ids;        // B, C, ... in order (multi-choice)
  std::vector<std::string> option_forms;  // serialized candidates (generation)
  std::string step_key;                   // "<task_id>#<step index>"
};

/// Implementations must be safe to call from several threads at once.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  /// Returns the model's text reply; throws PredictionError on hard failure.
  virtual std::string complete(const ChatRequest& request) = 0;
};

/// Stable key of a message list, used to index scripted replies.
std::string prompt_hash(const std::vector<ChatMessage>& messages);

struct ModelClientSpec {
  std::string endpoint;
  std::string model_name = "gpt-3.5-turbo";
  double temperature = 0.0;
  unsigned max_in_flight = 4;
  int demonstrations = 3;
  int max_retries = 3;
  int initial_backoff_ms = 200;
  int timeout_ms = 60000;
};

/// Chat-completions style HTTP client. Sends
/// `{"model", "temperature", "messages": [{"role", "content"}]}` with a bearer
/// token from MINDACT_MODEL_TOKEN when set, and reads the reply from
/// `choices[0].message.content` or a top-level `content`/`reply` string.
class RemoteChatClient final : public ChatClient {
 public:
  explicit RemoteChatClient(ModelClientSpec spec);
  std::string complete(const ChatRequest& request) override;

 private:
  ModelClientSpec spec_;
  std::string token_;
};

/// Replays replies keyed by prompt hash from a fixture file:
/// `{"replies": {"<hash>": "<reply>"}, "default": "<reply>"}`.
class ScriptedClient final : public ChatClient {
 public:
  ScriptedClient(std::map<std::string, std::string> replies, std::optional<std::string> fallback = {});
  static ScriptedClient from_file(const std::filesystem::path& path);
  std::string complete(const ChatRequest& request) override;

 private:
  std::map<std::string, std::string> replies_;
  std::optional<std::string> fallback_;
};

/// Wraps another client and remembers every (prompt hash, reply) pair so a
/// run can be replayed offline with ScriptedClient.
class RecordingClient final : public ChatClient {
 public:
  explicit RecordingClient(ChatClient& inner) : inner_(inner) {}
  std::string complete(const ChatRequest& request) override;
  std::string to_json() const;
  void save(const std::filesystem::path& path) const;

 private:
  ChatClient& inner_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> replies_;
};

class CallbackClient final : public ChatClient {
 public:
  explicit CallbackClient(std::function<std::string(const ChatRequest&)> fn) : fn_(std::move(fn)) {}
  std::string complete(const ChatRequest& request) override { return fn_(request); }

 private:
  std::function<std::string(const ChatRequest&)> fn_;
};

/// Answers from the gold annotation: picks the first offered option inside
/// the step's acceptable set (or emits its serialized form in generation
/// prompts) together with the gold operation, and rejects otherwise.
class GoldOracleClient final : public ChatClient {
 public:
  struct Gold {
    std::set<NodeId> acceptable;
    Operation operation = Operation::click();
  };

  explicit GoldOracleClient(std::map<std::string, Gold> gold) : gold_(std::move(gold)) {}
  std::string complete(const ChatRequest& request) override;

 private:
  std::map<std::string, Gold> gold_;
};

/// "Action: KIND" plus "Value: v" lines for an operation.
std::string format_answer_operation(const Operation& op);

}  // namespace mindact
