#include <doctest.h>

#include <cstdlib>

#include "mindact/chat.hpp"
#include "mindact/error.hpp"
#include "stub_server.hpp"
#include "support.hpp"

using namespace mindact;
using nlohmann::json;

namespace {

ChatRequest request_of(std::vector<ChatMessage> messages) {
  ChatRequest r;
  r.messages = std::move(messages);
  return r;
}

ModelClientSpec spec_for(const std::string& endpoint) {
  ModelClientSpec s;
  s.endpoint = endpoint;
  s.model_name = "test-model";
  s.temperature = 0.25;
  s.max_retries = 1;
  s.initial_backoff_ms = 1;
  s.timeout_ms = 2000;
  return s;
}

}  // namespace

TEST_CASE("prompt hashes depend on roles, contents and message boundaries") {
  std::vector<ChatMessage> a{{"system", "s"}, {"user", "hello"}};
  CHECK(prompt_hash(a) == prompt_hash(a));
  CHECK(prompt_hash(a).size() == 16);
  CHECK(prompt_hash(a) != prompt_hash({{"system", "s"}, {"user", "hellO"}}));
  CHECK(prompt_hash(a) != prompt_hash({{"system", "s"}, {"assistant", "hello"}}));
  CHECK(prompt_hash({{"user", "ab"}, {"user", "c"}}) != prompt_hash({{"user", "a"}, {"user", "bc"}}));
}

TEST_CASE("operations format as action and value lines") {
  CHECK(format_answer_operation(Operation::click()) == "Action: CLICK");
  CHECK(format_answer_operation(Operation::type("Denver")) == "Action: TYPE\nValue: Denver");
  CHECK(format_answer_operation(Operation::select("2")) == "Action: SELECT\nValue: 2");
}

TEST_CASE("scripted replies come from a file with an optional default") {
  auto dir = testing::scratch("scripted");
  std::vector<ChatMessage> known{{"user", "known"}};
  json doc = {{"replies", {{prompt_hash(known), "Answer: B."}}}};
  testing::spit(dir / "replies.json", doc.dump());
  ScriptedClient strict = ScriptedClient::from_file(dir / "replies.json");
  CHECK(strict.complete(request_of(known)) == "Answer: B.");
  CHECK_THROWS_AS(strict.complete(request_of({{"user", "other"}})), MissingReplyError);

  doc["default"] = "Answer: A.";
  testing::spit(dir / "with_default.json", doc.dump());
  ScriptedClient lenient = ScriptedClient::from_file(dir / "with_default.json");
  CHECK(lenient.complete(request_of({{"user", "other"}})) == "Answer: A.");

  CHECK_THROWS_AS(ScriptedClient::from_file(dir / "absent.json"), IoError);
  testing::spit(dir / "bad.json", "{");
  CHECK_THROWS_AS(ScriptedClient::from_file(dir / "bad.json"), IngestError);
}

TEST_CASE("recorded replies replay identically") {
  int calls = 0;
  CallbackClient inner([&](const ChatRequest& r) { return "reply " + std::to_string(++calls) + r.messages[0].content; });
  RecordingClient recorder(inner);
  std::vector<ChatRequest> requests{request_of({{"user", "x"}}), request_of({{"user", "y"}})};
  std::vector<std::string> live;
  for (const auto& r : requests) live.push_back(recorder.complete(r));
  auto dir = testing::scratch("record");
  recorder.save(dir / "replies.json");
  ScriptedClient replay = ScriptedClient::from_file(dir / "replies.json");
  for (std::size_t i = 0; i < requests.size(); ++i) CHECK(replay.complete(requests[i]) == live[i]);
  CHECK(calls == 2);
  CHECK_THROWS_AS(recorder.save(dir / "missing" / "replies.json"), IoError);
}

TEST_CASE("the gold oracle picks the first acceptable option") {
  GoldOracleClient oracle({{"t#0", {{7, 9}, Operation::type("Denver")}}});
  ChatRequest r;
  r.step_key = "t#0";
  r.option_ids = {3, 9, 7};
  CHECK(oracle.complete(r) == "Answer: C.\nAction: TYPE\nValue: Denver");
  r.option_ids = {1, 2};
  CHECK(oracle.complete(r) == "Answer: A.");
  r.option_ids = {9};
  r.option_forms = {"<a> nine </a>"};
  CHECK(oracle.complete(r) == "Element: <a> nine </a>\nAction: TYPE\nValue: Denver");
  r.step_key = "t#1";
  CHECK_THROWS_AS(oracle.complete(r), PredictionError);
}

TEST_CASE("the remote client speaks the chat-completions format") {
  json seen;
  std::string auth;
  testing::StubServer server([&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    auth = req.get_header_value("Authorization");
    json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", "Answer: D."}}}}}}};
    res.set_content(reply.dump(), "application/json");
  });
  ::setenv("MINDACT_MODEL_TOKEN", "secret-token", 1);
  RemoteChatClient client(spec_for(server.url("/v1/chat/completions")));
  ::unsetenv("MINDACT_MODEL_TOKEN");
  CHECK(client.complete(request_of({{"system", "sys"}, {"user", "question"}})) == "Answer: D.");
  CHECK(seen["model"] == "test-model");
  CHECK(seen["temperature"] == doctest::Approx(0.25));
  CHECK(seen["messages"] == json::array({{{"role", "system"}, {"content", "sys"}},
                                         {{"role", "user"}, {"content", "question"}}}));
  CHECK(auth == "Bearer secret-token");

  RemoteChatClient anonymous(spec_for(server.url("/v1/chat/completions")));
  anonymous.complete(request_of({{"user", "q"}}));
  CHECK(auth.empty());
}

TEST_CASE("the remote client accepts plain content replies and reports failures") {
  {
    testing::StubServer server([](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"content": "Answer: B."})", "application/json");
    });
    CHECK(RemoteChatClient(spec_for(server.url())).complete(request_of({{"user", "q"}})) == "Answer: B.");
  }
  {
    testing::StubServer server([](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"reply": "Answer: C."})", "application/json");
    });
    CHECK(RemoteChatClient(spec_for(server.url())).complete(request_of({{"user", "q"}})) == "Answer: C.");
  }
  {
    testing::StubServer server([](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    CHECK_THROWS_AS(RemoteChatClient(spec_for(server.url())).complete(request_of({{"user", "q"}})),
                    PredictionError);
    CHECK(server.requests() == 2);
  }
  {
    testing::StubServer server(
        [](const httplib::Request&, httplib::Response& res) { res.set_content(R"({"x": 1})", "application/json"); });
    CHECK_THROWS_AS(RemoteChatClient(spec_for(server.url())).complete(request_of({{"user", "q"}})),
                    PredictionError);
  }
  CHECK_THROWS_AS(RemoteChatClient(spec_for("")), ConfigError);
  ModelClientSpec negative = spec_for("http://127.0.0.1:1/");
  negative.temperature = -1;
  CHECK_THROWS_AS(RemoteChatClient{negative}, ConfigError);
}
