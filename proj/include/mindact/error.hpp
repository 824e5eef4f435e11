#pragma once

#include <stdexcept>
#include <string>

namespace mindact {

// Base of every error raised by the library. Each pipeline stage throws its
// own subclass so callers can tell which stage failed.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class InvalidTreeError : public Error {
 public:
  using Error::Error;
};

class IngestError : public Error {
 public:
  IngestError(std::string task_id, const std::string& what)
      : Error(task_id.empty() ? what : "task " + task_id + ": " + what),
        task_id_(std::move(task_id)) {}
  explicit IngestError(const std::string& what) : Error(what) {}

  const std::string& task_id() const noexcept { return task_id_; }

 private:
  std::string task_id_;
};

class SplitError : public Error {
 public:
  using Error::Error;
};

class RankingError : public Error {
 public:
  RankingError(std::string page_id, const std::string& what)
      : Error("page " + page_id + ": " + what), page_id_(std::move(page_id)) {}

  const std::string& page_id() const noexcept { return page_id_; }

 private:
  std::string page_id_;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class SnippetError : public Error {
 public:
  using Error::Error;
};

class PredictionError : public Error {
 public:
  using Error::Error;
};

// A replayed run met a prompt it has no recorded reply for; the replay can no
// longer reproduce the original run, so this aborts instead of scoring a miss.
class MissingReplyError : public PredictionError {
 public:
  using PredictionError::PredictionError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace mindact
