#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace genret {

enum class ErrorKind {
  TemplateSyntax,
  Render,
  Vocabulary,
  Normalization,
  Configuration,
  Lookup,
  Transport,
  Spec,
  Builder,
  Stats,
  Metric,
  Parameter,
  Coverage,
  Optimization,
  Argument,
  Io,
  Schema,
  Usage,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries a category so callers (and the
// CLI exit-code mapping) can dispatch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised by the remote client; keeps the raw response body for diagnostics.
class TransportError : public Error {
 public:
  TransportError(const std::string& message, std::string body, int status = 0)
      : Error(ErrorKind::Transport, message), body_(std::move(body)), status_(status) {}

  const std::string& body() const noexcept { return body_; }
  int status() const noexcept { return status_; }

 private:
  std::string body_;
  int status_;
};

}  // namespace genret
