#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace agm {

/// Bad invocation or configuration: the job cannot start. The CLI maps this
/// to exit status 2.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Configuration that violates its schema. Carries every violation found,
/// not just the first.
class ConfigError : public UsageError {
 public:
  explicit ConfigError(std::vector<std::string> issues);
  const std::vector<std::string>& issues() const { return issues_; }

 private:
  std::vector<std::string> issues_;
};

/// Malformed input data, reported with its source location.
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& source, std::size_t line, const std::string& what);
  const std::string& source() const { return source_; }
  std::size_t line() const { return line_; }

 private:
  std::string source_;
  std::size_t line_;
};

}  // namespace agm
