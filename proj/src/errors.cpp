#include "agm/errors.hpp"

namespace agm {

namespace {
std::string join_issues(const std::vector<std::string>& issues) {
  std::string out = "invalid configuration:";
  for (const auto& i : issues) out += "\n  - " + i;
  return out;
}
}  // namespace

ConfigError::ConfigError(std::vector<std::string> issues)
    : UsageError(join_issues(issues)), issues_(std::move(issues)) {}

DataError::DataError(const std::string& source, std::size_t line, const std::string& what)
    : std::runtime_error(source + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
      source_(source),
      line_(line) {}

}  // namespace agm
