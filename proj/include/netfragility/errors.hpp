#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace netfragility {

// Input, file-format and configuration problems. The CLI maps these to exit code 2.
class InputError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// A parse failure tied to a line of an input file.
class ParseError : public InputError {
public:
  ParseError(std::string path, std::size_t line, const std::string& what)
      : InputError(path + ":" + std::to_string(line) + ": " + what),
        path_(std::move(path)), line_(line) {}

  const std::string& path() const noexcept { return path_; }
  std::size_t line() const noexcept { return line_; }

private:
  std::string path_;
  std::size_t line_;
};

// Violated preconditions of a computation (infeasible targets, bad partitions,
// eigensolver failure). The CLI maps these to exit code 1.
class DomainError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Non-fatal messages collected along a pipeline (dropped exposures, unknown
// country codes). Passed by pointer; a null sink discards them.
struct Diagnostics {
  std::vector<std::string> warnings;

  void warn(std::string msg) { warnings.push_back(std::move(msg)); }
};

inline void warn(Diagnostics* diag, std::string msg) {
  if (diag != nullptr) diag->warn(std::move(msg));
}

}  // namespace netfragility
