#pragma once

#include <stdexcept>
#include <string>

namespace objstitch {

/// Failure category; the CLI maps these onto process exit codes.
enum class ErrorKind {
  bad_input,
  io,
  insufficient_overlap,
  degenerate,
  solver_failure,
};

/// Exception carrying the originating module and a failure category.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& module, const std::string& what)
      : std::runtime_error(module + ": " + what), kind_(kind), module_(module) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& module() const noexcept { return module_; }

 private:
  ErrorKind kind_;
  std::string module_;
};

}  // namespace objstitch
