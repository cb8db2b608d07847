#pragma once

#include <stdexcept>
#include <string>

namespace pkil {

// Base for every error the library raises. `code()` is a stable kebab-case
// identifier; the CLI prints it so callers can match on it.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace pkil
