#pragma once

#include <stdexcept>
#include <string>

namespace marl {

// Membership / linear-algebra rank failures (caller may retry with ridge).
class RankError : public std::runtime_error {
 public:
  explicit RankError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad experiment configuration or CLI input. CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values or singular systems during a run. Exit code 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Requested explicit tables beyond the enumeration cap.
class SizeError : public std::runtime_error {
 public:
  explicit SizeError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace marl
