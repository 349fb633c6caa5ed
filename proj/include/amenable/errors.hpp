#ifndef AMENABLE_ERRORS_HPP_
#define AMENABLE_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace amenable {

// Bad user-supplied configuration (spec file, run config, CLI flags).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed manifest / checkpoint on disk.
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// API called in a mode it does not support (e.g. score() on a recurrent
// controller, DDPG in meta mode).
struct MisuseError : std::logic_error {
  explicit MisuseError(const std::string& msg) : std::logic_error(msg) {}
};

// Non-finite loss/advantage mid-training; aborts the run with context.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace amenable

#endif  // AMENABLE_ERRORS_HPP_
