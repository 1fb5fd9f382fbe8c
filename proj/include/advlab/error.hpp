#pragma once

#include <stdexcept>
#include <string>

namespace advlab {

enum class Errc {
  dimension,       // shape or arity mismatch
  not_symmetric,
  no_convergence,
  non_finite,
  degenerate,      // zero-norm inputs where a direction is required
  precondition,    // violated operation precondition
  format,          // malformed file contents
  version,         // checkpoint format version mismatch
  config,          // invalid experiment configuration
  io,
};

const char* to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::dimension: return "dimension mismatch";
    case Errc::not_symmetric: return "matrix not symmetric";
    case Errc::no_convergence: return "no convergence";
    case Errc::non_finite: return "non-finite value";
    case Errc::degenerate: return "degenerate input";
    case Errc::precondition: return "precondition violated";
    case Errc::format: return "bad format";
    case Errc::version: return "version mismatch";
    case Errc::config: return "bad configuration";
    case Errc::io: return "i/o error";
  }
  return "error";
}

}  // namespace advlab
