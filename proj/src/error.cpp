#include "cra/error.hpp"

namespace cra {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::syntax: return "syntax";
    case ErrorKind::validation: return "validation";
    case ErrorKind::unknown_proposition: return "unknown-proposition";
    case ErrorKind::counter_underflow: return "counter-underflow";
    case ErrorKind::counter_overflow: return "counter-overflow";
    case ErrorKind::epsilon_loop: return "epsilon-loop";
    case ErrorKind::terminal_step: return "terminal-step";
    case ErrorKind::nondeterministic: return "nondeterministic";
    case ErrorKind::not_constant: return "not-constant";
    case ErrorKind::non_total: return "non-total";
    case ErrorKind::unknown_symbol: return "unknown-symbol";
    case ErrorKind::bad_config: return "bad-config";
    case ErrorKind::episode_over: return "episode-over";
    case ErrorKind::cap_exceeded: return "cap-exceeded";
    case ErrorKind::non_convergence: return "non-convergence";
    case ErrorKind::dimension_mismatch: return "dimension-mismatch";
    case ErrorKind::non_finite_loss: return "non-finite-loss";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

SyntaxError::SyntaxError(const std::string& message, std::size_t offset, std::size_t line,
                         std::size_t column)
    : Error(ErrorKind::syntax, message), offset_(offset), line_(line), column_(column) {}

}  // namespace cra
