#pragma once

#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cra/automaton.hpp"
#include "cra/error.hpp"

namespace cra {

enum class MachineKind { cra, ccra, rm, acceptor };

std::string_view to_string(MachineKind kind);

/// A parsed machine-definition file.
struct MachineDocument {
  MachineKind kind = MachineKind::cra;
  std::variant<CountingRewardAutomaton, RewardMachine, AcceptorMachine> machine;

  /// The machine as a CRA: RMs go through rm_to_cra, acceptors yield their
  /// underlying automaton.
  CountingRewardAutomaton as_cra() const;
  ValidationReport validate() const;

  friend bool operator==(const MachineDocument&, const MachineDocument&) = default;
};

/// Thrown by parse_machine when a syntactically valid document fails
/// validation.
class ValidationError : public Error {
 public:
  explicit ValidationError(ValidationReport report);
  const ValidationReport& report() const { return report_; }

 private:
  ValidationReport report_;
};

/// Parses the line-oriented machine format (see README). SyntaxError
/// carries 1-based line and column.
MachineDocument parse_machine_unchecked(std::string_view text);
/// parse_machine_unchecked followed by validation; throws ValidationError.
MachineDocument parse_machine(std::string_view text);

std::string serialize_machine(const MachineDocument& doc);
std::string serialize_machine(const CountingRewardAutomaton& machine);
std::string serialize_machine(const RewardMachine& machine);
std::string serialize_machine(const AcceptorMachine& acceptor);

/// Shortest decimal text that parses back to the same double.
std::string format_number(double value);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view text);

MachineDocument load_machine(const std::string& path);

// ---------------------------------------------------------------------------
// DFA transition tables: `DELTA <src> <symbol> <dst>`, `ACCEPT <state>`,
// `TRAP <state>`, optional `INITIAL <state>` (default: first DELTA source)
// and optional `SYMBOLS <name>...` fixing the alphabet.

struct DfaTable {
  struct Entry {
    std::string source;
    std::string symbol;
    std::string target;
    friend bool operator==(const Entry&, const Entry&) = default;
  };
  std::vector<Entry> entries;
  std::vector<std::string> accepting;
  std::vector<std::string> traps;
  std::string initial;
  std::vector<std::string> declared_symbols;

  /// States in order of first mention; symbols likewise unless declared.
  std::vector<std::string> states() const;
  std::vector<std::string> symbols() const;

  friend bool operator==(const DfaTable&, const DfaTable&) = default;
};

DfaTable parse_dfa_table(std::string_view text);
std::string serialize_dfa_table(const DfaTable& table);

/// Accepting and trap states become terminal. Entering an accepting state
/// pays 1, entering a trap pays `fail_reward`, everything else 0. Symbol s
/// becomes proposition s with the guard "s and no other symbol".
/// Errors: nondeterministic (duplicate rows), non_total (missing rows for a
/// non-terminal state), unknown_symbol (a row outside the declared
/// alphabet), validation (ACCEPT/TRAP/INITIAL naming an unknown state).
RewardMachine import_dfa_table(const DfaTable& table, double fail_reward = 0.0);

}  // namespace cra
