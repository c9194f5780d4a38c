#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cra {

/// Ordered set of proposition names. A proposition's position is its bit in
/// a LabelSet.
using PropositionList = std::vector<std::string>;

inline constexpr std::size_t kMaxPropositions = 32;

/// Index of `name` in `props`, or -1.
int proposition_index(const PropositionList& props, std::string_view name);

/// A subset of the proposition set, stored as a bitmask over proposition
/// indices of the owning machine.
class LabelSet {
 public:
  constexpr LabelSet() = default;
  constexpr explicit LabelSet(std::uint32_t bits) : bits_(bits) {}

  static LabelSet of(const PropositionList& props, std::span<const std::string> names);
  static LabelSet of(const PropositionList& props, std::initializer_list<std::string_view> names);

  constexpr bool empty() const { return bits_ == 0; }
  constexpr bool contains(std::size_t index) const { return (bits_ >> index) & 1u; }
  constexpr void insert(std::size_t index) { bits_ |= (1u << index); }
  constexpr std::uint32_t bits() const { return bits_; }
  std::size_t size() const;

  /// "{A,B}" using the owning machine's proposition names.
  std::string to_string(const PropositionList& props) const;

  friend constexpr bool operator==(LabelSet, LabelSet) = default;

 private:
  std::uint32_t bits_ = 0;
};

/// Propositional formula over a machine's propositions. Value type; atoms are
/// bound to proposition indices by `bind` so evaluation is a bitmask test.
class Guard {
 public:
  enum class Kind { tautology, atom, negation, conjunction, disjunction };

  Guard() = default;  // tautology

  static Guard tautology() { return Guard{}; }
  static Guard atom(std::string name);
  static Guard negation(Guard operand);
  /// Single-element lists collapse to the element itself.
  static Guard conjunction(std::vector<Guard> terms);
  static Guard disjunction(std::vector<Guard> terms);

  Kind kind() const { return kind_; }
  bool is_tautology() const { return kind_ == Kind::tautology; }
  const std::string& name() const { return name_; }
  std::span<const Guard> children() const { return children_; }

  /// Resolves atom names against `props`; unknown names bind to -1 and
  /// evaluate to false. Returns the names that failed to resolve.
  std::vector<std::string> bind(const PropositionList& props);

  /// All atom names, in first-occurrence order, without duplicates.
  std::vector<std::string> atoms() const;

  bool evaluate(LabelSet label) const;

  /// Structural equality on names; bound indices are ignored.
  friend bool operator==(const Guard& a, const Guard& b);

 private:
  Kind kind_ = Kind::tautology;
  std::string name_;
  int index_ = -1;
  std::vector<Guard> children_;
};

/// Parses `TRUE | disj`, `disj := conj {"|" conj}`, `conj := lit {"&" lit}`,
/// `lit := ["!"] (atom | "(" disj ")")`. Throws SyntaxError with the byte
/// offset of the offending character.
Guard parse_guard(std::string_view text);

/// Canonical text; parse_guard(serialize_guard(g)) == g.
std::string serialize_guard(const Guard& guard);

/// σ ⊨ φ. Atom(p) holds iff p ∈ σ; the tautology always holds.
inline bool eval_guard(const Guard& guard, LabelSet label) { return guard.evaluate(label); }

/// Guard that holds for exactly one label set: every member positive, every
/// other proposition negated. The empty set yields the all-negated conjunction.
Guard exact_label_guard(const PropositionList& props, LabelSet label);

}  // namespace cra
