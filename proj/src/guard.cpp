#include "cra/guard.hpp"

#include <algorithm>
#include <bit>
#include <cctype>

#include "cra/error.hpp"

namespace cra {

int proposition_index(const PropositionList& props, std::string_view name) {
  auto it = std::find(props.begin(), props.end(), name);
  return it == props.end() ? -1 : static_cast<int>(it - props.begin());
}

LabelSet LabelSet::of(const PropositionList& props, std::span<const std::string> names) {
  LabelSet out;
  for (const auto& name : names) {
    int index = proposition_index(props, name);
    if (index < 0) {
      throw Error(ErrorKind::unknown_proposition, "unknown proposition '" + name + "'");
    }
    out.insert(static_cast<std::size_t>(index));
  }
  return out;
}

LabelSet LabelSet::of(const PropositionList& props,
                      std::initializer_list<std::string_view> names) {
  std::vector<std::string> owned(names.begin(), names.end());
  return of(props, std::span<const std::string>(owned));
}

std::size_t LabelSet::size() const { return static_cast<std::size_t>(std::popcount(bits_)); }

std::string LabelSet::to_string(const PropositionList& props) const {
  std::string out = "{";
  bool first = true;
  for (std::size_t i = 0; i < props.size(); ++i) {
    if (!contains(i)) continue;
    if (!first) out += ',';
    out += props[i];
    first = false;
  }
  out += '}';
  return out;
}

Guard Guard::atom(std::string name) {
  Guard g;
  g.kind_ = Kind::atom;
  g.name_ = std::move(name);
  return g;
}

Guard Guard::negation(Guard operand) {
  Guard g;
  g.kind_ = Kind::negation;
  g.children_.push_back(std::move(operand));
  return g;
}

Guard Guard::conjunction(std::vector<Guard> terms) {
  if (terms.size() == 1) return std::move(terms.front());
  Guard g;
  g.kind_ = Kind::conjunction;
  g.children_ = std::move(terms);
  return g;
}

Guard Guard::disjunction(std::vector<Guard> terms) {
  if (terms.size() == 1) return std::move(terms.front());
  Guard g;
  g.kind_ = Kind::disjunction;
  g.children_ = std::move(terms);
  return g;
}

std::vector<std::string> Guard::bind(const PropositionList& props) {
  std::vector<std::string> unknown;
  if (kind_ == Kind::atom) {
    index_ = proposition_index(props, name_);
    if (index_ < 0) unknown.push_back(name_);
    return unknown;
  }
  for (auto& child : children_) {
    for (auto& name : child.bind(props)) {
      if (std::find(unknown.begin(), unknown.end(), name) == unknown.end()) {
        unknown.push_back(std::move(name));
      }
    }
  }
  return unknown;
}

std::vector<std::string> Guard::atoms() const {
  std::vector<std::string> out;
  auto visit = [&](const Guard& g, auto&& self) -> void {
    if (g.kind_ == Kind::atom) {
      if (std::find(out.begin(), out.end(), g.name_) == out.end()) out.push_back(g.name_);
      return;
    }
    for (const auto& child : g.children_) self(child, self);
  };
  visit(*this, visit);
  return out;
}

bool Guard::evaluate(LabelSet label) const {
  switch (kind_) {
    case Kind::tautology:
      return true;
    case Kind::atom:
      return index_ >= 0 && label.contains(static_cast<std::size_t>(index_));
    case Kind::negation:
      return !children_.front().evaluate(label);
    case Kind::conjunction:
      return std::all_of(children_.begin(), children_.end(),
                         [&](const Guard& c) { return c.evaluate(label); });
    case Kind::disjunction:
      return std::any_of(children_.begin(), children_.end(),
                         [&](const Guard& c) { return c.evaluate(label); });
  }
  return false;
}

bool operator==(const Guard& a, const Guard& b) {
  return a.kind_ == b.kind_ && a.name_ == b.name_ && a.children_ == b.children_;
}

namespace {

class GuardParser {
 public:
  explicit GuardParser(std::string_view text) : text_(text) {}

  Guard parse() {
    skip_space();
    Guard result = disjunction();
    skip_space();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    return result;
  }

 private:
  Guard disjunction() {
    std::vector<Guard> terms;
    terms.push_back(conjunction());
    while (accept('|')) terms.push_back(conjunction());
    return Guard::disjunction(std::move(terms));
  }

  Guard conjunction() {
    std::vector<Guard> terms;
    terms.push_back(literal());
    while (accept('&')) terms.push_back(literal());
    return Guard::conjunction(std::move(terms));
  }

  Guard literal() {
    skip_space();
    bool negated = accept('!');
    skip_space();
    Guard operand;
    if (accept('(')) {
      operand = disjunction();
      if (!accept(')')) fail("expected ')'");
    } else {
      std::string name = identifier();
      operand = name == "TRUE" ? Guard::tautology() : Guard::atom(std::move(name));
    }
    return negated ? Guard::negation(std::move(operand)) : operand;
  }

  std::string identifier() {
    skip_space();
    std::size_t start = pos_;
    auto is_head = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; };
    auto is_tail = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
    if (pos_ >= text_.size() || !is_head(text_[pos_])) fail("expected proposition name");
    while (pos_ < text_.size() && is_tail(text_[pos_])) ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw SyntaxError("guard: " + what + " at offset " + std::to_string(pos_), pos_);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

enum class Slot { top, or_term, and_term };

void write_guard(const Guard& g, Slot slot, std::string& out) {
  using Kind = Guard::Kind;
  switch (g.kind()) {
    case Kind::tautology:
      out += "TRUE";
      return;
    case Kind::atom:
      out += g.name();
      return;
    case Kind::negation: {
      const Guard& operand = g.children().front();
      out += '!';
      if (operand.kind() == Kind::atom || operand.kind() == Kind::tautology) {
        write_guard(operand, Slot::and_term, out);
      } else {
        out += '(';
        write_guard(operand, Slot::top, out);
        out += ')';
      }
      return;
    }
    case Kind::conjunction:
    case Kind::disjunction: {
      bool is_and = g.kind() == Kind::conjunction;
      bool wrap = is_and ? slot == Slot::and_term : slot != Slot::top;
      if (wrap) out += '(';
      bool first = true;
      for (const auto& child : g.children()) {
        if (!first) out += is_and ? " & " : " | ";
        first = false;
        write_guard(child, is_and ? Slot::and_term : Slot::or_term, out);
      }
      if (wrap) out += ')';
      return;
    }
  }
}

}  // namespace

Guard parse_guard(std::string_view text) { return GuardParser(text).parse(); }

std::string serialize_guard(const Guard& guard) {
  std::string out;
  write_guard(guard, Slot::top, out);
  return out;
}

Guard exact_label_guard(const PropositionList& props, LabelSet label) {
  std::vector<Guard> terms;
  for (std::size_t i = 0; i < props.size(); ++i) {
    Guard atom = Guard::atom(props[i]);
    terms.push_back(label.contains(i) ? std::move(atom) : Guard::negation(std::move(atom)));
  }
  if (terms.empty()) return Guard::tautology();
  return Guard::conjunction(std::move(terms));
}

}  // namespace cra
