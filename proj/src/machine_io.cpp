#include "cra/machine_io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace cra {

std::string_view to_string(MachineKind kind) {
  switch (kind) {
    case MachineKind::cra: return "CRA";
    case MachineKind::ccra: return "CCRA";
    case MachineKind::rm: return "RM";
    case MachineKind::acceptor: return "ACCEPTOR";
  }
  return "CRA";
}

CountingRewardAutomaton MachineDocument::as_cra() const {
  if (const auto* m = std::get_if<CountingRewardAutomaton>(&machine)) return *m;
  if (const auto* rm = std::get_if<RewardMachine>(&machine)) return rm_to_cra(*rm);
  return std::get<AcceptorMachine>(machine).machine;
}

ValidationReport MachineDocument::validate() const {
  return std::visit([](const auto& m) { return cra::validate(m); }, machine);
}

ValidationError::ValidationError(ValidationReport report)
    : Error(ErrorKind::validation, "machine failed validation:\n" + report.to_string()),
      report_(std::move(report)) {}

std::string format_number(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, end);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path + "'");
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write '" + path + "'");
  out << text;
  if (!out) throw Error(ErrorKind::io, "write failed for '" + path + "'");
}

MachineDocument load_machine(const std::string& path) { return parse_machine(read_text_file(path)); }

namespace {

struct Line {
  std::string_view text;  // comment stripped
  std::size_t number = 0;
  std::size_t offset = 0;  // byte offset of the line start in the document
};

std::vector<Line> split_lines(std::string_view text) {
  std::vector<Line> lines;
  std::size_t start = 0, number = 1;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    lines.push_back({line, number, start});
    if (end == text.size()) break;
    start = end + 1;
    ++number;
  }
  return lines;
}

bool is_space(char c) { return c == ' ' || c == '\t'; }

class Scanner {
 public:
  explicit Scanner(const Line& line) : line_(line) {}

  void skip_space() {
    while (pos_ < line_.text.size() && is_space(line_.text[pos_])) ++pos_;
  }
  bool at_end() {
    skip_space();
    return pos_ >= line_.text.size();
  }
  std::size_t pos() const { return pos_; }
  void seek(std::size_t pos) { pos_ = pos; }
  std::string_view rest() const { return line_.text.substr(pos_); }

  std::string word(const char* what) {
    skip_space();
    std::size_t start = pos_;
    while (pos_ < line_.text.size() && !is_space(line_.text[pos_])) ++pos_;
    if (start == pos_) fail(std::string("expected ") + what);
    return std::string(line_.text.substr(start, pos_ - start));
  }

  bool peek_word(std::string_view w) {
    skip_space();
    std::string_view r = rest();
    return r.substr(0, w.size()) == w && (r.size() == w.size() || is_space(r[w.size()]));
  }

  void expect(std::string_view w) {
    if (!peek_word(w)) fail("expected '" + std::string(w) + "'");
    pos_ += w.size();
  }

  template <class T>
  T number(const char* what) {
    skip_space();
    std::size_t start = pos_;
    std::string token = word(what);
    T value{};
    auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc{} || end != token.data() + token.size()) {
      pos_ = start;
      fail(std::string("expected ") + what);
    }
    return value;
  }

  template <class T>
  std::vector<T> vector(const char* what) {
    skip_space();
    if (pos_ >= line_.text.size() || line_.text[pos_] != '[') fail(std::string("expected ") + what);
    ++pos_;
    std::vector<T> out;
    skip_space();
    if (pos_ < line_.text.size() && line_.text[pos_] == ']') {
      ++pos_;
      return out;
    }
    while (true) {
      skip_space();
      std::size_t start = pos_;
      while (pos_ < line_.text.size() && line_.text[pos_] != ',' && line_.text[pos_] != ']' &&
             !is_space(line_.text[pos_])) {
        ++pos_;
      }
      std::string_view token = line_.text.substr(start, pos_ - start);
      T value{};
      auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
      if (token.empty() || ec != std::errc{} || end != token.data() + token.size()) {
        pos_ = start;
        fail("bad integer in vector");
      }
      out.push_back(value);
      skip_space();
      if (pos_ < line_.text.size() && line_.text[pos_] == ',') {
        ++pos_;
        continue;
      }
      if (pos_ < line_.text.size() && line_.text[pos_] == ']') {
        ++pos_;
        return out;
      }
      fail("expected ',' or ']'");
    }
  }

  [[noreturn]] void fail(const std::string& what) const { fail_at(pos_, what); }

  [[noreturn]] void fail_at(std::size_t pos, const std::string& what) const {
    throw SyntaxError("line " + std::to_string(line_.number) + ", column " +
                          std::to_string(pos + 1) + ": " + what,
                      line_.offset + pos, line_.number, pos + 1);
  }

 private:
  const Line& line_;
  std::size_t pos_ = 0;
};

std::vector<std::string> words_until_end(Scanner& s) {
  std::vector<std::string> out;
  while (!s.at_end()) out.push_back(s.word("name"));
  return out;
}

// Position of the first whitespace-delimited occurrence of any keyword.
std::size_t find_keyword(std::string_view text, std::initializer_list<std::string_view> keywords) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (i > 0 && !is_space(text[i - 1])) continue;
    for (auto kw : keywords) {
      if (text.substr(i, kw.size()) == kw &&
          (i + kw.size() == text.size() || is_space(text[i + kw.size()]))) {
        return i;
      }
    }
  }
  return text.size();
}

struct Header {
  std::optional<MachineKind> kind;
  std::size_t counters = 0;
  PropositionList props;
  std::vector<std::string> states, terminals, accepting;
  std::optional<AcceptMode> mode;
  std::string initial;
  bool gating = true;
  std::set<std::string> seen;
};

RewardSpec parse_reward(Scanner& s) {
  if (s.peek_word("TABLE")) {
    s.expect("TABLE");
    double def = s.number<double>("default reward");
    std::map<RewardSpec::Key, double> overrides;
    while (!s.at_end()) {
      std::size_t start = s.pos();
      std::string entry = s.word("table entry");
      std::int64_t a = 0, b = 0, c = 0;
      double v = 0;
      const char* p = entry.data();
      const char* e = p + entry.size();
      auto next = [&](auto& out, char sep) {
        auto [q, ec] = std::from_chars(p, e, out);
        if (ec != std::errc{} || (sep && (q == e || *q != sep))) {
          s.fail_at(start, "table entries look like s:a:s2=value");
        }
        p = sep ? q + 1 : q;
      };
      next(a, ':');
      next(b, ':');
      next(c, '=');
      next(v, 0);
      if (p != e) s.fail_at(start, "table entries look like s:a:s2=value");
      overrides[{a, b, c}] = v;
    }
    return RewardSpec::table(def, std::move(overrides));
  }
  return RewardSpec::constant(s.number<double>("reward"));
}

StateId resolve(const Header& h, Scanner& s, std::size_t at, const std::string& name) {
  for (std::size_t i = 0; i < h.states.size(); ++i) {
    if (h.states[i] == name) return i;
  }
  for (std::size_t i = 0; i < h.terminals.size(); ++i) {
    if (h.terminals[i] == name) return h.states.size() + i;
  }
  s.fail_at(at, "unknown state '" + name + "'");
}

struct ParsedRule {
  TransitionRule rule;
  bool has_counters = false;
};

ParsedRule parse_transition(const Line& line, const Header& h) {
  Scanner s(line);
  ParsedRule out;
  auto& r = out.rule;
  s.skip_space();
  std::size_t at = s.pos();
  r.source = resolve(h, s, at, s.word("source state"));
  s.expect("->");
  s.skip_space();
  at = s.pos();
  r.target = resolve(h, s, at, s.word("target state"));
  s.expect("GUARD");
  s.skip_space();
  std::size_t guard_start = s.pos();
  std::string_view rest = s.rest();
  std::size_t guard_len = find_keyword(rest, {"ZT", "REWARD"});
  std::string_view guard_text = rest.substr(0, guard_len);
  while (!guard_text.empty() && is_space(guard_text.back())) guard_text.remove_suffix(1);
  if (guard_text.empty()) s.fail("expected guard expression");
  if (guard_text == "EPSILON") {
    r.epsilon = true;
  } else {
    try {
      r.guard = parse_guard(guard_text);
    } catch (const SyntaxError& e) {
      s.fail_at(guard_start + e.offset(), e.what());
    }
  }
  s.seek(guard_start + guard_len);
  if (s.peek_word("ZT")) {
    if (h.kind == MachineKind::rm) s.fail("RM transitions carry no ZT/ADD fields");
    s.expect("ZT");
    r.zero_test = s.vector<std::uint8_t>("zero-test vector");
    s.expect("ADD");
    r.modifier = s.vector<std::int64_t>("modifier vector");
    out.has_counters = true;
  } else if (h.kind != MachineKind::rm) {
    s.fail("expected 'ZT'");
  }
  if (s.peek_word("REWARD")) {
    s.expect("REWARD");
    r.reward = parse_reward(s);
  } else if (h.kind != MachineKind::acceptor) {
    s.fail("expected 'REWARD'");
  } else {
    r.reward = RewardSpec::constant(0.0);
  }
  if (!s.at_end()) s.fail("unexpected trailing input");
  return out;
}

}  // namespace

MachineDocument parse_machine_unchecked(std::string_view text) {
  Header h;
  std::vector<Line> lines = split_lines(text);
  std::size_t i = 0;
  bool transitions = false;
  for (; i < lines.size(); ++i) {
    Scanner s(lines[i]);
    if (s.at_end()) continue;
    std::size_t at = s.pos();
    std::string key = s.word("keyword");
    if (!h.seen.insert(key).second) s.fail_at(at, "duplicate " + key + " line");
    if (key == "KIND") {
      std::string kind = s.word("machine kind");
      if (kind == "CRA") h.kind = MachineKind::cra;
      else if (kind == "CCRA") h.kind = MachineKind::ccra;
      else if (kind == "RM") h.kind = MachineKind::rm;
      else if (kind == "ACCEPTOR") h.kind = MachineKind::acceptor;
      else s.fail_at(at + 5, "unknown machine kind '" + kind + "'");
    } else if (!h.kind) {
      s.fail_at(at, "document must start with KIND");
    } else if (key == "COUNTERS") {
      h.counters = s.number<std::size_t>("counter count");
      if (h.counters > kMaxCounters) s.fail_at(at, "too many counters");
      if (h.kind == MachineKind::rm && h.counters != 0) s.fail_at(at, "RM documents have no counters");
    } else if (key == "PROPS") {
      h.props = words_until_end(s);
    } else if (key == "STATES") {
      h.states = words_until_end(s);
    } else if (key == "TERMINAL") {
      h.terminals = words_until_end(s);
    } else if (key == "ACCEPTING" || key == "ACCEPT_MODE") {
      if (h.kind != MachineKind::acceptor) s.fail_at(at, key + " is only legal for ACCEPTOR");
      if (key == "ACCEPTING") {
        h.accepting = words_until_end(s);
      } else {
        std::string mode = s.word("acceptance mode");
        if (mode == "STATE") h.mode = AcceptMode::state_only;
        else if (mode == "STATE_ZERO") h.mode = AcceptMode::state_and_zero_counters;
        else s.fail_at(at, "acceptance mode is STATE or STATE_ZERO");
      }
    } else if (key == "INITIAL") {
      h.initial = s.word("initial state");
    } else if (key == "GATING") {
      std::string v = s.word("ON or OFF");
      if (v != "ON" && v != "OFF") s.fail_at(at, "GATING takes ON or OFF");
      h.gating = v == "ON";
    } else if (key == "TRANSITIONS") {
      transitions = true;
    } else {
      s.fail_at(at, "unknown keyword '" + key + "'");
    }
    if (!s.at_end()) s.fail("unexpected trailing input");
    if (transitions) break;
  }
  auto fail_global = [&](const std::string& what) -> void {
    std::size_t line = i < lines.size() ? lines[i].number : lines.back().number;
    throw SyntaxError("line " + std::to_string(line) + ": " + what,
                      i < lines.size() ? lines[i].offset : text.size(), line, 1);
  };
  if (!h.kind) fail_global("missing KIND line");
  if (h.states.empty()) fail_global("missing STATES line");
  if (h.initial.empty()) fail_global("missing INITIAL line");
  if (!transitions) fail_global("missing TRANSITIONS line");

  std::vector<TransitionRule> rules;
  std::vector<RewardMachine::Edge> edges;
  for (++i; i < lines.size(); ++i) {
    Scanner s(lines[i]);
    if (s.at_end()) continue;
    ParsedRule p = parse_transition(lines[i], h);
    if (h.kind == MachineKind::rm) {
      if (p.rule.epsilon) Scanner(lines[i]).fail("RM transitions cannot be EPSILON");
      edges.push_back({p.rule.source, std::move(p.rule.guard), p.rule.target, p.rule.reward});
    } else {
      rules.push_back(std::move(p.rule));
    }
  }

  auto initial_id = [&]() -> StateId {
    for (std::size_t k = 0; k < h.states.size(); ++k) {
      if (h.states[k] == h.initial) return k;
    }
    for (std::size_t k = 0; k < h.terminals.size(); ++k) {
      if (h.terminals[k] == h.initial) return h.states.size() + k;
    }
    throw SyntaxError("unknown initial state '" + h.initial + "'", 0, 0, 0);
  };

  MachineDocument doc;
  doc.kind = *h.kind;
  if (h.kind == MachineKind::rm) {
    RewardMachine rm;
    rm.states = h.states;
    rm.terminals = h.terminals;
    rm.propositions = h.props;
    rm.edges = std::move(edges);
    rm.initial = initial_id();
    rm.empty_label_gating = h.gating;
    rm.bind_guards();
    doc.machine = std::move(rm);
    return doc;
  }
  CountingRewardAutomaton m;
  m.states = h.states;
  m.terminals = h.terminals;
  m.propositions = h.props;
  m.counters = h.counters;
  m.rules = std::move(rules);
  m.initial = initial_id();
  m.empty_label_gating = h.gating;
  m.reward_kind = h.kind == MachineKind::cra ? RewardKind::functions : RewardKind::constants;
  m.bind_guards();
  if (h.kind != MachineKind::acceptor) {
    doc.machine = std::move(m);
    return doc;
  }
  AcceptorMachine a;
  a.machine = std::move(m);
  for (const auto& name : h.accepting) {
    auto id = a.machine.find_state(name);
    if (!id) throw SyntaxError("unknown accepting state '" + name + "'", 0, 0, 0);
    a.accepting.push_back(*id);
  }
  a.mode = h.mode.value_or(AcceptMode::state_and_zero_counters);
  doc.machine = std::move(a);
  return doc;
}

MachineDocument parse_machine(std::string_view text) {
  MachineDocument doc = parse_machine_unchecked(text);
  ValidationReport report = doc.validate();
  if (!report.ok()) throw ValidationError(std::move(report));
  return doc;
}

namespace {

std::string join(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) out += " " + n;
  return out;
}

template <class T>
std::string vector_text(const std::vector<T>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(static_cast<std::int64_t>(v[i]));
  }
  return out + "]";
}

std::string reward_text(const RewardSpec& r) {
  if (r.is_constant()) return format_number(r.constant_value());
  const auto* t = r.as_table();
  std::string out = "TABLE " + format_number(t->default_value);
  for (const auto& [key, value] : t->overrides) {
    out += " " + std::to_string(std::get<0>(key)) + ":" + std::to_string(std::get<1>(key)) + ":" +
           std::to_string(std::get<2>(key)) + "=" + format_number(value);
  }
  return out;
}

template <class Machine>
void write_common_header(std::ostringstream& out, const Machine& m) {
  if (!m.propositions.empty()) out << "PROPS" << join(m.propositions) << "\n";
  out << "STATES" << join(m.states) << "\n";
  if (!m.terminals.empty()) out << "TERMINAL" << join(m.terminals) << "\n";
}

std::string serialize_cra(const CountingRewardAutomaton& m, MachineKind kind,
                          const AcceptorMachine* acceptor) {
  std::ostringstream out;
  out << "KIND " << to_string(kind) << "\n";
  out << "COUNTERS " << m.counters << "\n";
  write_common_header(out, m);
  if (acceptor) {
    std::vector<std::string> names;
    for (StateId id : acceptor->accepting) names.push_back(m.state_name(id));
    if (!names.empty()) out << "ACCEPTING" << join(names) << "\n";
    out << "ACCEPT_MODE "
        << (acceptor->mode == AcceptMode::state_only ? "STATE" : "STATE_ZERO") << "\n";
  }
  out << "INITIAL " << m.state_name(m.initial) << "\n";
  if (!m.empty_label_gating) out << "GATING OFF\n";
  out << "TRANSITIONS\n";
  for (const auto& r : m.rules) {
    out << m.state_name(r.source) << " -> " << m.state_name(r.target) << " GUARD "
        << (r.epsilon ? std::string("EPSILON") : serialize_guard(r.guard)) << " ZT "
        << vector_text(r.zero_test) << " ADD " << vector_text(r.modifier) << " REWARD "
        << reward_text(r.reward) << "\n";
  }
  return out.str();
}

}  // namespace

std::string serialize_machine(const CountingRewardAutomaton& machine) {
  return serialize_cra(machine,
                       machine.reward_kind == RewardKind::constants ? MachineKind::ccra
                                                                    : MachineKind::cra,
                       nullptr);
}

std::string serialize_machine(const AcceptorMachine& acceptor) {
  return serialize_cra(acceptor.machine, MachineKind::acceptor, &acceptor);
}

std::string serialize_machine(const RewardMachine& m) {
  std::ostringstream out;
  out << "KIND RM\n";
  write_common_header(out, m);
  out << "INITIAL " << m.state_name(m.initial) << "\n";
  if (!m.empty_label_gating) out << "GATING OFF\n";
  out << "TRANSITIONS\n";
  for (const auto& e : m.edges) {
    out << m.state_name(e.source) << " -> " << m.state_name(e.target) << " GUARD "
        << serialize_guard(e.guard) << " REWARD " << reward_text(e.reward) << "\n";
  }
  return out.str();
}

std::string serialize_machine(const MachineDocument& doc) {
  return std::visit([](const auto& m) { return serialize_machine(m); }, doc.machine);
}

// ---------------------------------------------------------------------------
// DFA tables

namespace {

void add_unique(std::vector<std::string>& names, const std::string& name) {
  if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
}

}  // namespace

std::vector<std::string> DfaTable::states() const {
  std::vector<std::string> out;
  if (!initial.empty()) add_unique(out, initial);
  for (const auto& e : entries) {
    add_unique(out, e.source);
    add_unique(out, e.target);
  }
  for (const auto& s : accepting) add_unique(out, s);
  for (const auto& s : traps) add_unique(out, s);
  return out;
}

std::vector<std::string> DfaTable::symbols() const {
  if (!declared_symbols.empty()) return declared_symbols;
  std::vector<std::string> out;
  for (const auto& e : entries) add_unique(out, e.symbol);
  return out;
}

DfaTable parse_dfa_table(std::string_view text) {
  DfaTable table;
  for (const Line& line : split_lines(text)) {
    Scanner s(line);
    if (s.at_end()) continue;
    std::size_t at = s.pos();
    std::string key = s.word("keyword");
    if (key == "DELTA") {
      DfaTable::Entry e;
      e.source = s.word("source state");
      e.symbol = s.word("input symbol");
      e.target = s.word("target state");
      table.entries.push_back(std::move(e));
    } else if (key == "ACCEPT") {
      table.accepting.push_back(s.word("state"));
    } else if (key == "TRAP") {
      table.traps.push_back(s.word("state"));
    } else if (key == "INITIAL") {
      if (!table.initial.empty()) s.fail_at(at, "duplicate INITIAL line");
      table.initial = s.word("state");
    } else if (key == "SYMBOLS") {
      table.declared_symbols = words_until_end(s);
    } else {
      s.fail_at(at, "unknown keyword '" + key + "'");
    }
    if (!s.at_end()) s.fail("unexpected trailing input");
  }
  return table;
}

std::string serialize_dfa_table(const DfaTable& table) {
  std::ostringstream out;
  if (!table.declared_symbols.empty()) out << "SYMBOLS" << join(table.declared_symbols) << "\n";
  if (!table.initial.empty()) out << "INITIAL " << table.initial << "\n";
  for (const auto& e : table.entries) {
    out << "DELTA " << e.source << " " << e.symbol << " " << e.target << "\n";
  }
  for (const auto& s : table.accepting) out << "ACCEPT " << s << "\n";
  for (const auto& s : table.traps) out << "TRAP " << s << "\n";
  return out.str();
}

RewardMachine import_dfa_table(const DfaTable& table, double fail_reward) {
  std::vector<std::string> symbols = table.symbols();
  std::vector<std::string> all = table.states();
  if (all.empty()) throw Error(ErrorKind::validation, "empty DFA table");

  auto known = [&](const std::string& name) {
    return std::find(all.begin(), all.end(), name) != all.end();
  };
  auto is_final = [&](const std::string& name) {
    return std::find(table.accepting.begin(), table.accepting.end(), name) !=
               table.accepting.end() ||
           std::find(table.traps.begin(), table.traps.end(), name) != table.traps.end();
  };
  for (const auto& name : table.accepting) {
    if (std::find(table.traps.begin(), table.traps.end(), name) != table.traps.end()) {
      throw Error(ErrorKind::validation, "state '" + name + "' is both ACCEPT and TRAP");
    }
  }

  RewardMachine rm;
  rm.propositions = symbols;
  std::string initial = table.initial.empty() ? all.front() : table.initial;
  if (!known(initial)) throw Error(ErrorKind::validation, "unknown initial state '" + initial + "'");
  if (is_final(initial)) throw Error(ErrorKind::validation, "initial state cannot be final");
  for (const auto& name : all) {
    (is_final(name) ? rm.terminals : rm.states).push_back(name);
  }
  rm.initial = *rm.find_state(initial);

  std::map<std::pair<std::string, std::string>, std::string> delta;
  for (const auto& e : table.entries) {
    if (std::find(symbols.begin(), symbols.end(), e.symbol) == symbols.end()) {
      throw Error(ErrorKind::unknown_symbol, "symbol '" + e.symbol + "' is not in the alphabet");
    }
    if (!delta.emplace(std::pair{e.source, e.symbol}, e.target).second) {
      throw Error(ErrorKind::nondeterministic,
                  "duplicate row for (" + e.source + ", " + e.symbol + ")");
    }
  }
  for (const auto& u : rm.states) {
    for (const auto& sym : symbols) {
      if (!delta.count({u, sym})) {
        throw Error(ErrorKind::non_total, "no row for (" + u + ", " + sym + ")");
      }
    }
  }
  // Rows leaving final states are subsumed by termination.
  for (const auto& e : table.entries) {
    if (is_final(e.source)) continue;
    StateId target = *rm.find_state(e.target);
    double reward = 0.0;
    if (rm.is_terminal(target)) {
      bool accepting = std::find(table.accepting.begin(), table.accepting.end(), e.target) !=
                       table.accepting.end();
      reward = accepting ? 1.0 : fail_reward;
    }
    std::size_t index = static_cast<std::size_t>(proposition_index(symbols, e.symbol));
    LabelSet only;
    only.insert(index);
    rm.edges.push_back({*rm.find_state(e.source), exact_label_guard(symbols, only), target,
                        RewardSpec::constant(reward)});
  }
  rm.bind_guards();
  return rm;
}

}  // namespace cra
