#include "cra/envs.hpp"

#include <algorithm>

#include "cra/error.hpp"

namespace cra {

std::string_view to_string(Action a) {
  switch (a) {
    case Action::north: return "N";
    case Action::south: return "S";
    case Action::east: return "E";
    case Action::west: return "W";
  }
  return "?";
}

std::vector<GridPosition> Layout::find(char glyph) const {
  std::vector<GridPosition> out;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (at({x, y}) == glyph) out.push_back({x, y});
    }
  }
  return out;
}

Layout parse_layout(std::string_view text) {
  static const std::string_view glyphs = "#.ABCD*Pcm@";
  Layout layout;
  std::vector<std::string> rows;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string row(text.substr(start, end - start));
    if (!row.empty() && row.back() == '\r') row.pop_back();
    if (!row.empty()) rows.push_back(std::move(row));
    start = end + 1;
  }
  if (rows.empty()) throw Error(ErrorKind::bad_config, "layout is empty");
  layout.width = static_cast<int>(rows.front().size());
  layout.height = static_cast<int>(rows.size());
  int starts = 0;
  for (int y = 0; y < layout.height; ++y) {
    const auto& row = rows[static_cast<std::size_t>(y)];
    if (static_cast<int>(row.size()) != layout.width) {
      throw Error(ErrorKind::bad_config, "layout row " + std::to_string(y + 1) + " has width " +
                                             std::to_string(row.size()) + ", expected " +
                                             std::to_string(layout.width));
    }
    for (int x = 0; x < layout.width; ++x) {
      char c = row[static_cast<std::size_t>(x)];
      if (glyphs.find(c) == std::string_view::npos) {
        throw Error(ErrorKind::bad_config, std::string("unknown layout glyph '") + c + "'");
      }
      if (c == '@') {
        layout.start = {x, y};
        ++starts;
      }
      layout.cells.push_back(c);
    }
  }
  if (starts != 1) throw Error(ErrorKind::bad_config, "layout needs exactly one '@' start cell");
  return layout;
}

std::string serialize_layout(const Layout& layout) {
  std::string out;
  for (int y = 0; y < layout.height; ++y) {
    for (int x = 0; x < layout.width; ++x) out += layout.at({x, y});
    out += '\n';
  }
  return out;
}

GridPosition move(const Layout& layout, GridPosition p, Action a) {
  GridPosition next = p;
  switch (a) {
    case Action::north: --next.y; break;
    case Action::south: ++next.y; break;
    case Action::east: ++next.x; break;
    case Action::west: --next.x; break;
  }
  return layout.blocked(next) ? p : next;
}

Environment::Environment(Layout layout, EnvConfig config)
    : layout_(std::move(layout)), config_(config) {
  if (config_.horizon < 1) throw Error(ErrorKind::bad_config, "horizon must be at least 1");
  if (config_.n_max < 1) throw Error(ErrorKind::bad_config, "n_max must be at least 1");
  if (config_.fixed_n && *config_.fixed_n < 1) {
    throw Error(ErrorKind::bad_config, "fixed N must be at least 1");
  }
}

int Environment::draw_n(Rng& rng) const {
  if (config_.fixed_n) return *config_.fixed_n;
  return 1 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(config_.n_max)));
}

void Environment::check_step(const EnvState& s) const {
  if (episode_over(s)) {
    throw Error(ErrorKind::episode_over, "episode reached its horizon of " +
                                             std::to_string(config_.horizon) + " steps");
  }
}

namespace {

GridPosition unique_glyph(const Layout& layout, char glyph, const char* what) {
  auto cells = layout.find(glyph);
  if (cells.size() != 1) {
    throw Error(ErrorKind::bad_config,
                std::string("layout needs exactly one ") + what + " cell ('" + glyph + "')");
  }
  return cells.front();
}

}  // namespace

// ---------------------------------------------------------------------------
// LetterEnv

Layout LetterEnv::default_layout() {
  return parse_layout(
      "@.....\n"
      "....D.\n"
      "......\n"
      "......\n"
      ".A..C.\n"
      "......\n");
}

LetterEnv::LetterEnv(EnvConfig config) : LetterEnv(default_layout(), config) {}

LetterEnv::LetterEnv(Layout layout, EnvConfig config)
    : Environment(std::move(layout), config), a_cell_(unique_glyph(layout_, 'A', "A")) {}

EnvState LetterEnv::reset(Rng& rng) const {
  EnvState s;
  s.agent = layout_.start;
  s.a_remaining = draw_n(rng);
  return s;
}

EnvState LetterEnv::step(const EnvState& s, Action a) const {
  check_step(s);
  EnvState next = s;
  next.agent = move(layout_, s.agent, a);
  ++next.steps;
  if (next.agent == a_cell_ && next.agent != s.agent && next.a_remaining > 0) {
    --next.a_remaining;
  }
  return next;
}

LabelSet LetterEnv::label(const EnvState& s, Action, const EnvState& next) const {
  LabelSet out;
  if (next.agent == s.agent) return out;
  char c = layout_.at(next.agent);
  if (next.agent == a_cell_) {
    out.insert(s.a_remaining > 0 ? 0 : 1);
  } else if (c >= 'A' && c <= 'D') {
    out.insert(static_cast<std::size_t>(c - 'A'));
  }
  return out;
}

std::uint64_t LetterEnv::full_key(const EnvState& s) const {
  return static_cast<std::uint64_t>(cell_id(s)) * 1024u + static_cast<std::uint64_t>(s.a_remaining);
}

std::unique_ptr<Environment> LetterEnv::with_config(EnvConfig config) const {
  return std::make_unique<LetterEnv>(layout_, config);
}

// ---------------------------------------------------------------------------
// OfficeEnv

Layout OfficeEnv::default_layout() {
  return parse_layout(
      "#################\n"
      "#...#...#...#...#\n"
      "#.D@..*...*...C.#\n"
      "#...#...#...#...#\n"
      "##.###########.##\n"
      "#...#...#...#...#\n"
      "#.*.#.P.#.m.#.*.#\n"
      "#...#...#...#...#\n"
      "##.###.###.###.##\n"
      "#...#c..#...#...#\n"
      "#.A...*...*...B.#\n"
      "#...#...#...#...#\n"
      "#################\n");
}

OfficeEnv::OfficeEnv(EnvConfig config) : OfficeEnv(default_layout(), config) {}

OfficeEnv::OfficeEnv(Layout layout, EnvConfig config)
    : Environment(std::move(layout), config),
      decorations_(layout_.find('*')),
      mail_(unique_glyph(layout_, 'm', "mail")),
      coffee_(unique_glyph(layout_, 'c', "coffee")),
      delivery_(unique_glyph(layout_, 'P', "delivery")) {
  std::size_t cell_bits = 1;
  while ((std::size_t{1} << cell_bits) < static_cast<std::size_t>(layout_.width * layout_.height)) {
    ++cell_bits;
  }
  if (cell_bits + 18 + decorations_.size() > 64) {
    throw Error(ErrorKind::bad_config, "too many decorations for the state key");
  }
}

std::optional<std::size_t> OfficeEnv::decoration_index(GridPosition p) const {
  auto it = std::find(decorations_.begin(), decorations_.end(), p);
  if (it == decorations_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - decorations_.begin());
}

EnvState OfficeEnv::reset(Rng& rng) const {
  EnvState s;
  s.agent = layout_.start;
  s.mail_remaining = draw_n(rng);
  s.decorations_intact = (1ULL << decorations_.size()) - 1ULL;
  return s;
}

EnvState OfficeEnv::step(const EnvState& s, Action a) const {
  check_step(s);
  EnvState next = s;
  next.agent = move(layout_, s.agent, a);
  ++next.steps;
  if (next.agent == s.agent) return next;
  if (next.agent == mail_ && next.mail_remaining > 0) {
    --next.mail_remaining;
    ++next.mail_carried;
  } else if (next.agent == coffee_) {
    ++next.coffees_carried;
  } else if (next.agent == delivery_) {
    if (next.coffees_carried > 0 && next.mail_carried > 0) {
      --next.coffees_carried;
      --next.mail_carried;
    }
  } else if (auto d = decoration_index(next.agent)) {
    next.decorations_intact &= ~(1ULL << *d);
  }
  return next;
}

LabelSet OfficeEnv::label(const EnvState& s, Action, const EnvState& next) const {
  LabelSet out;
  if (next.agent == s.agent) return out;
  if (next.agent == mail_) {
    out.insert(s.mail_remaining > 0 ? 0 : 1);
  } else if (next.agent == coffee_) {
    out.insert(2);
  } else if (next.agent == delivery_) {
    out.insert(3);
  } else if (auto d = decoration_index(next.agent)) {
    if ((s.decorations_intact >> *d) & 1ULL) out.insert(4);
  }
  return out;
}

std::uint64_t OfficeEnv::full_key(const EnvState& s) const {
  auto field = [](int v) { return static_cast<std::uint64_t>(std::clamp(v, 0, 63)); };
  std::uint64_t key = static_cast<std::uint64_t>(cell_id(s));
  key = (key << 6) | field(s.mail_remaining);
  key = (key << 6) | field(s.mail_carried);
  key = (key << 6) | field(s.coffees_carried);
  return (key << decorations_.size()) | s.decorations_intact;
}

std::unique_ptr<Environment> OfficeEnv::with_config(EnvConfig config) const {
  return std::make_unique<OfficeEnv>(layout_, config);
}

std::unique_ptr<Environment> make_environment(const std::string& name, EnvConfig config,
                                              const std::optional<Layout>& layout) {
  if (name == "letter") {
    return std::make_unique<LetterEnv>(layout ? *layout : LetterEnv::default_layout(), config);
  }
  if (name == "office") {
    return std::make_unique<OfficeEnv>(layout ? *layout : OfficeEnv::default_layout(), config);
  }
  throw Error(ErrorKind::bad_config, "unknown environment '" + name + "'");
}

// ---------------------------------------------------------------------------
// LabelBinding

LabelBinding::LabelBinding(const PropositionList& env_props, const PropositionList& machine_props,
                           const std::map<std::string, std::string>& rename) {
  for (const auto& [machine_name, env_name] : rename) {
    if (proposition_index(machine_props, machine_name) < 0) {
      throw Error(ErrorKind::bad_config,
                  "binding names unknown machine proposition '" + machine_name + "'");
    }
  }
  for (std::size_t i = 0; i < machine_props.size(); ++i) {
    auto it = rename.find(machine_props[i]);
    const std::string& env_name = it == rename.end() ? machine_props[i] : it->second;
    int index = proposition_index(env_props, env_name);
    if (index < 0) {
      throw Error(ErrorKind::bad_config, "machine proposition '" + machine_props[i] +
                                             "' has no environment event '" + env_name + "'");
    }
    source_.push_back(index);
    if (index != static_cast<int>(i)) identity_ = false;
  }
  if (machine_props.size() != env_props.size()) identity_ = false;
}

LabelSet LabelBinding::operator()(LabelSet env_label) const {
  if (identity_) return env_label;
  LabelSet out;
  for (std::size_t i = 0; i < source_.size(); ++i) {
    if (env_label.contains(static_cast<std::size_t>(source_[i]))) out.insert(i);
  }
  return out;
}

}  // namespace cra
