#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cra/guard.hpp"
#include "cra/random.hpp"

namespace cra {

struct GridPosition {
  int x = 0;
  int y = 0;
  friend bool operator==(const GridPosition&, const GridPosition&) = default;
  friend auto operator<=>(const GridPosition&, const GridPosition&) = default;
};

/// North decreases y (the first layout line is y = 0).
enum class Action { north, south, east, west };
inline constexpr int kActionCount = 4;
inline constexpr std::array<Action, 4> kActions{Action::north, Action::south, Action::east,
                                                Action::west};
std::string_view to_string(Action a);

/// Character grid: `#` wall, `.` floor, letters A-D, `*` decoration, `P`
/// delivery point, `c` coffee, `m` mail, `@` start (floor).
struct Layout {
  int width = 0;
  int height = 0;
  std::vector<char> cells;  // row-major, y * width + x
  GridPosition start;

  char at(GridPosition p) const { return cells[static_cast<std::size_t>(p.y * width + p.x)]; }
  bool inside(GridPosition p) const { return p.x >= 0 && p.y >= 0 && p.x < width && p.y < height; }
  bool blocked(GridPosition p) const { return !inside(p) || at(p) == '#'; }
  std::vector<GridPosition> find(char glyph) const;
};

Layout parse_layout(std::string_view text);
std::string serialize_layout(const Layout& layout);
GridPosition move(const Layout& layout, GridPosition p, Action a);

/// One value type for both environments; each uses its own fields.
struct EnvState {
  GridPosition agent;
  int steps = 0;
  int a_remaining = 0;
  int mail_remaining = 0;
  int mail_carried = 0;
  int coffees_carried = 0;
  std::uint64_t decorations_intact = 0;  // bit i: i-th decoration of the layout

  friend bool operator==(const EnvState&, const EnvState&) = default;
};

struct EnvConfig {
  int horizon = 500;
  int n_max = 10;
  /// When set, every episode uses this N instead of drawing one.
  std::optional<int> fixed_n;
};

class Environment {
 public:
  Environment(Layout layout, EnvConfig config);
  virtual ~Environment() = default;

  virtual std::string_view name() const = 0;
  virtual const PropositionList& propositions() const = 0;
  /// Draws N from {1..n_max} (unless fixed) and places the agent at start.
  virtual EnvState reset(Rng& rng) const = 0;
  /// Throws episode_over once `horizon` steps have elapsed.
  virtual EnvState step(const EnvState& s, Action a) const = 0;
  virtual LabelSet label(const EnvState& s, Action a, const EnvState& next) const = 0;
  /// Key over every field except `steps`; used for explicit enumeration.
  virtual std::uint64_t full_key(const EnvState& s) const = 0;
  virtual std::unique_ptr<Environment> with_config(EnvConfig config) const = 0;

  const Layout& layout() const { return layout_; }
  const EnvConfig& config() const { return config_; }
  int horizon() const { return config_.horizon; }
  bool episode_over(const EnvState& s) const { return s.steps >= config_.horizon; }
  /// Agent cell index, the observation used by learners.
  std::int64_t cell_id(const EnvState& s) const { return s.agent.y * layout_.width + s.agent.x; }

 protected:
  int draw_n(Rng& rng) const;
  void check_step(const EnvState& s) const;

  Layout layout_;
  EnvConfig config_;
};

/// 6x6 letter grid. Entering the A cell shows A while observations remain,
/// then B; B, C and D are otherwise shown on their own cells.
class LetterEnv final : public Environment {
 public:
  explicit LetterEnv(EnvConfig config = {});
  LetterEnv(Layout layout, EnvConfig config);

  std::string_view name() const override { return "letter"; }
  const PropositionList& propositions() const override { return props_; }
  EnvState reset(Rng& rng) const override;
  EnvState step(const EnvState& s, Action a) const override;
  LabelSet label(const EnvState& s, Action a, const EnvState& next) const override;
  std::uint64_t full_key(const EnvState& s) const override;
  std::unique_ptr<Environment> with_config(EnvConfig config) const override;

  static Layout default_layout();
  GridPosition a_cell() const { return a_cell_; }

 private:
  PropositionList props_{"A", "B", "C", "D"};
  GridPosition a_cell_;
};

/// Office gridworld: mail room, coffee machine, delivery point P and
/// breakable decorations. Events: M, EM, Cf, Pd, Dk.
class OfficeEnv final : public Environment {
 public:
  explicit OfficeEnv(EnvConfig config = {1000, 10, std::nullopt});
  OfficeEnv(Layout layout, EnvConfig config);

  std::string_view name() const override { return "office"; }
  const PropositionList& propositions() const override { return props_; }
  EnvState reset(Rng& rng) const override;
  EnvState step(const EnvState& s, Action a) const override;
  LabelSet label(const EnvState& s, Action a, const EnvState& next) const override;
  std::uint64_t full_key(const EnvState& s) const override;
  std::unique_ptr<Environment> with_config(EnvConfig config) const override;

  static Layout default_layout();
  const std::vector<GridPosition>& decorations() const { return decorations_; }
  std::optional<std::size_t> decoration_index(GridPosition p) const;

 private:
  PropositionList props_{"M", "EM", "Cf", "Pd", "Dk"};
  std::vector<GridPosition> decorations_;
  GridPosition mail_, coffee_, delivery_;
};

std::unique_ptr<Environment> make_environment(const std::string& name, EnvConfig config,
                                              const std::optional<Layout>& layout = {});

/// Maps environment labels onto a machine's propositions. Each machine
/// proposition reads one environment proposition (same name unless
/// renamed); environment events with no reader are dropped.
class LabelBinding {
 public:
  LabelBinding() = default;
  /// `rename` maps machine proposition -> environment proposition.
  LabelBinding(const PropositionList& env_props, const PropositionList& machine_props,
               const std::map<std::string, std::string>& rename = {});

  LabelSet operator()(LabelSet env_label) const;

 private:
  std::vector<int> source_;
  bool identity_ = true;
};

}  // namespace cra
