#include "cra/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "cra/machine_io.hpp"

#ifndef CRA_VERSION
#define CRA_VERSION "unknown"
#endif

namespace cra {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::qlearn: return "qlearn";
    case Algorithm::cql: return "cql";
    case Algorithm::crm: return "crm";
    case Algorithm::dqn: return "dqn";
    case Algorithm::dqn_crm: return "dqn-crm";
    case Algorithm::dqn_cql: return "dqn-cql";
  }
  return "?";
}

Algorithm parse_algorithm(std::string_view name) {
  for (Algorithm a : {Algorithm::qlearn, Algorithm::cql, Algorithm::crm, Algorithm::dqn,
                      Algorithm::dqn_crm, Algorithm::dqn_cql}) {
    if (to_string(a) == name) return a;
  }
  throw Error(ErrorKind::bad_config, "unknown algorithm '" + std::string(name) + "'");
}

bool is_deep(Algorithm a) {
  return a == Algorithm::dqn || a == Algorithm::dqn_crm || a == Algorithm::dqn_cql;
}

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto end = s.find(sep, start);
    if (end == std::string_view::npos) end = s.size();
    std::string item = trim(s.substr(start, end - start));
    if (!item.empty()) out.push_back(item);
    start = end + 1;
  }
  return out;
}

template <class T>
T parse_value(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T value{};
  in >> value;
  if (!in || !(in >> std::ws).eof()) {
    throw Error(ErrorKind::bad_config, "bad value for '" + key + "': '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw Error(ErrorKind::bad_config, "bad value for '" + key + "': '" + text + "'");
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  for (const auto& item : split(text, ',')) {
    auto dots = item.find("..");
    if (dots != std::string::npos) {
      auto lo = parse_value<long long>(key, item.substr(0, dots));
      auto hi = parse_value<long long>(key, item.substr(dots + 2));
      if (hi < lo) throw Error(ErrorKind::bad_config, "empty range in '" + key + "'");
      for (long long v = lo; v <= hi; ++v) out.push_back(static_cast<T>(v));
    } else {
      out.push_back(parse_value<T>(key, item));
    }
  }
  return out;
}

template <class T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(values[i]);
  }
  return out;
}

std::string resolve(const std::string& base_dir, const std::string& path) {
  if (path.empty()) return path;
  fs::path p(path);
  if (p.is_absolute()) return p.lexically_normal().string();
  return fs::absolute(fs::path(base_dir) / p).lexically_normal().string();
}

/// Reads the sections a config may contain; other sections (a manifest's
/// bookkeeping) are ignored.
class ConfigReader {
 public:
  explicit ConfigReader(const pt::ptree& tree) : tree_(tree) {}

  template <class F>
  void section(const std::string& name, const std::set<std::string>& keys, F&& apply) {
    auto child = tree_.get_child_optional(pt::ptree::path_type(name, '\0'));
    if (!child) return;
    for (const auto& [key, node] : *child) {
      if (!keys.count(key)) {
        throw Error(ErrorKind::bad_config, "unknown key '" + key + "' in [" + name + "]");
      }
      apply(key, trim(node.data()));
    }
  }

 private:
  const pt::ptree& tree_;
};

}  // namespace

ExperimentConfig parse_config(std::string_view text, const std::string& base_dir) {
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw SyntaxError(e.message(), 0, e.line());
  }
  ExperimentConfig c;
  ConfigReader reader(tree);
  std::optional<int> horizon;

  reader.section("experiment", {"name", "algorithm", "seeds", "output"},
                 [&](const std::string& k, const std::string& v) {
                   if (k == "name") c.name = v;
                   if (k == "algorithm") c.algorithm = parse_algorithm(v);
                   if (k == "seeds") c.seeds = parse_list<std::uint64_t>(k, v);
                   if (k == "output") c.output = resolve(base_dir, v);
                 });
  reader.section("env", {"name", "horizon", "n_max", "n", "layout"},
                 [&](const std::string& k, const std::string& v) {
                   if (k == "name") c.env = v;
                   if (k == "horizon") horizon = parse_value<int>(k, v);
                   if (k == "n_max") c.env_config.n_max = parse_value<int>(k, v);
                   if (k == "n") c.env_config.fixed_n = parse_value<int>(k, v);
                   if (k == "layout") c.layout = resolve(base_dir, v);
                 });
  reader.section("machine", {"file", "generator", "fail_reward", "ns", "binding"},
                 [&](const std::string& k, const std::string& v) {
                   if (k == "file") c.machine_file = resolve(base_dir, v);
                   if (k == "generator") c.generator = v;
                   if (k == "fail_reward") c.fail_reward = parse_value<double>(k, v);
                   if (k == "ns") c.ns = parse_list<int>(k, v);
                   if (k == "binding") {
                     for (const auto& pair : split(v, ',')) {
                       auto colon = pair.find(':');
                       if (colon == std::string::npos) {
                         throw Error(ErrorKind::bad_config, "binding entries look like M:E");
                       }
                       c.binding[trim(pair.substr(0, colon))] = trim(pair.substr(colon + 1));
                     }
                   }
                 });
  LearnParams& l = c.learn;
  reader.section("learn",
                 {"alpha", "gamma", "epsilon", "episodes", "success_threshold", "eval_every",
                  "eval_episodes", "eval_ns", "solved_window", "stop_when_solved", "max_steps",
                  "full_enumeration", "skip_unfired"},
                 [&](const std::string& k, const std::string& v) {
                   if (k == "alpha") l.alpha = parse_value<double>(k, v);
                   if (k == "gamma") l.gamma = parse_value<double>(k, v);
                   if (k == "epsilon") l.epsilon = parse_value<double>(k, v);
                   if (k == "episodes") l.episodes = parse_value<int>(k, v);
                   if (k == "success_threshold") l.success_threshold = parse_value<double>(k, v);
                   if (k == "eval_every") l.eval_every = parse_value<int>(k, v);
                   if (k == "eval_episodes") l.eval_episodes = parse_value<int>(k, v);
                   if (k == "eval_ns") l.eval_ns = parse_list<int>(k, v);
                   if (k == "solved_window") l.solved_window = parse_value<int>(k, v);
                   if (k == "stop_when_solved") l.stop_when_solved = parse_bool(k, v);
                   if (k == "max_steps") l.max_steps = parse_value<std::int64_t>(k, v);
                   if (k == "full_enumeration") l.full_enumeration = parse_bool(k, v);
                   if (k == "skip_unfired") l.skip_unfired = parse_bool(k, v);
                 });
  DeepParams& d = c.deep;
  reader.section("deep",
                 {"interactions", "hidden", "learning_rate", "buffer", "batch_base",
                  "target_period", "epsilon_start", "epsilon_end", "epsilon_anneal", "gamma",
                  "eval_every", "eval_episodes", "success_threshold", "precision", "checkpoint"},
                 [&](const std::string& k, const std::string& v) {
                   if (k == "interactions") d.interactions = parse_value<int>(k, v);
                   if (k == "hidden") d.hidden = parse_list<int>(k, v);
                   if (k == "learning_rate") d.learning_rate = parse_value<double>(k, v);
                   if (k == "buffer") d.buffer_capacity = parse_value<std::size_t>(k, v);
                   if (k == "batch_base") d.batch_base = parse_value<int>(k, v);
                   if (k == "target_period") d.target_period = parse_value<int>(k, v);
                   if (k == "epsilon_start") d.epsilon_start = parse_value<double>(k, v);
                   if (k == "epsilon_end") d.epsilon_end = parse_value<double>(k, v);
                   if (k == "epsilon_anneal") d.epsilon_anneal = parse_value<int>(k, v);
                   if (k == "gamma") d.gamma = parse_value<double>(k, v);
                   if (k == "eval_every") d.eval_every = parse_value<int>(k, v);
                   if (k == "eval_episodes") d.eval_episodes = parse_value<int>(k, v);
                   if (k == "success_threshold") d.success_threshold = parse_value<double>(k, v);
                   if (k == "precision") {
                     if (v != "double" && v != "float") {
                       throw Error(ErrorKind::bad_config, "precision is double or float");
                     }
                     c.single_precision = v == "float";
                   }
                   if (k == "checkpoint") c.checkpoint = resolve(base_dir, v);
                 });

  c.env_config.horizon = horizon.value_or(c.env == "office" ? 1000 : 500);
  if (c.env != "letter" && c.env != "office") {
    throw Error(ErrorKind::bad_config, "unknown environment '" + c.env + "'");
  }
  if (c.seeds.empty()) throw Error(ErrorKind::bad_config, "seeds must not be empty");
  if (c.machine_file.empty() == c.generator.empty()) {
    throw Error(ErrorKind::bad_config, "give exactly one of machine.file and machine.generator");
  }
  if (!c.machine_file.empty() && !fs::exists(c.machine_file)) {
    throw Error(ErrorKind::io, "machine file not found: " + c.machine_file);
  }
  if (!c.layout.empty() && !fs::exists(c.layout)) {
    throw Error(ErrorKind::io, "layout file not found: " + c.layout);
  }
  static const std::set<std::string> generators{"", "letter", "office", "rm-letter", "rm-office"};
  if (!generators.count(c.generator)) {
    throw Error(ErrorKind::bad_config, "unknown generator '" + c.generator + "'");
  }
  for (int n : c.ns) {
    if (n < 1) throw Error(ErrorKind::bad_config, "ns entries must be at least 1");
  }
  if (c.generator.rfind("rm-", 0) == 0 && c.ns.empty() && !c.env_config.fixed_n) {
    throw Error(ErrorKind::bad_config, "RM generators need machine.ns or env.n");
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::string dir = fs::absolute(fs::path(path)).parent_path().string();
  return parse_config(read_text_file(path), dir);
}

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream out;
  auto num = [](double v) { return format_number(v); };
  out << "[experiment]\n"
      << "name = " << c.name << "\n"
      << "algorithm = " << to_string(c.algorithm) << "\n"
      << "seeds = " << join(c.seeds) << "\n";
  if (!c.output.empty()) out << "output = " << c.output << "\n";
  out << "\n[env]\n"
      << "name = " << c.env << "\n"
      << "horizon = " << c.env_config.horizon << "\n"
      << "n_max = " << c.env_config.n_max << "\n";
  if (c.env_config.fixed_n) out << "n = " << *c.env_config.fixed_n << "\n";
  if (!c.layout.empty()) out << "layout = " << c.layout << "\n";
  out << "\n[machine]\n";
  if (!c.machine_file.empty()) out << "file = " << c.machine_file << "\n";
  if (!c.generator.empty()) out << "generator = " << c.generator << "\n";
  out << "fail_reward = " << num(c.fail_reward) << "\n";
  if (!c.ns.empty()) out << "ns = " << join(c.ns) << "\n";
  if (!c.binding.empty()) {
    out << "binding = ";
    bool first = true;
    for (const auto& [m, e] : c.binding) {
      out << (first ? "" : ", ") << m << ":" << e;
      first = false;
    }
    out << "\n";
  }
  const LearnParams& l = c.learn;
  out << "\n[learn]\n"
      << "alpha = " << num(l.alpha) << "\n"
      << "gamma = " << num(l.gamma) << "\n"
      << "epsilon = " << num(l.epsilon) << "\n"
      << "episodes = " << l.episodes << "\n"
      << "success_threshold = " << num(l.success_threshold) << "\n"
      << "eval_every = " << l.eval_every << "\n"
      << "eval_episodes = " << l.eval_episodes << "\n";
  if (!l.eval_ns.empty()) out << "eval_ns = " << join(l.eval_ns) << "\n";
  out << "solved_window = " << l.solved_window << "\n"
      << "stop_when_solved = " << (l.stop_when_solved ? "true" : "false") << "\n"
      << "max_steps = " << l.max_steps << "\n"
      << "full_enumeration = " << (l.full_enumeration ? "true" : "false") << "\n"
      << "skip_unfired = " << (l.skip_unfired ? "true" : "false") << "\n";
  const DeepParams& d = c.deep;
  out << "\n[deep]\n"
      << "interactions = " << d.interactions << "\n"
      << "hidden = " << join(d.hidden) << "\n"
      << "learning_rate = " << num(d.learning_rate) << "\n"
      << "buffer = " << d.buffer_capacity << "\n"
      << "batch_base = " << d.batch_base << "\n"
      << "target_period = " << d.target_period << "\n"
      << "epsilon_start = " << num(d.epsilon_start) << "\n"
      << "epsilon_end = " << num(d.epsilon_end) << "\n"
      << "epsilon_anneal = " << d.epsilon_anneal << "\n"
      << "gamma = " << num(d.gamma) << "\n"
      << "eval_every = " << d.eval_every << "\n"
      << "eval_episodes = " << d.eval_episodes << "\n"
      << "success_threshold = " << num(d.success_threshold) << "\n"
      << "precision = " << (c.single_precision ? "float" : "double") << "\n";
  if (!c.checkpoint.empty()) out << "checkpoint = " << c.checkpoint << "\n";
  return out.str();
}

std::string config_hash(const ExperimentConfig& config) {
  std::string text = serialize_config(config);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

CountingRewardAutomaton build_machine(const ExperimentConfig& c, int n) {
  if (c.generator == "letter") return letter_machine();
  if (c.generator == "office") return office_machine();
  if (c.generator == "rm-letter" || c.generator == "rm-office") {
    if (n < 1) throw Error(ErrorKind::bad_config, "RM generators need a fixed N");
    RewardMachine rm = c.generator == "rm-letter" ? generate_rm_letterenv(n) : generate_rm_office(n);
    return rm_to_cra(rm);
  }
  std::string text = read_text_file(c.machine_file);
  if (fs::path(c.machine_file).extension() == ".dfa") {
    return rm_to_cra(import_dfa_table(parse_dfa_table(text), c.fail_reward));
  }
  return parse_machine(text).as_cra();
}

std::unique_ptr<Environment> build_environment(const ExperimentConfig& c, int n) {
  EnvConfig config = c.env_config;
  if (n > 0) {
    config.fixed_n = n;
    config.n_max = std::max(config.n_max, n);
  }
  std::optional<Layout> layout;
  if (!c.layout.empty()) layout = parse_layout(read_text_file(c.layout));
  return make_environment(c.env, config, layout);
}

bool RunOutput::ok() const {
  return std::all_of(seeds.begin(), seeds.end(), [](const SeedOutcome& s) { return s.error.empty(); });
}

namespace {

struct Segment {
  int n = 0;
  std::vector<CurvePoint> curve;
  std::int64_t steps = 0;
  std::optional<std::int64_t> samples_to_solve;
};

template <class T>
Segment deep_segment(const Product& product, const ExperimentConfig& c, std::uint64_t seed,
                     const std::string& checkpoint) {
  DeepParams params = c.deep;
  params.seed = seed;
  DeepAlgorithm algo = c.algorithm == Algorithm::dqn       ? DeepAlgorithm::dqn
                       : c.algorithm == Algorithm::dqn_crm ? DeepAlgorithm::crm
                                                           : DeepAlgorithm::cql;
  DeepResult<T> r = dqn_train<T>(product, algo, params);
  Segment s;
  for (const auto& p : r.curve) s.curve.push_back({p.episodes, p.steps, p.mean_return, p.success_rate});
  s.steps = params.interactions;
  for (const auto& p : r.curve) {
    if (p.success_rate >= params.success_threshold) {
      s.samples_to_solve = p.steps;
      break;
    }
  }
  if (!checkpoint.empty()) save_checkpoint(r.net, checkpoint);
  return s;
}

Segment run_segment(const ExperimentConfig& c, int n, std::uint64_t seed, const std::string& checkpoint) {
  auto env = build_environment(c, n);
  CountingRewardAutomaton machine = build_machine(c, n);
  LabelBinding binding(env->propositions(), machine.propositions, c.binding);
  Product product(*env, machine, binding);
  if (c.algorithm == Algorithm::crm || c.algorithm == Algorithm::dqn_crm) {
    if (machine.counters != 0) {
      throw Error(ErrorKind::bad_config, "crm needs a machine without counters");
    }
  }
  if (is_deep(c.algorithm)) {
    Segment s = c.single_precision ? deep_segment<float>(product, c, seed, checkpoint)
                                   : deep_segment<double>(product, c, seed, checkpoint);
    s.n = n;
    return s;
  }
  LearnParams params = c.learn;
  params.seed = seed;
  LearnResult r = c.algorithm == Algorithm::qlearn ? q_learning(product, params) : cql(product, params);
  Segment s;
  s.n = n;
  s.curve = std::move(r.curve);
  s.steps = r.steps;
  s.samples_to_solve = r.samples_to_solve;
  return s;
}

SeedOutcome run_seed(const ExperimentConfig& c, std::uint64_t seed) {
  SeedOutcome out;
  out.seed = seed;
  auto start = std::chrono::steady_clock::now();
  std::ostringstream csv;
  try {
    std::vector<int> ns = c.ns;
    if (ns.empty()) ns.push_back(c.env_config.fixed_n.value_or(0));
    std::int64_t offset = 0;
    std::int64_t total_to_solve = 0;
    bool all_solved = true;
    for (int n : ns) {
      std::string checkpoint;
      if (!c.checkpoint.empty()) {
        checkpoint = c.checkpoint + ".seed" + std::to_string(seed) +
                     (c.ns.empty() ? "" : ".n" + std::to_string(n)) + ".bin";
      }
      Segment s = run_segment(c, n, seed, checkpoint);
      std::string label = n > 0 ? std::to_string(n) : "all";
      for (const CurvePoint& p : s.curve) {
        csv << seed << ',' << label << ',' << p.episode << ',' << p.steps << ',' << offset + p.steps
            << ',' << format_number(p.mean_return) << ',' << format_number(p.success_rate) << '\n';
      }
      offset += s.steps;
      std::string key = "n." + label + ".";
      out.summary[key + "steps"] = std::to_string(s.steps);
      out.summary[key + "samples_to_solve"] =
          s.samples_to_solve ? std::to_string(*s.samples_to_solve) : "none";
      if (s.samples_to_solve) total_to_solve += *s.samples_to_solve;
      all_solved = all_solved && s.samples_to_solve.has_value();
      if (!checkpoint.empty()) out.summary[key + "checkpoint"] = checkpoint;
    }
    out.summary["total_samples"] = std::to_string(offset);
    out.summary["total_samples_to_solve"] = all_solved ? std::to_string(total_to_solve) : "none";
    out.csv = csv.str();
  } catch (const std::exception& e) {
    out.error = e.what();
    out.csv.clear();
  }
  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::string utc_now() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

std::string hex(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

unsigned worker_threads() {
  if (const char* env = std::getenv("CRA_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

RunOutput run_experiment(const ExperimentConfig& config, unsigned threads) {
  RunOutput out;
  std::string started = utc_now();
  out.seeds.resize(config.seeds.size());
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(config.seeds.size())));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < config.seeds.size();) {
      out.seeds[i] = run_seed(config, config.seeds[i]);
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  out.csv = std::string(kCurveHeader) + "\n";
  for (const auto& s : out.seeds) out.csv += s.csv;

  std::ostringstream m;
  m << serialize_config(config) << "\n[manifest]\n"
    << "version = " << CRA_VERSION << "\n"
    << "config_hash = " << config_hash(config) << "\n"
    << "threads = " << threads << "\n"
    << "started = " << started << "\n"
    << "finished = " << utc_now() << "\n";
  for (const auto& s : out.seeds) {
    m << "\n[seed-" << s.seed << "]\n"
      << "train_stream = " << hex(derive_seed(s.seed, 0)) << "\n"
      << "eval_stream = " << hex(derive_seed(s.seed, 1)) << "\n";
    if (is_deep(config.algorithm)) m << "init_stream = " << hex(derive_seed(s.seed, 2)) << "\n";
    m << "status = " << (s.error.empty() ? "ok" : "error") << "\n";
    if (!s.error.empty()) m << "error = " << s.error << "\n";
    for (const auto& [k, v] : s.summary) m << k << " = " << v << "\n";
    char wall[32];
    std::snprintf(wall, sizeof wall, "%.3f", s.wall_seconds);
    m << "wall_seconds = " << wall << "\n";
  }
  out.manifest = m.str();
  return out;
}

// ---------------------------------------------------------------------------
// Complexity

std::vector<ComplexityRow> complexity_table(std::string_view task, int n_max) {
  if (n_max < 1) throw Error(ErrorKind::bad_config, "--n-max must be at least 1");
  bool letter = task == "letter";
  if (!letter && task != "office") {
    throw Error(ErrorKind::bad_config, "unknown task '" + std::string(task) + "'");
  }
  Complexity cra = complexity(letter ? letter_machine() : office_machine());
  std::vector<ComplexityRow> rows;
  for (int n = 1; n <= n_max; ++n) {
    RewardMachine rm = letter ? generate_rm_letterenv(n) : generate_rm_office(n);
    rows.push_back({n, cra, complexity(rm)});
  }
  return rows;
}

std::string format_complexity(const std::vector<ComplexityRow>& rows) {
  std::ostringstream out;
  out << "n,cra_states,cra_non_terminal,cra_transitions,rm_states,rm_non_terminal,rm_transitions\n";
  for (const auto& r : rows) {
    out << r.n << ',' << r.cra.states << ',' << r.cra.non_terminal_states << ','
        << r.cra.transitions << ',' << r.rm.states << ',' << r.rm.non_terminal_states << ','
        << r.rm.transitions << '\n';
  }
  return out.str();
}

AffineFit affine_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error(ErrorKind::bad_config, "affine fit needs at least two points");
  }
  const double n = static_cast<double>(x.size());
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  AffineFit fit;
  fit.slope = sxx > 0 ? sxy / sxx : 0.0;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double e = y[i] - (fit.intercept + fit.slope * x[i]);
    ss_res += e * e;
  }
  fit.r2 = syy > 0 ? 1.0 - ss_res / syy : (ss_res == 0 ? 1.0 : 0.0);
  return fit;
}

// ---------------------------------------------------------------------------
// Result files

std::vector<CurveRow> parse_curve_csv(std::string_view text) {
  std::vector<CurveRow> rows;
  std::size_t line_no = 0, pos = 0;
  bool header = false;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string line = trim(text.substr(pos, end - pos));
    std::size_t offset = pos;
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    if (!header) {
      if (line != kCurveHeader) throw SyntaxError("unexpected CSV header", offset, line_no, 1);
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::size_t start = 0;
    for (;;) {
      auto comma = line.find(',', start);
      f.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (f.size() != 7) throw SyntaxError("expected 7 fields", offset, line_no, 1);
    CurveRow r;
    try {
      r.seed = f[0];
      r.n = f[1];
      std::size_t used = 0;
      auto whole = [&](const std::string& s) {
        long long v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return static_cast<std::int64_t>(v);
      };
      auto real = [&](const std::string& s) {
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
      };
      r.episode = whole(f[2]);
      r.steps = whole(f[3]);
      r.samples = whole(f[4]);
      r.mean_return = real(f[5]);
      r.success_rate = real(f[6]);
    } catch (const std::logic_error&) {
      throw SyntaxError("bad number", offset, line_no, 1);
    }
    rows.push_back(r);
  }
  if (!header) throw SyntaxError("missing CSV header", 0, 1, 1);
  return rows;
}

Moments moments(const std::vector<double>& values) {
  Moments m;
  m.count = values.size();
  if (values.empty()) return m;
  m.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(m.count);
  if (m.count > 1) {
    double ss = 0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    m.variance = ss / static_cast<double>(m.count - 1);
  }
  return m;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::nan("");
  std::sort(values.begin(), values.end());
  std::size_t h = values.size() / 2;
  return values.size() % 2 ? values[h] : 0.5 * (values[h - 1] + values[h]);
}

namespace {

/// Rows of each seed in file order.
std::vector<std::pair<std::string, std::vector<const CurveRow*>>> by_seed(
    const std::vector<CurveRow>& rows) {
  std::vector<std::pair<std::string, std::vector<const CurveRow*>>> out;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& p) { return p.first == r.seed; });
    if (it == out.end()) {
      out.push_back({r.seed, {}});
      it = out.end() - 1;
    }
    it->second.push_back(&r);
  }
  return out;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "NA";
  return format_number(v);
}

}  // namespace

std::vector<SeriesPoint> aggregate_curve(const std::vector<CurveRow>& rows, bool success_rate) {
  auto seeds = by_seed(rows);
  std::size_t longest = 0;
  for (const auto& s : seeds) longest = std::max(longest, s.second.size());
  std::vector<SeriesPoint> out;
  for (std::size_t i = 0; i < longest; ++i) {
    std::vector<double> xs, ys;
    for (const auto& s : seeds) {
      if (i >= s.second.size()) continue;
      xs.push_back(static_cast<double>(s.second[i]->samples));
      ys.push_back(success_rate ? s.second[i]->success_rate : s.second[i]->mean_return);
    }
    Moments m = moments(ys);
    out.push_back({moments(xs).mean, m.mean, m.variance});
  }
  return out;
}

std::string make_report(const std::vector<std::pair<std::string, std::vector<CurveRow>>>& files,
                        const ReportOptions& options) {
  if (options.window < 1) throw Error(ErrorKind::bad_config, "window must be at least 1");
  std::ostringstream curve, per_n, total;
  curve << "file,n,index,seeds,samples_mean,mean_return_mean,mean_return_var,success_rate_mean,"
           "success_rate_var\n";
  per_n << "file,n,seeds,solved,samples_to_solve_mean,samples_to_solve_var,"
           "samples_to_solve_median\n";
  total << "file,seeds,solved,total_samples_mean,total_samples_var,total_samples_median\n";
  for (const auto& [name, rows] : files) {
    std::vector<std::string> ns;
    for (const auto& r : rows) {
      if (std::find(ns.begin(), ns.end(), r.n) == ns.end()) ns.push_back(r.n);
    }
    auto seeds = by_seed(rows);
    std::map<std::string, double> seed_total;
    std::set<std::string> seed_unsolved;
    for (const auto& n : ns) {
      std::vector<std::vector<const CurveRow*>> groups;
      for (const auto& [seed, seed_rows] : seeds) {
        std::vector<const CurveRow*> g;
        for (const CurveRow* r : seed_rows) {
          if (r->n == n) g.push_back(r);
        }
        groups.push_back(g);
      }
      std::size_t longest = 0;
      for (const auto& g : groups) longest = std::max(longest, g.size());
      for (std::size_t i = 0; i < longest; ++i) {
        std::vector<double> xs, ret, succ;
        for (const auto& g : groups) {
          if (i >= g.size()) continue;
          xs.push_back(static_cast<double>(g[i]->samples));
          ret.push_back(g[i]->mean_return);
          succ.push_back(g[i]->success_rate);
        }
        Moments r = moments(ret), s = moments(succ);
        curve << name << ',' << n << ',' << i << ',' << xs.size() << ',' << fmt(moments(xs).mean)
              << ',' << fmt(r.mean) << ',' << fmt(r.variance) << ',' << fmt(s.mean) << ','
              << fmt(s.variance) << '\n';
      }
      std::vector<double> solved;
      std::size_t present = 0;
      for (std::size_t k = 0; k < groups.size(); ++k) {
        const auto& g = groups[k];
        const std::string& seed = seeds[k].first;
        if (g.empty()) {
          seed_unsolved.insert(seed);
          continue;
        }
        ++present;
        int streak = 0;
        std::optional<std::int64_t> hit;
        for (std::size_t i = 0; i < g.size() && !hit; ++i) {
          streak = g[i]->success_rate >= options.threshold ? streak + 1 : 0;
          if (streak == options.window) hit = g[i + 1 - static_cast<std::size_t>(options.window)]->steps;
        }
        if (hit) {
          solved.push_back(static_cast<double>(*hit));
          seed_total[seed] += static_cast<double>(*hit);
        } else {
          seed_unsolved.insert(seed);
        }
      }
      Moments m = moments(solved);
      per_n << name << ',' << n << ',' << present << ',' << solved.size() << ','
            << fmt(solved.empty() ? std::nan("") : m.mean) << ','
            << fmt(solved.empty() ? std::nan("") : m.variance) << ',' << fmt(median(solved)) << '\n';
    }
    std::vector<double> totals;
    for (const auto& [seed, value] : seed_total) {
      if (!seed_unsolved.count(seed)) totals.push_back(value);
    }
    Moments m = moments(totals);
    total << name << ',' << seeds.size() << ',' << totals.size() << ','
          << fmt(totals.empty() ? std::nan("") : m.mean) << ','
          << fmt(totals.empty() ? std::nan("") : m.variance) << ',' << fmt(median(totals)) << '\n';
  }
  return curve.str() + "\n" + per_n.str() + "\n" + total.str();
}

// ---------------------------------------------------------------------------
// SVG

namespace {

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape_xml(std::string_view s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

/// Round tick step (1, 2 or 5 times a power of ten) giving about five ticks.
double tick_step(double range) {
  if (range <= 0) return 1.0;
  double raw = range / 5.0;
  double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double r = raw / mag;
  return (r < 1.5 ? 1 : r < 3.5 ? 2 : r < 7.5 ? 5 : 10) * mag;
}

std::string tick_label(double v) {
  char buf[32];
  if (std::abs(v) < 1e-12) v = 0.0;
  if (std::abs(v - std::round(v)) < 1e-9 && std::abs(v) < 1e12) {
    std::snprintf(buf, sizeof buf, "%.0f", v);
  } else {
    std::snprintf(buf, sizeof buf, "%g", v);
  }
  return buf;
}

}  // namespace

std::string render_svg(const std::vector<PlotSeries>& series, const std::string& title,
                       const std::string& y_label) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  const double width = 720, height = 440;
  const double left = 70, right = 170, top = 40, bottom = 55;
  const double pw = width - left - right, ph = height - top - bottom;

  double x_max = 0, y_min = 0, y_max = 0;
  bool any = false;
  for (const auto& s : series) {
    for (const auto& p : s.points) {
      double sd = std::sqrt(p.variance);
      if (!any) {
        y_min = p.mean - sd;
        y_max = p.mean + sd;
        any = true;
      }
      x_max = std::max(x_max, p.x);
      y_min = std::min(y_min, p.mean - sd);
      y_max = std::max(y_max, p.mean + sd);
    }
  }
  if (!any) throw Error(ErrorKind::bad_config, "nothing to plot");
  y_min = std::min(y_min, 0.0);
  if (y_max <= y_min) y_max = y_min + 1;
  if (x_max <= 0) x_max = 1;
  double xs = tick_step(x_max), ys = tick_step(y_max - y_min);
  x_max = std::ceil(x_max / xs) * xs;
  y_min = std::floor(y_min / ys) * ys;
  y_max = std::ceil(y_max / ys) * ys;
  auto X = [&](double x) { return left + pw * x / x_max; };
  auto Y = [&](double y) { return top + ph * (1 - (y - y_min) / (y_max - y_min)); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << px(left + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
    << escape_xml(title) << "</text>\n";
  for (double t = 0; t <= x_max + xs / 2; t += xs) {
    o << "<line x1=\"" << px(X(t)) << "\" y1=\"" << px(top) << "\" x2=\"" << px(X(t)) << "\" y2=\""
      << px(top + ph) << "\" stroke=\"#e5e5e5\"/>\n";
    o << "<text x=\"" << px(X(t)) << "\" y=\"" << px(top + ph + 18)
      << "\" text-anchor=\"middle\">" << tick_label(t) << "</text>\n";
  }
  for (double t = y_min; t <= y_max + ys / 2; t += ys) {
    o << "<line x1=\"" << px(left) << "\" y1=\"" << px(Y(t)) << "\" x2=\"" << px(left + pw)
      << "\" y2=\"" << px(Y(t)) << "\" stroke=\"#e5e5e5\"/>\n";
    o << "<text x=\"" << px(left - 8) << "\" y=\"" << px(Y(t) + 4) << "\" text-anchor=\"end\">"
      << tick_label(t) << "</text>\n";
  }
  o << "<rect x=\"" << px(left) << "\" y=\"" << px(top) << "\" width=\"" << px(pw) << "\" height=\""
    << px(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";
  o << "<text x=\"" << px(left + pw / 2) << "\" y=\"" << px(height - 14)
    << "\" text-anchor=\"middle\">environment samples</text>\n";
  o << "<text transform=\"translate(18 " << px(top + ph / 2)
    << ") rotate(-90)\" text-anchor=\"middle\">" << escape_xml(y_label) << "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = palette[i % std::size(palette)];
    if (!s.points.empty()) {
      o << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
      for (const auto& p : s.points) o << px(X(p.x)) << ',' << px(Y(p.mean + std::sqrt(p.variance))) << ' ';
      for (auto it = s.points.rbegin(); it != s.points.rend(); ++it) {
        o << px(X(it->x)) << ',' << px(Y(it->mean - std::sqrt(it->variance))) << ' ';
      }
      o << "\"/>\n";
      o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
      for (const auto& p : s.points) o << px(X(p.x)) << ',' << px(Y(p.mean)) << ' ';
      o << "\"/>\n";
    }
    double ly = top + 10 + 20.0 * static_cast<double>(i);
    o << "<line x1=\"" << px(left + pw + 15) << "\" y1=\"" << px(ly) << "\" x2=\"" << px(left + pw + 40)
      << "\" y2=\"" << px(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << px(left + pw + 46) << "\" y=\"" << px(ly + 4) << "\">" << escape_xml(s.label)
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace cra
