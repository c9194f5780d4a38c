// cra: command-line front end. Exit status 0 on success, 1 when the input is
// well-formed but fails (invalid machine, rejected word, failed seed, bad
// data), 2 on usage and I/O errors.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "cra/experiment.hpp"
#include "cra/machine_io.hpp"

namespace fs = std::filesystem;
using namespace cra;

namespace {

constexpr int kFail = 1;
constexpr int kUsage = 2;

std::vector<LabelSet> parse_word(const PropositionList& props, const std::string& input) {
  std::vector<LabelSet> word;
  bool tokens = input.find_first_of(" ,") != std::string::npos;
  if (!tokens) {
    for (char ch : input) word.push_back(LabelSet::of(props, {std::string_view(&ch, 1)}));
    return word;
  }
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    std::vector<std::string> names;
    if (token != "-" && token != "{}") {
      std::size_t start = 0;
      for (;;) {
        auto plus = token.find('+', start);
        names.push_back(token.substr(start, plus == std::string::npos ? plus : plus - start));
        if (plus == std::string::npos) break;
        start = plus + 1;
      }
    }
    word.push_back(LabelSet::of(props, std::span<const std::string>(names)));
    token.clear();
  };
  for (char ch : input) {
    if (ch == ' ' || ch == ',') {
      flush();
    } else {
      token += ch;
    }
  }
  flush();
  return word;
}

int cmd_validate(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return kUsage;
  }
  try {
    if (fs::path(path).extension() == ".dfa") {
      RewardMachine rm = import_dfa_table(parse_dfa_table(text));
      ValidationReport report = validate(rm);
      if (!report.ok()) {
        std::cout << report.to_string();
        return kFail;
      }
    } else {
      MachineDocument doc = parse_machine_unchecked(text);
      ValidationReport report = doc.validate();
      if (!report.ok()) {
        std::cout << path << ": invalid\n" << report.to_string();
        return kFail;
      }
    }
  } catch (const SyntaxError& e) {
    std::cout << path << ":" << e.line() << ":" << e.column() << ": " << e.what() << "\n";
    return kFail;
  } catch (const Error& e) {
    std::cout << path << ": " << to_string(e.kind()) << ": " << e.what() << "\n";
    return kFail;
  }
  std::cout << path << ": ok\n";
  return 0;
}

int cmd_accept(const std::string& path, const std::string& input) {
  MachineDocument doc = load_machine(path);
  const auto* acceptor = std::get_if<AcceptorMachine>(&doc.machine);
  if (!acceptor) {
    std::cerr << path << " is a " << to_string(doc.kind) << ", not an acceptor\n";
    return kUsage;
  }
  std::vector<LabelSet> word = parse_word(acceptor->machine.propositions, input);
  bool ok = accept(*acceptor, word);
  std::cout << (ok ? "ACCEPT" : "REJECT") << "\n";
  return ok ? 0 : kFail;
}

int cmd_run(const std::string& path, std::string output, unsigned threads) {
  ExperimentConfig config = load_config(path);
  if (!output.empty()) config.output = fs::absolute(output).lexically_normal().string();
  if (config.output.empty()) {
    std::cerr << "no output path: set experiment.output or pass --output\n";
    return kUsage;
  }
  RunOutput out = run_experiment(config, threads ? threads : worker_threads());
  fs::path csv(config.output);
  if (csv.has_parent_path()) fs::create_directories(csv.parent_path());
  write_text_file(config.output, out.csv);
  write_text_file(config.output + ".manifest", out.manifest);
  for (const auto& s : out.seeds) {
    std::cerr << "seed " << s.seed << ": ";
    if (!s.error.empty()) {
      std::cerr << "error: " << s.error << "\n";
      continue;
    }
    auto it = s.summary.find("total_samples_to_solve");
    std::cerr << "samples to solve " << (it == s.summary.end() ? "none" : it->second) << "\n";
  }
  std::cout << config.output << "\n";
  return out.ok() ? 0 : kFail;
}

int cmd_complexity(const std::string& task, int n_max) {
  auto rows = complexity_table(task, n_max);
  std::cout << format_complexity(rows);
  if (rows.size() >= 2) {
    std::vector<double> x, y;
    for (const auto& r : rows) {
      x.push_back(r.n);
      y.push_back(static_cast<double>(r.rm.states));
    }
    AffineFit fit = affine_fit(x, y);
    std::cerr << "rm_states ~ " << format_number(fit.intercept) << " + " << format_number(fit.slope)
              << " N, R^2 = " << format_number(fit.r2) << "\n";
  }
  return 0;
}

int cmd_plot(const std::vector<std::string>& inputs, std::vector<std::string> labels,
             const std::string& output, const std::string& metric, const std::string& title) {
  bool success = metric == "success";
  if (!success && metric != "return") {
    std::cerr << "--metric is success or return\n";
    return kUsage;
  }
  std::vector<PlotSeries> series;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto rows = parse_curve_csv(read_text_file(inputs[i]));
    if (rows.empty()) {
      std::cerr << inputs[i] << ": no data rows\n";
      return kFail;
    }
    std::string label = i < labels.size() ? labels[i] : fs::path(inputs[i]).stem().string();
    series.push_back({label, aggregate_curve(rows, success)});
  }
  std::string svg = render_svg(series, title, success ? "greedy success rate" : "greedy return");
  write_text_file(output, svg);
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const ReportOptions& options,
               const std::string& output) {
  std::vector<std::pair<std::string, std::vector<CurveRow>>> files;
  for (const auto& path : inputs) {
    files.push_back({fs::path(path).stem().string(), parse_curve_csv(read_text_file(path))});
  }
  std::string report = make_report(files, options);
  if (output.empty()) {
    std::cout << report;
  } else {
    write_text_file(output, report);
  }
  return 0;
}

int cmd_import_dfa(const std::string& path, double fail_reward, const std::string& output) {
  RewardMachine rm = import_dfa_table(parse_dfa_table(read_text_file(path)), fail_reward);
  std::string text = serialize_machine(rm);
  if (output.empty()) {
    std::cout << text;
  } else {
    write_text_file(output, text);
  }
  return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& checkpoint, int episodes,
                 std::uint64_t seed, int n) {
  ExperimentConfig config = load_config(config_path);
  if (!is_deep(config.algorithm)) {
    std::cerr << "evaluate needs a deep algorithm in the config\n";
    return kUsage;
  }
  if (n == 0 && !config.ns.empty()) n = config.ns.front();
  auto env = build_environment(config, n);
  CountingRewardAutomaton machine = build_machine(config, n);
  Product product(*env, machine, LabelBinding(env->propositions(), machine.propositions, config.binding));
  FeatureEncoder encoder(product, config.algorithm != Algorithm::dqn);
  Mlp<double> net = load_checkpoint(checkpoint);
  if (net.input_size() != encoder.size() || net.output_size() != kActionCount) {
    std::cerr << "checkpoint shape " << net.input_size() << " -> " << net.output_size()
              << " does not match the config (" << encoder.size() << " -> " << kActionCount << ")\n";
    return kFail;
  }
  EvalResult r = evaluate_greedy(product, network_policy(net, encoder), episodes, derive_seed(seed, 1));
  std::cout << "episodes = " << r.episodes << "\n"
            << "mean_return = " << format_number(r.mean_return) << "\n"
            << "success_rate = " << format_number(r.success_rate) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counting reward automata: machines, experiments and reports"};
  app.require_subcommand(1);

  std::string path, input, output, task = "letter", metric = "success", title, checkpoint;
  std::vector<std::string> inputs, labels;
  unsigned threads = 0;
  int n_max = 10, episodes = 20, n = 0;
  double fail_reward = 0.0;
  std::uint64_t seed = 0;
  ReportOptions report;

  auto* validate_cmd = app.add_subcommand("validate", "Parse and validate a machine file");
  validate_cmd->add_option("path", path, "Machine file")->required();

  auto* accept_cmd = app.add_subcommand("accept", "Run an acceptor on a word");
  accept_cmd->add_option("path", path, "Acceptor file")->required();
  accept_cmd->add_option("--input", input,
                         "Word: one proposition per character, or space/comma separated labels "
                         "with + joining propositions and - for the empty label")
      ->required();

  auto* run_cmd = app.add_subcommand("run", "Run an experiment config (or a manifest)");
  run_cmd->add_option("config", path, "Config file")->required();
  run_cmd->add_option("--output", output, "CSV path (overrides experiment.output)");
  run_cmd->add_option("--threads", threads, "Worker threads (default: CRA_THREADS or all cores)");

  auto* complexity_cmd = app.add_subcommand("complexity", "Machine sizes against N");
  complexity_cmd->add_option("--task", task, "letter or office")->check(CLI::IsMember({"letter", "office"}));
  complexity_cmd->add_option("--n-max", n_max, "Largest N")->required();

  auto* plot_cmd = app.add_subcommand("plot", "Learning curves as SVG");
  plot_cmd->add_option("csv", inputs, "Result CSV files")->required();
  plot_cmd->add_option("--output", output, "SVG path")->required();
  plot_cmd->add_option("--label", labels, "Series labels, in input order");
  plot_cmd->add_option("--metric", metric, "success or return");
  plot_cmd->add_option("--title", title, "Plot title");

  auto* report_cmd = app.add_subcommand("report", "Mean/variance tables from result CSVs");
  report_cmd->add_option("csv", inputs, "Result CSV files")->required();
  report_cmd->add_option("--threshold", report.threshold, "Success rate counted as solved");
  report_cmd->add_option("--window", report.window, "Consecutive evaluations at the threshold");
  report_cmd->add_option("--output", output, "Write the report here instead of stdout");

  auto* import_cmd = app.add_subcommand("import-dfa", "Convert a DFA table to a reward machine");
  import_cmd->add_option("path", path, "DFA table")->required();
  import_cmd->add_option("--fail-reward", fail_reward, "Reward for entering a trap state");
  import_cmd->add_option("--output", output, "Write the machine here instead of stdout");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Greedy evaluation of a network checkpoint");
  evaluate_cmd->add_option("config", path, "Experiment config the network was trained with")->required();
  evaluate_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  evaluate_cmd->add_option("--episodes", episodes, "Evaluation episodes");
  evaluate_cmd->add_option("--seed", seed, "Evaluation seed");
  evaluate_cmd->add_option("--n", n, "Fixed N for per-N configs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*validate_cmd) return cmd_validate(path);
    if (*accept_cmd) return cmd_accept(path, input);
    if (*run_cmd) return cmd_run(path, output, threads);
    if (*complexity_cmd) return cmd_complexity(task, n_max);
    if (*plot_cmd) return cmd_plot(inputs, labels, output, metric, title);
    if (*report_cmd) return cmd_report(inputs, report, output);
    if (*import_cmd) return cmd_import_dfa(path, fail_reward, output);
    if (*evaluate_cmd) return cmd_evaluate(path, checkpoint, episodes, seed, n);
  } catch (const SyntaxError& e) {
    std::cerr << "syntax error";
    if (e.line()) std::cerr << " at line " << e.line();
    std::cerr << ": " << e.what() << "\n";
    return kFail;
  } catch (const Error& e) {
    std::cerr << to_string(e.kind()) << ": " << e.what() << "\n";
    return e.kind() == ErrorKind::io || e.kind() == ErrorKind::bad_config ||
                   e.kind() == ErrorKind::unknown_proposition
               ? kUsage
               : kFail;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFail;
  }
  return kUsage;
}
