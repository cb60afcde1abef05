// jumpent_cli <scenario> [--config file] [--seed n] [--out dir] [--threads n]
//
// Exit status: 0 when every record passes, 1 when a record fails (named on
// stderr), 2 for a bad config or command line.

#include "jumpent/experiment.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> threads;
};

int run(const std::string& scenario, const Overrides& o) {
  using namespace jumpent;
  io::json j = io::json::object();
  if (!o.config.empty()) j = io::read_json(o.config);
  io::json& cfg = j.is_object() && j.contains("config") && j.contains("artifacts") ? j["config"] : j;
  if (!cfg.is_object()) throw ConfigError("config must be a JSON object");
  if (cfg.contains("scenario") && cfg["scenario"] != scenario)
    throw ConfigError("config is for scenario " + cfg["scenario"].dump() + ", not " + scenario);
  cfg["scenario"] = scenario;
  if (o.seed) cfg["seed"] = *o.seed;
  if (o.out) cfg["out"] = *o.out;
  if (o.threads) cfg["threads"] = *o.threads;
  const ExperimentConfig c = parse_config(j);
  const auto res = run_experiment(c, c.out);
  std::cout << scenario << ": " << (res.pass() ? "PASS" : "FAIL") << " (" << res.records.size()
            << " records, artifacts in " << c.out << ")\n";
  for (const auto& name : res.failing()) {
    for (const auto& r : res.records) {
      if (r.name != name) continue;
      std::cerr << "failed: " << r.name << " margin=" << io::format_double(r.margin);
      if (r.detail.contains("error")) std::cerr << " error=" << r.detail["error"].get<std::string>();
      std::cerr << "\n";
    }
  }
  return res.pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical lab for pure-jump Levy SDEs, Phi-entropy and Lyapunov conditions"};
  app.require_subcommand(1);
  Overrides o;
  std::string chosen;
  for (const auto& name : jumpent::scenario_names()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " scenario");
    sub->add_option("--config", o.config, "JSON config or manifest")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "seed override");
    sub->add_option("--out", o.out, "output directory override");
    sub->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->callback([&chosen, name] { chosen = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    return run(chosen, o);
  } catch (const jumpent::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const jumpent::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const jumpent::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
