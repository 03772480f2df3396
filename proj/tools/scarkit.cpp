#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "scarkit/tasks.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::string> output;
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
};

// Command-line flags override the corresponding config keys; validation then
// runs once over the merged object.
nlohmann::json merged(const std::string& task, const Flags& f) {
  nlohmann::json j = scarkit::read_config_json(f.config);
  if (!j.is_object()) throw scarkit::ValidationError("config must be a JSON object");
  if (j.contains("task") && j["task"] != task)
    throw scarkit::ValidationError("task: config says '" + j["task"].dump() + "' but the subcommand is '" + task + "'");
  j["task"] = task;
  if (f.output) j["output"] = *f.output;
  if (f.threads) j["threads"] = *f.threads;
  if (f.seed) j["seed"] = *f.seed;
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scarkit: constrained spin models, scar dynamics and ensembles"};
  app.set_version_flag("--version", std::string(SCARKIT_VERSION));
  app.require_subcommand(1);

  Flags flags;
  const char* help[] = {"enumerate the constrained basis", "spectrum, overlaps and scar tags", "time evolution (unitary, master, trajectories)",
                        "eigenstate decay rates", "decay constant across c", "leakage out of the constrained subspace",
                        "canonical vs grand-canonical ensembles", "bivariate cubic fit of eigenstate expectation values"};
  for (std::size_t k = 0; k < scarkit::kTaskNames.size(); ++k) {
    CLI::App* sub = app.add_subcommand(scarkit::kTaskNames[k], help[k]);
    sub->add_option("--config", flags.config, "JSON run configuration")->required();
    sub->add_option("--output", flags.output, "output directory (overrides config)");
    sub->add_option("--threads", flags.threads, "worker threads (overrides config)");
    sub->add_option("--seed", flags.seed, "RNG seed for stochastic tasks (overrides config)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : scarkit::exit_code(scarkit::ErrorKind::validation);
  }

  const std::string task = app.get_subcommands().front()->get_name();
  try {
    const scarkit::RunConfig cfg = scarkit::config_from_json(merged(task, flags));
    const nlohmann::json meta = scarkit::run_task(cfg, std::cout);
    std::cout << task << ": wrote " << cfg.output << " (" << meta["wall_time_s"].get<double>() << " s)\n";
    return 0;
  } catch (const scarkit::Error& e) {
    std::cerr << "scarkit: " << e.what() << "\n";
    return scarkit::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "scarkit: validation error: " << e.what() << "\n";
    return scarkit::exit_code(scarkit::ErrorKind::validation);
  }
}
