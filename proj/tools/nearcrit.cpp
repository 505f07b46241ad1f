// nearcrit: command-line front end.
//
//   nearcrit <analyze|check|certify|simulate|counterexample> --config PATH
//            [--seed N] [--out DIR] [--workers N] [--format json|csv|both]
//
// Exit codes: 0 success, 2 config error, 3 numerical/model error,
// 4 counterexample structure violation.

#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "nearcrit/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Near-critical process analysis, certification and simulation"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  unsigned workers = 1;
  std::string format;

  for (const char* name : {"analyze", "check", "certify", "simulate", "counterexample"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "overrides the config seed");
    sub->add_option("--out", out_dir, "output directory (default: output.dir from the config)");
    sub->add_option("--workers", workers, "worker threads for certify/simulate/counterexample")
        ->check(CLI::Range(1u, std::max(1u, 4 * std::thread::hardware_concurrency())));
    sub->add_option("--format", format, "json, csv or both")->check(CLI::IsMember({"json", "csv", "both"}));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    nearcrit::RunConfig cfg = nearcrit::load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (!format.empty()) cfg.output.format = format;
    if (!out_dir.empty()) cfg.output.dir = out_dir;

    const nearcrit::CommandOutput out = nearcrit::run_command(command, cfg, workers);
    const std::string timestamp = nearcrit::utc_timestamp();
    std::cout << nearcrit::envelope(out, cfg, timestamp).dump(2) << "\n";
    if (!cfg.output.dir.empty()) {
      for (const auto& path : nearcrit::write_outputs(out, cfg, cfg.output.dir, cfg.output.format, timestamp)) {
        std::cerr << "wrote " << path << "\n";
      }
    }
    if (out.exit_code == 4) std::cerr << "error: counterexample structure identities violated\n";
    return out.exit_code;
  } catch (const nearcrit::Error& e) {
    std::cerr << "error [" << e.code() << "]: " << e.what() << "\n";
    switch (e.error_class()) {
      case nearcrit::ErrorClass::invalid_argument:
        return 2;
      case nearcrit::ErrorClass::numerical:
        return 3;
      case nearcrit::ErrorClass::structure:
        return 4;
    }
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
