#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "msplit/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Variable-metric monotone operator splitting: batch runner"};
  app.require_subcommand(1);
  app.set_version_flag("--version", msplit::cli::kVersion);

  bool allow = false;
  unsigned jobs = 1;
  std::vector<std::string> run_specs, validate_specs;

  auto* run = app.add_subcommand("run", "run one or more spec files and write trace.csv + metadata.json");
  run->add_option("specs", run_specs, "run-spec JSON files")->required()->check(CLI::ExistingFile);
  run->add_flag("--allow-violations", allow, "record hypothesis violations instead of exiting with code 2");
  run->add_option("-j,--jobs", jobs, "number of specs run concurrently")->check(CLI::PositiveNumber);

  auto* validate = app.add_subcommand("validate", "check parameter windows and metric hypotheses without running");
  validate->add_option("specs", validate_specs, "run-spec JSON files")->required()->check(CLI::ExistingFile);
  validate->add_flag("--allow-violations", allow, "report violations but exit 0");
  validate->add_option("-j,--jobs", jobs, "number of specs validated concurrently")->check(CLI::PositiveNumber);

  auto* list = app.add_subcommand("list-problems", "list the registered problem instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : msplit::cli::kUsage;
  }

  if (list->parsed()) {
    msplit::cli::list_problems(std::cout);
    return 0;
  }
  if (run->parsed()) return msplit::cli::run_batch(run_specs, allow, false, jobs);
  return msplit::cli::run_batch(validate_specs, allow, true, jobs);
}
