#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "sigma_forge/cli.hpp"

namespace sf = sigma_forge;
namespace cli = sigma_forge::cli;

namespace {

int print_checks(const std::string& scenario) {
  cli::json out = cli::json::array();
  for (const cli::json& c : cli::catalog_json())
    if (scenario.empty() || c["scenario"] == scenario) out.push_back(c);
  std::cout << out.dump(2) << '\n';
  return 0;
}

int emit(const cli::json& report, const std::string& report_path) {
  const std::string text = report.dump(2) + "\n";
  if (report_path.empty()) {
    std::cout << text;
    return 0;
  }
  std::ofstream os(report_path, std::ios::binary);
  if (!os || !(os << text)) {
    std::cerr << "error: cannot write report '" << report_path << "'\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Doubled-formalism verifier for principal chiral models", "sigma-forge"};
  app.set_version_flag("--version", std::string(cli::kVersion));
  app.require_subcommand(1);

  std::string config_path, report_path, dump_dir, list_scenario;
  std::optional<std::uint64_t> seed;
  bool timings = false;

  for (const auto& [scenario, name] : cli::scenario_names()) {
    CLI::App* sub = app.add_subcommand(name, "run the " + name + " scenario");
    sub->add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--report", report_path, "write the JSON report here instead of stdout");
    sub->add_option("--dump-fields", dump_dir, "directory for field and trajectory dumps");
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_flag("--timings", timings, "attach wall-clock timings (breaks byte-identical reports)");
  }
  CLI::App* list = app.add_subcommand("list-checks", "print the check catalog");
  list->add_option("--scenario", list_scenario, "restrict to one scenario");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (list->parsed()) return print_checks(list_scenario);

  const std::string name = app.get_subcommands().front()->get_name();
  const cli::Scenario scenario = cli::parse_scenario(name);
  cli::RunOptions opt;
  opt.seed = seed;
  opt.timings = timings;
  if (!dump_dir.empty()) opt.dump_dir = dump_dir;
  opt.base_dir = std::filesystem::path(config_path).parent_path();

  try {
    const cli::json cfg = cli::detail::read_json_file(config_path);
    const cli::Outcome out = cli::run_config(scenario, cfg, opt);
    if (const int rc = emit(out.report, report_path); rc != 0) return rc;
    if (out.exit_code == 3) std::cerr << "numerical abort: " << out.report["error"]["message"].get<std::string>() << '\n';
    return out.exit_code;
  } catch (const sf::NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
}
