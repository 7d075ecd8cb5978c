#include <chmass/cli_runner.hpp>

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  using namespace chmass;
  CLI::App app{"complex hyperbolic mass experiments"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> extra_inputs;

  const char* names[] = {"flatness", "killing", "mass", "appendix", "report"};
  const char* help[] = {"curvature of the CH connection, fiber signature, holonomy",
                        "Killing spinor families and the map Q",
                        "mass functional of the model and of the appendix metric",
                        "momentum profile, scalar curvature and decay of the appendix metric",
                        "merge earlier run directories"};
  for (int i = 0; i < 5; ++i) {
    auto* sub = app.add_subcommand(names[i], help[i]);
    sub->add_option("--config", config_path, "JSON configuration file")->required();
    sub->add_option("--out", out_dir, "output directory")->required();
    sub->add_option("--seed", seed, "override the configured seed");
    if (i == 4) sub->add_option("inputs", extra_inputs, "run directories or report.json files");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();

  try {
    ExperimentConfig cfg = load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (cmd == "report") {
      std::vector<std::string> inputs = cfg.inputs;
      inputs.insert(inputs.end(), extra_inputs.begin(), extra_inputs.end());
      MergeResult mr = cmd_report(inputs);
      std::filesystem::create_directories(out_dir);
      write_text(std::filesystem::path(out_dir) / "report.json", mr.merged.dump(2) + "\n");
      write_text(std::filesystem::path(out_dir) / "summary.txt", mr.table);
      std::cout << mr.table;
      return mr.pass ? 0 : 1;
    }
    RunReport rep = run_command(cmd, cfg);
    write_outputs(rep, out_dir);
    std::ifstream s(std::filesystem::path(out_dir) / "summary.txt");
    std::cout << s.rdbuf();
    return rep.all_pass() ? 0 : 1;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
