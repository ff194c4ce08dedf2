// Adaptive GMsFEM experiment driver.
//
//   gmsfem_cli --field channel --contrast 1e4 --strategy standard \
//              --strategy goal_h1 --strategy goal_dwr --out results/
//
// Settings come from an optional key = value file (--config) and are then
// overridden by flags.

#include "gmsfem/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>

int main(int argc, char** argv)
{
  CLI::App app{"Adaptive multiscale enrichment for high-contrast elliptic problems"};

  std::string config_path;
  std::string export_field;
  std::vector<std::string> strategies;
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, CLI::Option*>> flags;

  app.add_option("--config", config_path, "key = value settings file")->check(CLI::ExistingFile);
  auto add = [&](const std::string& name, const std::string& help) {
    flags.emplace_back(name, app.add_option("--" + name, values[name], help));
  };
  add("nc", "coarse elements per side");
  add("r", "fine cells per coarse cell per side");
  add("field", "channel | inclusions | file:PATH");
  add("contrast", "high-conductivity value (background is 1)");
  add("theta", "Doerfler marking fraction in (0,1)");
  add("marking", "full_sort | binning");
  add("s", "functions added per marked neighborhood");
  add("m-enrich", "extra functions per neighborhood for the DWR dual space");
  add("max-iters", "maximum adaptive iterations");
  add("dof-cap", "stop once the space has this many dofs (0: off)");
  add("goal-rtol", "stop once goal error <= goal-rtol * initial (0: off)");
  add("initial-count", "basis functions per neighborhood at the start");
  add("norm-mode", "exact | snapshot residual norms");
  add("seed", "field generator seed");
  add("out", "output directory");
  add("k1", "inflow box x0,x1,y0,y1");
  add("k2", "outflow box x0,x1,y0,y1");
  add("goal", "goal box x0,x1,y0,y1");
  add("goal-average", "divide the goal functional by the box area (true/false)");
  add("dump-indicators", "write indicators.csv (true/false)");
  add("dump-eigenvalues", "write eigenvalues.csv (true/false)");
  app.add_option("--strategy", strategies, "standard | goal_h1 | goal_dwr (repeatable)");
  app.add_option("--export-field", export_field,
                 "write the coefficient field to this path and exit");

  CLI11_PARSE(app, argc, argv);

  try
  {
    gmsfem::ExperimentConfig cfg;
    if (!config_path.empty())
      gmsfem::load_config_file(cfg, config_path);
    for (const auto& [name, option] : flags)
      if (option->count() > 0)
        gmsfem::apply_setting(cfg, name, values[name]);
    if (!strategies.empty())
    {
      std::string joined;
      for (const auto& s : strategies)
        joined += (joined.empty() ? "" : ",") + s;
      gmsfem::apply_setting(cfg, "strategy", joined);
    }
    cfg.validate();

    if (!export_field.empty())
    {
      gmsfem::write_field(gmsfem::make_field(cfg), export_field);
      return 0;
    }
    gmsfem::run_experiment(cfg, std::cout);
  }
  catch (const std::exception& e)
  {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
