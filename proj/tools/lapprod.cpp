#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "lapprod/config.hpp"
#include "lapprod/error.hpp"
#include "lapprod/experiment.hpp"

namespace {

struct Options {
  std::string config;
  std::string output;
  int threads = -1;
  std::vector<std::string> overrides;
  int d = 0;
  std::string setting;
  std::vector<int> p_list;
};

nlohmann::json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw lapprod::Error("cannot open config " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false, true);
  if (j.is_discarded()) throw lapprod::ConfigError({path + ": not valid JSON"});
  return j;
}

int execute(const std::string& experiment, const Options& o) {
  nlohmann::json j = o.config.empty() ? nlohmann::json::object() : load_config(o.config);
  if (j.contains("experiment") && j["experiment"] != experiment)
    throw lapprod::ConfigError({fmt::format("experiment: config says {}, command line says {}",
                                            j["experiment"].dump(), experiment)});
  j["experiment"] = experiment;
  for (const auto& s : o.overrides) lapprod::apply_override(j, s);
  if (!o.output.empty()) j["output_dir"] = o.output;
  if (o.threads >= 0) j["threads"] = o.threads;
  if (o.d > 0) j["params"]["d"] = o.d;
  if (!o.setting.empty()) j["params"]["setting"] = o.setting;
  if (!o.p_list.empty()) j["params"]["p_list"] = o.p_list;
  const lapprod::ExperimentConfig cfg = lapprod::parse_config(j);
  const lapprod::RunResult res = lapprod::run(cfg);
  std::cout << res.summary;
  for (const auto& f : res.files) std::cout << "  wrote " << f.string() << "\n";
  return res.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Eigenfunction products: spectral remainders, density fitting and exponent tables"};
  app.require_subcommand(1);
  Options o;
  std::string chosen;

  const std::pair<const char*, const char*> commands[] = {
      {"solve", "compute an eigenbasis and write basis.lpb with a spectrum summary"},
      {"remainder", "sweep spectral remainders of mode products over cutoffs"},
      {"rank", "fit product spaces and study rank growth in n"},
      {"eri", "two-electron-style integrals, exact and through a fitted basis"},
      {"bounds", "exact exponent tables for a dimension and setting"},
      {"verify", "built-in invariant suite"},
  };
  for (const auto& [name, about] : commands) {
    CLI::App* sub = app.add_subcommand(name, about);
    sub->add_option("--config", o.config, "JSON experiment config")->check(CLI::ExistingFile);
    sub->add_option("--output", o.output, "output directory (default $LAPPROD_OUTPUT_DIR or lapprod_out)");
    sub->add_option("--threads", o.threads, "worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);
    sub->add_option("--set", o.overrides, "override a scalar config field, e.g. basis.K=40");
    if (std::string(name) == "bounds") {
      sub->add_option("--d", o.d, "dimension")->check(CLI::PositiveNumber);
      sub->add_option("--setting", o.setting, "boundaryless or dirichlet")
          ->check(CLI::IsMember({"boundaryless", "dirichlet"}));
      sub->add_option("--p", o.p_list, "exponents p for the sigma(p,d) rows");
    }
    sub->callback([&chosen, name] { chosen = name; });
  }
  CLI11_PARSE(app, argc, argv);

  try {
    return execute(chosen, o);
  } catch (const lapprod::ConfigError& e) {
    std::cerr << "configuration errors:\n";
    for (const auto& p : e.problems()) std::cerr << "  " << p << "\n";
    return lapprod::kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return lapprod::kExitError;
  }
}
