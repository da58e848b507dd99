#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"
#include "dhazard/engine.hpp"
#include "dhazard/error.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

struct Options {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out;
  std::string data;
  std::string model;
  std::string mode;
  std::string covariate;
  std::string input;
  std::string report_input;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("-c,--config", o.config, "YAML configuration file");
  cmd->add_option("--set", o.overrides, "override a setting, e.g. --set engine.step=0.2")->take_all();
  cmd->add_option("--seed", o.seed, "master seed (engine and simulation)");
  cmd->add_option("--threads", o.threads, "worker threads for replications");
  cmd->add_option("-o,--out", o.out, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
  using namespace dhazard;
  CLI::App app{"Discrete-time hazard models fitted by batchwise backfitting"};
  app.require_subcommand(1);
  Options o;

  auto* simulate = app.add_subcommand("simulate", "run a simulation study");
  add_common(simulate, o);

  auto* fit = app.add_subcommand("fit", "fit a model to person-level CSV data");
  add_common(fit, o);
  fit->add_option("--data", o.data, "input CSV (data.path)");

  auto* predict = app.add_subcommand("predict", "hazard or survival curves from a fitted model");
  add_common(predict, o);
  predict->add_option("--model", o.model, "model.json (predict.model)");
  predict->add_option("--mode", o.mode, "hazard, survival or marginal_survival (predict.mode)");
  predict->add_option("--covariate", o.covariate, "covariate varied by marginal_survival (predict.covariate)");
  predict->add_option("--input", o.input, "query CSV for hazard and survival (predict.input)");

  auto* report = app.add_subcommand("report", "summarize a study, fit report or model");
  add_common(report, o);
  report->add_option("input", o.report_input, "file or output directory (report.input)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    std::vector<std::string> overrides = o.overrides;
    auto set = [&](const char* key, const std::string& value) {
      if (!value.empty()) overrides.push_back(std::string(key) + "=" + value);
    };
    set("data.path", o.data);
    set("predict.model", o.model);
    set("predict.mode", o.mode);
    set("predict.covariate", o.covariate);
    set("predict.input", o.input);
    set("report.input", o.report_input);
    const cli::RunConfig config = cli::load_config(o.config, overrides, o.seed, o.threads, o.out);

    if (*simulate) cli::cmd_simulate(config);
    if (*fit) cli::cmd_fit(config);
    if (*predict) cli::cmd_predict(config);
    if (*report) cli::cmd_report(config);
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return 0;
}
