#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "sccalib/pipeline.hpp"

namespace {

namespace pl = sccalib::pipeline;

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kBadConfig = 2,
  kMissingInput = 3,
  kDiverged = 4,
  kIo = 5,
};

int run(const std::string& stage, pl::PipelineConfig cfg) {
  cfg.validate();
  static const std::map<std::string, std::function<void(const pl::PipelineConfig&)>> stages = {
      {"synth", pl::cmd_synth},
      {"extract", pl::cmd_extract},
      {"spe", [](const pl::PipelineConfig& c) { pl::cmd_spe(c); }},
      {"calibrate", [](const pl::PipelineConfig& c) { pl::cmd_calibrate(c); }},
      {"render-check", pl::cmd_render_check},
      {"eval", [](const pl::PipelineConfig& c) { std::cout << pl::cmd_eval(c).dump(2) << '\n'; }},
      {"report", [](const pl::PipelineConfig& c) { pl::cmd_report(c); }},
  };
  stages.at(stage)(cfg);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Camera self-calibration from tracked structural points"};
  app.require_subcommand(1, 1);

  std::string config;
  std::uint64_t seed = 0;
  int threads = 0;
  bool deterministic = false;
  for (const char* name : {"synth", "extract", "spe", "calibrate", "render-check", "eval", "report"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "pipeline TOML file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--threads", threads, "override optimizer.threads")->check(CLI::PositiveNumber);
    sub->add_flag("--deterministic", deterministic, "force deterministic execution");
  }
  CLI11_PARSE(app, argc, argv);
  const std::string stage = app.get_subcommands().front()->get_name();
  const CLI::App* sub = app.get_subcommands().front();

  try {
    pl::PipelineConfig cfg = pl::load_config(config);
    if (sub->count("--seed") > 0) cfg.seed = seed;
    if (sub->count("--threads") > 0) cfg.optimizer.threads = threads;
    if (deterministic) cfg.deterministic = true;
    return run(stage, cfg);
  } catch (const sccalib::DivergenceError& e) {
    std::cerr << "sccalib " << stage << ": " << e.what() << " (iteration " << e.iteration() << ")\n";
    return kDiverged;
  } catch (const sccalib::MissingStageInput& e) {
    std::cerr << "sccalib " << stage << ": " << e.what() << '\n';
    return kMissingInput;
  } catch (const sccalib::ParseError& e) {
    std::cerr << "sccalib " << stage << ": " << e.what() << '\n';
    return kBadConfig;
  } catch (const sccalib::InvalidParameter& e) {
    std::cerr << "sccalib " << stage << ": " << e.what() << '\n';
    return kBadConfig;
  } catch (const sccalib::IoError& e) {
    std::cerr << "sccalib " << stage << ": " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "sccalib " << stage << ": " << e.what() << '\n';
    return kFailure;
  }
}
