// cpnet: data generation, training, evaluation, cost analysis and ablation.
//
// Errors print one line "error: <category>: <message>" on stderr and exit
// with the status of cpnet::exit_code (2 for usage errors).

#include <CLI11.hpp>

#include <iostream>

#include "cpnet/cpnet.hpp"

namespace {

struct Common {
  std::string run_dir = "run";
  std::string config_file;
  std::vector<std::string> overrides;
  std::string variant;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--run-dir", c.run_dir, "Directory holding every input and output of the run")
      ->capture_default_str();
  cmd->add_option("--config", c.config_file, "Config file ([section] key = value lines)");
  cmd->add_option("--set", c.overrides, "Override a config key, e.g. --set train.epochs=3 (repeatable)");
  cmd->add_option("--variant", c.variant,
                  "Shorthand for model.variant and model.shift: baseline, cpnet075[_shift], cpnet037[_shift]");
}

cpnet::RunConfig resolve(const Common& c) {
  cpnet::KeyValues kv;
  if (!c.config_file.empty()) kv = cpnet::read_config_file(c.config_file);
  if (!c.variant.empty()) {
    const bool shift = c.variant.ends_with("_shift");
    const auto base = shift ? c.variant.substr(0, c.variant.size() - 6) : c.variant;
    kv["model.variant"] = base;
    kv["model.shift"] = shift ? "on" : "off";
  }
  for (const auto& o : c.overrides) cpnet::apply_override(kv, o);
  auto cfg = cpnet::from_key_values(kv);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CPNet workbench: parallel-path U-Net future-frame prediction for video anomaly detection"};
  app.require_subcommand(1);
  Common common;
  bool force = false, resume = false, flops = false;
  int videos = -1;
  std::string checkpoint;

  auto* gen = app.add_subcommand("gen-data", "Render the synthetic corpus into <run-dir>/data");
  add_common(gen, common);
  gen->add_flag("--force", force, "Replace an existing dataset");
  gen->add_option("--videos", videos, "Number of training videos (data.n_train)")->check(CLI::NonNegativeNumber);

  auto* tr = app.add_subcommand("train", "Train the configured variant on <run-dir>/data");
  add_common(tr, common);
  tr->add_flag("--resume", resume, "Continue from models/<tag>/checkpoint.cpck when present");

  auto* ev = app.add_subcommand("eval", "Score the test videos and report frame-level AUC and margins");
  add_common(ev, common);
  ev->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate (default models/<tag>/checkpoint.cpck)");

  auto* an = app.add_subcommand("analyze", "MAC and parameter reports for the five table variants");
  add_common(an, common);
  an->add_flag("--flops", flops, "Report FLOPs (2 x MACs) instead of MACs");

  auto* ab = app.add_subcommand("ablate", "Train and evaluate every ablate.variants entry; one summary table");
  add_common(ab, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    if (videos >= 0) common.overrides.insert(common.overrides.begin(), "data.n_train=" + std::to_string(videos));
    const auto cfg = resolve(common);
    const std::filesystem::path run_dir = common.run_dir;
    const cpnet::Streams io{std::cout, std::cerr};
    const auto* cmd = app.get_subcommands().front();
    const auto name = cmd->get_name();
    if (cmd == gen) cpnet::cmd_gen_data(cfg, run_dir, force, io);
    else if (cmd == tr) cpnet::cmd_train(cfg, run_dir, resume, io);
    else if (cmd == ev) cpnet::cmd_eval(cfg, run_dir, checkpoint, io);
    else if (cmd == an) cpnet::cmd_analyze(cfg, run_dir, flops, io);
    else cpnet::cmd_ablate(cfg, run_dir, io);
    cpnet::echo_config(run_dir, name, cfg);
    return 0;
  } catch (const cpnet::Error& e) {
    std::cerr << "error: " << cpnet::to_string(e.kind()) << ": " << e.what() << '\n';
    return cpnet::exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: io: " << e.what() << '\n';
    return cpnet::exit_code(cpnet::ErrorKind::io);
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
}
