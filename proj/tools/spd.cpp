#include <iostream>

#include <CLI11.hpp>

#include "spd/cli/commands.hpp"

int main(int argc, char** argv) {
  using spd::cli::Overrides;
  CLI::App app{"Joint segmentation, pose and dense-pose training on synthetic figures"};
  app.require_subcommand(1);

  Overrides o;
  std::string config, out, checkpoint, manifest;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config, "Run config (JSON)")->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "Output directory");
  };
  auto add_model = [&](CLI::App* cmd) {
    cmd->add_option("--seed", o.seed, "Model seed (overrides the config)");
    cmd->add_option("--variant", o.variant, "Ablation variant: SPD, SP, SD or S")
        ->check(CLI::IsMember({"SPD", "SP", "SD", "S"}));
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic split and its manifest");
  add_common(synth);
  synth->add_option("--count", o.count, "Number of samples")->required();
  synth->add_option("--seed", o.seed, "Base seed");

  auto* train = app.add_subcommand("train", "Train a model; writes checkpoint.ckpt and train.log");
  add_common(train);
  add_model(train);
  train->add_option("--manifest", manifest, "Training manifest");
  train->add_option("--checkpoint", checkpoint, "Resume from this checkpoint");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint; writes report.txt and metrics.kv");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate");
  eval->add_option("--manifest", manifest, "Evaluation manifest");
  eval->add_flag("--self-check", o.self_check, "Score targets against themselves");

  auto* ablate = app.add_subcommand("ablate", "Train and evaluate all variants for every seed");
  add_common(ablate);
  ablate->add_option("--seed", o.seed, "Run a single seed instead of the config's list");
  ablate->add_option("--manifest", manifest, "Training manifest");

  auto* report = app.add_subcommand("report", "Render overlays and plots for a checkpoint");
  add_common(report);
  report->add_option("--checkpoint", checkpoint, "Checkpoint to render");
  report->add_option("--manifest", manifest, "Samples to render");
  report->add_option("--count", o.count, "Render only the first N samples");

  CLI11_PARSE(app, argc, argv);

  if (!config.empty()) o.config = config;
  if (!out.empty()) o.out = out;
  if (!checkpoint.empty()) o.checkpoint = checkpoint;
  if (!manifest.empty()) o.manifest = manifest;

  if (synth->parsed()) return spd::cli::cmd_synth(o, std::cout, std::cerr);
  if (train->parsed()) return spd::cli::cmd_train(o, std::cout, std::cerr);
  if (eval->parsed()) return spd::cli::cmd_eval(o, std::cout, std::cerr);
  if (ablate->parsed()) return spd::cli::cmd_ablate(o, std::cout, std::cerr);
  return spd::cli::cmd_report(o, std::cout, std::cerr);
}
