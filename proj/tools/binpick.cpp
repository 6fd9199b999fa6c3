#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "binpick/pipeline.hpp"

using namespace binpick;

int main(int argc, char** argv) {
  CLI::App app{"Bin-picking pose estimation toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out = "out";
  int workers = 1;
  app.add_option("--config", config_path, "Config file (key = value lines)");
  CLI::Option* seed_opt =
      app.add_option("--seed", seed, "Override the config seed");
  app.add_option("--out", out, "Output directory");
  app.add_option("--workers", workers, "Worker threads for gen/infer");

  CLI::App* gen = app.add_subcommand("gen", "Generate the synthetic dataset");
  gen->fallthrough();

  CLI::App* train = app.add_subcommand("train", "Train one stage");
  train->fallthrough();
  std::string stage;
  train->add_option("--stage", stage, "heads | jointreg")
      ->required()
      ->check(CLI::IsMember({"heads", "jointreg"}));

  CLI::App* infer = app.add_subcommand("infer", "Run inference on a split");
  infer->fallthrough();
  std::string infer_dump, infer_split = "test";
  bool ablate_offset = false;
  infer->add_option("--dump", infer_dump,
                    "Hypothesis dump path (default <out>/infer/hypotheses.jsonl)");
  infer->add_flag("--ablate-offset", ablate_offset,
                  "Use box centers instead of the offset head");
  infer->add_option("--split", infer_split, "train | test")
      ->check(CLI::IsMember({"train", "test"}));

  CLI::App* eval = app.add_subcommand("eval", "Score a hypothesis dump");
  eval->fallthrough();
  std::string criterion = "both", eval_dump, label = "main";
  std::string eval_split = "test", confidence;
  eval->add_option("--criterion", criterion, "sym | add | both")
      ->check(CLI::IsMember({"sym", "add", "both"}));
  eval->add_option("--dump", eval_dump, "Hypothesis dump to score");
  eval->add_option("--label", label, "Subdirectory under <out>/eval");
  eval->add_option("--split", eval_split, "train | test")
      ->check(CLI::IsMember({"train", "test"}));
  eval->add_option("--confidence", confidence,
                   "raw | registration (default: config value)")
      ->check(CLI::IsMember({"raw", "registration"}));

  CLI::App* report = app.add_subcommand("report", "Merge eval results");
  report->fallthrough();
  std::vector<std::string> eval_dirs;
  report->add_option("dirs", eval_dirs, "Eval directories to merge")
      ->expected(-1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg =
        config_path.empty() ? RunConfig{} : load_config(config_path);
    if (seed_opt->count() > 0) cfg.seed = seed;
    if (gen->parsed()) {
      cmd_gen(cfg, out, workers);
    } else if (train->parsed()) {
      cmd_train(cfg, out, stage);
    } else if (infer->parsed()) {
      InferOptions opt;
      opt.use_offset = !ablate_offset;
      cmd_infer(cfg, out, workers, infer_dump, opt, infer_split);
    } else if (eval->parsed()) {
      cmd_eval(cfg, out, criterion, eval_dump, label, eval_split, confidence);
    } else if (report->parsed()) {
      cmd_report(out, eval_dirs);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
