// segfuse: synthetic tiles in, trained segmenter ensemble out, fused maps
// polygonized and scored against the annotations.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "segfuse/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"building segmentation ensemble pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string split = "val";
  std::string strategy = "deep";
  std::string seed_flag, fusion_flag, match_order_flag;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run config json")->required();
    cmd->add_option("--set", overrides, "override config values (dotted.path=value)");
    cmd->add_option("--seed", seed_flag, "override the run seed")->check(CLI::Number);
  };

  CLI::App* generate = app.add_subcommand("generate", "synthesize the tile dataset");
  add_common(generate);
  CLI::App* train = app.add_subcommand("train", "train base models and combiners");
  add_common(train);
  CLI::App* predict = app.add_subcommand("predict", "run the ensemble and extract polygons");
  add_common(predict);
  predict->add_option("--split", split, "dataset split (train|val|test)");
  predict->add_option("--fusion", fusion_flag, "strategy to run (average|vote|linear|deep|all)");
  CLI::App* score = app.add_subcommand("score", "match polygons and print the score table");
  add_common(score);
  score->add_option("--split", split, "dataset split (train|val|test)");
  score->add_option("--fusion", fusion_flag, "strategy to score (average|vote|linear|deep|all)");
  score->add_option("--match-order", match_order_flag, "candidate order (iou|score)");
  CLI::App* visualize = app.add_subcommand("visualize", "write overlay images");
  add_common(visualize);
  visualize->add_option("--split", split, "dataset split (train|val|test)");
  visualize->add_option("--strategy", strategy, "strategy whose polygons to draw");

  CLI11_PARSE(app, argc, argv);

  // Convenience flags become ordinary overrides so one code path validates all.
  if (!seed_flag.empty()) overrides.push_back("seed=" + seed_flag);
  if (!fusion_flag.empty())
    overrides.push_back(fusion_flag == "all"
                            ? std::string(R"(fusion=["average","vote","linear","deep"])")
                            : "fusion=[\"" + fusion_flag + "\"]");
  if (!match_order_flag.empty()) overrides.push_back("scorer.match_order=" + match_order_flag);

  try {
    segfuse::RunConfig cfg = segfuse::load_run_config(config_path, overrides);
    if (generate->parsed()) segfuse::cmd_generate(cfg);
    if (train->parsed()) segfuse::cmd_train(cfg);
    if (predict->parsed()) segfuse::cmd_predict(cfg, split);
    if (score->parsed()) segfuse::cmd_score(cfg, split);
    if (visualize->parsed()) segfuse::cmd_visualize(cfg, split, strategy);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
