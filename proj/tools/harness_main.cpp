// harness: command-line front end for prompt generation, model runs and scoring.

#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "iclc/config.hpp"
#include "iclc/error.hpp"
#include "iclc/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Consistency test harness for in-context learning setups"};
  app.require_subcommand(1);

  std::string config_path;
  bool allow_partial = false;
  bool resume = false;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Run configuration (JSON)")->required();
    cmd->add_flag("--allow-partial", allow_partial, "Score even when predictions are missing");
    cmd->add_flag("--resume", resume, "Keep existing predictions and answer only the rest");
  };
  auto* generate = app.add_subcommand("generate", "Write the prompt corpus");
  auto* run = app.add_subcommand("run", "Query the backend for every prompt");
  auto* score = app.add_subcommand("score", "Compute metrics and write reports");
  auto* rank = app.add_subcommand("rank-templates", "Rank templates from a probe run");
  auto* validate = app.add_subcommand("validate", "Check every prompt against its setup");
  for (auto* cmd : {generate, run, score, rank, validate}) add_common(cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  iclc::CommandOptions options;
  options.resume = resume;
  options.allow_partial = allow_partial;
  options.log = &std::cerr;

  try {
    const auto config = iclc::load_config(config_path);
    if (generate->parsed()) {
      iclc::cmd_generate(config, options);
    } else if (run->parsed()) {
      const auto s = iclc::cmd_run(config, options);
      if (s.unanswered > 0) {
        std::cerr << fmt::format("{} prompts unanswered after retries; rerun with --resume\n", s.unanswered);
        return kExitRuntime;
      }
    } else if (score->parsed()) {
      iclc::cmd_score(config, options);
    } else if (rank->parsed()) {
      const auto r = iclc::cmd_rank_templates(config, options);
      for (std::size_t i = 0; i < r.ordered.size(); ++i)
        std::cout << fmt::format("{:>2}  t{:02}  acc={:.4f}  c_lambda={:.4f}  {}\n", i + 1,
                                 r.ordered[i].template_id, r.ordered[i].accuracy, r.ordered[i].c_lambda,
                                 r.ordered[i].name);
    } else if (validate->parsed()) {
      const auto s = iclc::cmd_validate(config, options);
      for (const auto& v : s.violations)
        std::cout << fmt::format("{}/{}: {}\n", v.setup_id, v.data_id, v.message);
      std::cout << fmt::format("{} prompts, {} violations\n", s.prompts, s.violations.size());
      if (!s.violations.empty()) return kExitRuntime;
    }
  } catch (const iclc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
