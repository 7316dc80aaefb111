#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "iclc/config.hpp"
#include "iclc/corpus.hpp"
#include "iclc/effects.hpp"
#include "iclc/kernels.hpp"
#include "iclc/model_client.hpp"
#include "iclc/sampler.hpp"
#include "iclc/templates.hpp"

namespace iclc {

// Everything derived from a config before any command runs: loaded corpora,
// templates, the evaluation sample and a prompt generator over them.
class Workspace {
 public:
  explicit Workspace(RunConfig config);
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;

  const RunConfig& config() const { return config_; }
  const FactorSet& factors() const { return factors_; }
  const TemplateSet& templates() const { return *templates_; }
  const Corpus& eval() const { return *eval_; }
  const PromptGenerator& generator() const { return *generator_; }
  const std::vector<Setup>& setups() const { return setups_; }
  // Probe setup, templates of the target task in id order.
  const Setup& probe_setup() const { return probe_setup_; }
  std::vector<const InstructionTemplate*> probe_templates() const;
  GoldLookup gold() const { return gold_; }

  // Prompt keys in output order: (setup key, data id) pairs.
  std::vector<std::pair<std::string, std::string>> expected_keys() const;

  std::filesystem::path prompts_path() const { return config_.output_dir / "prompts.jsonl"; }
  std::filesystem::path predictions_path() const { return config_.output_dir / "predictions.jsonl"; }
  std::filesystem::path manifest_path() const { return config_.output_dir / "manifest.json"; }
  std::filesystem::path reports_dir() const { return config_.output_dir / "reports"; }

 private:
  RunConfig config_;
  FactorSet factors_;
  std::unique_ptr<TemplateSet> templates_;
  std::unique_ptr<Corpus> validation_;
  std::unique_ptr<Corpus> train_;
  std::unique_ptr<Corpus> qqp_train_;
  std::unique_ptr<Corpus> eval_;
  PoolSet pools_;
  std::unique_ptr<PromptGenerator> generator_;
  std::vector<Setup> setups_;
  Setup probe_setup_;
  GoldLookup gold_;
};

using BackendFactory = std::function<std::unique_ptr<Backend>(const std::string& uri, GoldLookup gold)>;

struct CommandOptions {
  bool resume = false;
  bool allow_partial = false;
  ExecPolicy policy = ExecPolicy::Parallel;
  RetryPolicy retry;
  // Test hook: stop cmd_run after this many predictions are committed,
  // leaving the output as an interrupted run would.
  std::optional<std::size_t> stop_after;
  // Overrides backend construction; defaults to make_backend.
  BackendFactory backend_factory;
  std::ostream* log = nullptr;
};

struct GenerateSummary {
  std::size_t setups = 0;
  std::size_t prompts = 0;
};

struct RunSummary {
  std::size_t prompts = 0;
  std::size_t skipped = 0;     // already answered before this invocation
  std::size_t answered = 0;    // answered now
  std::size_t unanswered = 0;  // still unanswered at the end
  bool interrupted = false;
};

struct ScoreSummary {
  std::vector<std::filesystem::path> reports;
  std::size_t gaps = 0;
  std::size_t masked = 0;
  double kappa_avg = 0.0;
  bool low_diversity = false;
};

struct ValidationSummary {
  std::size_t prompts = 0;
  std::vector<Violation> violations;
};

GenerateSummary cmd_generate(const RunConfig& config, const CommandOptions& options = {});
RunSummary cmd_run(const RunConfig& config, const CommandOptions& options = {});
ScoreSummary cmd_score(const RunConfig& config, const CommandOptions& options = {});
TemplateRanking cmd_rank_templates(const RunConfig& config, const CommandOptions& options = {});
ValidationSummary cmd_validate(const RunConfig& config, const CommandOptions& options = {});

// Low-diversity warning text written into diversity.json.
inline constexpr std::string_view kLowDiversityWarning =
    "prediction entropy is below half the gold-label entropy; the model mostly predicts one label";

}  // namespace iclc
