#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "iclc/corpus.hpp"
#include "iclc/factorial.hpp"
#include "iclc/templates.hpp"

namespace iclc {

struct InContextRef {
  std::string data_id;
  int template_id = 0;
  bool operator==(const InContextRef&) const = default;
};

struct PromptInstance {
  SetupId setup_id;
  std::string data_id;
  std::string text;
  std::vector<std::string> label_space;
  std::vector<InContextRef> in_context_ids;
  int target_template_id = 0;
  nlohmann::json metadata = nlohmann::json::object();

  bool operator==(const PromptInstance&) const = default;
};

nlohmann::json to_json(const PromptInstance& prompt);
PromptInstance prompt_from_json(const nlohmann::json& obj);

// Probe runs key each template separately: "<setup_id>@t<NN>".
std::string probe_setup_key(const SetupId& base, int template_id);
// Splits a probe key; returns nullopt for ordinary setup ids.
std::optional<std::pair<SetupId, int>> parse_probe_key(std::string_view key);

// Training pools for every task that can supply in-context examples.
class PoolSet {
 public:
  PoolSet() = default;
  void add(const Corpus& train);
  bool has(Task task) const { return pools_.count(task) != 0; }
  const TrainingPool& all(Task task) const;
  const TrainingPool& with_label(Task task, int label) const;
  const Corpus& corpus(Task task) const;

 private:
  struct TaskPools {
    const Corpus* corpus;
    TrainingPool all;
    std::vector<TrainingPool> by_label;
  };
  std::map<Task, TaskPools> pools_;
};

// Which templates realize the hp_instructions / instructions factors.
struct TargetTemplateNames {
  std::string low_default = "MNLI Crowdsource";
  std::string low_alternate = "Guaranteed Possible Impossible";
  std::string high_default = "Does It Follow That";
  std::string high_alternate = "Claim True False Inconclusive";
};

struct Selection {
  const DataRecord* record;
  const InstructionTemplate* tmpl;
};

// Seed of one prompt: stable hash of (global seed, setup key, data id).
std::uint64_t prompt_seed(std::uint64_t global_seed, std::string_view setup_key,
                          std::string_view data_id);

inline constexpr std::size_t kFewShots = 2;
inline constexpr std::size_t kManyShots = 5;

class PromptGenerator {
 public:
  PromptGenerator(FactorSet factors, const TemplateSet& templates, const PoolSet& pools,
                  Task target_task, std::uint64_t seed, TargetTemplateNames names = {});

  const FactorSet& factors() const { return factors_; }
  const TemplateSet& templates() const { return *templates_; }
  const PoolSet& pools() const { return *pools_; }
  Task target_task() const { return target_task_; }
  std::uint64_t seed() const { return seed_; }

  std::size_t shots(const Setup& setup) const;
  Task source_task(const Setup& setup) const;
  const InstructionTemplate& target_template(const Setup& setup) const;
  // Template used for in-context examples when cross_templates is absent.
  const InstructionTemplate& fixed_context_template(const Setup& setup,
                                                    const InstructionTemplate& target) const;

  // Draws in-context records; their template is `fixed_context_template`
  // unless cross_templates is present.
  std::vector<Selection> select_in_context(const Setup& setup, const DataRecord& target,
                                           const InstructionTemplate& target_tmpl,
                                           std::uint64_t draw_seed) const;
  PromptInstance compose_prompt(const Setup& setup, const DataRecord& target,
                                const std::vector<Selection>& selection,
                                const InstructionTemplate& target_tmpl) const;

  // Full pipeline for one (setup, record) cell.
  PromptInstance generate(const Setup& setup, const DataRecord& target) const;
  // Probe cell: fixed setup, target (and same-task context) template overridden.
  PromptInstance generate_probe(const Setup& setup, const DataRecord& target,
                                const InstructionTemplate& probe_template) const;

 private:
  FactorSet factors_;
  const TemplateSet* templates_;
  const PoolSet* pools_;
  Task target_task_;
  std::uint64_t seed_;
  TargetTemplateNames names_;
};

struct Violation {
  std::string setup_id;
  std::string data_id;
  std::string message;
};

// Re-derives every constraint implied by a prompt's setup id and checks the
// record against it, including a byte-exact re-render of the text.
class PromptValidator {
 public:
  PromptValidator(const PromptGenerator& generator, const Corpus& eval_corpus);

  std::vector<Violation> check(const PromptInstance& prompt) const;

 private:
  const PromptGenerator* gen_;
  const Corpus* eval_;
};

}  // namespace iclc
