#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "iclc/corpus.hpp"

namespace iclc {

enum class Quality { High, Low, Unrated };

std::string_view to_string(Quality quality);

struct InstructionTemplate {
  int template_id = 0;
  std::string name;
  std::string pattern;  // contains {field_a} and {field_b} exactly once each
  std::vector<std::string> answer_choices;
  Quality quality = Quality::Unrated;
  Task task = Task::ANLI;
  bool reconstruction = false;
};

// Cue that closes every block. Kept in one place so it can become a factor.
inline constexpr std::string_view kAnswerCue = "ANSWER: ";

enum class BlockKind { Target, InContext };

struct RenderedBlock {
  std::string text;
  BlockKind kind = BlockKind::Target;
  std::vector<std::string> label_space;
};

// Throws ValidationError if the template breaks an invariant.
void validate_template(const InstructionTemplate& tmpl);

RenderedBlock render_target(const InstructionTemplate& tmpl, const DataRecord& record);
RenderedBlock render_in_context(const InstructionTemplate& tmpl, const DataRecord& record);

// Exact match of the trimmed, case-folded first line against the choices.
int match_label(std::string_view text, const InstructionTemplate& tmpl);

InstructionTemplate parse_template(std::string_view json_text);
std::string serialize_template(const InstructionTemplate& tmpl);

// Loads every *.json under `dir` (recursively), sorted by (task, template_id).
// With no directory the bundled set is returned.
std::vector<InstructionTemplate> load_templates(
    const std::optional<std::filesystem::path>& dir = std::nullopt);
std::vector<InstructionTemplate> bundled_templates();

// Lookup helpers over a loaded template list.
class TemplateSet {
 public:
  explicit TemplateSet(std::vector<InstructionTemplate> templates);

  const std::vector<InstructionTemplate>& all() const { return templates_; }
  std::vector<const InstructionTemplate*> for_task(Task task) const;
  const InstructionTemplate* find(Task task, int template_id) const;
  const InstructionTemplate* find(Task task, std::string_view name) const;
  const InstructionTemplate& get(Task task, std::string_view name) const;

 private:
  std::vector<InstructionTemplate> templates_;
};

}  // namespace iclc
