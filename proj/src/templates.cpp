#include "iclc/templates.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <span>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "iclc/error.hpp"

namespace iclc {

// Generated at configure time from assets/templates.
std::span<const std::string_view> bundled_template_sources();

using nlohmann::json;

namespace {

constexpr std::string_view kFieldA = "{field_a}";
constexpr std::string_view kFieldB = "{field_b}";

std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (std::size_t pos = hay.find(needle); pos != std::string_view::npos;
       pos = hay.find(needle, pos + needle.size()))
    ++n;
  return n;
}

std::string fold(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  std::string out(s.substr(first, last - first + 1));
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

Quality parse_quality(std::string_view s) {
  if (s == "high") return Quality::High;
  if (s == "low") return Quality::Low;
  if (s == "unrated") return Quality::Unrated;
  throw ParseError(fmt::format("unknown template quality '{}'", s));
}

}  // namespace

std::string_view to_string(Quality quality) {
  switch (quality) {
    case Quality::High: return "high";
    case Quality::Low: return "low";
    case Quality::Unrated: return "unrated";
  }
  return "?";
}

void validate_template(const InstructionTemplate& tmpl) {
  const auto where = fmt::format("template {} '{}'", tmpl.template_id, tmpl.name);
  if (count_occurrences(tmpl.pattern, kFieldA) != 1 || count_occurrences(tmpl.pattern, kFieldB) != 1)
    throw ValidationError(where + ": pattern must contain {field_a} and {field_b} exactly once");
  const auto expected = static_cast<std::size_t>(label_count(tmpl.task));
  if (tmpl.answer_choices.size() != expected)
    throw ValidationError(fmt::format("{}: {} answer choices for {} (needs {})", where,
                                      tmpl.answer_choices.size(), to_string(tmpl.task), expected));
  std::vector<std::string> folded;
  for (const auto& c : tmpl.answer_choices) {
    auto f = fold(c);
    if (f.empty()) throw ValidationError(where + ": empty answer choice");
    if (std::find(folded.begin(), folded.end(), f) != folded.end())
      throw ValidationError(fmt::format("{}: answer choice '{}' repeats after case-folding", where, c));
    folded.push_back(std::move(f));
  }
}

RenderedBlock render_target(const InstructionTemplate& tmpl, const DataRecord& record) {
  if (record.task != tmpl.task)
    throw ValidationError(fmt::format("cannot render {} record '{}' with {} template '{}'",
                                      to_string(record.task), record.data_id,
                                      to_string(tmpl.task), tmpl.name));
  const auto pos_a = tmpl.pattern.find(kFieldA);
  const auto pos_b = tmpl.pattern.find(kFieldB);
  if (pos_a == std::string::npos || pos_b == std::string::npos)
    throw ValidationError(fmt::format("template '{}' lacks a placeholder", tmpl.name));
  // Replace the later placeholder first so the earlier offset stays valid and
  // field text containing a placeholder literal is never re-substituted.
  std::string text = tmpl.pattern;
  if (pos_a > pos_b) {
    text.replace(pos_a, kFieldA.size(), record.field_a);
    text.replace(pos_b, kFieldB.size(), record.field_b);
  } else {
    text.replace(pos_b, kFieldB.size(), record.field_b);
    text.replace(pos_a, kFieldA.size(), record.field_a);
  }
  text += "\n\n";
  text += kAnswerCue;
  return {std::move(text), BlockKind::Target, tmpl.answer_choices};
}

RenderedBlock render_in_context(const InstructionTemplate& tmpl, const DataRecord& record) {
  if (record.gold < 0 || static_cast<std::size_t>(record.gold) >= tmpl.answer_choices.size())
    throw ValidationError(fmt::format("record '{}': gold {} has no verbalizer in '{}'",
                                      record.data_id, record.gold, tmpl.name));
  auto block = render_target(tmpl, record);
  block.text += tmpl.answer_choices[static_cast<std::size_t>(record.gold)];
  block.kind = BlockKind::InContext;
  return block;
}

int match_label(std::string_view text, const InstructionTemplate& tmpl) {
  const auto first = fold(text.substr(0, text.find('\n')));
  for (std::size_t i = 0; i < tmpl.answer_choices.size(); ++i) {
    if (fold(tmpl.answer_choices[i]) == first) return static_cast<int>(i);
  }
  return kInvalidLabel;
}

InstructionTemplate parse_template(std::string_view json_text) {
  json obj;
  try {
    obj = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what());
  }
  InstructionTemplate t;
  try {
    t.template_id = obj.at("template_id").get<int>();
    t.name = obj.at("name").get<std::string>();
    t.pattern = obj.at("pattern").get<std::string>();
    t.answer_choices = obj.at("answer_choices").get<std::vector<std::string>>();
    t.quality = parse_quality(obj.value("quality", std::string("unrated")));
    t.task = parse_task(obj.at("task").get<std::string>());
    t.reconstruction = obj.value("reconstruction", false);
  } catch (const json::exception& e) {
    throw ParseError(e.what());
  }
  validate_template(t);
  return t;
}

std::string serialize_template(const InstructionTemplate& tmpl) {
  json obj{{"template_id", tmpl.template_id},
           {"name", tmpl.name},
           {"pattern", tmpl.pattern},
           {"answer_choices", tmpl.answer_choices},
           {"quality", to_string(tmpl.quality)},
           {"task", to_string(tmpl.task)},
           {"reconstruction", tmpl.reconstruction}};
  return obj.dump(2) + "\n";
}

namespace {

std::vector<InstructionTemplate> finish(std::vector<InstructionTemplate> out) {
  if (out.empty()) throw ValidationError("no templates found");
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::pair(a.task, a.template_id) < std::pair(b.task, b.template_id);
  });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].task == out[i - 1].task && out[i].template_id == out[i - 1].template_id)
      throw ValidationError(fmt::format("duplicate template_id {} for {}", out[i].template_id,
                                        to_string(out[i].task)));
  }
  return out;
}

}  // namespace

std::vector<InstructionTemplate> bundled_templates() {
  std::vector<InstructionTemplate> out;
  for (auto src : bundled_template_sources()) out.push_back(parse_template(src));
  return finish(std::move(out));
}

std::vector<InstructionTemplate> load_templates(const std::optional<std::filesystem::path>& dir) {
  if (!dir) return bundled_templates();
  namespace fs = std::filesystem;
  if (!fs::is_directory(*dir))
    throw ValidationError(fmt::format("template directory '{}' does not exist", dir->string()));
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(*dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<InstructionTemplate> out;
  for (const auto& file : files) {
    std::ifstream in(file, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
      out.push_back(parse_template(buf.str()));
    } catch (const Error& e) {
      throw ValidationError(fmt::format("{}: {}", file.string(), e.what()));
    }
  }
  return finish(std::move(out));
}

TemplateSet::TemplateSet(std::vector<InstructionTemplate> templates)
    : templates_(std::move(templates)) {}

std::vector<const InstructionTemplate*> TemplateSet::for_task(Task task) const {
  std::vector<const InstructionTemplate*> out;
  for (const auto& t : templates_)
    if (t.task == task) out.push_back(&t);
  return out;
}

const InstructionTemplate* TemplateSet::find(Task task, int template_id) const {
  for (const auto& t : templates_)
    if (t.task == task && t.template_id == template_id) return &t;
  return nullptr;
}

const InstructionTemplate* TemplateSet::find(Task task, std::string_view name) const {
  for (const auto& t : templates_)
    if (t.task == task && t.name == name) return &t;
  return nullptr;
}

const InstructionTemplate& TemplateSet::get(Task task, std::string_view name) const {
  if (const auto* t = find(task, name)) return *t;
  throw ValidationError(fmt::format("no {} template named '{}'", to_string(task), name));
}

}  // namespace iclc
