#include "iclc/factorial.hpp"

#include <algorithm>
#include <map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "iclc/error.hpp"

namespace iclc {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::string_view to_string(Realization r) {
  switch (r) {
    case Realization::Builtin: return "builtin";
    case Realization::Annotation: return "annotation";
    case Realization::PromptPrefix: return "prefix";
  }
  return "?";
}

Realization parse_realization(std::string_view s) {
  if (s == "builtin") return Realization::Builtin;
  if (s == "annotation") return Realization::Annotation;
  if (s == "prefix") return Realization::PromptPrefix;
  throw ConfigError(fmt::format("unknown factor realization '{}'", s));
}

}  // namespace

Applicability Applicability::parse(std::string_view expr) {
  Applicability out;
  expr = trim(expr);
  if (expr.empty() || expr == "true") return out;
  if (expr == "false") {
    out.never = true;
    return out;
  }
  while (!expr.empty()) {
    const auto comma = expr.find(',');
    auto term = trim(expr.substr(0, comma));
    expr = comma == std::string_view::npos ? std::string_view{} : expr.substr(comma + 1);
    const auto eq = term.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(fmt::format("applicability term '{}' is not name=value", term));
    auto name = trim(term.substr(0, eq));
    auto value = trim(term.substr(eq + 1));
    if (name.empty() || (value != "0" && value != "1"))
      throw ConfigError(fmt::format("applicability term '{}' must be name=0 or name=1", term));
    out.all_of.push_back({std::string(name), value == "1" ? 1 : 0});
  }
  return out;
}

std::string Applicability::to_string() const {
  if (never) return "false";
  std::string out;
  for (const auto& t : all_of) {
    if (!out.empty()) out += ',';
    out += fmt::format("{}={}", t.factor, t.value);
  }
  return out;
}

std::string_view to_string(ExclusionRule rule) {
  return rule == ExclusionRule::NestedInstructions ? "nested_instructions" : "exclusive_labels";
}

ExclusionRule parse_exclusion_rule(std::string_view text) {
  if (text == "nested_instructions") return ExclusionRule::NestedInstructions;
  if (text == "exclusive_labels") return ExclusionRule::ExclusiveLabels;
  throw ConfigError(fmt::format("unknown exclusion_rule '{}'", text));
}

FactorSet::FactorSet(std::vector<Factor> factors) : factors_(std::move(factors)) {
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    const auto& f = factors_[i];
    if (f.position != i)
      throw ValidationError(fmt::format("factor '{}' has position {}, expected {}", f.name,
                                        f.position, i));
    if (f.name.empty()) throw ValidationError(fmt::format("factor at position {} has no name", i));
    for (std::size_t j = 0; j < i; ++j) {
      if (factors_[j].name == f.name)
        throw ValidationError(fmt::format("duplicate factor name '{}'", f.name));
    }
    for (const auto& term : f.applicable_when.all_of) {
      auto dep = index_of(term.factor);
      if (!dep)
        throw ValidationError(fmt::format("factor '{}' depends on unknown factor '{}'", f.name,
                                          term.factor));
      if (*dep >= i)
        throw ValidationError(fmt::format(
            "cyclic applicability: factor '{}' depends on '{}' which is not positioned before it",
            f.name, term.factor));
    }
  }
}

std::optional<std::size_t> FactorSet::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < factors_.size(); ++i)
    if (factors_[i].name == name) return i;
  return std::nullopt;
}

std::size_t FactorSet::require(std::string_view name) const {
  if (auto i = index_of(name)) return *i;
  throw ValidationError(fmt::format("unknown factor '{}'", name));
}

bool FactorSet::applicable(std::size_t i, std::span<const Level> levels) const {
  const auto& when = factors_[i].applicable_when;
  if (when.never) return false;
  for (const auto& term : when.all_of) {
    const auto dep = *index_of(term.factor);
    if (levels[dep] != static_cast<Level>(term.value)) return false;
  }
  return true;
}

FactorSet default_factor_set(Task task, ExclusionRule rule) {
  if (task != Task::ANLI && task != Task::MNLI)
    throw ValidationError(fmt::format("no default factor set for task {}", to_string(task)));
  namespace fn = factor_names;
  const std::string_view order[] = {fn::kNShots,     fn::kHpInstructions, fn::kBalancedLabels,
                                    fn::kCrossTemplates, fn::kCrossTask,  fn::kInstructions,
                                    fn::kOneLabel};
  std::vector<Factor> factors;
  for (auto name : order) {
    Factor f;
    f.name = std::string(name);
    f.position = factors.size();
    factors.push_back(std::move(f));
  }
  if (rule == ExclusionRule::NestedInstructions) {
    factors[5].applicable_when = Applicability::parse("hp_instructions=1");
  } else {
    factors[6].applicable_when = Applicability::parse("balanced_labels=0");
  }
  return FactorSet(std::move(factors));
}

std::vector<Setup> enumerate_setups(const FactorSet& factors) {
  std::vector<Setup> out;
  std::vector<Level> levels(factors.size(), Level::Irrelevant);
  // Depth-first over positions; applicability only looks backwards.
  auto recurse = [&](auto&& self, std::size_t pos) -> void {
    if (pos == factors.size()) {
      out.push_back(Setup{levels});
      return;
    }
    if (!factors.applicable(pos, levels)) {
      levels[pos] = Level::Irrelevant;
      self(self, pos + 1);
      return;
    }
    for (Level l : {Level::Absent, Level::Present}) {
      levels[pos] = l;
      self(self, pos + 1);
    }
  };
  recurse(recurse, 0);
  std::sort(out.begin(), out.end(), [](const Setup& a, const Setup& b) {
    return encode_setup_id(a) < encode_setup_id(b);
  });
  return out;
}

SetupId encode_setup_id(const Setup& setup) {
  SetupId id(setup.levels.size(), '0');
  for (std::size_t i = 0; i < setup.levels.size(); ++i)
    id[i] = static_cast<char>('0' + static_cast<int>(setup.levels[i]));
  return id;
}

Setup decode_setup_id(std::string_view id, const FactorSet& factors) {
  if (id.size() != factors.size())
    throw ValidationError(fmt::format("setup id '{}' has {} digits, expected {}", id, id.size(),
                                      factors.size()));
  Setup s;
  s.levels.resize(id.size());
  for (std::size_t i = 0; i < id.size(); ++i) {
    const char c = id[i];
    if (c < '0' || c > '2')
      throw ValidationError(fmt::format("setup id '{}': invalid digit '{}' at position {}", id, c, i));
    s.levels[i] = static_cast<Level>(c - '0');
  }
  for (std::size_t i = 0; i < id.size(); ++i) {
    const bool applies = factors.applicable(i, s.levels);
    if (applies && s.levels[i] == Level::Irrelevant)
      throw ValidationError(fmt::format("setup id '{}': factor '{}' is applicable but marked 2",
                                        id, factors[i].name));
    if (!applies && s.levels[i] != Level::Irrelevant)
      throw ValidationError(fmt::format("setup id '{}': factor '{}' is not applicable but set",
                                        id, factors[i].name));
  }
  return s;
}

Level level_of(const Setup& setup, const FactorSet& factors, std::string_view name) {
  return setup.levels.at(factors.require(name));
}

bool is_present(const Setup& setup, const FactorSet& factors, std::string_view name) {
  auto i = factors.index_of(name);
  return i && setup.levels.at(*i) == Level::Present;
}

FactorSet register_custom_factor(const FactorSet& factors, Factor factor) {
  if (factors.contains(factor.name))
    throw ValidationError(fmt::format("factor name '{}' is already registered", factor.name));
  if (factor.position != factors.size())
    throw ValidationError(fmt::format("new factor '{}' must take position {}", factor.name,
                                      factors.size()));
  auto list = factors.factors();
  list.push_back(std::move(factor));
  return FactorSet(std::move(list));
}

std::vector<std::pair<std::size_t, std::size_t>> pair_indices_differing_in(
    std::span<const Setup> setups, const FactorSet& factors, std::string_view name) {
  const auto pos = factors.require(name);
  std::map<SetupId, std::size_t> present;
  for (std::size_t i = 0; i < setups.size(); ++i) {
    if (setups[i].levels.at(pos) == Level::Present) present.emplace(encode_setup_id(setups[i]), i);
  }
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < setups.size(); ++i) {
    if (setups[i].levels.at(pos) != Level::Absent) continue;
    // Twin: same levels with the factor switched on. Later factors whose
    // applicability flips become 2 (now inapplicable) or 0 (newly applicable),
    // so a nesting parent pairs with the child's absent level.
    auto levels = setups[i].levels;
    levels[pos] = Level::Present;
    for (std::size_t j = pos + 1; j < levels.size(); ++j) {
      const bool applies = factors.applicable(j, levels);
      if (!applies) {
        levels[j] = Level::Irrelevant;
      } else if (levels[j] == Level::Irrelevant) {
        levels[j] = Level::Absent;
      }
    }
    if (auto it = present.find(encode_setup_id(Setup{levels})); it != present.end())
      out.emplace_back(i, it->second);
  }
  return out;
}

std::vector<std::pair<Setup, Setup>> pairs_differing_in(std::span<const Setup> setups,
                                                        const FactorSet& factors,
                                                        std::string_view name) {
  std::vector<std::pair<Setup, Setup>> out;
  for (auto [a, b] : pair_indices_differing_in(setups, factors, name))
    out.emplace_back(setups[a], setups[b]);
  return out;
}

json factor_set_to_json(const FactorSet& factors) {
  json list = json::array();
  for (const auto& f : factors.factors()) {
    json item{{"name", f.name},
              {"position", f.position},
              {"applicable_when", f.applicable_when.to_string()},
              {"realization", to_string(f.realization)}};
    if (f.realization == Realization::PromptPrefix) item["prefix_text"] = f.prefix_text;
    list.push_back(std::move(item));
  }
  return json{{"factors", std::move(list)}};
}

Factor factor_from_json(const json& item, std::size_t default_position) {
  try {
    Factor f;
    f.name = item.at("name").get<std::string>();
    f.position = item.value("position", default_position);
    f.applicable_when = Applicability::parse(item.value("applicable_when", std::string()));
    f.realization = parse_realization(item.value("realization", std::string("builtin")));
    f.prefix_text = item.value("prefix_text", std::string());
    return f;
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("factor: {}", e.what()));
  }
}

FactorSet factor_set_from_json(const json& doc) {
  std::vector<Factor> factors;
  try {
    for (const auto& item : doc.at("factors")) factors.push_back(factor_from_json(item, factors.size()));
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("factor set: {}", e.what()));
  }
  return FactorSet(std::move(factors));
}

}  // namespace iclc
