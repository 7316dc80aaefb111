#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "iclc/corpus.hpp"

namespace iclc {

namespace factor_names {
inline constexpr std::string_view kNShots = "n_shots";
inline constexpr std::string_view kHpInstructions = "hp_instructions";
inline constexpr std::string_view kBalancedLabels = "balanced_labels";
inline constexpr std::string_view kCrossTemplates = "cross_templates";
inline constexpr std::string_view kCrossTask = "cross_task";
inline constexpr std::string_view kInstructions = "instructions";
inline constexpr std::string_view kOneLabel = "one_label";
}  // namespace factor_names

enum class Level : std::uint8_t { Absent = 0, Present = 1, Irrelevant = 2 };

// Conjunction of "factor=value" terms; empty means always applicable.
struct Applicability {
  struct Term {
    std::string factor;
    int value = 1;
    bool operator==(const Term&) const = default;
  };
  std::vector<Term> all_of;
  bool never = false;

  static Applicability parse(std::string_view expr);  // "a=1,b=0", "", "false"
  std::string to_string() const;
  bool operator==(const Applicability&) const = default;
};

// How a factor manifests. Builtin factors are interpreted by the context
// sampler; annotations only tag result records (calibration, model tuning);
// prefix factors prepend fixed text to the prompt when present.
enum class Realization { Builtin, Annotation, PromptPrefix };

struct Factor {
  std::string name;
  std::size_t position = 0;
  Applicability applicable_when;
  Realization realization = Realization::Builtin;
  std::string prefix_text;
};

// The two readings that both give 96 setups for the default factors.
enum class ExclusionRule { NestedInstructions, ExclusiveLabels };

std::string_view to_string(ExclusionRule rule);
ExclusionRule parse_exclusion_rule(std::string_view text);

class FactorSet {
 public:
  FactorSet() = default;
  // Validates position contiguity, name uniqueness and acyclic applicability.
  explicit FactorSet(std::vector<Factor> factors);

  std::size_t size() const { return factors_.size(); }
  const std::vector<Factor>& factors() const { return factors_; }
  const Factor& operator[](std::size_t i) const { return factors_[i]; }
  std::optional<std::size_t> index_of(std::string_view name) const;
  std::size_t require(std::string_view name) const;
  bool contains(std::string_view name) const { return index_of(name).has_value(); }

  // Whether factor i applies given the levels of lower-positioned factors.
  bool applicable(std::size_t i, std::span<const Level> levels) const;

 private:
  std::vector<Factor> factors_;
};

struct Setup {
  std::vector<Level> levels;  // one per factor, in position order

  auto operator<=>(const Setup&) const = default;
};

// Digit string over {0,1,2}, one digit per factor in position order.
using SetupId = std::string;

FactorSet default_factor_set(Task task, ExclusionRule rule = ExclusionRule::NestedInstructions);

std::vector<Setup> enumerate_setups(const FactorSet& factors);

SetupId encode_setup_id(const Setup& setup);
Setup decode_setup_id(std::string_view id, const FactorSet& factors);

// Level of a named factor; throws if the name is unknown.
Level level_of(const Setup& setup, const FactorSet& factors, std::string_view name);
// True when the named factor exists and is Present.
bool is_present(const Setup& setup, const FactorSet& factors, std::string_view name);

FactorSet register_custom_factor(const FactorSet& factors, Factor factor);

// Index pairs (absent, present) of setups that differ only in `name`.
std::vector<std::pair<std::size_t, std::size_t>> pair_indices_differing_in(
    std::span<const Setup> setups, const FactorSet& factors, std::string_view name);
std::vector<std::pair<Setup, Setup>> pairs_differing_in(std::span<const Setup> setups,
                                                        const FactorSet& factors,
                                                        std::string_view name);

// Missing "position" defaults to `default_position`.
Factor factor_from_json(const nlohmann::json& item, std::size_t default_position);
nlohmann::json factor_set_to_json(const FactorSet& factors);
FactorSet factor_set_from_json(const nlohmann::json& doc);

}  // namespace iclc
