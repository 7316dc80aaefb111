#include "iclc/sampler.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_set>

#include <fmt/format.h>

#include "iclc/error.hpp"

namespace iclc {

using nlohmann::json;
namespace fn = factor_names;

json to_json(const PromptInstance& p) {
  json refs = json::array();
  for (const auto& r : p.in_context_ids) refs.push_back(json::array({r.data_id, r.template_id}));
  return json{{"setup_id", p.setup_id},
              {"data_id", p.data_id},
              {"text", p.text},
              {"label_space", p.label_space},
              {"in_context_ids", std::move(refs)},
              {"target_template_id", p.target_template_id},
              {"metadata", p.metadata}};
}

PromptInstance prompt_from_json(const json& obj) {
  PromptInstance p;
  try {
    p.setup_id = obj.at("setup_id").get<std::string>();
    p.data_id = obj.at("data_id").get<std::string>();
    p.text = obj.at("text").get<std::string>();
    p.label_space = obj.at("label_space").get<std::vector<std::string>>();
    for (const auto& ref : obj.at("in_context_ids")) {
      if (!ref.is_array() || ref.size() != 2) throw ParseError("in_context_ids entries are [data_id, template_id]");
      p.in_context_ids.push_back({ref[0].get<std::string>(), ref[1].get<int>()});
    }
    p.target_template_id = obj.at("target_template_id").get<int>();
    p.metadata = obj.value("metadata", json::object());
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("prompt record: {}", e.what()));
  }
  return p;
}

std::string probe_setup_key(const SetupId& base, int template_id) {
  return fmt::format("{}@t{:02d}", base, template_id);
}

std::optional<std::pair<SetupId, int>> parse_probe_key(std::string_view key) {
  const auto at = key.find("@t");
  if (at == std::string_view::npos) return std::nullopt;
  int id = 0;
  const auto digits = key.substr(at + 2);
  if (digits.empty()) return std::nullopt;
  for (char c : digits) {
    if (c < '0' || c > '9') return std::nullopt;
    id = id * 10 + (c - '0');
  }
  return std::pair{SetupId(key.substr(0, at)), id};
}

void PoolSet::add(const Corpus& train) {
  std::vector<TrainingPool> by_label;
  for (int l = 0; l < label_count(train.task()); ++l) by_label.emplace_back(train, l);
  pools_.erase(train.task());
  pools_.emplace(train.task(), TaskPools{&train, TrainingPool(train), std::move(by_label)});
}

const TrainingPool& PoolSet::all(Task task) const {
  auto it = pools_.find(task);
  if (it == pools_.end())
    throw ValidationError(fmt::format("no {} training pool loaded", to_string(task)));
  return it->second.all;
}

const TrainingPool& PoolSet::with_label(Task task, int label) const {
  auto it = pools_.find(task);
  if (it == pools_.end())
    throw ValidationError(fmt::format("no {} training pool loaded", to_string(task)));
  if (label < 0 || static_cast<std::size_t>(label) >= it->second.by_label.size())
    throw ValidationError(fmt::format("label {} outside {} label space", label, to_string(task)));
  return it->second.by_label[static_cast<std::size_t>(label)];
}

const Corpus& PoolSet::corpus(Task task) const {
  auto it = pools_.find(task);
  if (it == pools_.end())
    throw ValidationError(fmt::format("no {} training pool loaded", to_string(task)));
  return *it->second.corpus;
}

std::uint64_t prompt_seed(std::uint64_t global_seed, std::string_view setup_key,
                          std::string_view data_id) {
  return StableHash().add(global_seed).add(setup_key).add(data_id).digest();
}

PromptGenerator::PromptGenerator(FactorSet factors, const TemplateSet& templates,
                                 const PoolSet& pools, Task target_task, std::uint64_t seed,
                                 TargetTemplateNames names)
    : factors_(std::move(factors)),
      templates_(&templates),
      pools_(&pools),
      target_task_(target_task),
      seed_(seed),
      names_(std::move(names)) {}

std::size_t PromptGenerator::shots(const Setup& setup) const {
  return is_present(setup, factors_, fn::kNShots) ? kManyShots : kFewShots;
}

Task PromptGenerator::source_task(const Setup& setup) const {
  return is_present(setup, factors_, fn::kCrossTask) ? Task::QQP : target_task_;
}

const InstructionTemplate& PromptGenerator::target_template(const Setup& setup) const {
  const bool high = is_present(setup, factors_, fn::kHpInstructions);
  const bool alternate = is_present(setup, factors_, fn::kInstructions);
  const std::string& name = high ? (alternate ? names_.high_alternate : names_.high_default)
                                 : (alternate ? names_.low_alternate : names_.low_default);
  return templates_->get(target_task_, name);
}

const InstructionTemplate& PromptGenerator::fixed_context_template(
    const Setup& setup, const InstructionTemplate& target) const {
  const Task source = source_task(setup);
  if (source == target.task) return target;
  auto candidates = templates_->for_task(source);
  if (candidates.empty())
    throw ValidationError(fmt::format("no templates for in-context task {}", to_string(source)));
  return *candidates.front();
}

std::vector<Selection> PromptGenerator::select_in_context(const Setup& setup,
                                                          const DataRecord& target,
                                                          const InstructionTemplate& target_tmpl,
                                                          std::uint64_t draw_seed) const {
  Rng rng(draw_seed);
  const std::size_t k = shots(setup);
  const Task source = source_task(setup);
  if (!pools_->has(source))
    throw ValidationError(fmt::format("in-context task {} requires a {} training pool",
                                      to_string(source), to_string(source)));
  const int labels = label_count(source);
  const std::unordered_set<std::string> exclude{target.data_id};

  std::vector<const DataRecord*> records;
  if (is_present(setup, factors_, fn::kOneLabel)) {
    const int label = static_cast<int>(rng.below(static_cast<std::uint64_t>(labels)));
    records = pools_->with_label(source, label).draw(k, rng, exclude);
  } else if (is_present(setup, factors_, fn::kBalancedLabels)) {
    // Round-robin over a shuffled label order: counts differ by at most one.
    std::vector<int> order(static_cast<std::size_t>(labels));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<std::size_t> counts(order.size(), 0);
    for (std::size_t i = 0; i < k; ++i) ++counts[static_cast<std::size_t>(order[i % order.size()])];
    for (int l = 0; l < labels; ++l) {
      auto part = pools_->with_label(source, l).draw(counts[static_cast<std::size_t>(l)], rng, exclude);
      records.insert(records.end(), part.begin(), part.end());
    }
  } else {
    records = pools_->all(source).draw(k, rng, exclude);
  }
  rng.shuffle(records);

  const bool cross_templates = is_present(setup, factors_, fn::kCrossTemplates);
  const auto source_templates = templates_->for_task(source);
  const auto& fixed = fixed_context_template(setup, target_tmpl);
  std::vector<Selection> out;
  out.reserve(records.size());
  for (const auto* r : records) {
    const InstructionTemplate* t = &fixed;
    if (cross_templates) t = source_templates[static_cast<std::size_t>(rng.below(source_templates.size()))];
    out.push_back({r, t});
  }
  return out;
}

PromptInstance PromptGenerator::compose_prompt(const Setup& setup, const DataRecord& target,
                                               const std::vector<Selection>& selection,
                                               const InstructionTemplate& target_tmpl) const {
  if (selection.size() != shots(setup))
    throw ValidationError(fmt::format("selection has {} examples, setup requires {}",
                                      selection.size(), shots(setup)));
  PromptInstance p;
  p.setup_id = encode_setup_id(setup);
  p.data_id = target.data_id;
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    const auto& f = factors_[i];
    if (f.realization == Realization::PromptPrefix && setup.levels[i] == Level::Present)
      p.text += f.prefix_text;
  }
  for (const auto& sel : selection) {
    if (sel.record->data_id == target.data_id)
      throw ValidationError(fmt::format("target '{}' selected as its own in-context example",
                                        target.data_id));
    p.text += render_in_context(*sel.tmpl, *sel.record).text;
    p.text += "\n\n";
    p.in_context_ids.push_back({sel.record->data_id, sel.tmpl->template_id});
  }
  auto block = render_target(target_tmpl, target);
  p.text += block.text;
  p.label_space = std::move(block.label_space);
  p.target_template_id = target_tmpl.template_id;

  const bool vacuous = is_present(setup, factors_, fn::kBalancedLabels) &&
                       is_present(setup, factors_, fn::kOneLabel);
  p.metadata["balance_vacuous"] = vacuous;
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    const auto& f = factors_[i];
    if (f.realization == Realization::Annotation && setup.levels[i] != Level::Irrelevant)
      p.metadata[f.name] = static_cast<int>(setup.levels[i]);
  }
  return p;
}

PromptInstance PromptGenerator::generate(const Setup& setup, const DataRecord& target) const {
  const auto id = encode_setup_id(setup);
  try {
    const auto& tmpl = target_template(setup);
    auto selection = select_in_context(setup, target, tmpl, prompt_seed(seed_, id, target.data_id));
    return compose_prompt(setup, target, selection, tmpl);
  } catch (const Error& e) {
    throw Error(fmt::format("setup {} / data {}: {}", id, target.data_id, e.what()));
  }
}

PromptInstance PromptGenerator::generate_probe(const Setup& setup, const DataRecord& target,
                                               const InstructionTemplate& probe_template) const {
  const auto id = encode_setup_id(setup);
  try {
    // Same draw for every template so only the instruction varies.
    auto selection =
        select_in_context(setup, target, probe_template, prompt_seed(seed_, id, target.data_id));
    auto p = compose_prompt(setup, target, selection, probe_template);
    p.setup_id = probe_setup_key(id, probe_template.template_id);
    return p;
  } catch (const Error& e) {
    throw Error(fmt::format("probe {} / template {} / data {}: {}", id,
                            probe_template.template_id, target.data_id, e.what()));
  }
}

PromptValidator::PromptValidator(const PromptGenerator& generator, const Corpus& eval_corpus)
    : gen_(&generator), eval_(&eval_corpus) {}

std::vector<Violation> PromptValidator::check(const PromptInstance& p) const {
  std::vector<Violation> out;
  auto fail = [&](std::string msg) { out.push_back({p.setup_id, p.data_id, std::move(msg)}); };

  const auto& factors = gen_->factors();
  const auto& templates = gen_->templates();
  const auto probe = parse_probe_key(p.setup_id);
  Setup setup;
  try {
    setup = decode_setup_id(probe ? std::string_view(probe->first) : std::string_view(p.setup_id),
                            factors);
  } catch (const Error& e) {
    fail(e.what());
    return out;
  }
  const DataRecord* target = eval_->find(p.data_id);
  if (!target) {
    fail("target data id not found in the evaluation corpus");
    return out;
  }

  // Target template.
  const InstructionTemplate* target_tmpl = nullptr;
  if (probe) {
    target_tmpl = templates.find(gen_->target_task(), probe->second);
    if (!target_tmpl) fail(fmt::format("probe template {} does not exist", probe->second));
  } else {
    target_tmpl = &gen_->target_template(setup);
  }
  if (target_tmpl && p.target_template_id != target_tmpl->template_id)
    fail(fmt::format("target template {} but setup requires {} ('{}')", p.target_template_id,
                     target_tmpl->template_id, target_tmpl->name));
  if (target_tmpl && p.label_space != target_tmpl->answer_choices)
    fail("label space differs from the target template's answer choices");

  // Shot count and cue structure.
  const std::size_t k = gen_->shots(setup);
  if (p.in_context_ids.size() != k)
    fail(fmt::format("expected k={} in-context examples, found {}", k, p.in_context_ids.size()));
  const std::string_view cue = kAnswerCue;
  if (p.text.size() < cue.size() || p.text.compare(p.text.size() - cue.size(), cue.size(), cue) != 0)
    fail("text does not end with the answer cue");
  std::size_t cues = 0;
  for (auto pos = p.text.find("ANSWER:"); pos != std::string::npos; pos = p.text.find("ANSWER:", pos + 1))
    ++cues;
  if (cues != p.in_context_ids.size() + 1)
    fail(fmt::format("expected {} answer cues, found {}", p.in_context_ids.size() + 1, cues));

  // In-context records: task, distinctness, labels, templates.
  const Task source = gen_->source_task(setup);
  const Corpus* source_corpus = gen_->pools().has(source) ? &gen_->pools().corpus(source) : nullptr;
  if (!source_corpus) {
    fail(fmt::format("no {} training pool to check against", to_string(source)));
    return out;
  }
  std::vector<const DataRecord*> records;
  std::vector<const InstructionTemplate*> ctx_templates;
  std::unordered_set<std::string> seen;
  bool resolved = true;
  for (const auto& ref : p.in_context_ids) {
    const DataRecord* r = source_corpus->find(ref.data_id);
    if (!r) {
      fail(fmt::format("in-context record '{}' is not in the {} training pool", ref.data_id,
                       to_string(source)));
      resolved = false;
      continue;
    }
    if (ref.data_id == p.data_id) fail("target appears among its own in-context examples");
    if (!seen.insert(ref.data_id).second) fail(fmt::format("in-context record '{}' repeated", ref.data_id));
    const InstructionTemplate* t = templates.find(source, ref.template_id);
    if (!t) {
      fail(fmt::format("in-context template {} is not a {} template", ref.template_id,
                       to_string(source)));
      resolved = false;
      continue;
    }
    records.push_back(r);
    ctx_templates.push_back(t);
  }

  const int labels = label_count(source);
  std::vector<int> counts(static_cast<std::size_t>(labels), 0);
  for (const auto* r : records) ++counts[static_cast<std::size_t>(r->gold)];
  if (is_present(setup, factors, fn::kOneLabel)) {
    const auto nonzero = std::count_if(counts.begin(), counts.end(), [](int c) { return c > 0; });
    if (nonzero > 1) fail("one_label setup has in-context examples with several labels");
  } else if (is_present(setup, factors, fn::kBalancedLabels)) {
    auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    if (*hi - *lo > 1) fail("balanced_labels setup has unbalanced in-context labels");
  }
  const bool vacuous = is_present(setup, factors, fn::kBalancedLabels) &&
                       is_present(setup, factors, fn::kOneLabel);
  if (p.metadata.value("balance_vacuous", false) != vacuous)
    fail("balance_vacuous metadata does not match the setup");

  if (!is_present(setup, factors, fn::kCrossTemplates) && target_tmpl) {
    const auto& fixed = gen_->fixed_context_template(setup, *target_tmpl);
    for (const auto* t : ctx_templates) {
      if (t != &fixed) {
        fail(fmt::format("in-context template {} but cross_templates is absent (expected {})",
                         t->template_id, fixed.template_id));
        break;
      }
    }
  }

  // Byte-exact re-render from the recorded ids.
  if (resolved && target_tmpl && records.size() == p.in_context_ids.size() && out.empty()) {
    std::vector<Selection> selection;
    for (std::size_t i = 0; i < records.size(); ++i) selection.push_back({records[i], ctx_templates[i]});
    try {
      auto expected = gen_->compose_prompt(setup, *target, selection, *target_tmpl);
      if (expected.text != p.text) fail("text does not match a re-render of the recorded ids");
    } catch (const Error& e) {
      fail(fmt::format("re-render failed: {}", e.what()));
    }
  }
  return out;
}

}  // namespace iclc
