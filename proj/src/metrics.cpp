#include "iclc/metrics.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "iclc/error.hpp"

namespace iclc {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

EvalTable::EvalTable(std::vector<std::string> setup_ids, std::vector<std::string> data_ids,
                     std::vector<int> gold, int label_count, std::vector<int> cells)
    : setup_ids_(std::move(setup_ids)),
      data_ids_(std::move(data_ids)),
      gold_(std::move(gold)),
      label_count_(label_count),
      cells_(std::move(cells)) {
  if (label_count_ < 1) throw ValidationError("label count must be positive");
  if (gold_.size() != data_ids_.size()) throw ValidationError("one gold label per data point required");
  if (cells_.size() != setup_ids_.size() * data_ids_.size())
    throw ValidationError(fmt::format("table has {} cells, expected {} x {}", cells_.size(),
                                      setup_ids_.size(), data_ids_.size()));
  for (std::size_t d = 0; d < gold_.size(); ++d) {
    if (!is_valid(gold_[d]))
      throw ValidationError(fmt::format("gold label {} of '{}' out of range", gold_[d], data_ids_[d]));
  }
  for (auto& c : cells_) {
    if (!is_valid(c)) c = kInvalidLabel;
  }
}

std::size_t EvalTable::index_of_setup(std::string_view setup_id) const {
  for (std::size_t i = 0; i < setup_ids_.size(); ++i)
    if (setup_ids_[i] == setup_id) return i;
  throw ValidationError(fmt::format("unknown setup '{}'", setup_id));
}

MaskReport mask_invalid(const EvalTable& table) {
  MaskReport out;
  out.masked.resize(table.cells().size());
  for (std::size_t i = 0; i < table.cells().size(); ++i) {
    out.masked[i] = !table.is_valid(table.cells()[i]);
    out.masked_count += out.masked[i] ? 1 : 0;
  }
  return out;
}

double accuracy(const EvalTable& table, std::string_view setup_id) {
  const auto s = table.index_of_setup(setup_id);
  if (table.data_count() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t d = 0; d < table.data_count(); ++d) hits += table.at(s, d) == table.gold()[d];
  return static_cast<double>(hits) / static_cast<double>(table.data_count());
}

std::map<SetupId, double> accuracy_by_setup(const EvalTable& table) {
  const CellView view{table.cells(), table.data_count(), table.label_count()};
  const auto hits = parallel::row_correct(view, table.gold());
  std::map<SetupId, double> out;
  for (std::size_t s = 0; s < table.setup_count(); ++s) {
    out[table.setup_ids()[s]] =
        table.data_count() == 0 ? 0.0
                                : static_cast<double>(hits[s]) / static_cast<double>(table.data_count());
  }
  return out;
}

KappaResult kappa_from_contingency(const Contingency& c) {
  KappaResult r;
  r.used_pairs = c.total();
  r.masked_pairs = c.masked;
  if (r.used_pairs == 0) {
    r.kappa = kNaN;
    r.diagnostic = "zero usable pairs";
    return r;
  }
  const auto L = static_cast<std::size_t>(c.labels);
  double agree = 0.0;
  double chance = 0.0;  // sum of row_i * col_i
  for (std::size_t i = 0; i < L; ++i) {
    double row = 0.0;
    double col = 0.0;
    for (std::size_t j = 0; j < L; ++j) {
      row += static_cast<double>(c.counts[i * L + j]);
      col += static_cast<double>(c.counts[j * L + i]);
    }
    agree += static_cast<double>(c.counts[i * L + i]);
    chance += row * col;
  }
  const double n = static_cast<double>(r.used_pairs);
  const double p_o = agree / n;
  const double p_e = chance / (n * n);
  if (chance == n * n) {
    // Both raters constant on the same label.
    r.kappa = p_o == 1.0 ? 1.0 : kNaN;
    if (std::isnan(r.kappa)) r.diagnostic = "chance agreement is 1";
    return r;
  }
  r.kappa = (p_o - p_e) / (1.0 - p_e);
  return r;
}

KappaResult cohen_kappa(std::span<const int> a, std::span<const int> b, int label_count) {
  if (a.size() != b.size())
    throw ValidationError(fmt::format("kappa needs equal-length lists ({} vs {})", a.size(), b.size()));
  Contingency c(label_count);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool ok = a[i] >= 0 && a[i] < label_count && b[i] >= 0 && b[i] < label_count;
    if (!ok) {
      ++c.masked;
      continue;
    }
    ++c.counts[static_cast<std::size_t>(a[i] * label_count + b[i])];
  }
  return kappa_from_contingency(c);
}

KappaResult factor_kappa(const EvalTable& table, std::span<const Setup> setups,
                         const FactorSet& factors, std::string_view factor, KappaPooling pooling,
                         ExecPolicy policy) {
  if (setups.size() != table.setup_count())
    throw ValidationError("setup list does not match the evaluation table");
  for (std::size_t i = 0; i < setups.size(); ++i) {
    if (encode_setup_id(setups[i]) != table.setup_ids()[i])
      throw ValidationError(fmt::format("setup {} does not match table row '{}'",
                                        encode_setup_id(setups[i]), table.setup_ids()[i]));
  }
  const auto pairs = pair_indices_differing_in(setups, factors, factor);
  if (pairs.empty()) {
    KappaResult r;
    r.kappa = kNaN;
    r.diagnostic = fmt::format("factor '{}' has no setup pairs", factor);
    return r;
  }
  const CellView view{table.cells(), table.data_count(), table.label_count()};
  if (pooling == KappaPooling::Pooled) return kappa_from_contingency(pooled_contingency(view, pairs, policy));

  KappaResult out;
  double sum = 0.0;
  std::size_t defined = 0;
  for (const auto& pair : pairs) {
    auto r = kappa_from_contingency(pooled_contingency(view, std::span(&pair, 1), ExecPolicy::Serial));
    out.used_pairs += r.used_pairs;
    out.masked_pairs += r.masked_pairs;
    if (!std::isnan(r.kappa)) {
      sum += r.kappa;
      ++defined;
    }
  }
  out.kappa = defined ? sum / static_cast<double>(defined) : kNaN;
  if (!defined) out.diagnostic = "no setup pair has a defined kappa";
  return out;
}

KappaReport kappa_report(const EvalTable& table, std::span<const Setup> setups,
                         const FactorSet& factors, KappaPooling pooling, ExecPolicy policy) {
  KappaReport report;
  double sum = 0.0;
  std::size_t defined = 0;
  for (const auto& f : factors.factors()) {
    auto r = factor_kappa(table, setups, factors, f.name, pooling, policy);
    if (!std::isnan(r.kappa)) {
      sum += r.kappa;
      ++defined;
    }
    report.per_factor.emplace_back(f.name, std::move(r));
  }
  report.kappa_avg = defined ? sum / static_cast<double>(defined) : kNaN;
  return report;
}

double entropy_bits(std::span<const std::size_t> counts) {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  if (n == 0) return 0.0;
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(n);
    h -= p * std::log2(p);
  }
  return h;
}

ConsistencyReport model_consistency(const EvalTable& table, ExecPolicy policy) {
  if (table.setup_count() < 2)
    throw ValidationError("model consistency needs at least two setups");
  const CellView view{table.cells(), table.data_count(), table.label_count()};
  const auto entropies = column_entropies(view, policy);
  ConsistencyReport r;
  for (std::size_t d = 0; d < entropies.size(); ++d) {
    r.total_entropy += entropies[d];
    r.per_item_entropy.emplace_back(table.data_ids()[d], entropies[d]);
  }
  r.c_pi = r.total_entropy > 0.0 ? 1.0 / r.total_entropy : std::numeric_limits<double>::infinity();
  return r;
}

double template_consistency(const TemplatePredictions& by_template, int template_id,
                            int label_count, TemplateAgreement mode) {
  if (by_template.size() < 2)
    throw ValidationError("template consistency needs at least two templates");
  auto self = by_template.find(template_id);
  if (self == by_template.end())
    throw ValidationError(fmt::format("template {} has no predictions", template_id));

  if (mode == TemplateAgreement::PooledRest) {
    std::vector<int> mine;
    std::vector<int> rest;
    for (const auto& [id, preds] : by_template) {
      if (id == template_id) continue;
      if (preds.size() != self->second.size())
        throw ValidationError("templates were evaluated on different data");
      mine.insert(mine.end(), self->second.begin(), self->second.end());
      rest.insert(rest.end(), preds.begin(), preds.end());
    }
    return cohen_kappa(mine, rest, label_count).kappa;
  }

  double sum = 0.0;
  std::size_t defined = 0;
  for (const auto& [id, preds] : by_template) {
    if (id == template_id) continue;
    auto r = cohen_kappa(self->second, preds, label_count);
    if (!std::isnan(r.kappa)) {
      sum += r.kappa;
      ++defined;
    }
  }
  return defined ? sum / static_cast<double>(defined) : kNaN;
}

DiversityReport prediction_diversity(const EvalTable& table) {
  DiversityReport r;
  const auto L = static_cast<std::size_t>(table.label_count());
  r.prediction_counts.assign(L, 0);
  for (int c : table.cells())
    if (table.is_valid(c)) ++r.prediction_counts[static_cast<std::size_t>(c)];
  std::vector<std::size_t> gold_counts(L, 0);
  for (int g : table.gold()) ++gold_counts[static_cast<std::size_t>(g)];
  r.entropy = entropy_bits(r.prediction_counts);
  r.gold_entropy = entropy_bits(gold_counts);
  r.low_diversity = r.entropy < kLowDiversityRatio * r.gold_entropy;
  return r;
}

}  // namespace iclc
