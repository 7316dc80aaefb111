#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "iclc/factorial.hpp"
#include "iclc/kernels.hpp"

namespace iclc {

// Predictions for every (setup, data point) cell plus the gold labels.
// Cells hold a label index or kInvalidLabel.
class EvalTable {
 public:
  EvalTable(std::vector<std::string> setup_ids, std::vector<std::string> data_ids,
            std::vector<int> gold, int label_count, std::vector<int> cells);

  std::size_t setup_count() const { return setup_ids_.size(); }
  std::size_t data_count() const { return data_ids_.size(); }
  int label_count() const { return label_count_; }
  const std::vector<std::string>& setup_ids() const { return setup_ids_; }
  const std::vector<std::string>& data_ids() const { return data_ids_; }
  const std::vector<int>& gold() const { return gold_; }

  int at(std::size_t setup, std::size_t data) const { return cells_[setup * data_ids_.size() + data]; }
  std::span<const int> row(std::size_t setup) const {
    return std::span<const int>(cells_).subspan(setup * data_ids_.size(), data_ids_.size());
  }
  std::span<const int> cells() const { return cells_; }
  std::size_t index_of_setup(std::string_view setup_id) const;

  bool is_valid(int label) const { return label >= 0 && label < label_count_; }

 private:
  std::vector<std::string> setup_ids_;
  std::vector<std::string> data_ids_;
  std::vector<int> gold_;
  int label_count_;
  std::vector<int> cells_;
};

struct MaskReport {
  std::vector<bool> masked;  // parallel to EvalTable::cells()
  std::size_t masked_count = 0;
};

MaskReport mask_invalid(const EvalTable& table);

// INVALID counts as incorrect.
double accuracy(const EvalTable& table, std::string_view setup_id);
std::map<SetupId, double> accuracy_by_setup(const EvalTable& table);

struct KappaResult {
  double kappa = 0.0;  // NaN when undefined
  std::size_t used_pairs = 0;
  std::size_t masked_pairs = 0;
  std::string diagnostic;
};

KappaResult kappa_from_contingency(const Contingency& table);
// Pairs where either side is INVALID are dropped.
KappaResult cohen_kappa(std::span<const int> a, std::span<const int> b, int label_count);

enum class KappaPooling { Pooled, PerPairMean };

KappaResult factor_kappa(const EvalTable& table, std::span<const Setup> setups,
                         const FactorSet& factors, std::string_view factor,
                         KappaPooling pooling = KappaPooling::Pooled,
                         ExecPolicy policy = ExecPolicy::Parallel);

struct KappaReport {
  std::vector<std::pair<std::string, KappaResult>> per_factor;  // factor order
  double kappa_avg = 0.0;  // mean over factors with a defined kappa
};

KappaReport kappa_report(const EvalTable& table, std::span<const Setup> setups,
                         const FactorSet& factors, KappaPooling pooling = KappaPooling::Pooled,
                         ExecPolicy policy = ExecPolicy::Parallel);

struct ConsistencyReport {
  double total_entropy = 0.0;  // bits
  double c_pi = 0.0;           // +inf when total_entropy == 0
  std::vector<std::pair<std::string, double>> per_item_entropy;
};

ConsistencyReport model_consistency(const EvalTable& table,
                                    ExecPolicy policy = ExecPolicy::Parallel);

// Shannon entropy in bits of a count histogram; zero counts are skipped.
double entropy_bits(std::span<const std::size_t> counts);

enum class TemplateAgreement { PairwiseMean, PooledRest };

// Predictions of each template on the same ordered data points.
using TemplatePredictions = std::map<int, std::vector<int>>;

double template_consistency(const TemplatePredictions& by_template, int template_id,
                            int label_count,
                            TemplateAgreement mode = TemplateAgreement::PairwiseMean);

struct DiversityReport {
  double entropy = 0.0;       // pooled predictions, bits
  double gold_entropy = 0.0;  // H(Y)
  bool low_diversity = false;
  std::vector<std::size_t> prediction_counts;
};

// Flagged as low diversity when entropy < kLowDiversityRatio * H(Y).
inline constexpr double kLowDiversityRatio = 0.5;

DiversityReport prediction_diversity(const EvalTable& table);

}  // namespace iclc
