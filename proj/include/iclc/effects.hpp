#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iclc/factorial.hpp"

namespace iclc {

// Row-major regressor matrix with named columns.
class Design {
 public:
  Design(std::vector<std::string> columns, std::size_t rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return columns_.size(); }
  const std::vector<std::string>& columns() const { return columns_; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

 private:
  std::vector<std::string> columns_;
  std::size_t rows_;
  std::vector<double> values_;
};

struct RegressionFit {
  std::vector<double> coefficients;  // design column order
  std::vector<double> stderrs;
  std::vector<double> t_stats;
  std::vector<double> p_values;  // two-sided; NaN when dof == 0
  std::size_t n_obs = 0;
  std::size_t dof = 0;
  double rss = 0.0;
};

// Direct solve of the normal equations with partial pivoting.
// Throws ValidationError on rank deficiency, naming the collinear column.
RegressionFit fit_ols(const Design& design, std::span<const double> y);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double regularized_incomplete_beta(double a, double b, double x);
// Two-sided p-value of a Student-t statistic with `dof` degrees of freedom.
double student_t_two_sided_p(double t, double dof);

using AccuracyBySetup = std::map<SetupId, double>;

struct MainEffect {
  std::string factor;
  double beta1 = 0.0;
  double beta0 = 0.0;
  double stderr_beta1 = 0.0;
  double p = 0.0;
  std::size_t n_obs = 0;
};

// acc = beta1 * lambda + beta0 over setups where the factor is applicable.
MainEffect main_effect(const AccuracyBySetup& acc, const FactorSet& factors,
                       std::string_view factor);

struct InteractionEntry {
  std::string factor_i;
  std::string factor_j;
  bool estimable = false;
  double beta_ij = 0.0;
  double p = 0.0;
  bool significant = false;
  std::string note;
};

inline constexpr double kDefaultAlpha = 0.05;

// acc = b_i l_i + b_j l_j + b_ij l_i l_j + b_0 over setups where both apply.
InteractionEntry interaction_effect(const AccuracyBySetup& acc, const FactorSet& factors,
                                    std::string_view factor_i, std::string_view factor_j,
                                    double alpha = kDefaultAlpha);

struct InteractionReport {
  double alpha = kDefaultAlpha;  // per-test threshold actually applied
  bool bonferroni = false;
  std::vector<InteractionEntry> entries;
};

// Every unordered factor pair; Bonferroni divides alpha by the pair count.
InteractionReport interaction_report(const AccuracyBySetup& acc, const FactorSet& factors,
                                     double alpha = kDefaultAlpha, bool bonferroni = false);

struct TemplateScore {
  int template_id = 0;
  std::string name;
  double accuracy = 0.0;
  double c_lambda = 0.0;
};

struct TemplateRanking {
  std::vector<TemplateScore> ordered;  // best first
  std::vector<TemplateScore> high;     // two highest
  std::vector<TemplateScore> low;      // two lowest
};

// Accuracy descending, then c_lambda descending, then template id.
TemplateRanking rank_templates(std::vector<TemplateScore> scores);

}  // namespace iclc
