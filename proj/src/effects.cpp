#include "iclc/effects.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <fmt/format.h>

#include "iclc/error.hpp"

namespace iclc {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

Design::Design(std::vector<std::string> columns, std::size_t rows)
    : columns_(std::move(columns)), rows_(rows), values_(rows * columns_.size(), 0.0) {}

RegressionFit fit_ols(const Design& X, std::span<const double> y) {
  const std::size_t n = X.rows();
  const std::size_t p = X.cols();
  if (y.size() != n) throw ValidationError(fmt::format("{} responses for {} rows", y.size(), n));
  if (p == 0) throw ValidationError("design has no columns");
  if (n <= p)
    throw ValidationError(fmt::format("{} observations cannot fit {} regressors", n, p));

  // Augmented [X'X | I | X'y].
  const std::size_t w = 2 * p + 1;
  std::vector<double> a(p * w, 0.0);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < n; ++r) s += X(r, i) * X(r, j);
      a[i * w + j] = s;
    }
    a[i * w + p + i] = 1.0;
    double s = 0.0;
    for (std::size_t r = 0; r < n; ++r) s += X(r, i) * y[r];
    a[i * w + 2 * p] = s;
  }
  double scale = 0.0;
  for (std::size_t i = 0; i < p; ++i) scale = std::max(scale, std::abs(a[i * w + i]));
  const double tol = std::max(scale, 1.0) * 1e-12;

  // Gauss-Jordan with partial pivoting over the column's remaining rows.
  for (std::size_t col = 0; col < p; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < p; ++r)
      if (std::abs(a[r * w + col]) > std::abs(a[piv * w + col])) piv = r;
    if (std::abs(a[piv * w + col]) <= tol) {
      std::string earlier;
      for (std::size_t c = 0; c < col; ++c) earlier += (c ? ", " : "") + X.columns()[c];
      throw ValidationError(fmt::format("rank-deficient design: column '{}' is collinear with [{}]",
                                        X.columns()[col], earlier));
    }
    if (piv != col)
      for (std::size_t k = 0; k < w; ++k) std::swap(a[col * w + k], a[piv * w + k]);
    const double d = a[col * w + col];
    for (std::size_t k = 0; k < w; ++k) a[col * w + k] /= d;
    for (std::size_t r = 0; r < p; ++r) {
      if (r == col) continue;
      const double f = a[r * w + col];
      if (f == 0.0) continue;
      for (std::size_t k = 0; k < w; ++k) a[r * w + k] -= f * a[col * w + k];
    }
  }

  RegressionFit fit;
  fit.n_obs = n;
  fit.dof = n - p;
  fit.coefficients.resize(p);
  for (std::size_t i = 0; i < p; ++i) fit.coefficients[i] = a[i * w + 2 * p];
  for (std::size_t r = 0; r < n; ++r) {
    double pred = 0.0;
    for (std::size_t i = 0; i < p; ++i) pred += X(r, i) * fit.coefficients[i];
    fit.rss += (y[r] - pred) * (y[r] - pred);
  }
  const double sigma2 = fit.rss / static_cast<double>(fit.dof);
  for (std::size_t i = 0; i < p; ++i) {
    const double var = sigma2 * a[i * w + p + i];
    const double se = std::sqrt(std::max(var, 0.0));
    const double beta = fit.coefficients[i];
    double t;
    double pv;
    if (se > 0.0) {
      t = beta / se;
      pv = student_t_two_sided_p(t, static_cast<double>(fit.dof));
    } else {
      // Exact fit: any nonzero coefficient is infinitely significant.
      t = beta == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), beta);
      pv = beta == 0.0 ? 1.0 : 0.0;
    }
    fit.stderrs.push_back(se);
    fit.t_stats.push_back(t);
    fit.p_values.push_back(pv);
  }
  return fit;
}

namespace {

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw ValidationError("incomplete beta needs a, b > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  // Use the symmetry relation where the fraction converges fastest.
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double dof) {
  if (!(dof > 0.0)) return kNaN;
  if (std::isnan(t)) return kNaN;
  if (std::isinf(t)) return 0.0;
  const double x = dof / (dof + t * t);
  return std::clamp(regularized_incomplete_beta(dof / 2.0, 0.5, x), 0.0, 1.0);
}

MainEffect main_effect(const AccuracyBySetup& acc, const FactorSet& factors,
                       std::string_view factor) {
  const auto pos = factors.require(factor);
  std::vector<double> lambda;
  std::vector<double> y;
  for (const auto& [id, value] : acc) {
    const auto setup = decode_setup_id(id, factors);
    if (setup.levels[pos] == Level::Irrelevant) continue;
    lambda.push_back(setup.levels[pos] == Level::Present ? 1.0 : 0.0);
    y.push_back(value);
  }
  const auto ones = std::count(lambda.begin(), lambda.end(), 1.0);
  if (ones == 0 || ones == static_cast<std::ptrdiff_t>(lambda.size()))
    throw ValidationError(fmt::format("factor '{}' is observed at only one level", factor));

  Design X({"intercept", std::string(factor)}, y.size());
  for (std::size_t r = 0; r < y.size(); ++r) {
    X(r, 0) = 1.0;
    X(r, 1) = lambda[r];
  }
  MainEffect out;
  out.factor = std::string(factor);
  out.n_obs = y.size();
  if (y.size() == 2) {
    // Two observations: exact line, no residual degrees of freedom.
    out.beta0 = lambda[0] == 0.0 ? y[0] : y[1];
    out.beta1 = (lambda[0] == 1.0 ? y[0] : y[1]) - out.beta0;
    out.stderr_beta1 = kNaN;
    out.p = kNaN;
    return out;
  }
  const auto fit = fit_ols(X, y);
  out.beta0 = fit.coefficients[0];
  out.beta1 = fit.coefficients[1];
  out.stderr_beta1 = fit.stderrs[1];
  out.p = fit.p_values[1];
  return out;
}

InteractionEntry interaction_effect(const AccuracyBySetup& acc, const FactorSet& factors,
                                    std::string_view factor_i, std::string_view factor_j,
                                    double alpha) {
  const auto pi = factors.require(factor_i);
  const auto pj = factors.require(factor_j);
  InteractionEntry e;
  e.factor_i = std::string(factor_i);
  e.factor_j = std::string(factor_j);

  std::vector<std::pair<double, double>> levels;
  std::vector<double> y;
  std::set<std::pair<double, double>> combos;
  for (const auto& [id, value] : acc) {
    const auto setup = decode_setup_id(id, factors);
    if (setup.levels[pi] == Level::Irrelevant || setup.levels[pj] == Level::Irrelevant) continue;
    const double li = setup.levels[pi] == Level::Present ? 1.0 : 0.0;
    const double lj = setup.levels[pj] == Level::Present ? 1.0 : 0.0;
    levels.emplace_back(li, lj);
    combos.emplace(li, lj);
    y.push_back(value);
  }
  if (combos.size() < 4) {
    e.note = fmt::format("joint support covers {} of 4 level combinations", combos.size());
    e.beta_ij = kNaN;
    e.p = kNaN;
    return e;
  }
  Design X({"intercept", e.factor_i, e.factor_j, e.factor_i + "*" + e.factor_j}, y.size());
  for (std::size_t r = 0; r < y.size(); ++r) {
    X(r, 0) = 1.0;
    X(r, 1) = levels[r].first;
    X(r, 2) = levels[r].second;
    X(r, 3) = levels[r].first * levels[r].second;
  }
  if (y.size() <= 4) {
    e.note = "no residual degrees of freedom";
    e.beta_ij = kNaN;
    e.p = kNaN;
    return e;
  }
  const auto fit = fit_ols(X, y);
  e.estimable = true;
  e.beta_ij = fit.coefficients[3];
  e.p = fit.p_values[3];
  e.significant = e.p < alpha;
  return e;
}

InteractionReport interaction_report(const AccuracyBySetup& acc, const FactorSet& factors,
                                     double alpha, bool bonferroni) {
  InteractionReport report;
  const std::size_t f = factors.size();
  const std::size_t tests = f * (f - (f ? 1 : 0)) / 2;
  report.bonferroni = bonferroni;
  report.alpha = bonferroni && tests > 0 ? alpha / static_cast<double>(tests) : alpha;
  for (std::size_t i = 0; i < f; ++i)
    for (std::size_t j = i + 1; j < f; ++j)
      report.entries.push_back(
          interaction_effect(acc, factors, factors[i].name, factors[j].name, report.alpha));
  return report;
}

TemplateRanking rank_templates(std::vector<TemplateScore> scores) {
  if (scores.size() < 4)
    throw ValidationError(fmt::format("ranking needs at least 4 templates, got {}", scores.size()));
  auto key = [](double v) { return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v; };
  std::sort(scores.begin(), scores.end(), [&](const TemplateScore& a, const TemplateScore& b) {
    if (key(a.accuracy) != key(b.accuracy)) return key(a.accuracy) > key(b.accuracy);
    if (key(a.c_lambda) != key(b.c_lambda)) return key(a.c_lambda) > key(b.c_lambda);
    return a.template_id < b.template_id;
  });
  TemplateRanking r;
  r.ordered = scores;
  r.high = {scores[0], scores[1]};
  r.low = {scores[scores.size() - 2], scores[scores.size() - 1]};
  return r;
}

}  // namespace iclc
