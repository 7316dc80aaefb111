#include "iclc/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace iclc {

std::size_t Contingency::total() const {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

Contingency& Contingency::operator+=(const Contingency& other) {
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  masked += other.masked;
  return *this;
}

namespace {

inline bool valid(int label, int labels) { return label >= 0 && label < labels; }

inline void add_pair(Contingency& c, int a, int b) {
  if (!valid(a, c.labels) || !valid(b, c.labels)) {
    ++c.masked;
    return;
  }
  ++c.counts[static_cast<std::size_t>(a * c.labels + b)];
}

double column_entropy(const CellView& view, std::size_t col, std::vector<std::size_t>& hist) {
  std::fill(hist.begin(), hist.end(), 0);
  const std::size_t rows = view.width == 0 ? 0 : view.cells.size() / view.width;
  std::size_t n = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int l = view.at(r, col);
    if (!valid(l, view.labels)) continue;
    ++hist[static_cast<std::size_t>(l)];
    ++n;
  }
  double h = 0.0;
  for (auto c : hist) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(n);
    h -= p * std::log2(p);
  }
  return h;
}

}  // namespace

namespace serial {

Contingency pooled_contingency(const CellView& view, std::span<const RowPair> pairs) {
  Contingency c(view.labels);
  for (const auto& [r0, r1] : pairs)
    for (std::size_t d = 0; d < view.width; ++d) add_pair(c, view.at(r0, d), view.at(r1, d));
  return c;
}

std::vector<double> column_entropies(const CellView& view) {
  std::vector<double> out(view.width);
  std::vector<std::size_t> hist(static_cast<std::size_t>(view.labels));
  for (std::size_t d = 0; d < view.width; ++d) out[d] = column_entropy(view, d, hist);
  return out;
}

std::vector<std::size_t> row_correct(const CellView& view, std::span<const int> gold) {
  const std::size_t rows = view.width == 0 ? 0 : view.cells.size() / view.width;
  std::vector<std::size_t> out(rows, 0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t d = 0; d < view.width; ++d) out[r] += view.at(r, d) == gold[d] ? 1 : 0;
  return out;
}

}  // namespace serial

namespace parallel {

Contingency pooled_contingency(const CellView& view, std::span<const RowPair> pairs) {
  Contingency total(view.labels);
  const auto n = static_cast<long long>(pairs.size() * view.width);
#pragma omp parallel
  {
    Contingency local(view.labels);
#pragma omp for schedule(static) nowait
    for (long long i = 0; i < n; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      const auto& [r0, r1] = pairs[idx / view.width];
      const std::size_t d = idx % view.width;
      add_pair(local, view.at(r0, d), view.at(r1, d));
    }
    // Integer sums: merge order does not affect the result.
#pragma omp critical(iclc_contingency_merge)
    total += local;
  }
  return total;
}

std::vector<double> column_entropies(const CellView& view) {
  std::vector<double> out(view.width);
  const auto n = static_cast<long long>(view.width);
#pragma omp parallel
  {
    std::vector<std::size_t> hist(static_cast<std::size_t>(view.labels));
#pragma omp for schedule(static)
    for (long long d = 0; d < n; ++d)
      out[static_cast<std::size_t>(d)] = column_entropy(view, static_cast<std::size_t>(d), hist);
  }
  return out;
}

std::vector<std::size_t> row_correct(const CellView& view, std::span<const int> gold) {
  const std::size_t rows = view.width == 0 ? 0 : view.cells.size() / view.width;
  std::vector<std::size_t> out(rows, 0);
  const auto n = static_cast<long long>(rows);
#pragma omp parallel for schedule(static)
  for (long long r = 0; r < n; ++r) {
    std::size_t hits = 0;
    for (std::size_t d = 0; d < view.width; ++d)
      hits += view.at(static_cast<std::size_t>(r), d) == gold[d] ? 1 : 0;
    out[static_cast<std::size_t>(r)] = hits;
  }
  return out;
}

}  // namespace parallel

}  // namespace iclc
