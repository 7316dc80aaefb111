#pragma once

// Data-parallel inner loops. Every kernel has a serial reference that the
// OpenMP version must match exactly; tests and the benchmark compare them.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace iclc {

enum class ExecPolicy { Serial, Parallel };

// L x L confusion counts of (first, second) label pairs.
struct Contingency {
  int labels = 0;
  std::vector<std::size_t> counts;  // row-major [first * labels + second]
  std::size_t masked = 0;           // pairs dropped because a side was INVALID

  explicit Contingency(int label_count = 0)
      : labels(label_count), counts(static_cast<std::size_t>(label_count * label_count), 0) {}
  std::size_t total() const;
  Contingency& operator+=(const Contingency& other);
  bool operator==(const Contingency&) const = default;
};

// Cells are setup-major with `width` data points per setup.
struct CellView {
  std::span<const int> cells;
  std::size_t width = 0;
  int labels = 0;
  int at(std::size_t row, std::size_t col) const { return cells[row * width + col]; }
};

using RowPair = std::pair<std::size_t, std::size_t>;

namespace serial {
Contingency pooled_contingency(const CellView& view, std::span<const RowPair> pairs);
// Per data column, entropy (bits) of its labels across all rows.
std::vector<double> column_entropies(const CellView& view);
std::vector<std::size_t> row_correct(const CellView& view, std::span<const int> gold);
}  // namespace serial

namespace parallel {
Contingency pooled_contingency(const CellView& view, std::span<const RowPair> pairs);
std::vector<double> column_entropies(const CellView& view);
std::vector<std::size_t> row_correct(const CellView& view, std::span<const int> gold);
}  // namespace parallel

inline Contingency pooled_contingency(const CellView& v, std::span<const RowPair> p, ExecPolicy e) {
  return e == ExecPolicy::Serial ? serial::pooled_contingency(v, p) : parallel::pooled_contingency(v, p);
}
inline std::vector<double> column_entropies(const CellView& v, ExecPolicy e) {
  return e == ExecPolicy::Serial ? serial::column_entropies(v) : parallel::column_entropies(v);
}

// Fills out[i] = make(i) for i in [0, n). The parallel version collects the
// exception of the lowest failing index and rethrows it after the loop.
template <typename T>
void fill_indexed(std::vector<T>& out, std::size_t n, const std::function<T(std::size_t)>& make,
                  ExecPolicy policy);

}  // namespace iclc

#include <exception>

namespace iclc {

template <typename T>
void fill_indexed(std::vector<T>& out, std::size_t n, const std::function<T(std::size_t)>& make,
                  ExecPolicy policy) {
  out.assign(n, T{});
  if (policy == ExecPolicy::Serial) {
    for (std::size_t i = 0; i < n; ++i) out[i] = make(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 16)
  for (long long i = 0; i < count; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      out[idx] = make(idx);
    } catch (...) {
      errors[idx] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace iclc
