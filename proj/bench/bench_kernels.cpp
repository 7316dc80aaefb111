// Serial vs OpenMP timings for the scoring kernels and prompt generation.
// Usage: bench_kernels [rows] [width] [reps]

#include <omp.h>

#include <chrono>
#include <cstdlib>
#include <iostream>

#include <fmt/format.h>

#include "iclc/factorial.hpp"
#include "iclc/kernels.hpp"
#include "iclc/rng.hpp"
#include "iclc/sampler.hpp"
#include "synthetic.hpp"

using namespace iclc;
using Clock = std::chrono::steady_clock;

namespace {

template <typename F>
double best_of(int reps, F&& f) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const auto t = Clock::now();
    f();
    best = std::min(best, std::chrono::duration<double, std::milli>(Clock::now() - t).count());
  }
  return best;
}

void report(const char* name, double serial_ms, double parallel_ms, bool same) {
  std::cout << fmt::format("{:<22} serial {:9.2f} ms  parallel {:9.2f} ms  speedup {:5.2f}x  {}\n", name,
                           serial_ms, parallel_ms, serial_ms / parallel_ms, same ? "match" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  const std::size_t rows = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 96;
  const std::size_t width = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 20000;
  const int reps = argc > 3 ? std::atoi(argv[3]) : 5;
  std::cout << fmt::format("{} rows x {} columns, {} threads, best of {}\n", rows, width,
                           omp_get_max_threads(), reps);

  Rng rng(1);
  std::vector<int> cells(rows * width);
  for (auto& c : cells) c = rng.below(20) == 0 ? -1 : static_cast<int>(rng.below(3));
  std::vector<int> gold(width);
  for (auto& g : gold) g = static_cast<int>(rng.below(3));
  const CellView view{cells, width, 3};
  std::vector<RowPair> pairs;
  for (std::size_t i = 0; i + 1 < rows; i += 2) pairs.emplace_back(i, i + 1);

  Contingency cs;
  Contingency cp;
  const double s1 = best_of(reps, [&] { cs = serial::pooled_contingency(view, pairs); });
  const double p1 = best_of(reps, [&] { cp = parallel::pooled_contingency(view, pairs); });
  report("pooled_contingency", s1, p1, cs == cp);

  std::vector<double> es;
  std::vector<double> ep;
  const double s2 = best_of(reps, [&] { es = serial::column_entropies(view); });
  const double p2 = best_of(reps, [&] { ep = parallel::column_entropies(view); });
  report("column_entropies", s2, p2, es == ep);

  std::vector<std::size_t> rs;
  std::vector<std::size_t> rp;
  const double s3 = best_of(reps, [&] { rs = serial::row_correct(view, gold); });
  const double p3 = best_of(reps, [&] { rp = parallel::row_correct(view, gold); });
  report("row_correct", s3, p3, rs == rp);

  // Prompt generation for every (setup, record) cell.
  const TemplateSet templates(bundled_templates());
  const Corpus train(Task::ANLI, Split::Train, testing::synthetic_records(Task::ANLI, Split::Train, 2000, 2));
  const Corpus qqp(Task::QQP, Split::Train, testing::synthetic_records(Task::QQP, Split::Train, 300, 2));
  const Corpus eval(Task::ANLI, Split::Validation,
                    testing::synthetic_records(Task::ANLI, Split::Validation, 300, 2));
  PoolSet pools;
  pools.add(train);
  pools.add(qqp);
  const PromptGenerator gen(default_factor_set(Task::ANLI), templates, pools, Task::ANLI, 9);
  const auto setups = enumerate_setups(gen.factors());
  const std::size_t n = setups.size() * eval.size();
  const std::function<PromptInstance(std::size_t)> make = [&](std::size_t i) {
    return gen.generate(setups[i / eval.size()], eval.records()[i % eval.size()]);
  };
  std::vector<PromptInstance> ps;
  std::vector<PromptInstance> pp;
  const double s4 = best_of(reps, [&] { fill_indexed(ps, n, make, ExecPolicy::Serial); });
  const double p4 = best_of(reps, [&] { fill_indexed(pp, n, make, ExecPolicy::Parallel); });
  report("generate prompts", s4, p4, ps == pp);
  return 0;
}
