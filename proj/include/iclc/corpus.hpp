#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "iclc/rng.hpp"

namespace iclc {

enum class Task { ANLI, MNLI, QQP };
enum class Split { Train, Validation };

std::string_view to_string(Task task);
std::string_view to_string(Split split);
Task parse_task(std::string_view text);
Split parse_split(std::string_view text);

// Canonical label names; ANLI/MNLI: entailment, neutral, contradiction.
const std::vector<std::string>& label_names(Task task);
// Label index for predictions outside the label space.
inline constexpr int kInvalidLabel = -1;

inline int label_count(Task task) { return static_cast<int>(label_names(task).size()); }

struct DataRecord {
  std::string data_id;
  Task task = Task::ANLI;
  std::string field_a;
  std::string field_b;
  int gold = 0;
  std::optional<std::string> subset;
  Split split = Split::Validation;

  bool operator==(const DataRecord&) const = default;
};

class Corpus {
 public:
  Corpus(Task task, Split split, std::vector<DataRecord> records);

  Task task() const { return task_; }
  Split split() const { return split_; }
  const std::vector<std::string>& label_names() const { return iclc::label_names(task_); }
  std::span<const DataRecord> records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  const DataRecord* find(std::string_view data_id) const;

 private:
  Task task_;
  Split split_;
  std::vector<DataRecord> records_;
  std::vector<std::size_t> by_id_;  // indices sorted by data_id
};

// One JSON object per line: field_a, field_b, gold required; id, subset
// optional. Missing ids become "<task>-<split>-<line>" (1-based, lowercase).
Corpus load_dataset(const std::filesystem::path& path, Task task, Split split);
Corpus parse_dataset(std::string_view text, Task task, Split split);
std::string serialize_dataset(const Corpus& corpus);

// Draws n records, n/|subsets| from each subset when subsets are present.
// Output is sorted by data_id.
std::vector<DataRecord> sample_evaluation_set(const Corpus& corpus, std::size_t n,
                                              std::uint64_t seed);

// View over a train corpus, optionally restricted to one gold label.
class TrainingPool {
 public:
  TrainingPool(const Corpus& corpus, std::optional<int> label_filter = std::nullopt);

  Task task() const { return corpus_->task(); }
  std::size_t size() const { return members_.size(); }
  std::optional<int> filter() const { return filter_; }
  const DataRecord& at(std::size_t i) const { return corpus_->records()[members_[i]]; }

  // Draws without replacement; ids in `exclude` are never returned.
  // Throws PoolExhausted when fewer than n eligible records remain.
  std::vector<const DataRecord*> draw(std::size_t n, Rng& rng,
                                      const std::unordered_set<std::string>& exclude = {}) const;

 private:
  const Corpus* corpus_;
  std::optional<int> filter_;
  std::vector<std::size_t> members_;
};

}  // namespace iclc
