#include "iclc/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "iclc/error.hpp"

namespace iclc {

using nlohmann::json;

std::string_view to_string(Task task) {
  switch (task) {
    case Task::ANLI: return "ANLI";
    case Task::MNLI: return "MNLI";
    case Task::QQP: return "QQP";
  }
  return "?";
}

std::string_view to_string(Split split) {
  return split == Split::Train ? "train" : "validation";
}

Task parse_task(std::string_view text) {
  std::string up(text);
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
  if (up == "ANLI") return Task::ANLI;
  if (up == "MNLI") return Task::MNLI;
  if (up == "QQP") return Task::QQP;
  throw ValidationError(fmt::format("unknown task '{}'", text));
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "validation") return Split::Validation;
  throw ValidationError(fmt::format("unknown split '{}'", text));
}

const std::vector<std::string>& label_names(Task task) {
  static const std::vector<std::string> nli{"entailment", "neutral", "contradiction"};
  static const std::vector<std::string> qqp{"not_duplicate", "duplicate"};
  return task == Task::QQP ? qqp : nli;
}

Corpus::Corpus(Task task, Split split, std::vector<DataRecord> records)
    : task_(task), split_(split), records_(std::move(records)) {
  const int labels = label_count(task_);
  by_id_.resize(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.task != task_)
      throw ValidationError(fmt::format("record '{}' has task {} in a {} corpus", r.data_id,
                                        to_string(r.task), to_string(task_)));
    if (r.gold < 0 || r.gold >= labels)
      throw ValidationError(fmt::format("record '{}': gold {} outside [0, {})", r.data_id,
                                        r.gold, labels));
    by_id_[i] = i;
  }
  std::sort(by_id_.begin(), by_id_.end(),
            [&](std::size_t a, std::size_t b) { return records_[a].data_id < records_[b].data_id; });
  for (std::size_t i = 1; i < by_id_.size(); ++i) {
    if (records_[by_id_[i]].data_id == records_[by_id_[i - 1]].data_id)
      throw ValidationError(fmt::format("duplicate data id '{}'", records_[by_id_[i]].data_id));
  }
}

const DataRecord* Corpus::find(std::string_view data_id) const {
  auto it = std::lower_bound(by_id_.begin(), by_id_.end(), data_id,
                             [&](std::size_t i, std::string_view id) {
                               return records_[i].data_id < id;
                             });
  if (it == by_id_.end() || records_[*it].data_id != data_id) return nullptr;
  return &records_[*it];
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string required_string(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string())
    throw ParseError(fmt::format("line {}: missing or non-string field '{}'", line, key));
  return it->get<std::string>();
}

}  // namespace

Corpus parse_dataset(std::string_view text, Task task, Split split) {
  std::vector<DataRecord> records;
  const int labels = label_count(task);
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(fmt::format("line {}: {}", line_no, e.what()));
    }
    if (!obj.is_object()) throw ParseError(fmt::format("line {}: expected an object", line_no));

    DataRecord r;
    r.task = task;
    r.split = split;
    r.field_a = required_string(obj, "field_a", line_no);
    r.field_b = required_string(obj, "field_b", line_no);
    auto gold = obj.find("gold");
    if (gold == obj.end() || !gold->is_number_integer())
      throw ParseError(fmt::format("line {}: missing or non-integer field 'gold'", line_no));
    r.gold = gold->get<int>();
    if (r.gold < 0 || r.gold >= labels)
      throw ValidationError(
          fmt::format("line {}: gold {} outside label space of size {}", line_no, r.gold, labels));
    if (auto id = obj.find("id"); id != obj.end() && !id->is_null()) {
      if (!id->is_string()) throw ParseError(fmt::format("line {}: 'id' must be a string", line_no));
      r.data_id = id->get<std::string>();
    } else {
      r.data_id = fmt::format("{}-{}-{}", lower(to_string(task)), to_string(split), line_no);
    }
    if (auto subset = obj.find("subset"); subset != obj.end() && !subset->is_null()) {
      if (!subset->is_string())
        throw ParseError(fmt::format("line {}: 'subset' must be a string", line_no));
      r.subset = subset->get<std::string>();
    }
    records.push_back(std::move(r));
  }
  return Corpus(task, split, std::move(records));
}

Corpus load_dataset(const std::filesystem::path& path, Task task, Split split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(fmt::format("cannot open dataset '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_dataset(buf.str(), task, split);
  } catch (const ParseError& e) {
    throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
  } catch (const ValidationError& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::string serialize_dataset(const Corpus& corpus) {
  std::string out;
  for (const auto& r : corpus.records()) {
    json obj{{"id", r.data_id}, {"field_a", r.field_a}, {"field_b", r.field_b}, {"gold", r.gold}};
    if (r.subset) obj["subset"] = *r.subset;
    out += obj.dump();
    out += '\n';
  }
  return out;
}

std::vector<DataRecord> sample_evaluation_set(const Corpus& corpus, std::size_t n,
                                              std::uint64_t seed) {
  if (corpus.split() != Split::Validation)
    throw ValidationError("evaluation sets are drawn from validation splits");
  if (n == 0) return {};

  std::map<std::string, std::vector<const DataRecord*>> groups;
  bool any_subset = false;
  for (const auto& r : corpus.records()) {
    any_subset = any_subset || r.subset.has_value();
    groups[r.subset.value_or("")].push_back(&r);
  }
  if (!any_subset) groups = {{"", groups[""]}};

  const std::size_t per_group = n / groups.size();
  if (per_group * groups.size() != n)
    throw ValidationError(fmt::format("n={} is not divisible by the {} subsets", n, groups.size()));

  std::string shortfall;
  for (const auto& [name, members] : groups) {
    if (members.size() < per_group)
      shortfall += fmt::format(" subset '{}' has {} of {} required (short by {});", name,
                               members.size(), per_group, per_group - members.size());
  }
  if (!shortfall.empty()) throw ValidationError("insufficient records:" + shortfall);

  std::vector<DataRecord> out;
  out.reserve(n);
  for (auto& [name, members] : groups) {
    std::sort(members.begin(), members.end(),
              [](const DataRecord* a, const DataRecord* b) { return a->data_id < b->data_id; });
    Rng rng(StableHash().add(seed).add(name).digest());
    // Partial Fisher-Yates: the first per_group slots end up uniformly drawn.
    for (std::size_t i = 0; i < per_group; ++i) {
      std::size_t j = i + static_cast<std::size_t>(rng.below(members.size() - i));
      std::swap(members[i], members[j]);
      out.push_back(*members[i]);
    }
  }
  std::sort(out.begin(), out.end(),
            [](const DataRecord& a, const DataRecord& b) { return a.data_id < b.data_id; });
  return out;
}

TrainingPool::TrainingPool(const Corpus& corpus, std::optional<int> label_filter)
    : corpus_(&corpus), filter_(label_filter) {
  if (corpus.split() != Split::Train)
    throw ValidationError("training pools are built from train splits");
  if (filter_ && (*filter_ < 0 || *filter_ >= label_count(corpus.task())))
    throw ValidationError(fmt::format("label filter {} outside label space of {}", *filter_,
                                      to_string(corpus.task())));
  const auto records = corpus.records();
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!filter_ || records[i].gold == *filter_) members_.push_back(i);
  }
}

std::vector<const DataRecord*> TrainingPool::draw(
    std::size_t n, Rng& rng, const std::unordered_set<std::string>& exclude) const {
  std::size_t excluded = 0;
  if (!exclude.empty()) {
    for (std::size_t i = 0; i < members_.size(); ++i) excluded += exclude.count(at(i).data_id);
  }
  const std::size_t eligible = members_.size() - excluded;
  if (eligible < n)
    throw PoolExhausted(fmt::format("pool exhausted: requested {} records but only {} available",
                                    n, eligible));

  std::vector<std::size_t> chosen;
  std::vector<const DataRecord*> out;
  chosen.reserve(n);
  out.reserve(n);
  // Rejection sampling; k is tiny relative to the pool in practice.
  while (out.size() < n) {
    std::size_t i = static_cast<std::size_t>(rng.below(members_.size()));
    if (std::find(chosen.begin(), chosen.end(), i) != chosen.end()) continue;
    if (exclude.count(at(i).data_id)) continue;
    chosen.push_back(i);
    out.push_back(&at(i));
  }
  return out;
}

}  // namespace iclc
