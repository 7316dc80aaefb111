#include "iclc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>
#include <unordered_map>

#include <fmt/chrono.h>
#include <fmt/format.h>

#include "iclc/error.hpp"
#include "iclc/jsonl.hpp"
#include "iclc/metrics.hpp"
#include "iclc/svg.hpp"

namespace iclc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kHarnessVersion = "0.3.0";
constexpr int kPromptFormat = 1;
constexpr int kPredictionFormat = 1;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void log_line(const CommandOptions& o, const std::string& msg) {
  if (o.log) *o.log << msg << '\n';
}

std::string num(double v) { return fmt::format("{}", v); }

json num_json(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

std::string key_of(const std::string& setup, const std::string& data) { return setup + '\x1f' + data; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

json load_manifest(const Workspace& ws) {
  if (!fs::exists(ws.manifest_path())) return json::object();
  try {
    return json::parse(read_file(ws.manifest_path()));
  } catch (const json::exception& e) {
    throw Error(fmt::format("manifest '{}' is corrupt: {}", ws.manifest_path().string(), e.what()));
  }
}

// Rejects output directories produced under a different config.
void check_manifest_owner(const Workspace& ws) {
  const auto m = load_manifest(ws);
  if (m.contains("config_hash") && m["config_hash"] != ws.config().config_hash)
    throw ConfigError(fmt::format(
        "output directory '{}' was generated from a different config (hash {} vs {}); run 'generate' again",
        ws.config().output_dir.string(), m["config_hash"].get<std::string>(), ws.config().config_hash));
}

template <typename Fn>
void update_manifest(const Workspace& ws, Fn&& apply) {
  auto m = load_manifest(ws);
  if (m.value("config_hash", std::string()) != ws.config().config_hash) m = json::object();
  m["config_hash"] = ws.config().config_hash;
  m["task"] = std::string(to_string(ws.config().task));
  m["mode"] = std::string(to_string(ws.config().mode));
  json order = json::array();
  for (const auto& f : ws.factors().factors()) order.push_back(f.name);
  m["factor_order"] = std::move(order);
  m["versions"] = {{"harness", kHarnessVersion},
                   {"prompt_format", kPromptFormat},
                   {"prediction_format", kPredictionFormat}};
  if (!m.contains("counts")) m["counts"] = json::object();
  if (!m.contains("timings_s")) m["timings_s"] = json::object();
  apply(m);
  const auto& counts = m["counts"];
  if (counts.contains("completed") && counts.contains("prompts") &&
      counts["completed"].get<std::size_t>() > counts["prompts"].get<std::size_t>())
    throw Error("manifest invariant broken: more completed predictions than prompts");
  m["updated_at"] = fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::time(nullptr)));
  write_file_atomic(ws.manifest_path(), m.dump(2) + "\n");
}

std::vector<PromptInstance> load_prompts(const Workspace& ws) {
  if (!fs::exists(ws.prompts_path()))
    throw Error(fmt::format("no prompts at '{}'; run 'generate' first", ws.prompts_path().string()));
  auto contents = read_jsonl(ws.prompts_path());
  if (contents.torn_tail) throw Error(fmt::format("'{}' is truncated", ws.prompts_path().string()));
  std::vector<PromptInstance> prompts;
  prompts.reserve(contents.records.size());
  for (std::size_t i = 0; i < contents.records.size(); ++i) {
    try {
      prompts.push_back(prompt_from_json(contents.records[i]));
    } catch (const Error& e) {
      throw ParseError(fmt::format("{} record {}: {}", ws.prompts_path().string(), i + 1, e.what()));
    }
  }
  return prompts;
}

// Last record per key wins; records for unknown keys are ignored.
std::unordered_map<std::string, Prediction> load_predictions(const fs::path& path) {
  std::unordered_map<std::string, Prediction> out;
  if (!fs::exists(path)) return out;
  for (const auto& rec : read_jsonl(path).records) {
    auto p = prediction_from_json(rec);
    auto key = key_of(p.setup_id, p.data_id);
    out.insert_or_assign(std::move(key), std::move(p));
  }
  return out;
}

Setup setup_of_key(const Workspace& ws, const std::string& key) {
  const auto probe = parse_probe_key(key);
  return decode_setup_id(probe ? probe->first : key, ws.factors());
}

struct Gaps {
  std::size_t count = 0;
  std::vector<std::string> first;
};

Gaps find_gaps(const std::vector<std::pair<std::string, std::string>>& keys,
               const std::unordered_map<std::string, Prediction>& preds) {
  Gaps g;
  for (const auto& [s, d] : keys) {
    auto it = preds.find(key_of(s, d));
    if (it != preds.end() && it->second.status == PredictionStatus::Ok) continue;
    ++g.count;
    if (g.first.size() < 10) g.first.push_back(fmt::format("{}/{}", s, d));
  }
  return g;
}

void require_complete(const Gaps& gaps, std::size_t total, const CommandOptions& options) {
  if (gaps.count == 0 || options.allow_partial) return;
  std::string list;
  for (const auto& g : gaps.first) list += "\n  " + g;
  if (gaps.count > gaps.first.size()) list += fmt::format("\n  ... and {} more", gaps.count - gaps.first.size());
  throw Error(fmt::format(
      "{} of {} predictions are missing or unanswered (run 'run --resume' or pass --allow-partial):{}",
      gaps.count, total, list));
}

// Rows are setup keys in `row_keys` order, columns the evaluation ids.
EvalTable build_table(const Workspace& ws, const std::vector<std::string>& row_keys,
                      const std::unordered_map<std::string, Prediction>& preds, bool raw) {
  const auto& eval = ws.eval();
  std::vector<std::string> data_ids;
  std::vector<int> gold;
  for (const auto& r : eval.records()) {
    data_ids.push_back(r.data_id);
    gold.push_back(r.gold);
  }
  std::vector<int> cells;
  cells.reserve(row_keys.size() * data_ids.size());
  for (const auto& s : row_keys) {
    for (const auto& d : data_ids) {
      auto it = preds.find(key_of(s, d));
      if (it == preds.end() || it->second.status != PredictionStatus::Ok) {
        cells.push_back(kInvalidLabel);
      } else {
        cells.push_back(raw ? it->second.raw_label : it->second.label);
      }
    }
  }
  return EvalTable(row_keys, std::move(data_ids), std::move(gold), label_count(ws.config().task),
                   std::move(cells));
}

std::vector<std::string> row_keys(const Workspace& ws) {
  std::vector<std::string> keys;
  if (ws.config().mode == RunMode::Probe) {
    const auto base = encode_setup_id(ws.probe_setup());
    for (const auto* t : ws.probe_templates()) keys.push_back(probe_setup_key(base, t->template_id));
  } else {
    for (const auto& s : ws.setups()) keys.push_back(encode_setup_id(s));
  }
  return keys;
}

fs::path write_report(const Workspace& ws, const std::string& name, const std::string& body,
                      ScoreSummary* summary = nullptr) {
  const auto path = ws.reports_dir() / name;
  write_file_atomic(path, body);
  if (summary) summary->reports.push_back(path);
  return path;
}

json consistency_json(const ConsistencyReport& c) {
  json items = json::array();
  for (const auto& [id, h] : c.per_item_entropy) items.push_back({{"data_id", id}, {"entropy", h}});
  return {{"total_entropy", c.total_entropy}, {"c_pi", num_json(c.c_pi)}, {"per_item", std::move(items)}};
}

json diversity_json(const DiversityReport& d, Task task) {
  json counts = json::object();
  const auto& names = label_names(task);
  for (std::size_t i = 0; i < names.size(); ++i) counts[names[i]] = d.prediction_counts[i];
  json out{{"entropy", d.entropy},
           {"gold_entropy", d.gold_entropy},
           {"threshold_ratio", kLowDiversityRatio},
           {"low_diversity", d.low_diversity},
           {"prediction_counts", std::move(counts)}};
  if (d.low_diversity) out["warning"] = kLowDiversityWarning;
  return out;
}

}  // namespace

// --- Workspace -------------------------------------------------------------

Workspace::Workspace(RunConfig config) : config_(std::move(config)) {
  factors_ = build_factor_set(config_);
  try {
    templates_ = std::make_unique<TemplateSet>(load_templates(config_.template_dir));
  } catch (const Error& e) {
    throw ConfigError(fmt::format("templates: {}", e.what()));
  }
  if (config_.mode == RunMode::Factorial) {
    const auto& h = config_.hp_templates;
    for (const auto* name : {&h.low_default, &h.low_alternate, &h.high_default, &h.high_alternate})
      if (!templates_->find(config_.task, std::string_view(*name)))
        throw ConfigError(fmt::format("hp template '{}' is not a {} template", *name, to_string(config_.task)));
  } else if (templates_->for_task(config_.task).empty()) {
    throw ConfigError(fmt::format("no {} templates to probe", to_string(config_.task)));
  }

  validation_ = std::make_unique<Corpus>(load_dataset(config_.datasets.validation, config_.task, Split::Validation));
  train_ = std::make_unique<Corpus>(load_dataset(config_.datasets.train, config_.task, Split::Train));
  pools_.add(*train_);
  if (config_.datasets.qqp_train) {
    qqp_train_ = std::make_unique<Corpus>(load_dataset(*config_.datasets.qqp_train, Task::QQP, Split::Train));
    pools_.add(*qqp_train_);
  } else if (factors_.contains(factor_names::kCrossTask)) {
    throw ConfigError("the cross_task factor needs datasets.qqp_train");
  }
  try {
    eval_ = std::make_unique<Corpus>(config_.task, Split::Validation,
                                     sample_evaluation_set(*validation_, config_.n_eval, config_.seed));
  } catch (const ValidationError& e) {
    throw ConfigError(fmt::format("n_eval={}: {}", config_.n_eval, e.what()));
  }
  generator_ = std::make_unique<PromptGenerator>(factors_, *templates_, pools_, config_.task,
                                                 config_.seed, config_.hp_templates);
  setups_ = enumerate_setups(factors_);
  probe_setup_ = config_.probe_setup ? decode_setup_id(*config_.probe_setup, factors_) : setups_.front();

  auto gold = std::make_shared<std::unordered_map<std::string, int>>();
  for (const auto& r : eval_->records()) gold->emplace(r.data_id, r.gold);
  gold_ = std::move(gold);
}

std::vector<const InstructionTemplate*> Workspace::probe_templates() const {
  return templates_->for_task(config_.task);
}

std::vector<std::pair<std::string, std::string>> Workspace::expected_keys() const {
  std::vector<std::pair<std::string, std::string>> keys;
  for (const auto& s : row_keys(*this))
    for (const auto& r : eval_->records()) keys.emplace_back(s, r.data_id);
  return keys;
}

// --- generate --------------------------------------------------------------

GenerateSummary cmd_generate(const RunConfig& config, const CommandOptions& options) {
  const auto start = Clock::now();
  Workspace ws(config);
  fs::create_directories(config.output_dir);
  write_file_atomic(config.output_dir / "config.json", config.source_text);

  const auto records = ws.eval().records();
  const auto& gen = ws.generator();
  auto tmp = ws.prompts_path();
  tmp += ".tmp";
  std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write '{}'", tmp.string()));

  GenerateSummary summary;
  std::vector<std::string> lines;
  auto emit = [&](const std::function<std::string(std::size_t)>& make) {
    fill_indexed<std::string>(lines, records.size(), make, options.policy);
    for (const auto& line : lines) out << line << '\n';
    summary.prompts += lines.size();
    ++summary.setups;
  };
  if (config.mode == RunMode::Probe) {
    const auto& setup = ws.probe_setup();
    for (const auto* t : ws.probe_templates())
      emit([&](std::size_t i) { return to_json(gen.generate_probe(setup, records[i], *t)).dump(); });
  } else {
    for (const auto& setup : ws.setups())
      emit([&](std::size_t i) { return to_json(gen.generate(setup, records[i])).dump(); });
  }
  out.close();
  if (!out) throw Error(fmt::format("short write to '{}'", tmp.string()));
  fs::rename(tmp, ws.prompts_path());

  update_manifest(ws, [&](json& m) {
    m["counts"]["setups"] = summary.setups;
    m["counts"]["prompts"] = summary.prompts;
    m["counts"]["completed"] = 0;
    m["timings_s"]["generate"] = seconds_since(start);
  });
  log_line(options, fmt::format("generated {} prompts over {} setups", summary.prompts, summary.setups));
  return summary;
}

// --- run -------------------------------------------------------------------

namespace {

struct RunState {
  const Workspace* ws;
  std::vector<std::unique_ptr<Backend>> owned;
  std::map<std::string, const Backend*> backend_by_setup;
  std::map<std::pair<std::string, int>, LabelScores> cf_scores;
  std::map<std::string, bool> calibrate_setup;
  RetryPolicy retry;

  const Backend& backend_for(const std::string& setup_key) const { return *backend_by_setup.at(setup_key); }
};

Prediction answer(const RunState& st, const PromptInstance& prompt) {
  const auto& backend = st.backend_for(prompt.setup_id);
  Prediction p;
  p.setup_id = prompt.setup_id;
  p.data_id = prompt.data_id;
  p.model_tag = backend.tag();
  const auto* tmpl = st.ws->templates().find(st.ws->config().task, prompt.target_template_id);
  if (!tmpl) throw ValidationError(fmt::format("prompt {}/{} names unknown template {}", prompt.setup_id,
                                               prompt.data_id, prompt.target_template_id));
  try {
    if (backend.scores_labels()) {
      const auto raw = normalize(with_retry(st.retry, [&] { return backend.score_labels(prompt); }));
      if (raw.scores.size() != prompt.label_space.size())
        throw ValidationError(fmt::format("backend returned {} scores for {} labels", raw.scores.size(),
                                          prompt.label_space.size()));
      p.raw_label = predict_greedy(raw);
      p.label = p.raw_label;
      p.scores = raw;
      auto cf = st.cf_scores.find({prompt.setup_id, prompt.target_template_id});
      if (cf != st.cf_scores.end()) {
        p.label = predict_greedy(calibrate(raw, cf->second));
        p.calibrated = true;
      }
    } else {
      auto text = with_retry(st.retry, [&] { return backend.generate_text(prompt); });
      p.raw_label = p.label = match_label(text, *tmpl);
      p.raw_text = std::move(text);
    }
  } catch (const TransportError& e) {
    p.status = PredictionStatus::Unanswered;
    p.error = e.what();
    p.scores.reset();
    p.raw_text.reset();
    p.label = p.raw_label = kInvalidLabel;
    p.calibrated = false;
  }
  return p;
}

void compact_predictions(const Workspace& ws, const std::vector<PromptInstance>& prompts) {
  auto preds = load_predictions(ws.predictions_path());
  std::string body;
  for (const auto& prompt : prompts) {
    auto it = preds.find(key_of(prompt.setup_id, prompt.data_id));
    if (it == preds.end()) continue;
    body += to_json(it->second).dump();
    body += '\n';
  }
  write_file_atomic(ws.predictions_path(), body);
}

}  // namespace

RunSummary cmd_run(const RunConfig& config, const CommandOptions& options) {
  const auto start = Clock::now();
  Workspace ws(config);
  check_manifest_owner(ws);
  const auto prompts = load_prompts(ws);
  fs::create_directories(config.output_dir);
  if (!fs::exists(config.output_dir / "config.json"))
    write_file_atomic(config.output_dir / "config.json", config.source_text);

  RunSummary summary;
  summary.prompts = prompts.size();

  std::unordered_map<std::string, Prediction> existing;
  if (options.resume) {
    if (const auto dropped = repair_torn_tail(ws.predictions_path()))
      log_line(options, fmt::format("dropped {} bytes of a torn final record", dropped));
    existing = load_predictions(ws.predictions_path());
  } else {
    fs::remove(ws.predictions_path());
  }

  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    auto it = existing.find(key_of(prompts[i].setup_id, prompts[i].data_id));
    if (it != existing.end() && it->second.status == PredictionStatus::Ok) {
      ++summary.skipped;
    } else {
      todo.push_back(i);
    }
  }

  // Backends: the default one plus per-level overrides of annotation factors.
  RunState st;
  st.ws = &ws;
  st.retry = options.retry;
  HttpOptions http;
  http.model = config.model;
  http.api_key = config.api_key;
  http.timeout = std::chrono::milliseconds(static_cast<long long>(config.timeout_s * 1000.0));
  http.logprobs_mode = config.logprobs_mode;
  std::map<std::string, const Backend*> by_uri;
  auto backend = [&](const std::string& uri) -> const Backend* {
    auto it = by_uri.find(uri);
    if (it != by_uri.end()) return it->second;
    auto b = options.backend_factory ? options.backend_factory(uri, ws.gold()) : make_backend(uri, ws.gold(), http);
    const Backend* raw = b.get();
    st.owned.push_back(std::move(b));
    by_uri.emplace(uri, raw);
    return raw;
  };
  const bool has_calibration_factor = ws.factors().contains("calibration");
  for (const auto& p : prompts) {
    if (st.backend_by_setup.count(p.setup_id)) continue;
    const auto setup = setup_of_key(ws, p.setup_id);
    std::string uri = config.backend;
    for (const auto& [name, uris] : config.factor_backends) {
      const auto level = level_of(setup, ws.factors(), name);
      if (level == Level::Irrelevant) continue;
      uri = uris[level == Level::Present ? 1 : 0];
      break;
    }
    st.backend_by_setup[p.setup_id] = backend(uri);
    st.calibrate_setup[p.setup_id] =
        config.calibration && (!has_calibration_factor || is_present(setup, ws.factors(), "calibration"));
  }

  // Content-free scores per (setup, target template), taken from the first
  // prompt of the group so resumed runs use the same reference.
  if (config.calibration) {
    std::map<std::pair<std::string, int>, std::size_t> first;
    for (std::size_t i = 0; i < prompts.size(); ++i)
      first.emplace(std::make_pair(prompts[i].setup_id, prompts[i].target_template_id), i);
    std::set<std::pair<std::string, int>> needed;
    for (auto i : todo) needed.emplace(prompts[i].setup_id, prompts[i].target_template_id);
    for (const auto& group : needed) {
      if (!st.calibrate_setup[group.first]) continue;
      const auto& b = st.backend_for(group.first);
      if (!b.scores_labels()) continue;
      const auto& shape = prompts[first.at(group)];
      const auto* record = ws.eval().find(shape.data_id);
      const auto* tmpl = ws.templates().find(config.task, group.second);
      if (!record || !tmpl)
        throw ValidationError(fmt::format("prompt {}/{} does not match the evaluation set", shape.setup_id,
                                          shape.data_id));
      try {
        st.cf_scores[group] =
            with_retry(st.retry, [&] { return content_free_scores(b, shape, *tmpl, *record, config.cf_inputs); });
      } catch (const TransportError& e) {
        throw Error(fmt::format("content-free scoring for setup {} failed: {}", group.first, e.what()));
      }
    }
  }

  // Bounded worker pool; all writes go through the sink.
  JsonlSink sink(ws.predictions_path());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex mu;
  std::size_t committed = 0;
  std::size_t unanswered_now = 0;
  std::exception_ptr fatal;
  auto worker = [&] {
    while (!stop.load()) {
      const auto i = next.fetch_add(1);
      if (i >= todo.size()) break;
      Prediction p;
      try {
        p = answer(st, prompts[todo[i]]);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!fatal) fatal = std::current_exception();
        stop = true;
        break;
      }
      std::lock_guard lock(mu);
      if (stop.load()) break;
      if (options.stop_after && committed >= *options.stop_after) {
        stop = true;
        break;
      }
      sink.write(to_json(p));
      ++committed;
      if (p.status == PredictionStatus::Unanswered) ++unanswered_now;
    }
  };
  const auto threads = std::min(config.parallelism, todo.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (fatal) std::rethrow_exception(fatal);

  summary.answered = committed - unanswered_now;
  summary.interrupted = committed < todo.size();
  if (!summary.interrupted) compact_predictions(ws, prompts);

  const auto final_preds = load_predictions(ws.predictions_path());
  std::size_t completed = 0;
  for (const auto& p : prompts) {
    auto it = final_preds.find(key_of(p.setup_id, p.data_id));
    if (it == final_preds.end()) continue;
    if (it->second.status == PredictionStatus::Ok) {
      ++completed;
    } else {
      ++summary.unanswered;
    }
  }
  update_manifest(ws, [&](json& m) {
    m["counts"]["prompts"] = prompts.size();
    m["counts"]["completed"] = completed;
    m["counts"]["unanswered"] = summary.unanswered;
    m["timings_s"]["run"] = seconds_since(start);
  });
  log_line(options, fmt::format("{} answered, {} skipped, {} unanswered{}", summary.answered, summary.skipped,
                                summary.unanswered, summary.interrupted ? " (interrupted)" : ""));
  return summary;
}

// --- score -----------------------------------------------------------------

ScoreSummary cmd_score(const RunConfig& config, const CommandOptions& options) {
  const auto start = Clock::now();
  Workspace ws(config);
  check_manifest_owner(ws);
  const auto preds = load_predictions(ws.predictions_path());
  const auto keys = ws.expected_keys();
  const auto gaps = find_gaps(keys, preds);
  require_complete(gaps, keys.size(), options);

  ScoreSummary summary;
  summary.gaps = gaps.count;
  const auto rows = row_keys(ws);
  const auto table = build_table(ws, rows, preds, false);
  const auto raw_table = build_table(ws, rows, preds, true);
  summary.masked = mask_invalid(table).masked_count;

  const auto acc = accuracy_by_setup(table);
  const auto raw_acc = accuracy_by_setup(raw_table);
  {
    std::string csv = "setup_id,accuracy,raw_accuracy,invalid\n";
    for (std::size_t s = 0; s < table.setup_count(); ++s) {
      const auto& id = table.setup_ids()[s];
      const auto row = table.row(s);
      const auto invalid = std::count(row.begin(), row.end(), kInvalidLabel);
      csv += fmt::format("{},{},{},{}\n", id, num(acc.at(id)), num(raw_acc.at(id)), invalid);
    }
    write_report(ws, "accuracy.csv", csv, &summary);
  }

  if (table.setup_count() >= 2)
    write_report(ws, "consistency.json", consistency_json(model_consistency(table, options.policy)).dump(2) + "\n",
                 &summary);
  const auto diversity = prediction_diversity(table);
  summary.low_diversity = diversity.low_diversity;
  write_report(ws, "diversity.json", diversity_json(diversity, config.task).dump(2) + "\n", &summary);
  if (diversity.low_diversity) log_line(options, fmt::format("warning: {}", kLowDiversityWarning));

  if (config.mode == RunMode::Factorial) {
    const auto kappas = kappa_report(table, ws.setups(), ws.factors(), KappaPooling::Pooled, options.policy);
    summary.kappa_avg = kappas.kappa_avg;
    std::string csv = "factor,kappa,used_pairs,masked_pairs,note\n";
    std::vector<std::pair<std::string, double>> bars;
    for (const auto& [name, r] : kappas.per_factor) {
      csv += fmt::format("{},{},{},{},{}\n", name, num(r.kappa), r.used_pairs, r.masked_pairs,
                         csv_field(r.diagnostic));
      bars.emplace_back(name, r.kappa);
    }
    csv += fmt::format("kappa_avg,{},,,\n", num(kappas.kappa_avg));
    write_report(ws, "kappa.csv", csv, &summary);
    write_report(ws, "kappa.svg", bar_chart_svg("Agreement per factor", "Cohen's kappa", bars), &summary);

    std::string me = "factor,beta1,beta0,stderr,p,n_obs,note\n";
    bars.clear();
    for (const auto& f : ws.factors().factors()) {
      try {
        const auto e = main_effect(acc, ws.factors(), f.name);
        me += fmt::format("{},{},{},{},{},{},\n", f.name, num(e.beta1), num(e.beta0), num(e.stderr_beta1),
                          num(e.p), e.n_obs);
        bars.emplace_back(f.name, e.beta1);
      } catch (const ValidationError& err) {
        me += fmt::format("{},nan,nan,nan,nan,0,{}\n", f.name, csv_field(err.what()));
        bars.emplace_back(f.name, std::nan(""));
      }
    }
    write_report(ws, "main_effects.csv", me, &summary);
    write_report(ws, "main_effects.svg", bar_chart_svg("Main effect on accuracy", "beta1", bars), &summary);

    const auto inter = interaction_report(acc, ws.factors());
    std::string ic = "factor_i,factor_j,estimable,beta_ij,p,significant,alpha,note\n";
    for (const auto& e : inter.entries) {
      ic += fmt::format("{},{},{},{},{},{},{},{}\n", e.factor_i, e.factor_j, e.estimable ? 1 : 0,
                        e.estimable ? num(e.beta_ij) : "NOT-ESTIMABLE", num(e.p), e.significant ? 1 : 0,
                        num(inter.alpha), csv_field(e.note));
    }
    write_report(ws, "interactions.csv", ic, &summary);
  } else {
    TemplatePredictions by_template;
    const auto templates = ws.probe_templates();
    for (std::size_t s = 0; s < templates.size(); ++s) {
      const auto row = table.row(s);
      by_template[templates[s]->template_id] = std::vector<int>(row.begin(), row.end());
    }
    std::string csv = "template_id,name,accuracy,c_lambda\n";
    for (std::size_t s = 0; s < templates.size(); ++s) {
      const auto id = templates[s]->template_id;
      const double c = templates.size() >= 2 ? template_consistency(by_template, id, table.label_count())
                                             : std::nan("");
      csv += fmt::format("{},{},{},{}\n", id, csv_field(templates[s]->name), num(acc.at(rows[s])), num(c));
    }
    write_report(ws, "template_consistency.csv", csv, &summary);
  }

  update_manifest(ws, [&](json& m) {
    m["counts"]["masked"] = summary.masked;
    m["timings_s"]["score"] = seconds_since(start);
  });
  log_line(options, fmt::format("wrote {} reports to {}", summary.reports.size(), ws.reports_dir().string()));
  return summary;
}

// --- rank-templates --------------------------------------------------------

TemplateRanking cmd_rank_templates(const RunConfig& config, const CommandOptions& options) {
  if (config.mode != RunMode::Probe) throw ConfigError("rank-templates needs a config with mode \"probe\"");
  Workspace ws(config);
  check_manifest_owner(ws);
  const auto preds = load_predictions(ws.predictions_path());
  const auto keys = ws.expected_keys();
  require_complete(find_gaps(keys, preds), keys.size(), options);

  const auto templates = ws.probe_templates();
  if (templates.size() < 4)
    throw ValidationError(fmt::format("ranking needs at least 4 templates, got {}", templates.size()));
  const auto rows = row_keys(ws);
  const auto table = build_table(ws, rows, preds, false);
  const auto acc = accuracy_by_setup(table);
  TemplatePredictions by_template;
  for (std::size_t s = 0; s < templates.size(); ++s) {
    const auto row = table.row(s);
    by_template[templates[s]->template_id] = std::vector<int>(row.begin(), row.end());
  }
  std::vector<TemplateScore> scores;
  for (std::size_t s = 0; s < templates.size(); ++s) {
    const auto id = templates[s]->template_id;
    scores.push_back({id, templates[s]->name, acc.at(rows[s]),
                      template_consistency(by_template, id, table.label_count())});
  }
  auto ranking = rank_templates(std::move(scores));

  auto selection = [&](int id) -> std::string_view {
    for (const auto& t : ranking.high)
      if (t.template_id == id) return "high";
    for (const auto& t : ranking.low)
      if (t.template_id == id) return "low";
    return "";
  };
  std::string csv = "rank,template_id,name,accuracy,c_lambda,selection\n";
  json ordered = json::array();
  for (std::size_t i = 0; i < ranking.ordered.size(); ++i) {
    const auto& t = ranking.ordered[i];
    csv += fmt::format("{},{},{},{},{},{}\n", i + 1, t.template_id, csv_field(t.name), num(t.accuracy),
                       num(t.c_lambda), selection(t.template_id));
    ordered.push_back({{"template_id", t.template_id},
                       {"name", t.name},
                       {"accuracy", num_json(t.accuracy)},
                       {"c_lambda", num_json(t.c_lambda)}});
  }
  json doc{{"ordered", std::move(ordered)},
           {"hp_templates",
            {{"high_default", ranking.high[0].name},
             {"high_alternate", ranking.high[1].name},
             {"low_default", ranking.low[1].name},
             {"low_alternate", ranking.low[0].name}}}};
  write_file_atomic(ws.reports_dir() / "template_ranking.csv", csv);
  write_file_atomic(ws.reports_dir() / "template_ranking.json", doc.dump(2) + "\n");
  log_line(options, fmt::format("ranked {} templates; high: {}, {}; low: {}, {}", ranking.ordered.size(),
                                ranking.high[0].name, ranking.high[1].name, ranking.low[0].name,
                                ranking.low[1].name));
  return ranking;
}

// --- validate --------------------------------------------------------------

ValidationSummary cmd_validate(const RunConfig& config, const CommandOptions& options) {
  Workspace ws(config);
  if (!fs::exists(ws.prompts_path()))
    throw Error(fmt::format("no prompts at '{}'; run 'generate' first", ws.prompts_path().string()));
  const auto contents = read_jsonl(ws.prompts_path());
  ValidationSummary summary;
  summary.prompts = contents.records.size();

  const PromptValidator validator(ws.generator(), ws.eval());
  std::vector<std::vector<Violation>> found;
  fill_indexed<std::vector<Violation>>(
      found, contents.records.size(),
      [&](std::size_t i) -> std::vector<Violation> {
        const auto& rec = contents.records[i];
        try {
          return validator.check(prompt_from_json(rec));
        } catch (const Error& e) {
          const auto setup = rec.is_object() ? rec.value("setup_id", std::string("?")) : std::string("?");
          const auto data = rec.is_object() ? rec.value("data_id", std::string("?")) : std::string("?");
          return {Violation{setup, data, fmt::format("record {} unreadable: {}", i + 1, e.what())}};
        }
      },
      options.policy);

  std::set<std::string> seen;
  for (std::size_t i = 0; i < found.size(); ++i) {
    for (auto& v : found[i]) summary.violations.push_back(std::move(v));
    const auto& rec = contents.records[i];
    if (!rec.is_object() || !rec.contains("setup_id") || !rec.contains("data_id")) continue;
    const auto s = rec.value("setup_id", std::string());
    const auto d = rec.value("data_id", std::string());
    if (!seen.insert(key_of(s, d)).second) summary.violations.push_back({s, d, "duplicate prompt key"});
  }
  if (contents.torn_tail)
    summary.violations.push_back({"?", "?", "final record is truncated"});
  return summary;
}

}  // namespace iclc
