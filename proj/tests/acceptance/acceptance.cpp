// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "iclc/effects.hpp"
#include "iclc/error.hpp"
#include "iclc/harness.hpp"
#include "iclc/jsonl.hpp"
#include "iclc/metrics.hpp"
#include "iclc/rng.hpp"
#include "synthetic.hpp"

using namespace iclc;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

struct Data {
  fs::path root;
  testing::SyntheticData files;
};

const Data& data() {
  static const Data d = [] {
    Data out;
    out.root = testing::scratch_dir("acceptance");
    // 500 validation records per subset, enough for n_eval = 1200.
    out.files = testing::write_synthetic_data(out.root / "data", Task::ANLI, 1500, 3000, 400, 42);
    return out;
  }();
  return d;
}

RunConfig make_config(const std::string& name, const std::string& extra) {
  const auto path = data().root / (name + ".json");
  std::ofstream(path) << testing::synthetic_config(data().files, data().root / name, extra);
  return load_config(path);
}

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string slurp(const fs::path& p) { return read_file(p); }

Outcome setup_cardinality() {
  Outcome o;
  const auto factors = default_factor_set(Task::ANLI);
  o.require(enumerate_setups(factors).size() == 96, "default set does not enumerate 96 setups");
  const auto config = make_config("c1", R"("n_eval": 600, "backend": "mock:hash:1", "parallelism": 8)");
  const auto start = Clock::now();
  const auto g = cmd_generate(config);
  const auto r = cmd_run(config);
  const double elapsed = seconds_since(start);
  o.require(g.setups == 96, fmt::format("{} setups", g.setups));
  o.require(g.prompts == 57600, fmt::format("{} prompts", g.prompts));
  o.require(r.answered == 57600 && r.unanswered == 0, "run did not answer every prompt");
  o.require(read_jsonl(config.output_dir / "prompts.jsonl").records.size() == 57600, "prompt file size");
  o.require(elapsed < 60.0, fmt::format("took {:.1f}s", elapsed));
  o.detail = o.pass ? fmt::format("96 setups, 57600 prompts, generate+run {:.2f}s", elapsed) : o.detail;
  return o;
}

Outcome setup_codec() {
  Outcome o;
  const auto factors = default_factor_set(Task::ANLI);
  const auto setups = enumerate_setups(factors);
  const auto hp = factors.require("hp_instructions");
  const auto instr = factors.require("instructions");
  std::size_t hp0 = 0;
  for (const auto& s : setups) {
    const auto id = encode_setup_id(s);
    o.require(decode_setup_id(id, factors) == s, "round trip failed for " + id);
    const auto first_two = id.find('2');
    if (s.levels[hp] == Level::Absent) {
      ++hp0;
      o.require(first_two == instr && id.find('2', first_two + 1) == std::string::npos,
                "hp=0 setup " + id + " has '2' elsewhere");
    } else {
      o.require(first_two == std::string::npos, "hp=1 setup " + id + " contains '2'");
    }
  }
  o.require(hp0 == 32, fmt::format("{} hp=0 setups", hp0));
  if (o.pass) o.detail = "96 round trips, '2' only at instructions in 32 hp=0 setups";
  return o;
}

double brute_kappa(const std::vector<int>& a, const std::vector<int>& b, int labels) {
  const double n = static_cast<double>(a.size());
  double po = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) po += a[i] == b[i];
  po /= n;
  double pe = 0.0;
  for (int k = 0; k < labels; ++k) {
    double ca = 0.0;
    double cb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ca += a[i] == k;
      cb += b[i] == k;
    }
    pe += ca * cb / (n * n);
  }
  return (po - pe) / (1.0 - pe);
}

Outcome kappa_oracle() {
  Outcome o;
  Rng rng(314);
  double worst = 0.0;
  int instances = 0;
  while (instances < 1000) {
    const int labels = 2 + static_cast<int>(rng.below(3));
    const auto n = 3 + rng.below(25);
    std::vector<int> a(n);
    std::vector<int> b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<int>(rng.below(labels));
      b[i] = rng.below(2) ? a[i] : static_cast<int>(rng.below(labels));
    }
    const double want = brute_kappa(a, b, labels);
    if (!std::isfinite(want)) continue;  // both raters constant on one label
    worst = std::max(worst, std::abs(cohen_kappa(a, b, labels).kappa - want));
    ++instances;
  }
  o.require(worst <= 1e-12, fmt::format("max deviation {:g}", worst));
  const double hand = cohen_kappa(std::vector<int>{0, 1, 2, 0}, std::vector<int>{0, 1, 0, 0}, 3).kappa;
  o.require(std::abs(hand - 0.5556) <= 1e-4, fmt::format("hand example {}", hand));
  std::vector<int> x(10000);
  std::vector<int> y(10000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = static_cast<int>(rng.below(3));
    y[i] = static_cast<int>(rng.below(3));
  }
  const double indep = cohen_kappa(x, y, 3).kappa;
  o.require(std::abs(indep) < 0.05, fmt::format("independent kappa {}", indep));
  if (o.pass)
    o.detail = fmt::format("1000 instances max dev {:.1e}, hand {:.4f}, independent {:+.4f}", worst, hand, indep);
  return o;
}

Outcome factor_kappa_behavior() {
  Outcome o;
  const auto config = make_config("c4", R"("n_eval": 60, "backend": "mock:oracle")");
  cmd_generate(config);
  cmd_run(config);
  const auto score = cmd_score(config);
  std::ifstream csv(config.output_dir / "reports" / "kappa.csv");
  std::string line;
  std::getline(csv, line);
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    const auto name = line.substr(0, line.find(','));
    const double k = std::stod(line.substr(name.size() + 1));
    o.require(k == 1.0, fmt::format("oracle kappa({}) = {}", name, k));
    ++rows;
  }
  o.require(rows == 8, "kappa.csv should list 7 factors and the average");
  o.require(score.kappa_avg == 1.0, "oracle kappa_avg != 1");

  const auto factors = default_factor_set(Task::ANLI);
  const auto setups = enumerate_setups(factors);
  const auto pos = factors.require("one_label");
  const std::size_t width = 90;
  std::vector<std::string> ids;
  std::vector<std::string> data_ids;
  std::vector<int> gold;
  std::vector<int> cells;
  for (std::size_t d = 0; d < width; ++d) {
    data_ids.push_back(fmt::format("d{:03}", d));
    gold.push_back(static_cast<int>(d % 3));
  }
  for (const auto& s : setups) {
    ids.push_back(encode_setup_id(s));
    for (int g : gold) cells.push_back(s.levels[pos] == Level::Present ? (g + 1) % 3 : g);
  }
  const EvalTable table(ids, data_ids, gold, 3, cells);
  const auto report = kappa_report(table, setups, factors);
  for (const auto& [name, r] : report.per_factor) {
    if (name == "one_label") {
      o.require(r.kappa < 0.0, fmt::format("flipped kappa(one_label) = {}", r.kappa));
    } else {
      o.require(r.kappa == 1.0, fmt::format("flip table kappa({}) = {}", name, r.kappa));
    }
  }
  if (o.pass) o.detail = fmt::format("oracle 7/7 factors at 1.0; flip table kappa(one_label) = {:.4f}",
                                     report.per_factor.back().second.kappa);
  return o;
}

Outcome entropy_consistency() {
  Outcome o;
  const std::vector<std::size_t> split{10, 5};
  const double h = entropy_bits(split);
  o.require(std::abs(h - 0.9183) <= 1e-4, fmt::format("10/5 split entropy {}", h));

  std::vector<std::string> ids{"a", "b", "c"};
  const EvalTable constant(ids, {"x", "y"}, {0, 1}, 3, {2, 2, 2, 2, 2, 2});
  const auto c = model_consistency(constant);
  o.require(c.total_entropy == 0.0 && std::isinf(c.c_pi) && c.c_pi > 0, "constant table not infinitely consistent");

  // Uniform-random mock over three labels: 96 setups x 1200 = 115200 cells.
  const auto config = make_config("c5", R"("n_eval": 1200, "backend": "mock:hash:77")");
  cmd_generate(config);
  cmd_run(config);
  cmd_score(config);
  const auto div = nlohmann::json::parse(slurp(config.output_dir / "reports" / "diversity.json"));
  const double entropy = div["entropy"].get<double>();
  o.require(std::abs(entropy - std::log2(3.0)) <= 0.01, fmt::format("diversity entropy {}", entropy));
  const auto cons = nlohmann::json::parse(slurp(config.output_dir / "reports" / "consistency.json"));
  o.require(cons["c_pi"].is_number(), "c_pi of a random model should be finite");
  if (o.pass)
    o.detail = fmt::format("10/5 -> {:.4f} bits, constant c_pi = inf, diversity {:.4f} over 115200 cells", h, entropy);
  return o;
}

double lambda(const Setup& s, std::size_t pos) { return s.levels[pos] == Level::Present ? 1.0 : 0.0; }

Outcome regression_recovery() {
  Outcome o;
  Rng rng(21);
  const std::vector<double> beta{0.25, -0.5, 1.75};
  Design X({"c", "a", "b"}, 40);
  std::vector<double> y(40);
  for (std::size_t r = 0; r < 40; ++r) {
    X(r, 0) = 1.0;
    X(r, 1) = rng.unit() * 4 - 2;
    X(r, 2) = rng.unit() * 4 - 2;
    y[r] = beta[0] + beta[1] * X(r, 1) + beta[2] * X(r, 2);
  }
  const auto fit = fit_ols(X, y);
  double worst = 0.0;
  for (std::size_t i = 0; i < 3; ++i) worst = std::max(worst, std::abs(fit.coefficients[i] - beta[i]));
  o.require(worst <= 1e-9, fmt::format("planted coefficient error {:g}", worst));

  const auto factors = default_factor_set(Task::ANLI);
  const auto setups = enumerate_setups(factors);
  AccuracyBySetup acc;
  for (const auto& s : setups) acc[encode_setup_id(s)] = rng.unit();
  for (const auto& f : factors.factors()) {
    const auto pos = factors.require(f.name);
    double sum[2] = {0, 0};
    double n[2] = {0, 0};
    for (const auto& s : setups) {
      if (s.levels[pos] == Level::Irrelevant) continue;
      const int k = s.levels[pos] == Level::Present;
      sum[k] += acc[encode_setup_id(s)];
      n[k] += 1;
    }
    const double diff = sum[1] / n[1] - sum[0] / n[0];
    o.require(std::abs(main_effect(acc, factors, f.name).beta1 - diff) <= 1e-9,
              "main effect of " + f.name + " differs from the level-mean difference");
  }

  AccuracyBySetup additive;
  for (const auto& s : setups) {
    double a = 0.4;
    for (std::size_t k = 0; k < factors.size(); ++k) a += 0.03 * static_cast<double>(k + 1) * lambda(s, k);
    additive[encode_setup_id(s)] = a;
  }
  double worst_ij = 0.0;
  for (const auto& e : interaction_report(additive, factors).entries)
    if (e.estimable) worst_ij = std::max(worst_ij, std::abs(e.beta_ij));
  o.require(worst_ij <= 1e-9, fmt::format("additive interaction {:g}", worst_ij));

  const auto pi = factors.require("n_shots");
  const auto pj = factors.require("cross_templates");
  AccuracyBySetup planted;
  for (const auto& s : setups) {
    const double u1 = std::max(rng.unit(), 1e-300);
    const double noise = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * rng.unit());
    planted[encode_setup_id(s)] =
        0.55 + 0.08 * lambda(s, pi) - 0.04 * lambda(s, pj) - 0.15 * lambda(s, pi) * lambda(s, pj) + 0.001 * noise;
  }
  const auto e = interaction_effect(planted, factors, "n_shots", "cross_templates", 0.05);
  o.require(e.estimable && std::abs(e.beta_ij + 0.15) <= 1e-3, fmt::format("planted beta_ij {}", e.beta_ij));
  o.require(e.significant, fmt::format("planted interaction p = {}", e.p));
  if (o.pass)
    o.detail = fmt::format("noiseless dev {:.1e}, additive |b_ij| {:.1e}, planted b_ij {:.4f} (p {:.1e})", worst,
                           worst_ij, e.beta_ij, e.p);
  return o;
}

Outcome calibration() {
  Outcome o;
  const std::size_t n = 500;
  const auto records = testing::synthetic_records(Task::ANLI, Split::Validation, n, 9);
  auto gold = std::make_shared<std::unordered_map<std::string, int>>();
  for (const auto& r : records) gold->emplace(r.data_id, r.gold);
  const auto backend = make_backend("mock:biased:6,1.5,0.4:0.35", gold);
  const TemplateSet templates(bundled_templates());
  const auto& tmpl = templates.get(Task::ANLI, "MNLI Crowdsource");
  std::size_t raw_hits = 0;
  std::size_t hits = 0;
  for (const auto& r : records) {
    PromptInstance p;
    p.setup_id = "0000020";
    p.data_id = r.data_id;
    p.text = render_target(tmpl, r).text;
    p.label_space = tmpl.answer_choices;
    p.target_template_id = tmpl.template_id;
    const auto scores = normalize(backend->score_labels(p));
    const auto cf = content_free_scores(*backend, p, tmpl, r);
    raw_hits += predict_greedy(scores) == r.gold;
    hits += predict_greedy(calibrate(scores, cf)) == r.gold;
  }
  o.require(hits == n, fmt::format("calibrated {}/{}", hits, n));

  Rng rng(12);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> logits{rng.unit() * 6 - 3, rng.unit() * 6 - 3, rng.unit() * 6 - 3};
    const auto p = normalize(LabelScores{logits, false});
    const auto q = calibrate(p, LabelScores{{1.0 / 3, 1.0 / 3, 1.0 / 3}, true});
    for (std::size_t i = 0; i < 3; ++i) worst = std::max(worst, std::abs(q.scores[i] - p.scores[i]));
  }
  o.require(worst <= 1e-12, fmt::format("uniform calibration moved scores by {:g}", worst));
  if (o.pass)
    o.detail = fmt::format("raw {}/{} -> calibrated {}/{}; uniform-cf max dev {:.1e}", raw_hits, n, hits, n, worst);
  return o;
}

Outcome prompt_byte_exactness() {
  Outcome o;
  const auto golden = fs::path(ICLC_GOLDEN_DIR);
  const auto j = nlohmann::json::parse(slurp(golden / "record.json"));
  DataRecord r;
  r.data_id = j["id"];
  r.field_a = j["field_a"];
  r.field_b = j["field_b"];
  r.gold = j["gold"];
  const TemplateSet templates(bundled_templates());
  const std::pair<const char*, const char*> cases[] = {
      {"Claim True False Inconclusive", "target_claim_true_false_inconclusive.txt"},
      {"Does It Follow That", "target_does_it_follow_that.txt"},
      {"MNLI Crowdsource", "target_mnli_crowdsource.txt"},
      {"Guaranteed Possible Impossible", "target_guaranteed_possible_impossible.txt"},
  };
  for (const auto& [name, file] : cases) {
    const auto text = render_target(templates.get(Task::ANLI, name), r).text;
    const auto want = slurp(golden / file);
    o.require(text == want, std::string("mismatch for ") + name);
    o.require(want.size() >= kAnswerCue.size() &&
                  want.compare(want.size() - kAnswerCue.size(), kAnswerCue.size(), kAnswerCue) == 0,
              std::string("golden for ") + name + " lacks the answer cue");
  }
  if (o.pass) o.detail = "4/4 templates byte-identical, each ending in the answer cue";
  return o;
}

// Replaces the prompt at data index `d` of a suitable setup with a corrupted
// but self-consistent one (text re-rendered from the corrupted ids).
struct Corruptor {
  const Workspace& ws;
  Rng rng{55};

  const DataRecord* other_from(const TrainingPool& pool, const std::vector<Selection>& sel,
                               const DataRecord& target) {
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const auto& r = pool.at(i);
      bool used = r.data_id == target.data_id;
      for (const auto& s : sel) used |= s.record->data_id == r.data_id;
      if (!used) return &r;
    }
    throw Error("pool has no spare record");
  }

  template <typename Pred>
  const Setup& pick(Pred ok) {
    const auto& setups = ws.setups();
    for (;;) {
      const auto& s = setups[rng.below(setups.size())];
      if (ok(s)) return s;
    }
  }

  PromptInstance make(int kind, const DataRecord& target) {
    const auto& gen = ws.generator();
    const auto& f = ws.factors();
    auto present = [&](const Setup& s, const char* name) { return is_present(s, f, name); };
    switch (kind) {
      case 0: {  // wrong k: shots drawn for the twin setup, id of the original
        const auto& s = pick([](const Setup&) { return true; });
        auto twin = s;
        const auto pos = f.require("n_shots");
        twin.levels[pos] = s.levels[pos] == Level::Present ? Level::Absent : Level::Present;
        const auto& tmpl = gen.target_template(twin);
        const auto sel = gen.select_in_context(twin, target, tmpl, rng.next());
        auto p = gen.compose_prompt(twin, target, sel, tmpl);
        p.setup_id = encode_setup_id(s);
        return p;
      }
      case 1: {  // unbalanced labels
        const auto& s = pick([&](const Setup& x) { return present(x, "balanced_labels") && !present(x, "one_label"); });
        const auto& tmpl = gen.target_template(s);
        auto sel = gen.select_in_context(s, target, tmpl, rng.next());
        const Task source = gen.source_task(s);
        std::vector<int> counts(static_cast<std::size_t>(label_count(source)), 0);
        for (const auto& x : sel) ++counts[static_cast<std::size_t>(x.record->gold)];
        const int top = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
        for (auto& x : sel) {
          if (x.record->gold != top) {
            x.record = other_from(gen.pools().with_label(source, top), sel, target);
            break;
          }
        }
        return gen.compose_prompt(s, target, sel, tmpl);
      }
      case 2: {  // wrong task
        const auto& s = pick([&](const Setup& x) { return !present(x, "cross_task"); });
        const auto& tmpl = gen.target_template(s);
        auto sel = gen.select_in_context(s, target, tmpl, rng.next());
        const auto& qqp = gen.pools().all(Task::QQP);
        sel[0].record = &qqp.at(rng.below(qqp.size()));
        sel[0].tmpl = ws.templates().for_task(Task::QQP).front();
        return gen.compose_prompt(s, target, sel, tmpl);
      }
      default: {  // wrong target template
        const auto& s = pick([](const Setup&) { return true; });
        const auto& tmpl = gen.target_template(s);
        const auto sel = gen.select_in_context(s, target, tmpl, rng.next());
        const auto all = ws.templates().for_task(Task::ANLI);
        const InstructionTemplate* other = &tmpl;
        while (other->template_id == tmpl.template_id) other = all[rng.below(all.size())];
        return gen.compose_prompt(s, target, sel, *other);
      }
    }
  }
};

Outcome constraint_validation() {
  Outcome o;
  std::size_t prompts = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto config = make_config(fmt::format("c9-seed{}", seed),
                                    fmt::format(R"("n_eval": 60, "seed": {})", seed * 7919));
    cmd_generate(config);
    const auto v = cmd_validate(config);
    prompts += v.prompts;
    o.require(v.violations.empty(), fmt::format("seed {}: {} violations, first: {}", seed, v.violations.size(),
                                                v.violations.empty() ? "" : v.violations[0].message));
  }

  const auto config = make_config("c9-corrupt", R"("n_eval": 60, "seed": 5)");
  cmd_generate(config);
  const Workspace ws(config);
  auto contents = read_jsonl(ws.prompts_path());
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (std::size_t i = 0; i < contents.records.size(); ++i) {
    const auto p = prompt_from_json(contents.records[i]);
    index[{p.setup_id, p.data_id}] = i;
  }
  Corruptor corruptor{ws};
  std::set<std::pair<std::string, std::string>> corrupted;
  const char* kinds[] = {"wrong k", "unbalanced labels", "wrong task", "wrong template"};
  std::map<std::pair<std::string, std::string>, int> kind_of;
  for (int i = 0; i < 50; ++i) {
    const auto& target = ws.eval().records()[static_cast<std::size_t>(i)];
    const auto bad = corruptor.make(i % 4, target);
    const std::pair key{bad.setup_id, bad.data_id};
    contents.records[index.at(key)] = to_json(bad);
    corrupted.insert(key);
    kind_of[key] = i % 4;
  }
  std::string text;
  for (const auto& r : contents.records) text += r.dump() + "\n";
  write_file_atomic(ws.prompts_path(), text);
  const auto v = cmd_validate(config);
  std::set<std::pair<std::string, std::string>> flagged;
  for (const auto& x : v.violations) flagged.insert({x.setup_id, x.data_id});
  std::size_t caught = 0;
  for (const auto& key : corrupted) {
    if (flagged.count(key)) {
      ++caught;
    } else {
      o.require(false, fmt::format("missed {} at {}/{}", kinds[kind_of[key]], key.first, key.second));
    }
  }
  std::size_t false_alarms = 0;
  for (const auto& key : flagged) false_alarms += corrupted.count(key) == 0;
  o.require(corrupted.size() == 50, "corruptions collided");
  o.require(false_alarms == 0, fmt::format("{} untouched prompts flagged", false_alarms));
  if (o.pass)
    o.detail = fmt::format("20 seeds / {} prompts clean; {}/{} corruptions detected", prompts, caught,
                           corrupted.size());
  return o;
}

std::vector<std::pair<std::string, std::string>> output_files(const fs::path& dir) {
  std::vector<std::pair<std::string, std::string>> out;
  out.emplace_back("predictions.jsonl", slurp(dir / "predictions.jsonl"));
  std::vector<fs::path> reports;
  for (const auto& e : fs::directory_iterator(dir / "reports")) reports.push_back(e.path());
  std::sort(reports.begin(), reports.end());
  for (const auto& p : reports) out.emplace_back("reports/" + p.filename().string(), slurp(p));
  return out;
}

Outcome determinism_and_resume() {
  Outcome o;
  const std::string extra = R"("n_eval": 120, "backend": "mock:biased:3,1,1:0.6", "calibration": true)";
  const auto config = make_config("c10", extra);
  auto full_run = [&](const RunConfig& c) {
    fs::remove_all(c.output_dir);
    cmd_generate(c);
    cmd_run(c);
    cmd_score(c);
    return output_files(c.output_dir);
  };
  const auto first = full_run(config);
  const auto second = full_run(config);
  o.require(first == second, "two runs differ");

  const auto part = make_config("c10-resume", extra);
  fs::remove_all(part.output_dir);
  cmd_generate(part);
  CommandOptions stop;
  stop.stop_after = 4321;
  cmd_run(part, stop);
  {
    std::ofstream out(part.output_dir / "predictions.jsonl", std::ios::app);
    out << R"({"setup_id":"10)";
  }
  CommandOptions resume;
  resume.resume = true;
  const auto resumed = cmd_run(part, resume);
  cmd_score(part);
  const auto third = output_files(part.output_dir);
  o.require(resumed.skipped >= 4321, "resume did not reuse committed predictions");
  o.require(third.size() == first.size(), "resumed run wrote a different set of files");
  for (std::size_t i = 0; i < std::min(third.size(), first.size()); ++i)
    o.require(third[i] == first[i], "resumed run differs in " + first[i].first);
  if (o.pass)
    o.detail = fmt::format("{} files byte-identical across repeat and resume ({} skipped on resume)", first.size(),
                           resumed.skipped);
  return o;
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"setup cardinality", setup_cardinality},
      {"setup-id codec", setup_codec},
      {"kappa oracle equivalence", kappa_oracle},
      {"factor kappa behavior", factor_kappa_behavior},
      {"entropy consistency", entropy_consistency},
      {"regression recovery", regression_recovery},
      {"calibration", calibration},
      {"prompt byte-exactness", prompt_byte_exactness},
      {"constraint validation", constraint_validation},
      {"determinism and resume", determinism_and_resume},
  };
  int failures = 0;
  int n = 0;
  for (const auto& [name, check] : criteria) {
    ++n;
    Outcome o;
    const auto start = Clock::now();
    try {
      o = check();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += o.pass ? 0 : 1;
    std::cout << fmt::format("{} [{}] {} ({:.1f}s): {}\n", o.pass ? "PASS" : "FAIL", n, name, seconds_since(start),
                             o.detail)
              << std::flush;
  }
  std::cout << fmt::format("{}/{} criteria passed\n", n - failures, n);
  return failures == 0 ? 0 : 1;
}
