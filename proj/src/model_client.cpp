#include "iclc/model_client.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "iclc/error.hpp"
#include "iclc/rng.hpp"

namespace iclc {

using nlohmann::json;

void validate_scores(const LabelScores& s) {
  if (s.scores.empty()) throw ValidationError("empty label scores");
  double sum = 0.0;
  for (double v : s.scores) {
    if (!std::isfinite(v)) throw ValidationError("non-finite label score");
    if (s.normalized && v < 0.0) throw ValidationError("negative probability in normalized scores");
    sum += v;
  }
  if (s.normalized && std::abs(sum - 1.0) > 1e-9)
    throw ValidationError(fmt::format("normalized scores sum to {}", sum));
}

LabelScores normalize(const LabelScores& s) {
  if (s.normalized) return s;
  const double hi = *std::max_element(s.scores.begin(), s.scores.end());
  LabelScores out{std::vector<double>(s.scores.size()), true};
  double sum = 0.0;
  for (std::size_t i = 0; i < s.scores.size(); ++i) sum += out.scores[i] = std::exp(s.scores[i] - hi);
  for (auto& v : out.scores) v /= sum;
  return out;
}

int predict_greedy(const LabelScores& s) {
  if (s.scores.empty()) throw ValidationError("empty label scores");
  // max_element returns the first maximum, which is the lowest index.
  return static_cast<int>(std::max_element(s.scores.begin(), s.scores.end()) - s.scores.begin());
}

LabelScores calibrate(const LabelScores& scores, const LabelScores& cf) {
  if (!scores.normalized || !cf.normalized)
    throw ValidationError("calibration needs normalized scores and content-free scores");
  if (scores.scores.size() != cf.scores.size())
    throw ValidationError("calibration: label-space sizes differ");
  LabelScores out{std::vector<double>(scores.scores.size()), true};
  double sum = 0.0;
  for (std::size_t i = 0; i < cf.scores.size(); ++i) {
    if (!(cf.scores[i] > 0.0))
      throw ValidationError(fmt::format("degenerate calibration: content-free score {} is {}", i,
                                        cf.scores[i]));
    sum += out.scores[i] = scores.scores[i] / cf.scores[i];
  }
  if (!(sum > 0.0)) throw ValidationError("degenerate calibration: all calibrated scores are zero");
  for (auto& v : out.scores) v /= sum;
  return out;
}

json to_json(const Prediction& p) {
  json obj{{"setup_id", p.setup_id},
           {"data_id", p.data_id},
           {"status", p.status == PredictionStatus::Ok ? "ok" : "unanswered"},
           {"model_tag", p.model_tag}};
  if (p.status == PredictionStatus::Unanswered) {
    obj["error"] = p.error;
    return obj;
  }
  obj["label"] = p.label == kInvalidLabel ? json(nullptr) : json(p.label);
  obj["raw_label"] = p.raw_label == kInvalidLabel ? json(nullptr) : json(p.raw_label);
  obj["calibrated"] = p.calibrated;
  if (p.scores) obj["scores"] = p.scores->scores;
  if (p.raw_text) obj["raw_text"] = *p.raw_text;
  return obj;
}

Prediction prediction_from_json(const json& obj) {
  Prediction p;
  try {
    p.setup_id = obj.at("setup_id").get<std::string>();
    p.data_id = obj.at("data_id").get<std::string>();
    p.model_tag = obj.value("model_tag", std::string());
    const auto status = obj.value("status", std::string("ok"));
    if (status == "unanswered") {
      p.status = PredictionStatus::Unanswered;
      p.error = obj.value("error", std::string());
      return p;
    }
    if (status != "ok") throw ParseError(fmt::format("unknown prediction status '{}'", status));
    auto label = [&](const char* key) {
      auto it = obj.find(key);
      return it == obj.end() || it->is_null() ? kInvalidLabel : it->get<int>();
    };
    p.label = label("label");
    p.raw_label = label("raw_label");
    p.calibrated = obj.value("calibrated", false);
    if (auto it = obj.find("scores"); it != obj.end())
      p.scores = LabelScores{it->get<std::vector<double>>(), true};
    if (auto it = obj.find("raw_text"); it != obj.end()) p.raw_text = it->get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("prediction record: {}", e.what()));
  }
  return p;
}

std::string Backend::generate_text(const PromptInstance&) const {
  throw BackendFatal(fmt::format("backend {} does not support free generation", tag()));
}

namespace {

std::optional<int> lookup_gold(const GoldLookup& gold, const std::string& data_id) {
  if (!gold) return std::nullopt;
  auto it = gold->find(data_id);
  if (it == gold->end()) return std::nullopt;
  return it->second;
}

LabelScores one_hot(std::size_t n, std::optional<int> hot) {
  LabelScores s{std::vector<double>(n, hot ? 0.0 : 1.0 / static_cast<double>(n)), true};
  if (hot && *hot >= 0 && static_cast<std::size_t>(*hot) < n) s.scores[static_cast<std::size_t>(*hot)] = 1.0;
  return s;
}

}  // namespace

LabelScores OracleBackend::score_labels(const PromptInstance& prompt) const {
  return one_hot(prompt.label_space.size(), lookup_gold(gold_, prompt.data_id));
}

std::string ConstantBackend::tag() const { return fmt::format("mock:constant:{}", label_); }

LabelScores ConstantBackend::score_labels(const PromptInstance& prompt) const {
  if (label_ < 0 || static_cast<std::size_t>(label_) >= prompt.label_space.size())
    throw BackendFatal(fmt::format("constant label {} outside a {}-label space", label_,
                                   prompt.label_space.size()));
  return one_hot(prompt.label_space.size(), label_);
}

LabelScores UniformBackend::score_labels(const PromptInstance& prompt) const {
  return one_hot(prompt.label_space.size(), std::nullopt);
}

std::string HashBackend::tag() const { return fmt::format("mock:hash:{}", seed_); }

LabelScores HashBackend::score_labels(const PromptInstance& prompt) const {
  LabelScores s{std::vector<double>(prompt.label_space.size()), true};
  double sum = 0.0;
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    const auto h = StableHash().add(seed_).add(prompt.text).add(static_cast<std::uint64_t>(i)).digest();
    // Strictly positive so the vector always normalizes.
    sum += s.scores[i] = (static_cast<double>(h >> 11) + 1.0) * 0x1.0p-53;
  }
  for (auto& v : s.scores) v /= sum;
  return s;
}

BiasedBackend::BiasedBackend(std::vector<double> bias, double eps, GoldLookup gold)
    : bias_(std::move(bias)), eps_(eps), gold_(std::move(gold)) {
  if (bias_.empty()) throw ConfigError("biased backend needs a bias vector");
  for (double b : bias_)
    if (!(b > 0.0) || !std::isfinite(b)) throw ConfigError("biased backend: bias entries must be > 0");
  if (!(eps_ >= 0.0)) throw ConfigError("biased backend: eps must be >= 0");
}

std::string BiasedBackend::tag() const {
  std::string b;
  for (double v : bias_) b += (b.empty() ? "" : ",") + fmt::format("{}", v);
  return fmt::format("mock:biased:{}:{}", b, eps_);
}

LabelScores BiasedBackend::score_labels(const PromptInstance& prompt) const {
  if (bias_.size() != prompt.label_space.size())
    throw BackendFatal(fmt::format("bias has {} entries for a {}-label space", bias_.size(),
                                   prompt.label_space.size()));
  const auto gold = lookup_gold(gold_, prompt.data_id);
  LabelScores s{std::vector<double>(bias_.size()), true};
  double sum = 0.0;
  for (std::size_t i = 0; i < bias_.size(); ++i) {
    double evidence = gold ? ((static_cast<int>(i) == *gold ? 1.0 : 0.0) + eps_) : 1.0;
    sum += s.scores[i] = bias_[i] * evidence;
  }
  for (auto& v : s.scores) v /= sum;
  return s;
}

std::unique_ptr<Backend> make_backend(const std::string& uri, GoldLookup gold,
                                      const HttpOptions& http) {
  if (uri.rfind("http://", 0) == 0 || uri.rfind("https://", 0) == 0)
    return std::make_unique<HttpBackend>(uri, http);
  if (uri.rfind("mock:", 0) != 0) throw ConfigError(fmt::format("unknown backend URI '{}'", uri));

  std::vector<std::string> parts;
  std::stringstream ss(uri.substr(5));
  for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
  if (parts.empty()) throw ConfigError(fmt::format("unknown backend URI '{}'", uri));
  const auto& kind = parts[0];
  try {
    if (kind == "oracle" && parts.size() == 1) return std::make_unique<OracleBackend>(std::move(gold));
    if (kind == "uniform" && parts.size() == 1) return std::make_unique<UniformBackend>();
    if (kind == "constant" && parts.size() == 2) return std::make_unique<ConstantBackend>(std::stoi(parts[1]));
    if (kind == "hash" && parts.size() == 2) return std::make_unique<HashBackend>(std::stoull(parts[1]));
    if (kind == "biased" && parts.size() == 3) {
      std::vector<double> bias;
      std::stringstream bs(parts[1]);
      for (std::string v; std::getline(bs, v, ',');) bias.push_back(std::stod(v));
      return std::make_unique<BiasedBackend>(std::move(bias), std::stod(parts[2]), std::move(gold));
    }
  } catch (const std::logic_error&) {
    throw ConfigError(fmt::format("malformed backend URI '{}'", uri));
  }
  throw ConfigError(fmt::format("unknown backend URI '{}'", uri));
}

void sleep_for_retry(const RetryPolicy& policy, int attempt) {
  const double factor = std::pow(policy.multiplier, attempt - 1);
  std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(
      static_cast<double>(policy.base_delay.count()) * factor));
}

LabelScores content_free_scores(const Backend& backend, const PromptInstance& shape,
                                const InstructionTemplate& tmpl, const DataRecord& target,
                                const std::vector<std::string>& cf_inputs) {
  if (cf_inputs.empty()) throw ValidationError("content-free inputs must not be empty");
  const auto block = render_target(tmpl, target).text;
  if (shape.text.size() < block.size() ||
      shape.text.compare(shape.text.size() - block.size(), block.size(), block) != 0)
    throw ValidationError("prompt does not end with the target block of the given record");
  const auto prefix = shape.text.substr(0, shape.text.size() - block.size());

  std::vector<double> mean(shape.label_space.size(), 0.0);
  for (const auto& cf : cf_inputs) {
    DataRecord blank = target;
    blank.data_id.clear();
    blank.field_a = cf;
    blank.field_b = cf;
    PromptInstance probe = shape;
    probe.data_id.clear();
    probe.text = prefix + render_target(tmpl, blank).text;
    auto scores = normalize(backend.score_labels(probe));
    if (scores.scores.size() != mean.size())
      throw ValidationError("content-free scores have the wrong label-space size");
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += scores.scores[i];
  }
  for (auto& v : mean) v /= static_cast<double>(cf_inputs.size());
  return LabelScores{std::move(mean), true};
}

}  // namespace iclc
