#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "iclc/sampler.hpp"
#include "iclc/templates.hpp"

namespace iclc {

struct LabelScores {
  std::vector<double> scores;  // one per label-space entry, higher = more likely
  bool normalized = false;     // probabilities when true, log-scores otherwise
};

// Throws ValidationError on non-finite values or a bad normalized vector.
void validate_scores(const LabelScores& scores);

// Softmax for log-scores; normalized inputs are returned unchanged.
LabelScores normalize(const LabelScores& scores);

// Argmax, ties broken toward the lowest index.
int predict_greedy(const LabelScores& scores);

// q_i proportional to p_i / cf_i. Both inputs must be normalized.
LabelScores calibrate(const LabelScores& scores, const LabelScores& content_free);

inline const std::vector<std::string> kDefaultContentFreeInputs{"N/A", "", "[MASK]"};

enum class PredictionStatus { Ok, Unanswered };

struct Prediction {
  std::string setup_id;
  std::string data_id;
  int label = kInvalidLabel;      // final label (calibrated when calibrated == true)
  int raw_label = kInvalidLabel;  // label before calibration
  std::optional<LabelScores> scores;
  std::optional<std::string> raw_text;
  bool calibrated = false;
  std::string model_tag;
  PredictionStatus status = PredictionStatus::Ok;
  std::string error;
};

nlohmann::json to_json(const Prediction& prediction);
Prediction prediction_from_json(const nlohmann::json& obj);

class Backend {
 public:
  virtual ~Backend() = default;

  virtual std::string tag() const = 0;
  // False for free-text backends that answer through generate_text.
  virtual bool scores_labels() const { return true; }
  virtual LabelScores score_labels(const PromptInstance& prompt) const = 0;
  virtual std::string generate_text(const PromptInstance& prompt) const;
};

using GoldLookup = std::shared_ptr<const std::unordered_map<std::string, int>>;

// Score 1 on the gold label, 0 elsewhere; uniform when the gold is unknown.
class OracleBackend final : public Backend {
 public:
  explicit OracleBackend(GoldLookup gold) : gold_(std::move(gold)) {}
  std::string tag() const override { return "mock:oracle"; }
  LabelScores score_labels(const PromptInstance& prompt) const override;

 private:
  GoldLookup gold_;
};

class ConstantBackend final : public Backend {
 public:
  explicit ConstantBackend(int label) : label_(label) {}
  std::string tag() const override;
  LabelScores score_labels(const PromptInstance& prompt) const override;

 private:
  int label_;
};

class UniformBackend final : public Backend {
 public:
  std::string tag() const override { return "mock:uniform"; }
  LabelScores score_labels(const PromptInstance& prompt) const override;
};

// Pseudo-random scores that depend only on (seed, prompt text).
class HashBackend final : public Backend {
 public:
  explicit HashBackend(std::uint64_t seed) : seed_(seed) {}
  std::string tag() const override;
  LabelScores score_labels(const PromptInstance& prompt) const override;

 private:
  std::uint64_t seed_;
};

// Label-prior bias on top of an oracle: p = normalize(bias * (onehot(gold) + eps)).
// With no known gold (content-free prompts) this reduces to normalize(bias).
class BiasedBackend final : public Backend {
 public:
  BiasedBackend(std::vector<double> bias, double eps, GoldLookup gold);
  std::string tag() const override;
  LabelScores score_labels(const PromptInstance& prompt) const override;

 private:
  std::vector<double> bias_;
  double eps_;
  GoldLookup gold_;
};

struct HttpOptions {
  std::string model;
  std::string api_key;
  std::chrono::milliseconds timeout{30000};
  bool logprobs_mode = true;  // false: free generation + match_label
  int max_generation_tokens = 8;
};

// OpenAI-compatible /completions client. Label score = summed token
// log-probabilities of the verbalized label appended to the prompt.
class HttpBackend final : public Backend {
 public:
  HttpBackend(std::string base_url, HttpOptions options);
  ~HttpBackend() override;

  std::string tag() const override;
  bool scores_labels() const override { return options_.logprobs_mode; }
  LabelScores score_labels(const PromptInstance& prompt) const override;
  std::string generate_text(const PromptInstance& prompt) const override;

 private:
  std::string post(const std::string& body) const;

  std::string scheme_host_port_;
  std::string path_;
  HttpOptions options_;
};

// "mock:oracle", "mock:constant:<label>", "mock:uniform", "mock:hash:<seed>",
// "mock:biased:<b0,b1,...>:<eps>", or an http(s) URL.
std::unique_ptr<Backend> make_backend(const std::string& uri, GoldLookup gold,
                                      const HttpOptions& http = {});

struct RetryPolicy {
  int attempts = 5;
  std::chrono::milliseconds base_delay{200};
  double multiplier = 2.0;
};

// Runs fn, retrying TransportError with exponential backoff.
template <typename Fn>
auto with_retry(const RetryPolicy& policy, Fn&& fn) -> decltype(fn());

void sleep_for_retry(const RetryPolicy& policy, int attempt);

// Mean normalized scores over prompts whose target fields are replaced by
// each content-free string. `target` and `tmpl` identify the target block so
// the in-context prefix can be kept.
LabelScores content_free_scores(const Backend& backend, const PromptInstance& prompt_shape,
                                const InstructionTemplate& tmpl, const DataRecord& target,
                                const std::vector<std::string>& cf_inputs = kDefaultContentFreeInputs);

}  // namespace iclc

#include "iclc/error.hpp"

namespace iclc {

template <typename Fn>
auto with_retry(const RetryPolicy& policy, Fn&& fn) -> decltype(fn()) {
  for (int attempt = 1;; ++attempt) {
    try {
      return fn();
    } catch (const TransportError&) {
      if (attempt >= policy.attempts) throw;
      sleep_for_retry(policy, attempt);
    }
  }
}

}  // namespace iclc
