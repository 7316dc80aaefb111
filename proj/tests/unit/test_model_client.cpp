#include <doctest.h>

#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "iclc/error.hpp"
#include "iclc/model_client.hpp"
#include "synthetic.hpp"

using namespace iclc;
using nlohmann::json;

namespace {

PromptInstance prompt_for(const std::string& data_id, std::vector<std::string> labels,
                          std::string text = "context\n\nANSWER: ") {
  PromptInstance p;
  p.setup_id = "0000020";
  p.data_id = data_id;
  p.text = std::move(text);
  p.label_space = std::move(labels);
  return p;
}

const std::vector<std::string> kNli{"Correct", "Inconclusive", "Incorrect"};

// Minimal OpenAI-style completions endpoint for tests.
class FakeServer {
 public:
  FakeServer() {
    server_.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
      {
        std::lock_guard lock(mu_);
        last_auth_ = req.get_header_value("Authorization");
        last_body_ = json::parse(req.body);
        ++calls_;
      }
      if (fail_first_ > 0) {
        --fail_first_;
        res.status = 503;
        res.set_content("busy", "text/plain");
        return;
      }
      if (refuse_logprobs_) {
        res.status = 400;
        res.set_content(R"({"error":"logprobs are not supported"})", "application/json");
        return;
      }
      const auto body = json::parse(req.body);
      json choices = json::array();
      if (body["prompt"].is_string()) {
        choices.push_back({{"index", 0}, {"text", generation_}, {"logprobs", nullptr}});
      } else {
        std::size_t index = 0;
        for (const auto& p : body["prompt"]) {
          const auto text = p.get<std::string>();
          // Echo as two tokens: everything before the final word, then the
          // final word with its leading space. The label score is -(index+1).
          const auto cut = text.rfind(' ');
          json tokens = {text.substr(0, cut), text.substr(cut)};
          json offsets = {0, cut};
          json lps = {nullptr, -static_cast<double>(index + 1)};
          choices.push_back({{"index", index},
                             {"text", text},
                             {"logprobs", {{"tokens", tokens}, {"token_logprobs", lps}, {"text_offset", offsets}}}});
          ++index;
        }
      }
      res.set_content(json{{"choices", choices}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  std::string last_auth() {
    std::lock_guard lock(mu_);
    return last_auth_;
  }
  json last_body() {
    std::lock_guard lock(mu_);
    return last_body_;
  }

  std::atomic<int> fail_first_{0};
  std::atomic<bool> refuse_logprobs_{false};
  std::string generation_ = " Incorrect\nbecause";
  int calls_ = 0;

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex mu_;
  std::string last_auth_;
  json last_body_;
};

}  // namespace

TEST_CASE("normalize, argmax and score validation") {
  const auto n = normalize(LabelScores{{0.0, std::log(3.0)}, false});
  CHECK(n.normalized);
  CHECK(n.scores[1] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(predict_greedy(LabelScores{{0.2, 0.4, 0.4}, true}) == 1);
  CHECK_THROWS_AS(validate_scores(LabelScores{{0.5, 0.6}, true}), ValidationError);
  CHECK_THROWS_AS(validate_scores(LabelScores{{NAN, 0.6}, false}), ValidationError);
  CHECK_NOTHROW(validate_scores(LabelScores{{-3.0, -0.1}, false}));
}

TEST_CASE("calibration with uniform content-free scores is the identity") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    LabelScores p{{rng.unit() + 1e-3, rng.unit() + 1e-3, rng.unit() + 1e-3}, false};
    p = normalize(LabelScores{{std::log(p.scores[0]), std::log(p.scores[1]), std::log(p.scores[2])}, false});
    const auto q = calibrate(p, LabelScores{{1.0 / 3, 1.0 / 3, 1.0 / 3}, true});
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(q.scores[i] - p.scores[i]) <= 1e-12);
  }
  CHECK_THROWS_AS(calibrate(LabelScores{{0.5, 0.5}, true}, LabelScores{{1.0, 0.0}, true}), ValidationError);
  CHECK_THROWS_AS(calibrate(LabelScores{{0.5, 0.5}, false}, LabelScores{{0.5, 0.5}, true}), ValidationError);
}

TEST_CASE("biased backend is undone by matching content-free calibration") {
  auto gold = std::make_shared<std::unordered_map<std::string, int>>();
  const auto records = testing::synthetic_records(Task::ANLI, Split::Validation, 500, 8);
  for (const auto& r : records) gold->emplace(r.data_id, r.gold);
  const BiasedBackend backend({8.0, 1.0, 0.5}, 0.4, gold);

  InstructionTemplate tmpl;
  tmpl.template_id = 1;
  tmpl.name = "plain";
  tmpl.pattern = "{field_a} / {field_b}?";
  tmpl.answer_choices = kNli;
  int raw_hits = 0;
  int calibrated_hits = 0;
  for (const auto& r : records) {
    auto p = prompt_for(r.data_id, kNli, "shot\n\n" + render_target(tmpl, r).text);
    const auto raw = normalize(backend.score_labels(p));
    const auto cf = content_free_scores(backend, p, tmpl, r);
    raw_hits += predict_greedy(raw) == r.gold;
    calibrated_hits += predict_greedy(calibrate(raw, cf)) == r.gold;
  }
  CHECK(raw_hits < 400);
  CHECK(calibrated_hits == 500);
}

TEST_CASE("mock backends") {
  auto gold = std::make_shared<std::unordered_map<std::string, int>>(
      std::unordered_map<std::string, int>{{"d1", 2}});
  const auto p = prompt_for("d1", kNli);
  CHECK(predict_greedy(make_backend("mock:oracle", gold)->score_labels(p)) == 2);
  CHECK(make_backend("mock:oracle", gold)->score_labels(prompt_for("zz", kNli)).scores[0] ==
        doctest::Approx(1.0 / 3));
  CHECK(predict_greedy(make_backend("mock:constant:1", gold)->score_labels(p)) == 1);
  CHECK_THROWS_AS(make_backend("mock:constant:5", gold)->score_labels(p), BackendFatal);
  const auto h = make_backend("mock:hash:3", gold);
  CHECK(h->score_labels(p).scores == h->score_labels(p).scores);
  CHECK(h->score_labels(p).scores != make_backend("mock:hash:4", gold)->score_labels(p).scores);
  CHECK(make_backend("mock:biased:2,1,1:0", gold)->tag() == "mock:biased:2,1,1:0");
  CHECK_THROWS_AS(make_backend("mock:nope", gold), ConfigError);
  CHECK_THROWS_AS(make_backend("mock:hash:x", gold), ConfigError);
  CHECK_THROWS_AS(make_backend("mock:biased:0,1:0.1", gold), ConfigError);
  CHECK_THROWS_AS(make_backend("ftp://x", gold), ConfigError);
}

TEST_CASE("prediction records round-trip") {
  Prediction p;
  p.setup_id = "0000020";
  p.data_id = "d";
  p.label = 1;
  p.raw_label = 0;
  p.calibrated = true;
  p.scores = LabelScores{{0.6, 0.4}, true};
  p.model_tag = "mock:oracle";
  const auto back = prediction_from_json(to_json(p));
  CHECK(back.label == 1);
  CHECK(back.raw_label == 0);
  CHECK(back.calibrated);
  CHECK(back.scores->scores == p.scores->scores);

  Prediction invalid = p;
  invalid.label = kInvalidLabel;
  CHECK(to_json(invalid)["label"].is_null());
  CHECK(prediction_from_json(to_json(invalid)).label == kInvalidLabel);

  Prediction u;
  u.setup_id = "s";
  u.data_id = "d";
  u.status = PredictionStatus::Unanswered;
  u.error = "timeout";
  const auto ub = prediction_from_json(to_json(u));
  CHECK(ub.status == PredictionStatus::Unanswered);
  CHECK(ub.error == "timeout");
}

TEST_CASE("retry policy") {
  const RetryPolicy fast{4, std::chrono::milliseconds(1), 2.0};
  int calls = 0;
  CHECK(with_retry(fast, [&] {
          if (++calls < 3) throw TransportError("flaky");
          return 7;
        }) == 7);
  CHECK(calls == 3);
  calls = 0;
  CHECK_THROWS_AS(with_retry(fast, [&]() -> int { ++calls; throw TransportError("down"); }), TransportError);
  CHECK(calls == 4);
  calls = 0;
  CHECK_THROWS_AS(with_retry(fast, [&]() -> int { ++calls; throw BackendFatal("no"); }), BackendFatal);
  CHECK(calls == 1);
}

TEST_CASE("http backend scores labels from echoed logprobs") {
  FakeServer server;
  HttpOptions opts;
  opts.model = "tiny";
  opts.api_key = "sekret";
  const HttpBackend backend(server.url(), opts);
  const auto p = prompt_for("d", kNli);
  const auto s = backend.score_labels(p);
  CHECK_FALSE(s.normalized);
  CHECK(s.scores == std::vector<double>{-1.0, -2.0, -3.0});
  CHECK(server.last_auth() == "Bearer sekret");
  const auto body = server.last_body();
  CHECK(body["model"] == "tiny");
  CHECK(body["echo"] == true);
  CHECK(body["max_tokens"] == 0);
  CHECK(body["prompt"][1] == p.text + "Inconclusive");
  CHECK(backend.tag().find("tiny") != std::string::npos);
}

TEST_CASE("http backend error mapping") {
  FakeServer server;
  const HttpBackend backend(server.url(), HttpOptions{});
  const auto p = prompt_for("d", kNli);

  server.fail_first_ = 2;
  const RetryPolicy fast{3, std::chrono::milliseconds(1), 1.0};
  CHECK_THROWS_AS(backend.score_labels(p), TransportError);
  CHECK(with_retry(fast, [&] { return backend.score_labels(p); }).scores.size() == 3);

  server.refuse_logprobs_ = true;
  CHECK_THROWS_WITH_AS(backend.score_labels(p), doctest::Contains("generate"), BackendFatal);

  const HttpBackend dead("http://127.0.0.1:1/v1", HttpOptions{});
  CHECK_THROWS_AS(dead.score_labels(p), TransportError);
}

TEST_CASE("http backend generate mode") {
  FakeServer server;
  HttpOptions opts;
  opts.logprobs_mode = false;
  const HttpBackend backend(server.url(), opts);
  CHECK_FALSE(backend.scores_labels());
  const auto p = prompt_for("d", kNli);
  const auto text = backend.generate_text(p);
  CHECK(text == " Incorrect\nbecause");
  InstructionTemplate t;
  t.answer_choices = kNli;
  CHECK(match_label(text, t) == 2);
  CHECK(server.last_body()["max_tokens"] == 8);
}
