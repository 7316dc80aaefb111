#include <fmt/format.h>
#include <httplib.h>

#include "iclc/error.hpp"
#include "iclc/model_client.hpp"

namespace iclc {

using nlohmann::json;

namespace {

bool mentions_logprobs(const std::string& body) {
  return body.find("logprob") != std::string::npos || body.find("echo") != std::string::npos;
}

}  // namespace

HttpBackend::HttpBackend(std::string base_url, HttpOptions options) : options_(std::move(options)) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError(fmt::format("bad endpoint URL '{}'", base_url));
  const auto path_start = base_url.find('/', scheme_end + 3);
  scheme_host_port_ = base_url.substr(0, path_start);
  path_ = path_start == std::string::npos ? std::string() : base_url.substr(path_start);
  while (!path_.empty() && path_.back() == '/') path_.pop_back();
  path_ += "/completions";
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (base_url.rfind("https://", 0) == 0)
    throw ConfigError("this build has no TLS support; use an http:// endpoint");
#endif
}

HttpBackend::~HttpBackend() = default;

std::string HttpBackend::tag() const {
  return fmt::format("http:{}{}#{}", scheme_host_port_, path_, options_.model);
}

std::string HttpBackend::post(const std::string& body) const {
  // One client per call keeps concurrent requests independent.
  httplib::Client client(scheme_host_port_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);

  auto res = client.Post(path_, headers, body, "application/json");
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::Read || err == httplib::Error::Write ||
        err == httplib::Error::ConnectionTimeout)
      throw TransportError(fmt::format("timeout or I/O failure talking to {}: {}", scheme_host_port_,
                                       httplib::to_string(err)));
    throw TransportError(fmt::format("request to {} failed: {}", scheme_host_port_,
                                     httplib::to_string(err)));
  }
  if (res->status == 429 || res->status >= 500)
    throw TransportError(fmt::format("server returned {}: {}", res->status, res->body));
  if (res->status != 200) {
    if (options_.logprobs_mode && mentions_logprobs(res->body))
      throw BackendFatal(fmt::format(
          "endpoint refused logprob scoring ({}): {}; set http_mode to \"generate\" to match "
          "completions instead",
          res->status, res->body));
    throw BackendFatal(fmt::format("server returned {}: {}", res->status, res->body));
  }
  return res->body;
}

LabelScores HttpBackend::score_labels(const PromptInstance& prompt) const {
  json prompts = json::array();
  for (const auto& label : prompt.label_space) prompts.push_back(prompt.text + label);
  const json request{{"model", options_.model}, {"prompt", prompts}, {"max_tokens", 0},
                     {"temperature", 0},        {"echo", true},      {"logprobs", 0}};
  json response;
  try {
    response = json::parse(post(request.dump()));
  } catch (const json::parse_error& e) {
    throw TransportError(fmt::format("unparseable completions response: {}", e.what()));
  }

  const auto prompt_len = prompt.text.size();
  LabelScores out{std::vector<double>(prompt.label_space.size(), 0.0), false};
  std::vector<bool> filled(out.scores.size(), false);
  try {
    for (const auto& choice : response.at("choices")) {
      const auto index = choice.value("index", std::size_t{0});
      if (index >= out.scores.size()) throw BackendFatal("completions response has an out-of-range choice index");
      const auto& lp = choice.at("logprobs");
      if (lp.is_null())
        throw BackendFatal(
            "endpoint returned no logprobs; set http_mode to \"generate\" to match completions instead");
      const auto& tokens = lp.at("tokens");
      const auto& token_lps = lp.at("token_logprobs");
      const auto& offsets = lp.at("text_offset");
      const auto full_len = prompt_len + prompt.label_space[index].size();
      double total = 0.0;
      bool any = false;
      for (std::size_t t = 0; t < tokens.size(); ++t) {
        const auto start = offsets.at(t).get<std::size_t>();
        const auto end = start + tokens[t].get<std::string>().size();
        // Tokens overlapping the appended label; generated tokens start past full_len.
        if (end <= prompt_len || start >= full_len) continue;
        if (token_lps.at(t).is_null()) throw BackendFatal("label token without a log-probability");
        total += token_lps[t].get<double>();
        any = true;
      }
      if (!any) throw BackendFatal("echoed tokens do not cover the appended label");
      out.scores[index] = total;
      filled[index] = true;
    }
  } catch (const json::exception& e) {
    throw BackendFatal(fmt::format("malformed completions response: {}", e.what()));
  }
  for (bool f : filled)
    if (!f) throw BackendFatal("completions response is missing a label continuation");
  return out;
}

std::string HttpBackend::generate_text(const PromptInstance& prompt) const {
  const json request{{"model", options_.model},
                     {"prompt", prompt.text},
                     {"max_tokens", options_.max_generation_tokens},
                     {"temperature", 0}};
  try {
    auto response = json::parse(post(request.dump()));
    return response.at("choices").at(0).at("text").get<std::string>();
  } catch (const json::parse_error& e) {
    throw TransportError(fmt::format("unparseable completions response: {}", e.what()));
  } catch (const json::exception& e) {
    throw BackendFatal(fmt::format("malformed completions response: {}", e.what()));
  }
}

}  // namespace iclc
