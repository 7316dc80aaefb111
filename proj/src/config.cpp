#include "iclc/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "iclc/error.hpp"
#include "iclc/model_client.hpp"
#include "iclc/rng.hpp"

namespace iclc {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::set<std::string> kKnownKeys{
    "task",        "datasets",    "templates",  "factors",   "n_eval",       "seed",
    "backend",     "factor_backends", "model",  "timeout_s", "http_mode",    "api_key",
    "parallelism", "calibration", "cf_inputs",  "output_dir", "mode",        "probe_setup",
    "hp_templates"};

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

template <typename T>
T get_or(const json& doc, const char* key, T fallback) {
  if (!doc.contains(key)) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(fmt::format("config field '{}' has the wrong type", key));
  }
}

std::string require_string(const json& doc, const char* key, std::string_view where) {
  if (!doc.contains(key) || !doc.at(key).is_string())
    throw ConfigError(fmt::format("{}: missing string field '{}'", where, key));
  return doc.at(key).get<std::string>();
}

fs::path require_file(const json& doc, const char* key, const fs::path& base) {
  auto path = resolve(base, require_string(doc, key, "datasets"));
  if (!fs::is_regular_file(path))
    throw ConfigError(fmt::format("datasets.{}: file '{}' does not exist", key, path.string()));
  return path;
}

}  // namespace

std::string_view to_string(RunMode mode) {
  return mode == RunMode::Probe ? "probe" : "factorial";
}

std::string interpolate_env(std::string_view text) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto open = text.find("${", i);
    if (open == std::string_view::npos) break;
    const auto close = text.find('}', open + 2);
    if (close == std::string_view::npos) break;
    out.append(text.substr(i, open - i));
    const std::string name(text.substr(open + 2, close - open - 2));
    if (const char* value = std::getenv(name.c_str())) out += value;
    i = close + 1;
  }
  out.append(text.substr(i));
  return out;
}

RunConfig parse_config(std::string_view text, const fs::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("config is not valid JSON: {}", e.what()));
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : doc.items())
    if (!kKnownKeys.count(key)) throw ConfigError(fmt::format("unknown config field '{}'", key));

  RunConfig c;
  c.source_text = std::string(text);
  c.config_hash = fmt::format("{:016x}", StableHash().add(text).digest());

  try {
    c.task = parse_task(require_string(doc, "task", "config"));
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  if (c.task == Task::QQP) throw ConfigError("qqp can only serve as the cross-task source");

  if (!doc.contains("datasets") || !doc["datasets"].is_object())
    throw ConfigError("config: missing object 'datasets'");
  const auto& ds = doc["datasets"];
  for (const auto& [key, _] : ds.items())
    if (key != "validation" && key != "train" && key != "qqp_train")
      throw ConfigError(fmt::format("unknown datasets field '{}'", key));
  c.datasets.validation = require_file(ds, "validation", base_dir);
  c.datasets.train = require_file(ds, "train", base_dir);
  if (ds.contains("qqp_train")) c.datasets.qqp_train = require_file(ds, "qqp_train", base_dir);

  const auto templates = get_or<std::string>(doc, "templates", "bundled");
  if (templates != "bundled") {
    c.template_dir = resolve(base_dir, templates);
    if (!fs::is_directory(*c.template_dir))
      throw ConfigError(fmt::format("template directory '{}' does not exist", c.template_dir->string()));
  }

  if (doc.contains("factors")) {
    const auto& f = doc["factors"];
    if (!f.is_object()) throw ConfigError("'factors' must be an object");
    for (const auto& [key, _] : f.items())
      if (key != "exclusion_rule" && key != "custom")
        throw ConfigError(fmt::format("unknown factors field '{}'", key));
    if (f.contains("exclusion_rule")) {
      try {
        c.exclusion_rule = parse_exclusion_rule(get_or<std::string>(f, "exclusion_rule", ""));
      } catch (const ValidationError& e) {
        throw ConfigError(e.what());
      }
    }
    if (f.contains("custom")) {
      if (!f["custom"].is_array()) throw ConfigError("'factors.custom' must be an array");
      for (const auto& item : f["custom"]) c.custom_factors.push_back(factor_from_json(item, SIZE_MAX));
    }
  }

  const auto n_eval = get_or<long long>(doc, "n_eval", 600);
  if (n_eval <= 0) throw ConfigError("n_eval must be positive");
  c.n_eval = static_cast<std::size_t>(n_eval);
  c.seed = get_or<std::uint64_t>(doc, "seed", 0);

  c.backend = get_or<std::string>(doc, "backend", c.backend);
  c.model = get_or<std::string>(doc, "model", "");
  c.timeout_s = get_or<double>(doc, "timeout_s", 30.0);
  if (!(c.timeout_s > 0.0)) throw ConfigError("timeout_s must be positive");
  const auto mode = get_or<std::string>(doc, "http_mode", "logprobs");
  if (mode != "logprobs" && mode != "generate")
    throw ConfigError(fmt::format("http_mode must be 'logprobs' or 'generate', got '{}'", mode));
  c.logprobs_mode = mode == "logprobs";

  if (doc.contains("api_key")) {
    c.api_key = interpolate_env(get_or<std::string>(doc, "api_key", ""));
  } else if (const char* env = std::getenv(std::string(kApiKeyEnv).c_str())) {
    c.api_key = env;
  }

  // Construct each backend once so URI mistakes surface before any work.
  auto check_backend = [](const std::string& uri) {
    try {
      (void)make_backend(uri, nullptr);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(fmt::format("backend '{}': {}", uri, e.what()));
    }
  };
  check_backend(c.backend);
  if (doc.contains("factor_backends")) {
    const auto& fb = doc["factor_backends"];
    if (!fb.is_object()) throw ConfigError("'factor_backends' must be an object");
    for (const auto& [name, uris] : fb.items()) {
      if (!uris.is_array() || uris.size() != 2)
        throw ConfigError(fmt::format("factor_backends.{} must list two backend URIs", name));
      std::vector<std::string> list;
      for (const auto& u : uris) {
        if (!u.is_string()) throw ConfigError(fmt::format("factor_backends.{} entries must be strings", name));
        check_backend(u.get<std::string>());
        list.push_back(u.get<std::string>());
      }
      c.factor_backends[name] = std::move(list);
    }
  }

  const auto par = get_or<long long>(doc, "parallelism", 8);
  if (par < 1) throw ConfigError("parallelism must be at least 1");
  c.parallelism = static_cast<std::size_t>(par);
  c.calibration = get_or<bool>(doc, "calibration", false);
  if (doc.contains("cf_inputs")) {
    c.cf_inputs = get_or<std::vector<std::string>>(doc, "cf_inputs", {});
    if (c.cf_inputs.empty()) throw ConfigError("cf_inputs must not be empty");
  }

  c.output_dir = resolve(base_dir, require_string(doc, "output_dir", "config"));

  const auto run_mode = get_or<std::string>(doc, "mode", "factorial");
  if (run_mode == "factorial") {
    c.mode = RunMode::Factorial;
  } else if (run_mode == "probe") {
    c.mode = RunMode::Probe;
  } else {
    throw ConfigError(fmt::format("mode must be 'factorial' or 'probe', got '{}'", run_mode));
  }
  if (doc.contains("probe_setup")) c.probe_setup = get_or<std::string>(doc, "probe_setup", "");

  if (doc.contains("hp_templates")) {
    const auto& h = doc["hp_templates"];
    if (!h.is_object()) throw ConfigError("'hp_templates' must be an object");
    for (const auto& [key, value] : h.items()) {
      if (!value.is_string()) throw ConfigError(fmt::format("hp_templates.{} must be a string", key));
      auto name = value.get<std::string>();
      if (key == "low_default") c.hp_templates.low_default = name;
      else if (key == "low_alternate") c.hp_templates.low_alternate = name;
      else if (key == "high_default") c.hp_templates.high_default = name;
      else if (key == "high_alternate") c.hp_templates.high_alternate = name;
      else throw ConfigError(fmt::format("unknown hp_templates field '{}'", key));
    }
  }

  // Factor-level checks need the assembled set.
  const auto factors = build_factor_set(c);
  for (const auto& [name, _] : c.factor_backends) {
    const auto idx = factors.index_of(name);
    if (!idx) throw ConfigError(fmt::format("factor_backends names unknown factor '{}'", name));
    if (factors[*idx].realization != Realization::Annotation)
      throw ConfigError(fmt::format("factor_backends.{}: only annotation factors select backends", name));
  }
  if (c.probe_setup) {
    try {
      (void)decode_setup_id(*c.probe_setup, factors);
    } catch (const Error& e) {
      throw ConfigError(fmt::format("probe_setup: {}", e.what()));
    }
  }
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot read config '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  auto base = path.parent_path();
  if (base.empty()) base = ".";
  return parse_config(buf.str(), base);
}

FactorSet build_factor_set(const RunConfig& config) {
  try {
    auto set = default_factor_set(config.task, config.exclusion_rule);
    auto custom = config.custom_factors;
    for (auto& f : custom) {
      if (f.realization == Realization::Builtin)
        throw ConfigError(fmt::format("custom factor '{}' must be 'annotation' or 'prefix'", f.name));
    }
    // Unpositioned factors keep their listed order after the positioned ones.
    std::stable_sort(custom.begin(), custom.end(),
                     [](const Factor& a, const Factor& b) { return a.position < b.position; });
    for (auto& f : custom) {
      if (f.position == SIZE_MAX) f.position = set.size();
      set = register_custom_factor(set, std::move(f));
    }
    return set;
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(fmt::format("factors: {}", e.what()));
  }
}

}  // namespace iclc
