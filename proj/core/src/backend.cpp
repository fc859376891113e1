#include "weaklab/backend.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "weaklab/corpus.hpp"
#include "weaklab/error.hpp"

namespace weaklab {

namespace {

using json = nlohmann::json;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<double> read_number_array(const json& doc, const char* key, std::size_t expected,
                                      const std::string& what) {
  if (!doc.is_object() || !doc.contains(key) || !doc[key].is_array()) {
    throw BackendError(what + ": response lacks array '" + key + "'", false);
  }
  const auto& arr = doc[key];
  if (arr.size() != expected) {
    throw BackendError(what + ": expected " + std::to_string(expected) + " values, got " +
                           std::to_string(arr.size()),
                       false);
  }
  std::vector<double> out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_number()) throw BackendError(what + ": non-numeric value in '" + key + "'", false);
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace

MockSpec parse_mock_spec(std::string_view json_text, const std::string& source_name) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(source_name, 0, e.what());
  }
  if (!doc.is_object() || !doc.contains("classes") || !doc["classes"].is_array()) {
    throw ParseError(source_name, 0, "mock spec needs array 'classes'");
  }
  MockSpec spec;
  for (const auto& c : doc["classes"]) spec.classes.push_back(c.get<std::string>());
  auto class_index = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < spec.classes.size(); ++i) {
      if (spec.classes[i] == name) return i;
    }
    throw ParseError(source_name, 0, "unknown class '" + name + "'");
  };
  if (doc.contains("keywords")) {
    for (const auto& [keyword, scores] : doc["keywords"].items()) {
      std::vector<double> row(spec.classes.size(), 0.0);
      for (const auto& [cls, value] : scores.items()) row[class_index(cls)] = value.get<double>();
      auto tokens = normalize_text(keyword);
      if (tokens.size() != 1) throw ParseError(source_name, 0, "keyword '" + keyword + "' must be one token");
      spec.keywords[tokens.front()] = std::move(row);
    }
  }
  if (doc.contains("verbalizers")) {
    for (const auto& [token, cls] : doc["verbalizers"].items()) {
      auto tokens = normalize_text(token);
      if (tokens.size() != 1) throw ParseError(source_name, 0, "verbalizer '" + token + "' must be one token");
      spec.verbalizers[tokens.front()] = class_index(cls.get<std::string>());
    }
  }
  return spec;
}

MockSpec load_mock_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_mock_spec(buf.str(), path.string());
}

MockBackend::MockBackend(MockSpec spec, std::string mask_marker)
    : spec_(std::move(spec)), mask_marker_(std::move(mask_marker)) {}

std::vector<double> MockBackend::class_scores(std::string_view text) const {
  std::vector<double> scores(spec_.classes.size(), 0.0);
  for (const auto& token : normalize_text(text)) {
    auto it = spec_.keywords.find(token);
    if (it == spec_.keywords.end()) continue;
    for (std::size_t c = 0; c < scores.size(); ++c) scores[c] += it->second[c];
  }
  return scores;
}

std::vector<double> MockBackend::entail(const EntailmentQuery& query) const {
  auto scores = class_scores(query.premise);
  std::vector<double> out;
  out.reserve(query.hypotheses.size());
  for (const auto& hypothesis : query.hypotheses) {
    std::optional<std::size_t> cls;
    bool ambiguous = false;
    for (const auto& token : normalize_text(hypothesis)) {
      auto it = spec_.verbalizers.find(token);
      if (it == spec_.verbalizers.end()) continue;
      if (cls && *cls != it->second) ambiguous = true;
      cls = it->second;
    }
    out.push_back(cls && !ambiguous ? logistic(scores[*cls]) : 0.5);
  }
  return out;
}

std::vector<double> MockBackend::mask_fill(const MaskFillQuery& query) const {
  auto pos = query.text.find(mask_marker_);
  if (pos == std::string::npos) throw BackendError("mask_fill: text has no mask marker", false);
  auto scores = class_scores(std::string_view(query.text).substr(0, pos));
  std::vector<double> out;
  out.reserve(query.candidates.size());
  for (const auto& candidate : query.candidates) {
    auto tokens = normalize_text(candidate);
    auto it = tokens.size() == 1 ? spec_.verbalizers.find(tokens.front()) : spec_.verbalizers.end();
    if (it == spec_.verbalizers.end()) {
      throw BackendError("mask_fill: verbalizer '" + candidate + "' is not in the vocabulary", false);
    }
    out.push_back(scores[it->second]);
  }
  return out;
}

RemoteBackend::RemoteBackend(RemoteBackendConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty()) throw ValidationError("remote backend endpoint is empty");
}

std::string RemoteBackend::post(const std::string& path, const std::string& body) const {
  std::string last_error;
  auto backoff = config_.retry.initial_backoff;
  for (std::size_t attempt = 0; attempt <= config_.retry.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    // One client per call keeps concurrent callers independent.
    httplib::Client client(config_.endpoint);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    auto res = client.Post(path, body, "application/json");
    if (!res) {
      last_error = config_.endpoint + path + ": " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) return res->body;

    bool retryable = res->status >= 500 || res->status == 429;
    std::string message = "HTTP " + std::to_string(res->status);
    auto doc = json::parse(res->body, nullptr, false);
    if (doc.is_object()) {
      if (doc.contains("retryable") && doc["retryable"].is_boolean()) retryable = doc["retryable"].get<bool>();
      if (doc.contains("error") && doc["error"].is_string()) message += ": " + doc["error"].get<std::string>();
    }
    last_error = config_.endpoint + path + ": " + message;
    if (!retryable) throw BackendError(last_error, false);
  }
  throw BackendError(last_error + " (after " + std::to_string(config_.retry.max_retries + 1) + " attempts)",
                     true);
}

std::vector<double> RemoteBackend::entail(const EntailmentQuery& query) const {
  if (!config_.capabilities.entailment) throw BackendError("backend does not support entailment", false);
  json body = {{"premise", query.premise}, {"hypotheses", query.hypotheses}};
  auto doc = json::parse(post("/v1/entail", body.dump()), nullptr, false);
  if (doc.is_discarded()) throw BackendError("/v1/entail: response is not JSON", false);
  return read_number_array(doc, "scores", query.hypotheses.size(), "/v1/entail");
}

std::vector<double> RemoteBackend::mask_fill(const MaskFillQuery& query) const {
  if (!config_.capabilities.mask_fill) throw BackendError("backend does not support mask_fill", false);
  json body = {{"text", query.text}, {"mask_marker", config_.mask_marker}, {"candidates", query.candidates}};
  auto doc = json::parse(post("/v1/mask_fill", body.dump()), nullptr, false);
  if (doc.is_discarded()) throw BackendError("/v1/mask_fill: response is not JSON", false);
  return read_number_array(doc, "log_probs", query.candidates.size(), "/v1/mask_fill");
}

BackendResponse handle_backend_request(const LMBackend& backend, std::string_view path, std::string_view body) {
  auto error = [](int status, const std::string& message, bool retryable) {
    return BackendResponse{status, json{{"error", message}, {"retryable", retryable}}.dump()};
  };
  auto doc = json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) return error(400, "request body is not a JSON object", false);
  try {
    if (path == "/v1/entail") {
      if (!doc.contains("premise") || !doc.contains("hypotheses")) {
        return error(400, "expected {premise, hypotheses}", false);
      }
      EntailmentQuery q{doc["premise"].get<std::string>(), doc["hypotheses"].get<std::vector<std::string>>()};
      return {200, json{{"scores", backend.entail(q)}}.dump()};
    }
    if (path == "/v1/mask_fill") {
      if (!doc.contains("text") || !doc.contains("candidates")) {
        return error(400, "expected {text, mask_marker, candidates}", false);
      }
      MaskFillQuery q{doc["text"].get<std::string>(), doc["candidates"].get<std::vector<std::string>>()};
      return {200, json{{"log_probs", backend.mask_fill(q)}}.dump()};
    }
  } catch (const BackendError& e) {
    return error(e.transient() ? 503 : 422, e.what(), e.transient());
  } catch (const json::exception& e) {
    return error(400, e.what(), false);
  }
  return error(404, "unknown route " + std::string(path), false);
}

}  // namespace weaklab
