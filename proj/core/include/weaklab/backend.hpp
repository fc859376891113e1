#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace weaklab {

struct BackendCapabilities {
  bool entailment = false;
  bool mask_fill = false;
};

struct EntailmentQuery {
  std::string premise;
  std::vector<std::string> hypotheses;
};

struct MaskFillQuery {
  std::string text;  // contains exactly one mask marker
  std::vector<std::string> candidates;
};

// Scores premise/hypothesis pairs and mask-fill candidates. Implementations
// must be deterministic for fixed inputs and safe for concurrent calls.
// Failures are reported as BackendError.
class LMBackend {
 public:
  virtual ~LMBackend() = default;

  virtual BackendCapabilities capabilities() const = 0;
  virtual std::string mask_marker() const = 0;

  // One entailment probability in [0, 1] per hypothesis, same order.
  virtual std::vector<double> entail(const EntailmentQuery& query) const = 0;
  // One finite log-probability per candidate, same order.
  virtual std::vector<double> mask_fill(const MaskFillQuery& query) const = 0;
};

// Keyword table for the deterministic test double.
//   entail: score(h) = logistic(sum of premise keyword scores for h's class),
//           where h's class is the one whose verbalizer appears in h.
//   mask_fill: log p(v) = sum of keyword scores for v's class over the text
//           preceding the mask marker.
struct MockSpec {
  std::vector<std::string> classes;
  std::unordered_map<std::string, std::vector<double>> keywords;  // keyword -> per-class score
  std::unordered_map<std::string, std::size_t> verbalizers;       // token -> class
};

// {"classes": [...], "keywords": {kw: {class: score}}, "verbalizers": {token: class}}
MockSpec load_mock_spec(const std::filesystem::path& path);
MockSpec parse_mock_spec(std::string_view json_text, const std::string& source_name = "<mock>");

class MockBackend final : public LMBackend {
 public:
  explicit MockBackend(MockSpec spec, std::string mask_marker = "<MASK>");

  BackendCapabilities capabilities() const override { return {true, true}; }
  std::string mask_marker() const override { return mask_marker_; }
  std::vector<double> entail(const EntailmentQuery& query) const override;
  std::vector<double> mask_fill(const MaskFillQuery& query) const override;

  const MockSpec& spec() const { return spec_; }

 private:
  std::vector<double> class_scores(std::string_view text) const;

  MockSpec spec_;
  std::string mask_marker_;
};

struct RetryPolicy {
  std::size_t max_retries = 3;
  std::chrono::milliseconds initial_backoff{100};
};

struct RemoteBackendConfig {
  std::string endpoint;  // e.g. "http://localhost:8080"
  std::chrono::milliseconds timeout{30000};
  RetryPolicy retry;
  std::string mask_marker = "<mask>";
  BackendCapabilities capabilities{true, true};
};

// HTTP/JSON client:
//   POST /v1/entail    {premise, hypotheses}             -> {scores}
//   POST /v1/mask_fill {text, mask_marker, candidates}   -> {log_probs}
// Non-2xx bodies may carry {"error": ..., "retryable": bool}; 5xx and
// connection failures default to retryable. Transient failures are retried
// with exponential backoff.
class RemoteBackend final : public LMBackend {
 public:
  explicit RemoteBackend(RemoteBackendConfig config);

  BackendCapabilities capabilities() const override { return config_.capabilities; }
  std::string mask_marker() const override { return config_.mask_marker; }
  std::vector<double> entail(const EntailmentQuery& query) const override;
  std::vector<double> mask_fill(const MaskFillQuery& query) const override;

 private:
  std::string post(const std::string& path, const std::string& body) const;

  RemoteBackendConfig config_;
};

// Routes handled by a backend server, exposed so tools and tests can serve
// any LMBackend over the wire protocol. Returns {status, body}.
struct BackendResponse {
  int status = 200;
  std::string body;
};
BackendResponse handle_backend_request(const LMBackend& backend, std::string_view path,
                                       std::string_view body);

}  // namespace weaklab
