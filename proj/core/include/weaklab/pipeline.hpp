#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "weaklab/aggregate.hpp"
#include "weaklab/backend.hpp"
#include "weaklab/corpus.hpp"
#include "weaklab/error.hpp"
#include "weaklab/source.hpp"
#include "weaklab/trainer.hpp"

namespace weaklab {

// A downstream stage ran before the stage that produces its input.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

// Wraps a failure with the stage it happened in.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& cause)
      : Error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

enum class SourceKind { kLexicon, kFiller, kRepetition, kSoundex, kFluentDefault, kPrecomputed, kPrompt };

struct SourceConfig {
  std::string id;
  SourceKind kind = SourceKind::kLexicon;
  std::string group;  // report grouping, e.g. "rule" or "prompt"
  std::vector<std::filesystem::path> lexicons;
  double theta = 0.0;
  std::optional<std::filesystem::path> fillers;
  std::size_t max_ngram = 3;
  std::map<std::string, std::string> bindings;  // role -> class name
  std::optional<double> confidence;
  std::optional<std::filesystem::path> votes;
  std::vector<std::filesystem::path> templates;
  std::string separator = " ";
};

struct BackendConfig {
  enum class Kind { kNone, kMock, kRemote } kind = Kind::kNone;
  std::optional<std::filesystem::path> mock_spec;
  RemoteBackendConfig remote;
  std::string mask_marker;  // empty: backend default
};

struct AggregationConfig {
  enum class Mode { kMajority, kSoft, kSource, kBestValidSource } mode = Mode::kMajority;
  std::string source;
};

struct PipelineConfig {
  std::filesystem::path schema_path;
  std::filesystem::path train_path;
  std::optional<std::filesystem::path> valid_path;
  std::optional<std::filesystem::path> test_path;
  std::vector<SourceConfig> sources;
  BackendConfig backend;
  AggregationConfig aggregation;
  TrainConfig train;
  std::optional<std::filesystem::path> embeddings;
  std::size_t label_threads = 1;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
};

// Paths in the file resolve relative to its directory. WEAKLAB_BACKEND_ENDPOINT
// overrides the remote backend endpoint. Throws ValidationError/ParseError.
PipelineConfig load_config(const std::filesystem::path& path);
// Checks that every referenced file exists and every field is in range.
void validate_config(const PipelineConfig& config);
void set_seed(PipelineConfig& config, std::uint64_t seed);

// Instantiates the configured weak sources for `schema`.
std::vector<std::shared_ptr<const WeakSource>> build_sources(const PipelineConfig& config, const LabelSchema& schema,
                                                             std::vector<std::string>* warnings = nullptr);

// Stage names in execution order.
inline constexpr const char* kStages[] = {"label", "aggregate", "train", "eval", "report"};

// Output layout inside config.output_dir:
//   label      matrix_<split>.jsonl
//   aggregate  labels_train.jsonl, source_stats.json
//   train      params_init.bin, params.bin, train_report.json
//   eval       eval_report.json
//   report     summary.md
void run_stage(const std::string& stage, const PipelineConfig& config);

// All stages in order. On failure writes STALE (naming the stage) into the
// output directory and throws StageError.
void run_pipeline(const PipelineConfig& config);

}  // namespace weaklab
