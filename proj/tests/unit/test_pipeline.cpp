#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <nlohmann/json.hpp>
#include <sys/wait.h>

#include "test_support.hpp"
#include "weaklab/error.hpp"
#include "weaklab/pipeline.hpp"

using namespace weaklab;
using weaklab::testing::data_dir;
using weaklab::testing::read_file;
using weaklab::testing::TempDir;
using weaklab::testing::write_file;
namespace fs = std::filesystem;

namespace {

PipelineConfig fixture_config(const fs::path& out) {
  auto cfg = load_config(data_dir() / "fixture" / "pipeline.json");
  cfg.output_dir = out;
  return cfg;
}

const std::vector<std::string> kLabelOutputs = {"matrix_train.jsonl", "matrix_valid.jsonl", "matrix_test.jsonl",
                                                "labels_train.jsonl", "source_stats.json"};
const std::vector<std::string> kAllOutputs = {"matrix_train.jsonl", "matrix_valid.jsonl", "matrix_test.jsonl",
                                              "labels_train.jsonl", "source_stats.json",  "params_init.bin",
                                              "params.bin",         "train_report.json",  "eval_report.json",
                                              "summary.md"};

// A disfluency config written next to its data, rule sources only.
fs::path write_disfluency_config(const TempDir& dir) {
  write_file(dir / "train.jsonl",
             "{\"id\": \"d1\", \"text\": \"i uh went home\", \"gold\": \"disfluent\"}\n"
             "{\"id\": \"d2\", \"text\": \"i went home today\", \"gold\": \"fluent\"}\n"
             "{\"id\": \"d3\", \"text\": \"i i went home\", \"gold\": \"disfluent\"}\n"
             "{\"id\": \"d4\", \"text\": \"we saw the sea\", \"gold\": \"fluent\"}\n"
             "{\"id\": \"d5\", \"text\": \"i wan want tea\", \"gold\": \"disfluent\"}\n"
             "{\"id\": \"d6\", \"text\": \"she reads books daily\", \"gold\": \"fluent\"}\n");
  nlohmann::json cfg = {
      {"schema", (data_dir() / "schemas" / "disfluency.json").string()},
      {"data", {{"train", "train.jsonl"}}},
      {"sources",
       {{{"id", "filler"}, {"type", "filler"}, {"fillers", (data_dir() / "fillers.txt").string()}},
        {{"id", "repetition"}, {"type", "repetition"}, {"max_ngram", 2}},
        {{"id", "soundex"}, {"type", "soundex"}},
        {{"id", "fluent"}, {"type", "fluent_default"}}}},
      {"aggregation", {{"mode", "soft"}}},
      {"train", {{"feature_dim", 256}, {"hidden", 8}, {"init_epochs", 20}, {"rounds", 2}, {"batch_size", 2}}},
      {"output_dir", "out"},
      {"seed", 1}};
  write_file(dir / "pipeline.json", cfg.dump(2));
  return dir / "pipeline.json";
}

}  // namespace

TEST(Pipeline, FixtureRunsEndToEnd) {
  TempDir dir;
  auto cfg = fixture_config(dir.path());
  auto start = std::chrono::steady_clock::now();
  run_pipeline(cfg);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(secs, 10.0);
  for (const auto& f : kAllOutputs) EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_FALSE(fs::exists(dir / "STALE"));

  auto summary = read_file(dir / "summary.md");
  for (const char* row : {"| lexicon |", "| specific_nli |", "| majority vote |", "| WSM (init) |", "| WSM |",
                          "mean (prompt)"}) {
    EXPECT_NE(summary.find(row), std::string::npos) << row;
  }
  auto stats = nlohmann::json::parse(read_file(dir / "source_stats.json"));
  EXPECT_EQ(stats["splits"]["train"]["samples"], 40);
  auto eval = nlohmann::json::parse(read_file(dir / "eval_report.json"));
  EXPECT_GE(eval["test"]["wsm"]["macro_f1"].get<double>(), 0.9);
  EXPECT_DOUBLE_EQ(eval["test"]["sources"]["specific_nli"]["macro_f1"].get<double>(), 1.0);
}

TEST(Pipeline, SameSeedIsByteIdentical) {
  TempDir a, b;
  run_pipeline(fixture_config(a.path()));
  run_pipeline(fixture_config(b.path()));
  for (const auto& f : kAllOutputs) EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;
}

TEST(Pipeline, SeedChangesOnlyTrainerOutputs) {
  TempDir a, b;
  auto ca = fixture_config(a.path());
  auto cb = fixture_config(b.path());
  set_seed(cb, ca.seed + 1);
  run_pipeline(ca);
  run_pipeline(cb);
  for (const auto& f : kLabelOutputs) EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;
  EXPECT_NE(read_file(a / "params.bin"), read_file(b / "params.bin"));
}

TEST(Pipeline, StagesRunIndividually) {
  TempDir dir;
  auto cfg = fixture_config(dir.path());
  for (const char* stage : kStages) run_stage(stage, cfg);
  TempDir whole;
  run_pipeline(fixture_config(whole.path()));
  for (const auto& f : kAllOutputs) EXPECT_EQ(read_file(dir / f), read_file(whole / f)) << f;
  EXPECT_THROW(run_stage("nope", cfg), ValidationError);
}

TEST(Pipeline, MissingArtifactNamesProducingStage) {
  TempDir dir;
  auto cfg = fixture_config(dir.path());
  try {
    run_stage("train", cfg);
    FAIL() << "expected MissingArtifactError";
  } catch (const MissingArtifactError& e) {
    EXPECT_NE(std::string(e.what()).find("aggregate"), std::string::npos) << e.what();
  }
  EXPECT_TRUE(fs::exists(dir / "STALE"));
  EXPECT_NE(read_file(dir / "STALE").find("train"), std::string::npos);
  run_pipeline(cfg);
  EXPECT_FALSE(fs::exists(dir / "STALE"));
}

TEST(Pipeline, StageFailureMarksStaleUntilRerun) {
  TempDir dir;
  auto cfg = fixture_config(dir.path());
  run_stage("label", cfg);
  // An emptied matrix no longer matches the dataset.
  write_file(dir / "matrix_train.jsonl", "");
  EXPECT_THROW(run_stage("aggregate", cfg), Error);
  EXPECT_NE(read_file(dir / "STALE").find("aggregate"), std::string::npos);
  run_stage("label", cfg);
  run_stage("aggregate", cfg);
  EXPECT_FALSE(fs::exists(dir / "STALE"));
}

TEST(Pipeline, RunPipelineWrapsFailuresWithStage) {
  TempDir dir;
  auto cfg = fixture_config(dir.path());
  cfg.train.init_epochs = 1;
  cfg.train.feature_dim = 1;  // invalid: train stage must fail
  try {
    run_pipeline(cfg);
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "train");
  }
  EXPECT_NE(read_file(dir / "STALE").find("train"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "labels_train.jsonl"));
}

TEST(Pipeline, DisfluencyRuleSources) {
  TempDir dir;
  auto cfg = load_config(write_disfluency_config(dir));
  validate_config(cfg);
  run_pipeline(cfg);
  auto stats = nlohmann::json::parse(read_file(dir / "out" / "source_stats.json"));
  const auto& rows = stats["splits"]["train"]["sources"];
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0]["source"], "filler");
  EXPECT_EQ(rows[0]["covered"], 1);
  EXPECT_EQ(rows[1]["covered"], 1);
  EXPECT_EQ(rows[2]["covered"], 1);
  EXPECT_EQ(rows[3]["covered"], 3);
  EXPECT_DOUBLE_EQ(rows[3]["covered_macro_f1"].get<double>(), 0.5);  // fluent only: 0/0 on disfluent
  EXPECT_EQ(rows[4]["source"], "majority");
  EXPECT_EQ(rows[4]["group"], "aggregate");
  EXPECT_EQ(stats["training_labels"]["covered"], 6);
}

TEST(Config, ValidationErrors) {
  TempDir dir;
  auto base = nlohmann::json::parse(read_file(write_disfluency_config(dir)));
  auto check = [&](nlohmann::json doc, const std::string& needle) {
    write_file(dir / "bad.json", doc.dump());
    try {
      validate_config(load_config(dir / "bad.json"));
      ADD_FAILURE() << "expected ValidationError for " << needle;
    } catch (const ValidationError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  auto doc = base;
  doc["sources"][0]["fillers"] = "missing_fillers.txt";
  check(doc, "missing_fillers.txt");
  doc = base;
  doc["sources"][1]["id"] = "filler";
  check(doc, "filler");
  doc = base;
  doc["sources"][0]["id"] = "majority";
  check(doc, "majority");
  doc = base;
  doc["sources"][0]["type"] = "vader";
  check(doc, "vader");
  doc = base;
  doc["train"]["learning_rate"] = -1;
  check(doc, "learning_rate");
  doc = base;
  doc["sources"].push_back({{"id", "p"}, {"type", "prompt"},
                            {"templates", {(data_dir() / "prompts/disfluency/specific_nli.json").string()}}});
  check(doc, "backend");
  doc = base;
  doc["aggregation"] = {{"mode", "source"}, {"source", "nope"}};
  check(doc, "nope");
  doc = base;
  doc["sources"][0]["disfluent"] = "stutter";
  check(doc, "stutter");

  write_file(dir / "junk.json", "{ not json");
  EXPECT_THROW(load_config(dir / "junk.json"), Error);
}

TEST(Config, MissingLexiconIsValidationError) {
  TempDir dir;
  auto doc = nlohmann::json::parse(read_file(data_dir() / "fixture" / "pipeline.json"));
  doc["schema"] = (data_dir() / "schemas" / "sentiment.json").string();
  for (const char* split : {"train", "valid", "test"}) {
    doc["data"][split] = (data_dir() / "fixture" / doc["data"][split].get<std::string>()).string();
  }
  doc["backend"]["spec"] = (data_dir() / "fixture" / "mock_backend.json").string();
  doc["sources"] = {{{"id", "lexicon"}, {"type", "lexicon"}, {"lexicon", "absent.tsv"}}};
  write_file(dir / "c.json", doc.dump());
  auto cfg = load_config(dir / "c.json");
  EXPECT_THROW(validate_config(cfg), ValidationError);
}

TEST(Config, EndpointOverrideFromEnvironment) {
  TempDir dir;
  auto doc = nlohmann::json::parse(read_file(write_disfluency_config(dir)));
  doc["backend"] = {{"kind", "remote"}, {"endpoint", "http://configured:1"}};
  write_file(dir / "remote.json", doc.dump());
  EXPECT_EQ(load_config(dir / "remote.json").backend.remote.endpoint, "http://configured:1");
  ::setenv("WEAKLAB_BACKEND_ENDPOINT", "http://override:2", 1);
  auto cfg = load_config(dir / "remote.json");
  ::unsetenv("WEAKLAB_BACKEND_ENDPOINT");
  EXPECT_EQ(cfg.backend.remote.endpoint, "http://override:2");
}

#ifdef WEAKLAB_CLI_PATH
namespace {

int run_cli(const std::string& args) {
  std::string cmd = std::string("\"") + WEAKLAB_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, ExitCodes) {
  TempDir dir;
  auto fixture = (data_dir() / "fixture" / "pipeline.json").string();
  EXPECT_EQ(run_cli("validate -c " + fixture), 0);
  EXPECT_EQ(run_cli("run -c " + fixture + " -o " + (dir / "out").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "summary.md"));
  EXPECT_EQ(run_cli("report -c " + fixture + " -o " + (dir / "out").string()), 0);

  // Validation problems exit 1.
  EXPECT_EQ(run_cli("label -c " + (dir / "absent.json").string()), 1);
  write_file(dir / "junk.json", "{");
  EXPECT_EQ(run_cli("label -c " + (dir / "junk.json").string()), 1);
  EXPECT_EQ(run_cli("bogus"), 1);

  // Missing upstream artifacts are a runtime failure.
  EXPECT_EQ(run_cli("train -c " + fixture + " -o " + (dir / "empty").string()), 2);
}
#endif
