#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "weaklab/aggregate.hpp"
#include "weaklab/rule_sources.hpp"
#include "weaklab/trainer.hpp"

using namespace weaklab;

namespace {

std::vector<TokenSequence> random_sentences(std::size_t n, std::size_t len, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<TokenSequence> out(n);
  for (auto& s : out) {
    for (std::size_t k = 0; k < len; ++k) s.push_back("w" + std::to_string(rng() % 500));
  }
  return out;
}

void BM_Soundex(benchmark::State& state) {
  const std::vector<std::string> words = {"washington", "lukasiewicz", "tymczak", "honeyman", "robert", "a"};
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(soundex(words[i++ % words.size()]));
}
BENCHMARK(BM_Soundex);

void BM_RepetitionLabel(benchmark::State& state) {
  auto sentences = random_sentences(256, static_cast<std::size_t>(state.range(0)), 1);
  ClassBindings b{std::nullopt, std::nullopt, 0, 1};
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(repetition_label(sentences[i++ % sentences.size()], 3, b));
}
BENCHMARK(BM_RepetitionLabel)->Arg(10)->Arg(50);

void BM_Featurize(benchmark::State& state) {
  auto sentences = random_sentences(256, static_cast<std::size_t>(state.range(0)), 2);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(featurize(sentences[i++ % sentences.size()], 1 << 16));
}
BENCHMARK(BM_Featurize)->Arg(10)->Arg(50);

void BM_MajorityVote(benchmark::State& state) {
  LabelSchema schema("t", {"a", "b", "c"});
  std::mt19937_64 rng(3);
  std::vector<std::vector<LabelVote>> rows(256);
  for (auto& r : rows) {
    for (int j = 0; j < state.range(0); ++j) {
      r.push_back(rng() % 4 ? LabelVote::vote("s", rng() % 3, 0.5) : LabelVote::abstain("s"));
    }
  }
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(majority_vote(rows[i++ % rows.size()], schema));
}
BENCHMARK(BM_MajorityVote)->Arg(4)->Arg(16);

void BM_PredictProba(benchmark::State& state) {
  auto params = ClassifierParams::random(1 << 16, static_cast<std::size_t>(state.range(0)), 2, 4);
  auto x = featurize(random_sentences(1, 20, 4)[0], 1 << 16);
  for (auto _ : state) benchmark::DoNotOptimize(predict_proba(params, x));
}
BENCHMARK(BM_PredictProba)->Arg(64)->Arg(256);

void BM_SelfTrainRound(benchmark::State& state) {
  TrainConfig cfg;
  cfg.feature_dim = 1 << 14;
  cfg.rounds = 1;
  cfg.confidence_threshold = 0.0;
  std::vector<FeatureVector> xs;
  for (const auto& s : random_sentences(static_cast<std::size_t>(state.range(0)), 12, 5)) {
    xs.push_back(featurize(s, cfg.feature_dim));
  }
  auto params = ClassifierParams::random(cfg.feature_dim, cfg.hidden, 2, 5);
  for (auto _ : state) benchmark::DoNotOptimize(self_train(params, xs, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SelfTrainRound)->Arg(500)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
