#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "weaklab/corpus.hpp"

namespace weaklab {

// Sparse vector of (index, value) pairs sorted by index, all indices < dim.
struct FeatureVector {
  std::size_t dim = 0;
  std::vector<std::pair<std::uint32_t, double>> entries;

  double norm() const;
};

// Hashed unigram + adjacent-bigram counts in [0, dim), L2-normalized. Empty
// input gives the zero vector.
FeatureVector featurize(const TokenSequence& tokens, std::size_t dim);
std::size_t feature_index(std::string_view key, std::size_t dim);

// Wraps a dense embedding as-is.
FeatureVector dense_features(std::span<const double> values);

// `id<TAB>comma-separated reals`, all rows the same width.
std::unordered_map<std::string, FeatureVector> load_embeddings(const std::filesystem::path& path);

struct TrainConfig {
  std::size_t feature_dim = 1u << 16;
  std::size_t hidden = 64;
  double learning_rate = 0.1;
  std::size_t init_epochs = 30;
  std::size_t rounds = 10;                // self-training rounds
  std::size_t epochs_per_round = 1;
  double confidence_threshold = 0.7;      // xi
  double confidence_weight = 0.1;         // lambda_r, KL(uniform || p)
  double contrastive_weight = 0.1;        // lambda_c
  double margin = 1.0;                    // gamma
  double sharpen_temperature = 0.5;
  // Divide sharpened pseudo-labels by the soft class frequency over the
  // confident set before renormalizing, so a class the model is more sure of
  // cannot take over the confident set round after round.
  bool balance_pseudo_labels = true;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;

  // Throws ValidationError on out-of-range fields.
  void validate() const;
  // Stable hash over every field; stored in checkpoints.
  std::uint64_t hash() const;
};

// One-hidden-layer ReLU network with a softmax head.
// W1 is stored feature-major: w1[d * hidden + j] is the weight from input d
// to hidden unit j, so a sparse input touches contiguous rows.
struct ClassifierParams {
  std::size_t dim = 0;
  std::size_t hidden = 0;
  std::size_t classes = 0;
  std::vector<double> w1;
  std::vector<double> b1;
  std::vector<double> w2;  // classes x hidden, row-major
  std::vector<double> b2;

  static ClassifierParams zeros(std::size_t dim, std::size_t hidden, std::size_t classes);
  static ClassifierParams random(std::size_t dim, std::size_t hidden, std::size_t classes, std::uint64_t seed);

  std::size_t num_params() const { return w1.size() + b1.size() + w2.size() + b2.size(); }
  // Flat view over [w1 | b1 | w2 | b2].
  double& flat(std::size_t i);
  double flat(std::size_t i) const;

  // FNV-1a over the raw parameter bytes, hex encoded.
  std::string checksum() const;

  friend bool operator==(const ClassifierParams&, const ClassifierParams&) = default;
};

struct ForwardPass {
  std::vector<double> pre_hidden;
  std::vector<double> hidden;
  std::vector<double> logits;
  std::vector<double> proba;
};

ForwardPass forward(const ClassifierParams& params, const FeatureVector& x);
std::vector<double> predict_proba(const ClassifierParams& params, const FeatureVector& x);

// p^(1/T), renormalized.
std::vector<double> sharpen(std::span<const double> p, double temperature);

struct LossWeights {
  double confidence = 0.0;
  double contrastive = 0.0;
  double margin = 1.0;
};

struct TrainBatch {
  std::vector<const FeatureVector*> inputs;
  std::vector<std::vector<double>> targets;  // per-sample class distributions
};

// Sparse gradient: only W1 rows of features present in the batch.
struct Gradient {
  std::unordered_map<std::uint32_t, std::vector<double>> w1;
  std::vector<double> b1;
  std::vector<double> w2;
  std::vector<double> b2;

  double flat(const ClassifierParams& params, std::size_t i) const;
};

// Mean over the batch of CE(p, q) + w.confidence * KL(uniform || p), plus
// w.contrastive times the mean over in-batch pairs of the margin loss on
// hidden units (pairs grouped by argmax of the targets). Fills `grad` when
// non-null.
double batch_loss(const ClassifierParams& params, const TrainBatch& batch, const LossWeights& weights,
                  Gradient* grad = nullptr);

// Cross-entropy training on covered samples (targets present). Every class
// must own at least one covered sample.
// `final_loss`, when given, receives the mean batch loss of the last epoch.
ClassifierParams init_train(std::span<const FeatureVector> features,
                            std::span<const std::optional<std::vector<double>>> targets, std::size_t classes,
                            const TrainConfig& cfg, double* final_loss = nullptr);
ClassifierParams init_train(std::span<const FeatureVector> features,
                            std::span<const std::optional<std::size_t>> labels, std::size_t classes,
                            const TrainConfig& cfg, double* final_loss = nullptr);

struct RoundStats {
  std::size_t round = 0;
  std::size_t confident = 0;
  double mean_confidence = 0.0;  // mean max-probability over the confident set
  double train_loss = 0.0;       // mean batch loss over the round
};

struct TrainReport {
  double init_loss = 0.0;  // mean batch loss of the last init epoch
  std::vector<RoundStats> rounds;
  std::optional<std::size_t> stopped_at_round;  // set when a round had no confident samples
  std::string checksum;
};

std::pair<ClassifierParams, TrainReport> self_train(ClassifierParams params, std::span<const FeatureVector> features,
                                                    const TrainConfig& cfg);

// Samples whose max class probability reaches `threshold`.
std::vector<std::size_t> confident_set(const ClassifierParams& params, std::span<const FeatureVector> features,
                                       double threshold);

// Max relative error between analytic and central-difference gradients
// (step 1e-4) over `samples` randomly chosen parameters.
double grad_check(const ClassifierParams& params, const TrainBatch& batch, const LossWeights& weights,
                  std::uint64_t seed, std::size_t samples = 64);
// Loss weights and seed taken from the self-training config.
double grad_check(const ClassifierParams& params, const TrainBatch& batch, const TrainConfig& cfg);

void save_params(const std::filesystem::path& path, const ClassifierParams& params, const TrainConfig& cfg);
// Throws ValidationError if the stored config hash differs from cfg.hash().
ClassifierParams load_params(const std::filesystem::path& path, const TrainConfig& cfg);

}  // namespace weaklab
