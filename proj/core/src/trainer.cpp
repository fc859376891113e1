#include "weaklab/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "weaklab/error.hpp"

namespace weaklab {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;
constexpr char kCheckpointMagic[8] = {'W', 'K', 'L', 'B', 'P', 'R', 'M', 'S'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = kFnvOffset) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= kFnvPrime;
  }
  return h;
}

template <typename T>
std::uint64_t fnv1a_value(const T& value, std::uint64_t h) {
  return fnv1a(&value, sizeof(T), h);
}

// Uniform in [0, 1) from the top 53 bits; mt19937_64 output is fixed by the
// standard, so this is reproducible across standard libraries.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

std::size_t target_argmax(const std::vector<double>& q) {
  return static_cast<std::size_t>(std::max_element(q.begin(), q.end()) - q.begin());
}

void apply(ClassifierParams& params, const Gradient& grad, double lr) {
  const std::size_t h = params.hidden;
  for (const auto& [d, g] : grad.w1) {
    double* row = params.w1.data() + static_cast<std::size_t>(d) * h;
    for (std::size_t j = 0; j < h; ++j) row[j] -= lr * g[j];
  }
  for (std::size_t j = 0; j < params.b1.size(); ++j) params.b1[j] -= lr * grad.b1[j];
  for (std::size_t k = 0; k < params.w2.size(); ++k) params.w2[k] -= lr * grad.w2[k];
  for (std::size_t c = 0; c < params.b2.size(); ++c) params.b2[c] -= lr * grad.b2[c];
}

// One pass over `order` in mini-batches; returns the mean batch loss.
double run_epoch(ClassifierParams& params, std::span<const FeatureVector> features,
                 const std::vector<std::vector<double>>& targets, const std::vector<std::size_t>& order,
                 const LossWeights& weights, const TrainConfig& cfg, const char* phase, std::size_t epoch) {
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    std::size_t end = std::min(order.size(), start + cfg.batch_size);
    TrainBatch batch;
    for (std::size_t k = start; k < end; ++k) {
      batch.inputs.push_back(&features[order[k]]);
      batch.targets.push_back(targets[order[k]]);
    }
    Gradient grad;
    double loss = batch_loss(params, batch, weights, &grad);
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << phase << " diverged: non-finite loss at epoch " << epoch << ", batch " << batches
          << " (learning rate " << cfg.learning_rate << ")";
      throw TrainError(msg.str());
    }
    apply(params, grad, cfg.learning_rate);
    total += loss;
    ++batches;
  }
  return batches ? total / static_cast<double>(batches) : 0.0;
}

}  // namespace

double FeatureVector::norm() const {
  double s = 0.0;
  for (const auto& [i, v] : entries) s += v * v;
  return std::sqrt(s);
}

std::size_t feature_index(std::string_view key, std::size_t dim) {
  return static_cast<std::size_t>(fnv1a(key.data(), key.size()) % dim);
}

FeatureVector featurize(const TokenSequence& tokens, std::size_t dim) {
  if (dim < 2) throw ValidationError("feature dimension must be >= 2");
  std::map<std::uint32_t, double> counts;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    counts[static_cast<std::uint32_t>(feature_index(tokens[i], dim))] += 1.0;
    // Tokens never contain spaces, so bigram keys cannot collide with unigram keys.
    if (i + 1 < tokens.size()) {
      counts[static_cast<std::uint32_t>(feature_index(tokens[i] + " " + tokens[i + 1], dim))] += 1.0;
    }
  }
  FeatureVector x{dim, {counts.begin(), counts.end()}};
  double n = x.norm();
  if (n > 0.0) {
    for (auto& [i, v] : x.entries) v /= n;
  }
  return x;
}

FeatureVector dense_features(std::span<const double> values) {
  FeatureVector x{values.size(), {}};
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] != 0.0) x.entries.emplace_back(static_cast<std::uint32_t>(i), values[i]);
  }
  return x;
}

std::unordered_map<std::string, FeatureVector> load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::unordered_map<std::string, FeatureVector> out;
  std::optional<std::size_t> width;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) throw ParseError(path.string(), line_no, "expected id<TAB>values");
    std::vector<double> values;
    std::stringstream ss(line.substr(tab + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
      std::size_t consumed = 0;
      double v = 0.0;
      try {
        v = std::stod(item, &consumed);
      } catch (const std::exception&) {
        consumed = 0;
      }
      if (consumed == 0 || !std::isfinite(v)) throw ParseError(path.string(), line_no, "bad value '" + item + "'");
      values.push_back(v);
    }
    if (values.size() < 2) throw ParseError(path.string(), line_no, "embedding needs at least 2 values");
    if (width && *width != values.size()) throw ParseError(path.string(), line_no, "embedding width changes");
    width = values.size();
    if (!out.emplace(line.substr(0, tab), dense_features(values)).second) {
      throw ParseError(path.string(), line_no, "duplicate id");
    }
  }
  return out;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ValidationError("train config: " + what); };
  if (feature_dim < 2) fail("feature_dim must be >= 2");
  if (feature_dim > (std::size_t{1} << 31)) fail("feature_dim too large");
  if (hidden < 1) fail("hidden must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be > 0");
  if (epochs_per_round < 1) fail("epochs_per_round must be >= 1");
  if (!(confidence_threshold >= 0.0 && confidence_threshold <= 1.0)) fail("confidence_threshold must be in [0, 1]");
  if (!(confidence_weight >= 0.0)) fail("confidence_weight must be >= 0");
  if (!(contrastive_weight >= 0.0)) fail("contrastive_weight must be >= 0");
  if (!(margin > 0.0)) fail("margin must be > 0");
  if (!(sharpen_temperature > 0.0)) fail("sharpen_temperature must be > 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
}

std::uint64_t TrainConfig::hash() const {
  std::uint64_t h = kFnvOffset;
  for (std::size_t v : {feature_dim, hidden, init_epochs, rounds, epochs_per_round, batch_size}) {
    h = fnv1a_value(static_cast<std::uint64_t>(v), h);
  }
  for (double v : {learning_rate, confidence_threshold, confidence_weight, contrastive_weight, margin,
                   sharpen_temperature}) {
    h = fnv1a_value(std::bit_cast<std::uint64_t>(v), h);
  }
  h = fnv1a_value(balance_pseudo_labels ? 1u : 0u, h);
  return fnv1a_value(seed, h);
}

ClassifierParams ClassifierParams::zeros(std::size_t dim, std::size_t hidden, std::size_t classes) {
  ClassifierParams p;
  p.dim = dim;
  p.hidden = hidden;
  p.classes = classes;
  p.w1.assign(dim * hidden, 0.0);
  p.b1.assign(hidden, 0.0);
  p.w2.assign(classes * hidden, 0.0);
  p.b2.assign(classes, 0.0);
  return p;
}

ClassifierParams ClassifierParams::random(std::size_t dim, std::size_t hidden, std::size_t classes,
                                          std::uint64_t seed) {
  auto p = zeros(dim, hidden, classes);
  std::mt19937_64 rng(seed);
  // Small first layer: shared features must outgrow per-sample ones early.
  const double a1 = 0.1;
  const double a2 = std::sqrt(6.0 / static_cast<double>(hidden + classes));
  for (auto& w : p.w1) w = (2.0 * uniform01(rng) - 1.0) * a1;
  for (auto& b : p.b1) b = 0.1;
  for (auto& w : p.w2) w = (2.0 * uniform01(rng) - 1.0) * a2;
  return p;
}

double& ClassifierParams::flat(std::size_t i) {
  if (i < w1.size()) return w1[i];
  i -= w1.size();
  if (i < b1.size()) return b1[i];
  i -= b1.size();
  if (i < w2.size()) return w2[i];
  return b2.at(i - w2.size());
}

double ClassifierParams::flat(std::size_t i) const { return const_cast<ClassifierParams&>(*this).flat(i); }

std::string ClassifierParams::checksum() const {
  std::uint64_t h = kFnvOffset;
  for (const auto* block : {&w1, &b1, &w2, &b2}) h = fnv1a(block->data(), block->size() * sizeof(double), h);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double Gradient::flat(const ClassifierParams& params, std::size_t i) const {
  if (i < params.w1.size()) {
    auto it = w1.find(static_cast<std::uint32_t>(i / params.hidden));
    return it == w1.end() ? 0.0 : it->second[i % params.hidden];
  }
  i -= params.w1.size();
  if (i < b1.size()) return b1[i];
  i -= b1.size();
  if (i < w2.size()) return w2[i];
  return b2.at(i - w2.size());
}

ForwardPass forward(const ClassifierParams& params, const FeatureVector& x) {
  if (x.dim != params.dim) {
    throw ValidationError("feature dimension " + std::to_string(x.dim) + " does not match model input " +
                          std::to_string(params.dim));
  }
  const std::size_t h = params.hidden;
  ForwardPass f;
  f.pre_hidden = params.b1;
  for (const auto& [d, v] : x.entries) {
    const double* row = params.w1.data() + static_cast<std::size_t>(d) * h;
    for (std::size_t j = 0; j < h; ++j) f.pre_hidden[j] += v * row[j];
  }
  f.hidden.resize(h);
  for (std::size_t j = 0; j < h; ++j) f.hidden[j] = std::max(0.0, f.pre_hidden[j]);
  f.logits = params.b2;
  for (std::size_t c = 0; c < params.classes; ++c) {
    const double* row = params.w2.data() + c * h;
    for (std::size_t j = 0; j < h; ++j) f.logits[c] += row[j] * f.hidden[j];
  }
  double m = *std::max_element(f.logits.begin(), f.logits.end());
  f.proba.resize(params.classes);
  double z = 0.0;
  for (std::size_t c = 0; c < params.classes; ++c) z += (f.proba[c] = std::exp(f.logits[c] - m));
  for (auto& p : f.proba) p /= z;
  return f;
}

std::vector<double> predict_proba(const ClassifierParams& params, const FeatureVector& x) {
  return forward(params, x).proba;
}

std::vector<double> sharpen(std::span<const double> p, double temperature) {
  // Work in log space so small probabilities do not underflow before normalizing.
  std::vector<double> out(p.size());
  double m = -INFINITY;
  for (std::size_t c = 0; c < p.size(); ++c) {
    out[c] = p[c] > 0.0 ? std::log(p[c]) / temperature : -INFINITY;
    m = std::max(m, out[c]);
  }
  double z = 0.0;
  for (auto& v : out) z += (v = std::exp(v - m));
  for (auto& v : out) v /= z;
  return out;
}

double batch_loss(const ClassifierParams& params, const TrainBatch& batch, const LossWeights& weights,
                  Gradient* grad) {
  const std::size_t n = batch.inputs.size();
  if (n == 0) throw ValidationError("empty batch");
  if (batch.targets.size() != n) throw ValidationError("batch targets do not match inputs");
  const std::size_t h = params.hidden;
  const std::size_t k = params.classes;
  const double inv_n = 1.0 / static_cast<double>(n);
  const double inv_k = 1.0 / static_cast<double>(k);

  std::vector<ForwardPass> passes;
  passes.reserve(n);
  for (const auto* x : batch.inputs) passes.push_back(forward(params, *x));

  double loss = 0.0;
  std::vector<std::vector<double>> d_logits(n, std::vector<double>(k));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& q = batch.targets[i];
    if (q.size() != k) throw ValidationError("target width does not match class count");
    const auto& f = passes[i];
    double m = *std::max_element(f.logits.begin(), f.logits.end());
    double lse = 0.0;
    for (double z : f.logits) lse += std::exp(z - m);
    lse = m + std::log(lse);
    double ce = 0.0;
    double kl = -std::log(static_cast<double>(k));
    for (std::size_t c = 0; c < k; ++c) {
      double log_p = f.logits[c] - lse;
      ce -= q[c] * log_p;
      kl -= inv_k * log_p;
      d_logits[i][c] = inv_n * ((f.proba[c] - q[c]) + weights.confidence * (f.proba[c] - inv_k));
    }
    loss += inv_n * (ce + weights.confidence * kl);
  }

  std::vector<std::vector<double>> d_hidden(n, std::vector<double>(h, 0.0));
  if (weights.contrastive > 0.0 && n > 1) {
    const double scale = weights.contrastive / static_cast<double>(n * (n - 1) / 2);
    std::vector<std::size_t> hard(n);
    for (std::size_t i = 0; i < n; ++i) hard[i] = target_argmax(batch.targets[i]);
    std::vector<double> diff(h);
    double pair_loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        double d2 = 0.0;
        for (std::size_t u = 0; u < h; ++u) {
          diff[u] = passes[i].hidden[u] - passes[j].hidden[u];
          d2 += diff[u] * diff[u];
        }
        double coef = 0.0;  // d(pair loss)/d(h_i) = coef * diff
        if (hard[i] == hard[j]) {
          pair_loss += d2;
          coef = 2.0;
        } else {
          double d = std::sqrt(d2);
          if (d < weights.margin) {
            pair_loss += (weights.margin - d) * (weights.margin - d);
            coef = d > 0.0 ? -2.0 * (weights.margin - d) / d : 0.0;
          }
        }
        if (coef != 0.0) {
          for (std::size_t u = 0; u < h; ++u) {
            d_hidden[i][u] += scale * coef * diff[u];
            d_hidden[j][u] -= scale * coef * diff[u];
          }
        }
      }
    }
    loss += scale * pair_loss;
  }

  if (!grad) return loss;
  grad->w1.clear();
  grad->b1.assign(h, 0.0);
  grad->w2.assign(k * h, 0.0);
  grad->b2.assign(k, 0.0);
  std::vector<double> d_pre(h);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = passes[i];
    for (std::size_t c = 0; c < k; ++c) {
      const double g = d_logits[i][c];
      grad->b2[c] += g;
      double* w2_row = grad->w2.data() + c * h;
      const double* p_row = params.w2.data() + c * h;
      for (std::size_t u = 0; u < h; ++u) {
        w2_row[u] += g * f.hidden[u];
        d_hidden[i][u] += g * p_row[u];
      }
    }
    for (std::size_t u = 0; u < h; ++u) {
      d_pre[u] = f.pre_hidden[u] > 0.0 ? d_hidden[i][u] : 0.0;
      grad->b1[u] += d_pre[u];
    }
    for (const auto& [d, v] : batch.inputs[i]->entries) {
      auto& row = grad->w1[d];
      if (row.empty()) row.assign(h, 0.0);
      for (std::size_t u = 0; u < h; ++u) row[u] += v * d_pre[u];
    }
  }
  return loss;
}

ClassifierParams init_train(std::span<const FeatureVector> features,
                            std::span<const std::optional<std::vector<double>>> targets, std::size_t classes,
                            const TrainConfig& cfg, double* final_loss) {
  cfg.validate();
  if (features.size() != targets.size()) throw ValidationError("features and weak labels differ in length");
  if (classes < 2) throw ValidationError("need at least 2 classes");
  std::vector<std::size_t> covered;
  std::vector<std::size_t> per_class(classes, 0);
  std::vector<std::vector<double>> dense(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!targets[i]) continue;
    if (targets[i]->size() != classes) throw ValidationError("weak label width does not match class count");
    dense[i] = *targets[i];
    ++per_class[target_argmax(dense[i])];
    covered.push_back(i);
  }
  if (covered.empty()) throw TrainError("init_train: no covered samples");
  for (std::size_t c = 0; c < classes; ++c) {
    if (per_class[c] == 0) throw TrainError("init_train: class " + std::to_string(c) + " has no covered samples");
  }
  auto params = ClassifierParams::random(cfg.feature_dim, cfg.hidden, classes, cfg.seed);
  std::mt19937_64 rng(cfg.seed ^ 0x5eedf00dULL);
  double loss = 0.0;
  for (std::size_t epoch = 0; epoch < cfg.init_epochs; ++epoch) {
    shuffle(covered, rng);
    loss = run_epoch(params, features, dense, covered, LossWeights{}, cfg, "init_train", epoch);
  }
  if (final_loss) *final_loss = loss;
  return params;
}

ClassifierParams init_train(std::span<const FeatureVector> features, std::span<const std::optional<std::size_t>> labels,
                            std::size_t classes, const TrainConfig& cfg, double* final_loss) {
  std::vector<std::optional<std::vector<double>>> targets(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i]) continue;
    if (*labels[i] >= classes) throw ValidationError("weak label outside the class range");
    targets[i] = std::vector<double>(classes, 0.0);
    (*targets[i])[*labels[i]] = 1.0;
  }
  return init_train(features, targets, classes, cfg, final_loss);
}

std::vector<std::size_t> confident_set(const ClassifierParams& params, std::span<const FeatureVector> features,
                                       double threshold) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < features.size(); ++i) {
    auto p = predict_proba(params, features[i]);
    if (*std::max_element(p.begin(), p.end()) >= threshold) out.push_back(i);
  }
  return out;
}

std::pair<ClassifierParams, TrainReport> self_train(ClassifierParams params, std::span<const FeatureVector> features,
                                                    const TrainConfig& cfg) {
  cfg.validate();
  TrainReport report;
  const LossWeights weights{cfg.confidence_weight, cfg.contrastive_weight, cfg.margin};
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::vector<double>> targets(features.size());
  for (std::size_t round = 1; round <= cfg.rounds; ++round) {
    RoundStats stats;
    stats.round = round;
    std::vector<std::size_t> confident;
    std::vector<double> freq(params.classes, 0.0);
    double confidence_sum = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) {
      auto p = predict_proba(params, features[i]);
      double top = *std::max_element(p.begin(), p.end());
      if (top < cfg.confidence_threshold) continue;
      confident.push_back(i);
      confidence_sum += top;
      for (std::size_t c = 0; c < freq.size(); ++c) freq[c] += p[c];
      targets[i] = sharpen(p, cfg.sharpen_temperature);
    }
    if (cfg.balance_pseudo_labels) {
      for (auto i : confident) {
        double z = 0.0;
        for (std::size_t c = 0; c < freq.size(); ++c) z += (targets[i][c] /= freq[c]);
        for (auto& v : targets[i]) v /= z;
      }
    }
    stats.confident = confident.size();
    if (confident.empty()) {
      report.rounds.push_back(stats);
      report.stopped_at_round = round;
      break;
    }
    stats.mean_confidence = confidence_sum / static_cast<double>(confident.size());
    double loss = 0.0;
    for (std::size_t epoch = 0; epoch < cfg.epochs_per_round; ++epoch) {
      shuffle(confident, rng);
      loss = run_epoch(params, features, targets, confident, weights, cfg, "self_train", epoch);
    }
    stats.train_loss = loss;
    report.rounds.push_back(stats);
  }
  report.checksum = params.checksum();
  return {std::move(params), std::move(report)};
}

double grad_check(const ClassifierParams& params, const TrainBatch& batch, const LossWeights& weights,
                  std::uint64_t seed, std::size_t samples) {
  constexpr double kStep = 1e-4;
  // Below this magnitude both gradients are indistinguishable from
  // finite-difference rounding.
  constexpr double kFloor = 1e-7;
  Gradient grad;
  batch_loss(params, batch, weights, &grad);

  std::vector<std::size_t> candidates;
  for (const auto& [d, row] : grad.w1) {
    for (std::size_t u = 0; u < params.hidden; ++u) candidates.push_back(static_cast<std::size_t>(d) * params.hidden + u);
  }
  std::sort(candidates.begin(), candidates.end());
  for (std::size_t i = params.w1.size(); i < params.num_params(); ++i) candidates.push_back(i);

  std::mt19937_64 rng(seed);
  auto probe = params;
  double worst = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    std::size_t i = candidates[rng() % candidates.size()];
    double original = probe.flat(i);
    probe.flat(i) = original + kStep;
    double up = batch_loss(probe, batch, weights);
    probe.flat(i) = original - kStep;
    double down = batch_loss(probe, batch, weights);
    probe.flat(i) = original;
    double numeric = (up - down) / (2.0 * kStep);
    double analytic = grad.flat(params, i);
    double err = std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), kFloor);
    worst = std::max(worst, err);
  }
  return worst;
}

double grad_check(const ClassifierParams& params, const TrainBatch& batch, const TrainConfig& cfg) {
  return grad_check(params, batch, LossWeights{cfg.confidence_weight, cfg.contrastive_weight, cfg.margin}, cfg.seed);
}

void save_params(const std::filesystem::path& path, const ClassifierParams& params, const TrainConfig& cfg) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  auto put = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  std::uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  put(params.dim);
  put(params.hidden);
  put(params.classes);
  put(cfg.seed);
  put(cfg.hash());
  for (const auto* block : {&params.w1, &params.b1, &params.w2, &params.b2}) {
    out.write(reinterpret_cast<const char*>(block->data()), static_cast<std::streamsize>(block->size() * sizeof(double)));
  }
  if (!out) throw Error("failed writing " + path.string());
}

ClassifierParams load_params(const std::filesystem::path& path, const TrainConfig& cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  char magic[sizeof kCheckpointMagic];
  std::uint32_t version = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw ParseError(path.string(), 0, "not a weaklab checkpoint");
  }
  if (version != kCheckpointVersion) {
    throw ParseError(path.string(), 0, "unsupported checkpoint version " + std::to_string(version));
  }
  std::uint64_t header[5];
  in.read(reinterpret_cast<char*>(header), sizeof header);
  if (!in) throw ParseError(path.string(), 0, "truncated header");
  if (header[4] != cfg.hash()) {
    throw ValidationError(path.string() + ": checkpoint was trained with a different config");
  }
  if (header[0] != cfg.feature_dim || header[1] != cfg.hidden) {
    throw ValidationError(path.string() + ": checkpoint shape does not match config");
  }
  auto params = ClassifierParams::zeros(header[0], header[1], header[2]);
  for (auto* block : {&params.w1, &params.b1, &params.w2, &params.b2}) {
    in.read(reinterpret_cast<char*>(block->data()), static_cast<std::streamsize>(block->size() * sizeof(double)));
  }
  if (!in) throw ParseError(path.string(), 0, "truncated parameters");
  return params;
}

}  // namespace weaklab
