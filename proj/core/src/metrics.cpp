#include "weaklab/metrics.hpp"

#include "weaklab/error.hpp"

namespace weaklab {

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

EvalReport evaluate(std::span<const std::optional<std::size_t>> predictions, std::span<const std::size_t> gold,
                    const LabelSchema& schema) {
  if (predictions.size() != gold.size()) {
    throw ValidationError("predictions (" + std::to_string(predictions.size()) + ") and gold (" +
                          std::to_string(gold.size()) + ") differ in length");
  }
  if (gold.empty()) throw ValidationError("cannot evaluate an empty sample");
  const std::size_t k = schema.size();
  EvalReport report;
  report.samples = gold.size();
  report.confusion.assign(k, std::vector<std::size_t>(k, 0));
  report.abstained.assign(k, 0);
  std::size_t emitted = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] >= k) throw ValidationError("gold label outside the schema");
    if (!predictions[i]) {
      ++report.abstained[gold[i]];
      continue;
    }
    if (*predictions[i] >= k) throw ValidationError("predicted label outside the schema");
    ++report.confusion[gold[i]][*predictions[i]];
    ++emitted;
  }
  double sum_f1 = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t tp = report.confusion[c][c];
    std::size_t predicted = 0;
    std::size_t actual = report.abstained[c];
    for (std::size_t o = 0; o < k; ++o) {
      predicted += report.confusion[o][c];
      actual += report.confusion[c][o];
    }
    ClassMetrics m;
    m.support = actual;
    m.precision = ratio(tp, predicted);
    m.recall = ratio(tp, actual);
    // 2tp / (2tp + fp + fn) == harmonic mean of P and R, 0 when tp == 0.
    m.f1 = ratio(2 * tp, predicted + actual);
    sum_f1 += m.f1;
    report.per_class.push_back(m);
  }
  report.macro_f1 = sum_f1 / static_cast<double>(k);
  report.coverage = ratio(emitted, gold.size());
  return report;
}

}  // namespace

EvalReport macro_f1(std::span<const std::size_t> predictions, std::span<const std::size_t> gold,
                    const LabelSchema& schema) {
  std::vector<std::optional<std::size_t>> wrapped(predictions.begin(), predictions.end());
  auto report = evaluate(wrapped, gold, schema);
  report.coverage.reset();
  return report;
}

EvalReport rule_baseline_eval(std::span<const std::optional<std::size_t>> votes, std::span<const std::size_t> gold,
                              const LabelSchema& schema) {
  return evaluate(votes, gold, schema);
}

}  // namespace weaklab
