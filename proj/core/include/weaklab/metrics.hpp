#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "weaklab/corpus.hpp"

namespace weaklab {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  // gold count
};

struct EvalReport {
  double macro_f1 = 0.0;
  std::vector<ClassMetrics> per_class;
  std::vector<std::vector<std::size_t>> confusion;  // [gold][predicted]
  std::vector<std::size_t> abstained;               // per gold class
  std::optional<double> coverage;                   // set when evaluating a source
  std::size_t samples = 0;
};

// Per-class F1 with 0/0 -> 0; Macro-F1 averages over every schema class,
// including classes that never occur in gold.
EvalReport macro_f1(std::span<const std::size_t> predictions, std::span<const std::size_t> gold,
                    const LabelSchema& schema);

// Abstentions are false negatives for their gold class and add nothing to
// any predicted class, so they lower recall but never precision.
EvalReport rule_baseline_eval(std::span<const std::optional<std::size_t>> votes, std::span<const std::size_t> gold,
                              const LabelSchema& schema);

}  // namespace weaklab
