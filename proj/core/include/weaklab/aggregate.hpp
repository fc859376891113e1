#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "weaklab/corpus.hpp"
#include "weaklab/metrics.hpp"
#include "weaklab/source.hpp"

namespace weaklab {

// samples x sources grid of votes, row-major.
class LabelMatrix {
 public:
  LabelMatrix(std::vector<std::string> sample_ids, std::vector<std::string> source_ids, std::vector<LabelVote> votes);

  std::size_t num_samples() const { return sample_ids_.size(); }
  std::size_t num_sources() const { return source_ids_.size(); }
  const std::vector<std::string>& sample_ids() const { return sample_ids_; }
  const std::vector<std::string>& source_ids() const { return source_ids_; }

  const LabelVote& at(std::size_t sample, std::size_t source) const { return votes_[sample * num_sources() + source]; }
  std::span<const LabelVote> row(std::size_t sample) const {
    return std::span<const LabelVote>(votes_).subspan(sample * num_sources(), num_sources());
  }
  std::vector<std::optional<std::size_t>> column_labels(std::size_t source) const;
  std::optional<std::size_t> source_index(const std::string& source_id) const;

  // Copy with the columns reordered by `order` (a permutation of source indices).
  LabelMatrix with_columns(std::span<const std::size_t> order) const;

  friend bool operator==(const LabelMatrix&, const LabelMatrix&) = default;

 private:
  std::vector<std::string> sample_ids_;
  std::vector<std::string> source_ids_;
  std::vector<LabelVote> votes_;
};

// Runs every source on every utterance using up to `threads` workers. A source
// that throws on a sample yields an abstain annotated with the error.
LabelMatrix build_matrix(const Dataset& dataset, std::span<const std::shared_ptr<const WeakSource>> sources,
                         std::size_t threads = 1);

// Plurality over non-abstain votes, confidences ignored. Ties and empty rows
// abstain.
std::optional<std::size_t> majority_vote(std::span<const LabelVote> row, const LabelSchema& schema);

// Confidence-weighted vote mass per class, normalized. Absent when every
// source abstains.
std::optional<std::vector<double>> soft_aggregate(std::span<const LabelVote> row, const LabelSchema& schema);

enum class AggregationMode { kMajority, kSoft, kSource };

struct AggregatedLabel {
  std::optional<std::size_t> hard;
  std::optional<std::vector<double>> soft;
};

// Training labels per sample. Majority and single-source modes give one-hot
// soft targets; soft mode takes hard = argmax(soft) with first-index ties.
std::vector<AggregatedLabel> aggregate(const LabelMatrix& matrix, const LabelSchema& schema, AggregationMode mode,
                                       std::size_t source = 0);

struct SourceStats {
  std::string source_id;
  double coverage = 0.0;
  std::size_t covered = 0;
  std::optional<double> covered_macro_f1;
  std::optional<EvalReport> covered_report;  // over covered samples with gold
};

SourceStats label_stats(std::string source_id, std::span<const std::optional<std::size_t>> labels,
                        std::span<const std::optional<std::size_t>> gold, const LabelSchema& schema);

// `gold` is either empty or aligned with the matrix rows; samples without a
// gold label are left out of the F1 computation.
std::vector<SourceStats> source_stats(const LabelMatrix& matrix, std::span<const std::optional<std::size_t>> gold,
                                      const LabelSchema& schema);

// One JSON object per sample: {id, votes: [{source, label|null, confidence[, note]}], majority, soft}.
void write_matrix(std::ostream& out, const LabelMatrix& matrix, const LabelSchema& schema);
LabelMatrix read_matrix(std::istream& in, const LabelSchema& schema, const std::string& source_name = "<matrix>");
LabelMatrix load_matrix(const std::filesystem::path& path, const LabelSchema& schema);

}  // namespace weaklab
