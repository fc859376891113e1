#include "weaklab/aggregate.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <thread>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "weaklab/error.hpp"

namespace weaklab {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

LabelVote checked_vote(const WeakSource& source, const Utterance& utterance, const LabelSchema& schema) {
  LabelVote vote;
  try {
    vote = source.label(utterance);
  } catch (const std::exception& e) {
    return LabelVote::abstain(source.id(), std::string("error: ") + e.what());
  }
  vote.source_id = source.id();
  if (vote.label) {
    if (*vote.label >= schema.size() || !(vote.confidence > 0.0 && vote.confidence <= 1.0)) {
      return LabelVote::abstain(source.id(), "error: source emitted an invalid vote");
    }
  } else {
    vote.confidence = 0.0;
  }
  return vote;
}

}  // namespace

LabelMatrix::LabelMatrix(std::vector<std::string> sample_ids, std::vector<std::string> source_ids,
                         std::vector<LabelVote> votes)
    : sample_ids_(std::move(sample_ids)), source_ids_(std::move(source_ids)), votes_(std::move(votes)) {
  if (votes_.size() != sample_ids_.size() * source_ids_.size()) {
    throw ValidationError("label matrix has " + std::to_string(votes_.size()) + " votes for " +
                          std::to_string(sample_ids_.size()) + " x " + std::to_string(source_ids_.size()) + " cells");
  }
  std::unordered_set<std::string> seen;
  for (const auto& id : source_ids_) {
    if (!seen.insert(id).second) throw ValidationError("duplicate source id '" + id + "'");
  }
  for (std::size_t i = 0; i < votes_.size(); ++i) {
    if (votes_[i].source_id != source_ids_[i % source_ids_.size()]) {
      throw ValidationError("vote from '" + votes_[i].source_id + "' sits in column '" +
                            source_ids_[i % source_ids_.size()] + "'");
    }
  }
}

std::vector<std::optional<std::size_t>> LabelMatrix::column_labels(std::size_t source) const {
  std::vector<std::optional<std::size_t>> out;
  out.reserve(num_samples());
  for (std::size_t i = 0; i < num_samples(); ++i) out.push_back(at(i, source).label);
  return out;
}

std::optional<std::size_t> LabelMatrix::source_index(const std::string& source_id) const {
  auto it = std::find(source_ids_.begin(), source_ids_.end(), source_id);
  if (it == source_ids_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - source_ids_.begin());
}

LabelMatrix LabelMatrix::with_columns(std::span<const std::size_t> order) const {
  std::vector<std::string> ids;
  for (auto j : order) ids.push_back(source_ids_.at(j));
  std::vector<LabelVote> votes;
  votes.reserve(num_samples() * order.size());
  for (std::size_t i = 0; i < num_samples(); ++i) {
    for (auto j : order) votes.push_back(at(i, j));
  }
  return LabelMatrix(sample_ids_, std::move(ids), std::move(votes));
}

LabelMatrix build_matrix(const Dataset& dataset, std::span<const std::shared_ptr<const WeakSource>> sources,
                         std::size_t threads) {
  if (sources.empty()) throw ValidationError("build_matrix needs at least one source");
  std::vector<std::string> sample_ids;
  for (const auto& u : dataset.utterances()) sample_ids.push_back(u.id);
  std::vector<std::string> source_ids;
  for (const auto& s : sources) source_ids.push_back(s->id());

  const std::size_t n = dataset.size();
  const std::size_t m = sources.size();
  std::vector<LabelVote> votes(n * m);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      for (std::size_t j = 0; j < m; ++j) votes[i * m + j] = checked_vote(*sources[j], dataset[i], dataset.schema());
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
  }
  return LabelMatrix(std::move(sample_ids), std::move(source_ids), std::move(votes));
}

std::optional<std::size_t> majority_vote(std::span<const LabelVote> row, const LabelSchema& schema) {
  std::vector<std::size_t> counts(schema.size(), 0);
  for (const auto& v : row) {
    if (v.label && *v.label < counts.size()) ++counts[*v.label];
  }
  auto best = std::max_element(counts.begin(), counts.end());
  if (*best == 0 || std::count(counts.begin(), counts.end(), *best) > 1) return std::nullopt;
  return static_cast<std::size_t>(best - counts.begin());
}

std::optional<std::vector<double>> soft_aggregate(std::span<const LabelVote> row, const LabelSchema& schema) {
  std::vector<double> mass(schema.size(), 0.0);
  double total = 0.0;
  for (const auto& v : row) {
    if (!v.label || *v.label >= mass.size() || v.confidence <= 0.0) continue;
    mass[*v.label] += v.confidence;
    total += v.confidence;
  }
  if (total <= 0.0) return std::nullopt;
  for (auto& x : mass) x /= total;
  return mass;
}

std::vector<AggregatedLabel> aggregate(const LabelMatrix& matrix, const LabelSchema& schema, AggregationMode mode,
                                       std::size_t source) {
  if (mode == AggregationMode::kSource && source >= matrix.num_sources()) {
    throw ValidationError("aggregation source index out of range");
  }
  auto one_hot = [&](std::size_t c) {
    std::vector<double> v(schema.size(), 0.0);
    v[c] = 1.0;
    return v;
  };
  std::vector<AggregatedLabel> out;
  out.reserve(matrix.num_samples());
  for (std::size_t i = 0; i < matrix.num_samples(); ++i) {
    AggregatedLabel label;
    switch (mode) {
      case AggregationMode::kMajority:
        label.hard = majority_vote(matrix.row(i), schema);
        break;
      case AggregationMode::kSource:
        label.hard = matrix.at(i, source).label;
        break;
      case AggregationMode::kSoft:
        label.soft = soft_aggregate(matrix.row(i), schema);
        if (label.soft) {
          label.hard = static_cast<std::size_t>(std::max_element(label.soft->begin(), label.soft->end()) -
                                                label.soft->begin());
        }
        break;
    }
    if (mode != AggregationMode::kSoft && label.hard) label.soft = one_hot(*label.hard);
    out.push_back(std::move(label));
  }
  return out;
}

SourceStats label_stats(std::string source_id, std::span<const std::optional<std::size_t>> labels,
                        std::span<const std::optional<std::size_t>> gold, const LabelSchema& schema) {
  if (!gold.empty() && gold.size() != labels.size()) {
    throw ValidationError("gold labels (" + std::to_string(gold.size()) + ") are not aligned with " +
                          std::to_string(labels.size()) + " samples");
  }
  SourceStats stats;
  stats.source_id = std::move(source_id);
  for (const auto& l : labels) stats.covered += l.has_value();
  stats.coverage = labels.empty() ? 0.0 : static_cast<double>(stats.covered) / static_cast<double>(labels.size());
  std::vector<std::size_t> preds;
  std::vector<std::size_t> golds;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (labels[i] && gold[i]) {
      preds.push_back(*labels[i]);
      golds.push_back(*gold[i]);
    }
  }
  if (!preds.empty()) {
    stats.covered_report = macro_f1(preds, golds, schema);
    stats.covered_macro_f1 = stats.covered_report->macro_f1;
  }
  return stats;
}

std::vector<SourceStats> source_stats(const LabelMatrix& matrix, std::span<const std::optional<std::size_t>> gold,
                                      const LabelSchema& schema) {
  if (!gold.empty() && gold.size() != matrix.num_samples()) {
    throw ValidationError("gold labels (" + std::to_string(gold.size()) + ") are not aligned with " +
                          std::to_string(matrix.num_samples()) + " matrix rows");
  }
  std::vector<SourceStats> out;
  for (std::size_t j = 0; j < matrix.num_sources(); ++j) {
    out.push_back(label_stats(matrix.source_ids()[j], matrix.column_labels(j), gold, schema));
  }
  return out;
}

void write_matrix(std::ostream& out, const LabelMatrix& matrix, const LabelSchema& schema) {
  for (std::size_t i = 0; i < matrix.num_samples(); ++i) {
    ordered_json rec;
    rec["id"] = matrix.sample_ids()[i];
    auto votes = ordered_json::array();
    for (const auto& v : matrix.row(i)) {
      ordered_json cell;
      cell["source"] = v.source_id;
      cell["label"] = v.label ? ordered_json(schema.name(*v.label)) : ordered_json(nullptr);
      cell["confidence"] = v.confidence;
      if (!v.note.empty()) cell["note"] = v.note;
      votes.push_back(std::move(cell));
    }
    rec["votes"] = std::move(votes);
    auto majority = majority_vote(matrix.row(i), schema);
    rec["majority"] = majority ? ordered_json(schema.name(*majority)) : ordered_json(nullptr);
    auto soft = soft_aggregate(matrix.row(i), schema);
    rec["soft"] = soft ? ordered_json(*soft) : ordered_json(nullptr);
    out << rec.dump() << '\n';
  }
}

LabelMatrix read_matrix(std::istream& in, const LabelSchema& schema, const std::string& source_name) {
  std::vector<std::string> sample_ids;
  std::vector<std::string> source_ids;
  std::vector<LabelVote> votes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    try {
      auto rec = json::parse(line);
      sample_ids.push_back(rec.at("id").get<std::string>());
      const auto& cells = rec.at("votes");
      std::vector<std::string> row_sources;
      for (const auto& cell : cells) {
        LabelVote v;
        v.source_id = cell.at("source").get<std::string>();
        if (!cell.at("label").is_null()) v.label = schema.index_of(cell["label"].get<std::string>());
        v.confidence = cell.at("confidence").get<double>();
        if (cell.contains("note")) v.note = cell["note"].get<std::string>();
        row_sources.push_back(v.source_id);
        votes.push_back(std::move(v));
      }
      if (sample_ids.size() == 1) {
        source_ids = row_sources;
      } else if (row_sources != source_ids) {
        throw ParseError(source_name, line_no, "source columns differ from the first row");
      }
    } catch (const json::exception& e) {
      throw ParseError(source_name, line_no, e.what());
    } catch (const ValidationError& e) {
      throw ParseError(source_name, line_no, e.what());
    }
  }
  return LabelMatrix(std::move(sample_ids), std::move(source_ids), std::move(votes));
}

LabelMatrix load_matrix(const std::filesystem::path& path, const LabelSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return read_matrix(in, schema, path.string());
}

}  // namespace weaklab
