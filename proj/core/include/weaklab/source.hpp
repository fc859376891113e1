#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "weaklab/corpus.hpp"

namespace weaklab {

// One weak source's decision on one sample. An abstain carries confidence 0;
// a vote carries confidence in (0, 1]. `note` records provenance such as a
// swallowed backend error or skipped templates.
struct LabelVote {
  std::string source_id;
  std::optional<std::size_t> label;
  double confidence = 0.0;
  std::string note;

  static LabelVote abstain(std::string source_id, std::string note = {});
  // Throws ValidationError when confidence is outside (0, 1].
  static LabelVote vote(std::string source_id, std::size_t label, double confidence);

  bool abstained() const { return !label.has_value(); }

  friend bool operator==(const LabelVote&, const LabelVote&) = default;
};

// Anything that maps an utterance to a vote. Implementations must be safe to
// call concurrently from several threads.
class WeakSource {
 public:
  virtual ~WeakSource() = default;
  virtual const std::string& id() const = 0;
  virtual LabelVote label(const Utterance& utterance) const = 0;
};

}  // namespace weaklab
