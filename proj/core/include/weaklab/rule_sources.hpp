#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "weaklab/corpus.hpp"
#include "weaklab/source.hpp"

namespace weaklab {

// Which schema classes the rule families vote for.
struct ClassBindings {
  std::optional<std::size_t> positive;
  std::optional<std::size_t> negative;
  std::optional<std::size_t> fluent;
  std::optional<std::size_t> disfluent;
};

struct RuleConfidences {
  double hard = 1.0;     // filler and repetition rules
  double soundex = 0.8;  // adjacent soundex collisions
  double fluent = 0.6;   // fluent-by-default
};

// Filler words and multi-word filler phrases, stored normalized.
class FillerSet {
 public:
  explicit FillerSet(const std::vector<std::string>& entries);

  static FillerSet defaults();

  const std::vector<TokenSequence>& phrases() const { return phrases_; }
  bool empty() const { return phrases_.empty(); }

 private:
  std::vector<TokenSequence> phrases_;
};

// One token or phrase per line; blank lines and '#' comments skipped.
FillerSet load_filler_set(const std::filesystem::path& path);

struct RuleSourceConfig {
  double theta = 0.0;
  std::size_t max_ngram = 3;
  FillerSet fillers = FillerSet::defaults();
  ClassBindings bindings;
  RuleConfidences confidences;
};

class SoundexCode {
 public:
  // Classic American Soundex. Throws ValidationError when `token` has no
  // ASCII letter.
  static SoundexCode encode(std::string_view token);

  std::string str() const { return std::string(code_.data(), code_.size()); }
  // Letter plus digits up to the first padding zero, e.g. "W5" for W500.
  std::string significant() const;

  friend bool operator==(const SoundexCode&, const SoundexCode&) = default;

 private:
  explicit SoundexCode(std::array<char, 4> code) : code_(code) {}
  std::array<char, 4> code_;
};

inline std::string soundex(std::string_view token) { return SoundexCode::encode(token).str(); }

LabelVote lexicon_label(const TokenSequence& tokens, const Lexicon& lexicon, double theta,
                        const ClassBindings& bindings, std::string source_id = "lexicon");

LabelVote filler_label(const TokenSequence& tokens, const FillerSet& fillers,
                       const ClassBindings& bindings, double confidence = 1.0,
                       std::string source_id = "filler");

LabelVote repetition_label(const TokenSequence& tokens, std::size_t max_ngram,
                           const ClassBindings& bindings, double confidence = 1.0,
                           std::string source_id = "repetition");

// Adjacent, non-identical tokens whose codes coincide, or where one code's
// significant prefix is a strict prefix of the other's (a truncated restart
// such as "wan want"). A prefix of one letter alone does not count.
LabelVote soundex_repeat_label(const TokenSequence& tokens, const ClassBindings& bindings,
                               double confidence = 0.8, std::string source_id = "soundex");

// Votes fluent when the three disfluency detectors abstain on >= 3 tokens.
LabelVote fluent_default_label(const TokenSequence& tokens, const RuleSourceConfig& cfg,
                               std::string source_id = "fluent_default");

// WeakSource adapters over the functions above.

class LexiconSource final : public WeakSource {
 public:
  LexiconSource(std::string id, Lexicon lexicon, double theta, ClassBindings bindings);
  const std::string& id() const override { return id_; }
  LabelVote label(const Utterance& utterance) const override;

 private:
  std::string id_;
  Lexicon lexicon_;
  double theta_;
  ClassBindings bindings_;
};

enum class DisfluencyRule { kFiller, kRepetition, kSoundex, kFluentDefault };

class DisfluencySource final : public WeakSource {
 public:
  DisfluencySource(std::string id, DisfluencyRule rule, RuleSourceConfig cfg);
  const std::string& id() const override { return id_; }
  LabelVote label(const Utterance& utterance) const override;

 private:
  std::string id_;
  DisfluencyRule rule_;
  RuleSourceConfig cfg_;
};

// Votes computed elsewhere (e.g. VADER), keyed by utterance id. Ids absent
// from the file abstain.
class PrecomputedSource final : public WeakSource {
 public:
  PrecomputedSource(std::string id, std::unordered_map<std::string, LabelVote> votes);
  const std::string& id() const override { return id_; }
  LabelVote label(const Utterance& utterance) const override;

 private:
  std::string id_;
  std::unordered_map<std::string, LabelVote> votes_;
};

// Lines `id<TAB>label-or-ABSTAIN<TAB>confidence`.
std::unordered_map<std::string, LabelVote> load_precomputed_votes(const std::filesystem::path& path,
                                                                  const LabelSchema& schema,
                                                                  const std::string& source_id);

}  // namespace weaklab
