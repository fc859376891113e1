#include "weaklab/rule_sources.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "weaklab/error.hpp"

namespace weaklab {

LabelVote LabelVote::abstain(std::string source_id, std::string note) {
  return LabelVote{std::move(source_id), std::nullopt, 0.0, std::move(note)};
}

LabelVote LabelVote::vote(std::string source_id, std::size_t label, double confidence) {
  if (!(confidence > 0.0 && confidence <= 1.0)) {
    throw ValidationError("vote confidence " + std::to_string(confidence) + " from '" + source_id +
                          "' is outside (0, 1]");
  }
  return LabelVote{std::move(source_id), label, confidence, {}};
}

namespace {

std::size_t require(const std::optional<std::size_t>& binding, const char* role) {
  if (!binding) throw ValidationError(std::string("rule needs a '") + role + "' class binding");
  return *binding;
}

// Soundex digit for a lowercase letter; '0' for vowels (incl. y), 'h'/'w' are
// transparent and reported as '\0'.
char soundex_digit(char c) {
  switch (c) {
    case 'b': case 'f': case 'p': case 'v':
      return '1';
    case 'c': case 'g': case 'j': case 'k': case 'q': case 's': case 'x': case 'z':
      return '2';
    case 'd': case 't':
      return '3';
    case 'l':
      return '4';
    case 'm': case 'n':
      return '5';
    case 'r':
      return '6';
    case 'h': case 'w':
      return '\0';
    default:
      return '0';
  }
}

bool has_ascii_letter(std::string_view token) {
  return std::any_of(token.begin(), token.end(), [](unsigned char c) { return c < 0x80 && std::isalpha(c); });
}

bool phrase_at(const TokenSequence& tokens, std::size_t pos, const TokenSequence& phrase) {
  if (phrase.empty() || pos + phrase.size() > tokens.size()) return false;
  return std::equal(phrase.begin(), phrase.end(), tokens.begin() + static_cast<std::ptrdiff_t>(pos));
}

}  // namespace

FillerSet::FillerSet(const std::vector<std::string>& entries) {
  for (const auto& entry : entries) {
    auto phrase = normalize_text(entry);
    if (phrase.empty()) continue;
    if (std::find(phrases_.begin(), phrases_.end(), phrase) == phrases_.end()) {
      phrases_.push_back(std::move(phrase));
    }
  }
}

FillerSet FillerSet::defaults() {
  return FillerSet({"uh", "um", "er", "ah", "hmm", "mm", "huh", "you know", "i mean", "well", "like", "so"});
}

FillerSet load_filler_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::vector<std::string> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    entries.push_back(line);
  }
  FillerSet set(entries);
  if (set.empty()) throw ValidationError("filler set " + path.string() + " is empty");
  return set;
}

SoundexCode SoundexCode::encode(std::string_view token) {
  std::string letters;
  for (unsigned char c : token) {
    if (c < 0x80 && std::isalpha(c)) letters.push_back(static_cast<char>(std::tolower(c)));
  }
  if (letters.empty()) throw ValidationError("soundex: '" + std::string(token) + "' has no letters");

  std::array<char, 4> code{static_cast<char>(std::toupper(static_cast<unsigned char>(letters[0]))), '0', '0', '0'};
  std::size_t filled = 1;
  char prev = soundex_digit(letters[0]);
  for (std::size_t i = 1; i < letters.size() && filled < code.size(); ++i) {
    char d = soundex_digit(letters[i]);
    if (d == '\0') continue;  // h, w: keep prev so equal codes still merge
    if (d != '0' && d != prev) code[filled++] = d;
    prev = d;
  }
  return SoundexCode(code);
}

std::string SoundexCode::significant() const {
  std::size_t n = 1;
  while (n < code_.size() && code_[n] != '0') ++n;
  return std::string(code_.data(), n);
}

LabelVote lexicon_label(const TokenSequence& tokens, const Lexicon& lexicon, double theta,
                        const ClassBindings& bindings, std::string source_id) {
  if (!(theta >= 0.0)) throw ValidationError("lexicon threshold must be >= 0");
  double sum = 0.0;
  for (const auto& t : tokens) {
    if (auto s = lexicon.score(t)) sum += *s;
  }
  double confidence = std::min(1.0, std::abs(sum) / (theta + 3.0));
  if (sum > theta && confidence > 0.0) {
    return LabelVote::vote(std::move(source_id), require(bindings.positive, "positive"), confidence);
  }
  if (sum < -theta && confidence > 0.0) {
    return LabelVote::vote(std::move(source_id), require(bindings.negative, "negative"), confidence);
  }
  return LabelVote::abstain(std::move(source_id));
}

LabelVote filler_label(const TokenSequence& tokens, const FillerSet& fillers,
                       const ClassBindings& bindings, double confidence, std::string source_id) {
  if (fillers.empty()) throw ValidationError("filler set is empty");
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (const auto& phrase : fillers.phrases()) {
      if (phrase_at(tokens, i, phrase)) {
        return LabelVote::vote(std::move(source_id), require(bindings.disfluent, "disfluent"), confidence);
      }
    }
  }
  return LabelVote::abstain(std::move(source_id));
}

LabelVote repetition_label(const TokenSequence& tokens, std::size_t max_ngram,
                           const ClassBindings& bindings, double confidence, std::string source_id) {
  if (max_ngram < 1) throw ValidationError("max n-gram length must be >= 1");
  for (std::size_t n = 1; n <= max_ngram && 2 * n <= tokens.size(); ++n) {
    for (std::size_t i = 0; i + 2 * n <= tokens.size(); ++i) {
      auto first = tokens.begin() + static_cast<std::ptrdiff_t>(i);
      auto second = first + static_cast<std::ptrdiff_t>(n);
      if (std::equal(first, second, second)) {
        return LabelVote::vote(std::move(source_id), require(bindings.disfluent, "disfluent"), confidence);
      }
    }
  }
  return LabelVote::abstain(std::move(source_id));
}

LabelVote soundex_repeat_label(const TokenSequence& tokens, const ClassBindings& bindings,
                               double confidence, std::string source_id) {
  std::optional<SoundexCode> prev_code;
  const std::string* prev_token = nullptr;
  for (const auto& token : tokens) {
    if (!has_ascii_letter(token)) {
      prev_code.reset();
      prev_token = nullptr;
      continue;
    }
    auto code = SoundexCode::encode(token);
    if (prev_code && *prev_token != token) {
      auto a = prev_code->significant();
      auto b = code.significant();
      // A bare letter ("we" -> W) is too weak to count as a truncated restart.
      bool truncated = a.size() != b.size() && std::min(a.size(), b.size()) >= 2 &&
                       (a.size() < b.size() ? b.starts_with(a) : a.starts_with(b));
      bool collide = *prev_code == code || truncated;
      if (collide) {
        return LabelVote::vote(std::move(source_id), require(bindings.disfluent, "disfluent"), confidence);
      }
    }
    prev_code = code;
    prev_token = &token;
  }
  return LabelVote::abstain(std::move(source_id));
}

LabelVote fluent_default_label(const TokenSequence& tokens, const RuleSourceConfig& cfg,
                               std::string source_id) {
  ClassBindings probe = cfg.bindings;
  if (!probe.disfluent) probe.disfluent = 0;  // detectors only need some class to report
  if (tokens.size() < 3 || !filler_label(tokens, cfg.fillers, probe).abstained() ||
      !repetition_label(tokens, cfg.max_ngram, probe).abstained() ||
      !soundex_repeat_label(tokens, probe).abstained()) {
    return LabelVote::abstain(std::move(source_id));
  }
  return LabelVote::vote(std::move(source_id), require(cfg.bindings.fluent, "fluent"), cfg.confidences.fluent);
}

LexiconSource::LexiconSource(std::string id, Lexicon lexicon, double theta, ClassBindings bindings)
    : id_(std::move(id)), lexicon_(std::move(lexicon)), theta_(theta), bindings_(bindings) {
  if (!(theta_ >= 0.0)) throw ValidationError("source '" + id_ + "': theta must be >= 0");
  require(bindings_.positive, "positive");
  require(bindings_.negative, "negative");
}

LabelVote LexiconSource::label(const Utterance& utterance) const {
  return lexicon_label(normalize_text(utterance.text), lexicon_, theta_, bindings_, id_);
}

DisfluencySource::DisfluencySource(std::string id, DisfluencyRule rule, RuleSourceConfig cfg)
    : id_(std::move(id)), rule_(rule), cfg_(std::move(cfg)) {
  if (rule_ == DisfluencyRule::kFluentDefault) {
    require(cfg_.bindings.fluent, "fluent");
  } else {
    require(cfg_.bindings.disfluent, "disfluent");
  }
  if (cfg_.max_ngram < 1) throw ValidationError("source '" + id_ + "': max n-gram must be >= 1");
  if (cfg_.fillers.empty()) throw ValidationError("source '" + id_ + "': filler set is empty");
}

LabelVote DisfluencySource::label(const Utterance& utterance) const {
  auto tokens = normalize_text(utterance.text);
  switch (rule_) {
    case DisfluencyRule::kFiller:
      return filler_label(tokens, cfg_.fillers, cfg_.bindings, cfg_.confidences.hard, id_);
    case DisfluencyRule::kRepetition:
      return repetition_label(tokens, cfg_.max_ngram, cfg_.bindings, cfg_.confidences.hard, id_);
    case DisfluencyRule::kSoundex:
      return soundex_repeat_label(tokens, cfg_.bindings, cfg_.confidences.soundex, id_);
    case DisfluencyRule::kFluentDefault:
      return fluent_default_label(tokens, cfg_, id_);
  }
  return LabelVote::abstain(id_);
}

PrecomputedSource::PrecomputedSource(std::string id, std::unordered_map<std::string, LabelVote> votes)
    : id_(std::move(id)), votes_(std::move(votes)) {
  for (auto& [key, vote] : votes_) vote.source_id = id_;
}

LabelVote PrecomputedSource::label(const Utterance& utterance) const {
  auto it = votes_.find(utterance.id);
  if (it == votes_.end()) return LabelVote::abstain(id_, "no precomputed vote");
  return it->second;
}

std::unordered_map<std::string, LabelVote> load_precomputed_votes(const std::filesystem::path& path,
                                                                  const LabelSchema& schema,
                                                                  const std::string& source_id) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::unordered_map<std::string, LabelVote> votes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    auto t1 = line.find('\t');
    auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) throw ParseError(path.string(), line_no, "expected id<TAB>label<TAB>confidence");
    std::string id = line.substr(0, t1);
    std::string label = line.substr(t1 + 1, t2 - t1 - 1);
    std::string conf_text = line.substr(t2 + 1);
    if (id.empty()) throw ParseError(path.string(), line_no, "empty id");
    double conf = 0.0;
    std::size_t consumed = 0;
    try {
      conf = std::stod(conf_text, &consumed);
    } catch (const std::exception&) {
      throw ParseError(path.string(), line_no, "non-numeric confidence '" + conf_text + "'");
    }
    if (consumed != conf_text.size()) {
      throw ParseError(path.string(), line_no, "non-numeric confidence '" + conf_text + "'");
    }
    LabelVote vote = LabelVote::abstain(source_id);
    if (label != "ABSTAIN") {
      auto index = schema.find(label);
      if (!index) throw ParseError(path.string(), line_no, "unknown label '" + label + "'");
      try {
        vote = LabelVote::vote(source_id, *index, conf);
      } catch (const ValidationError& e) {
        throw ParseError(path.string(), line_no, e.what());
      }
    }
    if (!votes.insert_or_assign(id, vote).second) {
      throw ParseError(path.string(), line_no, "duplicate id '" + id + "'");
    }
  }
  return votes;
}

}  // namespace weaklab
