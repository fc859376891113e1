#include "weaklab/prompt_sources.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "weaklab/error.hpp"

namespace weaklab {

namespace {

using json = nlohmann::json;

constexpr std::string_view kMask = "{mask}";
constexpr std::string_view kText = "{text}";

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos; pos = haystack.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  if (from.empty()) return s;
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

std::string collapse_spaces(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

// Single left-to-right pass so placeholder-looking text inside `text` is
// never substituted again.
std::string fill_pattern(std::string_view pattern, std::string_view text, std::string_view mask_value) {
  std::string out;
  bool text_used = false;
  std::size_t i = 0;
  while (i < pattern.size()) {
    if (pattern.substr(i).starts_with(kMask)) {
      out += mask_value;
      i += kMask.size();
    } else if (pattern.substr(i).starts_with(kText)) {
      out += text;
      text_used = true;
      i += kText.size();
    } else {
      out.push_back(pattern[i++]);
    }
  }
  if (!text_used && !text.empty()) out = std::string(text) + " " + out;
  return out;
}

std::string strip_marker(std::string text, const std::string& marker) { return replace_all(std::move(text), marker, ""); }

bool same_classes(const PromptTemplate& prompt, const LabelSchema& schema) {
  if (prompt.class_names().size() != schema.size()) return false;
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (prompt.class_names()[c] != schema.name(c)) return false;
  }
  return true;
}

ClassDistribution softmax(const std::vector<double>& logits) {
  double m = *std::max_element(logits.begin(), logits.end());
  ClassDistribution p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += (p[i] = std::exp(logits[i] - m));
  for (auto& v : p) v /= z;
  return p;
}

}  // namespace

PromptTemplate::PromptTemplate(std::string id, PromptStyle style, std::string pattern,
                               const std::map<std::string, std::string>& verbalizer_map, const LabelSchema& schema)
    : id_(std::move(id)), style_(style), pattern_(std::move(pattern)) {
  if (id_.empty()) throw ValidationError("prompt template id is empty");
  if (count_occurrences(pattern_, kMask) != 1) {
    throw ValidationError("prompt '" + id_ + "': pattern needs exactly one {mask}");
  }
  if (count_occurrences(pattern_, kText) > 1) {
    throw ValidationError("prompt '" + id_ + "': pattern has more than one {text}");
  }
  verbalizers_.assign(schema.size(), {});
  for (const auto& c : schema.classes()) class_names_.push_back(c.name);
  for (const auto& [cls, token] : verbalizer_map) {
    auto index = schema.find(cls);
    if (!index) throw ValidationError("prompt '" + id_ + "': verbalizer for unknown class '" + cls + "'");
    if (token.empty() || std::any_of(token.begin(), token.end(), [](unsigned char c) { return std::isspace(c); })) {
      throw ValidationError("prompt '" + id_ + "': verbalizer '" + token + "' must be a single token");
    }
    verbalizers_[*index] = token;
  }
  for (std::size_t c = 0; c < verbalizers_.size(); ++c) {
    if (verbalizers_[c].empty()) {
      throw ValidationError("prompt '" + id_ + "': no verbalizer for class '" + schema.name(c) + "'");
    }
    for (std::size_t d = 0; d < c; ++d) {
      if (verbalizers_[c] == verbalizers_[d]) {
        throw ValidationError("prompt '" + id_ + "': verbalizer '" + verbalizers_[c] + "' used for two classes");
      }
    }
  }
}

bool PromptTemplate::has_text_slot() const { return pattern_.find(kText) != std::string::npos; }

PromptSpec parse_prompt_spec(std::string_view json_text, const LabelSchema& schema, const std::string& source_name) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(source_name, 0, e.what());
  }
  try {
    auto style_name = doc.at("style").get<std::string>();
    PromptStyle style;
    if (style_name == "nli") {
      style = PromptStyle::kNli;
    } else if (style_name == "cloze") {
      style = PromptStyle::kCloze;
    } else {
      throw ParseError(source_name, 0, "style must be \"nli\" or \"cloze\", got \"" + style_name + "\"");
    }
    auto verbalizers = doc.at("verbalizers").get<std::map<std::string, std::string>>();
    PromptSpec spec{PromptTemplate(doc.at("id").get<std::string>(), style, doc.at("pattern").get<std::string>(),
                                   verbalizers, schema),
                    {}};
    if (doc.contains("demos")) {
      for (const auto& [cls, text] : doc["demos"].get<std::map<std::string, std::string>>()) {
        spec.demos.push_back({schema.index_of(cls), text});
      }
      std::sort(spec.demos.begin(), spec.demos.end(),
                [](const Demonstration& a, const Demonstration& b) { return a.label < b.label; });
    }
    return spec;
  } catch (const json::exception& e) {
    throw ParseError(source_name, 0, e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(source_name + ": " + e.what());
  }
}

PromptSpec load_prompt_spec(const std::filesystem::path& path, const LabelSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_prompt_spec(buf.str(), schema, path.string());
}

std::size_t argmax(const ClassDistribution& dist) {
  return static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
}

LabelVote vote_from_distribution(std::string source_id, const ClassDistribution& dist) {
  auto best = argmax(dist);
  return LabelVote::vote(std::move(source_id), best, std::min(1.0, dist[best]));
}

std::vector<std::pair<std::size_t, std::string>> render_nli_hypotheses(const PromptTemplate& prompt,
                                                                       const LabelSchema& schema) {
  if (!same_classes(prompt, schema)) {
    throw ValidationError("prompt '" + prompt.id() + "' was built for a different schema");
  }
  std::vector<std::pair<std::size_t, std::string>> out;
  for (std::size_t c = 0; c < schema.size(); ++c) {
    out.emplace_back(c, collapse_spaces(fill_pattern(prompt.pattern(), "", prompt.verbalizers()[c])));
  }
  return out;
}

ClassDistribution nli_distribution(const Utterance& utterance, const PromptTemplate& prompt,
                                   const LMBackend& backend) {
  if (!backend.capabilities().entailment) {
    throw BackendError("prompt '" + prompt.id() + "': backend does not support entailment", false);
  }
  EntailmentQuery query{utterance.text, {}};
  for (const auto& verbalizer : prompt.verbalizers()) {
    query.hypotheses.push_back(collapse_spaces(fill_pattern(prompt.pattern(), "", verbalizer)));
  }
  auto scores = backend.entail(query);
  if (scores.size() != query.hypotheses.size()) {
    throw BackendError("prompt '" + prompt.id() + "': backend returned " + std::to_string(scores.size()) +
                           " scores for " + std::to_string(query.hypotheses.size()) + " hypotheses",
                       false);
  }
  double total = 0.0;
  for (double s : scores) {
    if (!(s >= 0.0 && s <= 1.0)) {
      throw BackendError("prompt '" + prompt.id() + "': entailment score outside [0, 1]", false);
    }
    total += s;
  }
  ClassDistribution dist(scores.size(), 1.0 / static_cast<double>(scores.size()));
  if (total > 0.0) {
    for (std::size_t c = 0; c < scores.size(); ++c) dist[c] = scores[c] / total;
  }
  return dist;
}

LabelVote nli_label(const Utterance& utterance, const PromptTemplate& prompt, const LMBackend& backend) {
  return vote_from_distribution(prompt.id(), nli_distribution(utterance, prompt, backend));
}

std::string render_cloze(const PromptTemplate& prompt, const Utterance& utterance,
                         const std::vector<Demonstration>& demos, const LabelSchema& schema,
                         const std::string& mask_marker, const std::string& separator) {
  if (!same_classes(prompt, schema)) {
    throw ValidationError("prompt '" + prompt.id() + "' was built for a different schema");
  }
  if (prompt.pattern().find(mask_marker) != std::string::npos) {
    throw ValidationError("prompt '" + prompt.id() + "': pattern contains the literal mask marker");
  }
  std::vector<const Demonstration*> by_class(schema.size(), nullptr);
  for (const auto& demo : demos) {
    if (demo.label >= schema.size()) throw ValidationError("demonstration class outside the schema");
    if (by_class[demo.label]) {
      throw ValidationError("prompt '" + prompt.id() + "': duplicate demonstration for class '" +
                            schema.name(demo.label) + "'");
    }
    by_class[demo.label] = &demo;
  }
  if (!demos.empty()) {
    for (std::size_t c = 0; c < schema.size(); ++c) {
      if (!by_class[c]) {
        throw ValidationError("prompt '" + prompt.id() + "': missing demonstration for class '" +
                              schema.name(c) + "'");
      }
    }
  }
  std::string out = fill_pattern(prompt.pattern(), strip_marker(utterance.text, mask_marker), mask_marker);
  if (!demos.empty()) {
    for (std::size_t c = 0; c < schema.size(); ++c) {
      out += separator;
      out += fill_pattern(prompt.pattern(), strip_marker(by_class[c]->text, mask_marker),
                  strip_marker(prompt.verbalizers()[c], mask_marker));
    }
  }
  return out;
}

ClassDistribution cloze_distribution(const Utterance& utterance, const PromptTemplate& prompt,
                                     const std::vector<Demonstration>& demos, const LMBackend& backend,
                                     const std::string& separator) {
  if (!backend.capabilities().mask_fill) {
    throw BackendError("prompt '" + prompt.id() + "': backend does not support mask_fill", false);
  }
  LabelSchema schema(prompt.id(), prompt.class_names());
  MaskFillQuery query{render_cloze(prompt, utterance, demos, schema, backend.mask_marker(), separator),
                      prompt.verbalizers()};
  auto log_probs = backend.mask_fill(query);
  if (log_probs.size() != query.candidates.size()) {
    throw BackendError("prompt '" + prompt.id() + "': backend returned " + std::to_string(log_probs.size()) +
                           " log-probs for " + std::to_string(query.candidates.size()) + " verbalizers",
                       false);
  }
  for (double lp : log_probs) {
    if (!std::isfinite(lp)) throw BackendError("prompt '" + prompt.id() + "': non-finite log-prob", false);
  }
  return softmax(log_probs);
}

LabelVote cloze_label(const Utterance& utterance, const PromptTemplate& prompt, const std::vector<Demonstration>& demos,
                      const LMBackend& backend, const std::string& separator) {
  return vote_from_distribution(prompt.id(), cloze_distribution(utterance, prompt, demos, backend, separator));
}

LabelVote ensemble_prompt_label(std::string source_id, const Utterance& utterance,
                                const std::vector<EnsembleMember>& members, const LMBackend& backend,
                                const std::string& separator) {
  if (members.empty()) throw ValidationError("source '" + source_id + "': no prompt templates");
  ClassDistribution mean;
  std::size_t succeeded = 0;
  std::vector<std::string> skipped;
  for (const auto& member : members) {
    ClassDistribution dist;
    try {
      dist = member.prompt.style() == PromptStyle::kNli
                 ? nli_distribution(utterance, member.prompt, backend)
                 : cloze_distribution(utterance, member.prompt, member.demos, backend, separator);
    } catch (const BackendError& e) {
      if (!e.transient()) throw BackendError("source '" + source_id + "': " + e.what(), false);
      skipped.push_back(member.prompt.id());
      continue;
    }
    if (mean.empty()) mean.assign(dist.size(), 0.0);
    if (dist.size() != mean.size()) {
      throw ValidationError("source '" + source_id + "': templates disagree on class count");
    }
    for (std::size_t c = 0; c < dist.size(); ++c) mean[c] += dist[c];
    ++succeeded;
  }
  std::string note;
  if (!skipped.empty()) {
    note = "transient failure in";
    for (const auto& id : skipped) note += " " + id;
  }
  if (succeeded == 0) return LabelVote::abstain(std::move(source_id), note);
  for (auto& v : mean) v /= static_cast<double>(succeeded);
  auto vote = vote_from_distribution(std::move(source_id), mean);
  vote.note = std::move(note);
  return vote;
}

PromptSource::PromptSource(std::string id, std::vector<EnsembleMember> members,
                           std::shared_ptr<const LMBackend> backend, std::string separator)
    : id_(std::move(id)), members_(std::move(members)), backend_(std::move(backend)), separator_(std::move(separator)) {
  if (members_.empty()) throw ValidationError("source '" + id_ + "': no prompt templates");
  if (!backend_) throw ValidationError("source '" + id_ + "': no backend");
}

LabelVote PromptSource::label(const Utterance& utterance) const {
  return ensemble_prompt_label(id_, utterance, members_, *backend_, separator_);
}

}  // namespace weaklab
