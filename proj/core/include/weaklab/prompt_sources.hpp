#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "weaklab/backend.hpp"
#include "weaklab/corpus.hpp"
#include "weaklab/source.hpp"

namespace weaklab {

enum class PromptStyle { kNli, kCloze };

// A pattern with one `{mask}` slot and an optional `{text}` slot, plus one
// single-token verbalizer per schema class (indexed by class).
class PromptTemplate {
 public:
  PromptTemplate(std::string id, PromptStyle style, std::string pattern,
                 const std::map<std::string, std::string>& verbalizer_map, const LabelSchema& schema);

  const std::string& id() const { return id_; }
  PromptStyle style() const { return style_; }
  const std::string& pattern() const { return pattern_; }
  const std::vector<std::string>& verbalizers() const { return verbalizers_; }
  const std::vector<std::string>& class_names() const { return class_names_; }
  std::size_t num_classes() const { return verbalizers_.size(); }
  bool has_text_slot() const;

 private:
  std::string id_;
  PromptStyle style_;
  std::string pattern_;
  std::vector<std::string> verbalizers_;
  std::vector<std::string> class_names_;
};

struct Demonstration {
  std::size_t label = 0;
  std::string text;
};

struct PromptSpec {
  PromptTemplate prompt;
  std::vector<Demonstration> demos;
};

// {"id", "style": "nli"|"cloze", "pattern", "verbalizers": {class: token},
//  optional "demos": {class: text}}
PromptSpec load_prompt_spec(const std::filesystem::path& path, const LabelSchema& schema);
PromptSpec parse_prompt_spec(std::string_view json_text, const LabelSchema& schema,
                             const std::string& source_name = "<prompt>");

using ClassDistribution = std::vector<double>;

// Argmax with first-index tie-break.
std::size_t argmax(const ClassDistribution& dist);
LabelVote vote_from_distribution(std::string source_id, const ClassDistribution& dist);

std::vector<std::pair<std::size_t, std::string>> render_nli_hypotheses(const PromptTemplate& prompt,
                                                                       const LabelSchema& schema);

// Renormalized entailment scores over the schema classes.
ClassDistribution nli_distribution(const Utterance& utterance, const PromptTemplate& prompt,
                                   const LMBackend& backend);
LabelVote nli_label(const Utterance& utterance, const PromptTemplate& prompt, const LMBackend& backend);

// Query segment followed by one demonstration segment per class in schema
// order. `demos` must hold exactly one per class or be empty.
std::string render_cloze(const PromptTemplate& prompt, const Utterance& utterance,
                         const std::vector<Demonstration>& demos, const LabelSchema& schema,
                         const std::string& mask_marker, const std::string& separator = " ");

// Softmax of the verbalizer log-probs at the mask.
ClassDistribution cloze_distribution(const Utterance& utterance, const PromptTemplate& prompt,
                                     const std::vector<Demonstration>& demos, const LMBackend& backend,
                                     const std::string& separator = " ");
LabelVote cloze_label(const Utterance& utterance, const PromptTemplate& prompt,
                      const std::vector<Demonstration>& demos, const LMBackend& backend,
                      const std::string& separator = " ");

struct EnsembleMember {
  PromptTemplate prompt;
  std::vector<Demonstration> demos;
};

// Mean of the per-template class distributions. Transient failures are
// skipped while at least one template succeeds; a permanent failure is
// rethrown.
LabelVote ensemble_prompt_label(std::string source_id, const Utterance& utterance,
                                const std::vector<EnsembleMember>& members, const LMBackend& backend,
                                const std::string& separator = " ");

class PromptSource final : public WeakSource {
 public:
  PromptSource(std::string id, std::vector<EnsembleMember> members, std::shared_ptr<const LMBackend> backend,
               std::string separator = " ");
  const std::string& id() const override { return id_; }
  LabelVote label(const Utterance& utterance) const override;

 private:
  std::string id_;
  std::vector<EnsembleMember> members_;
  std::shared_ptr<const LMBackend> backend_;
  std::string separator_;
};

}  // namespace weaklab
