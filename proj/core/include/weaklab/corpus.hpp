#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace weaklab {

struct ClassLabel {
  std::string name;
  std::size_t index = 0;

  friend bool operator==(const ClassLabel&, const ClassLabel&) = default;
};

// Ordered set of class names for one task. The order is canonical: class
// distributions, demonstrations and confusion matrices all follow it.
class LabelSchema {
 public:
  LabelSchema(std::string task_name, const std::vector<std::string>& class_names);

  const std::string& task_name() const { return task_name_; }
  std::size_t size() const { return classes_.size(); }
  std::span<const ClassLabel> classes() const { return classes_; }
  const ClassLabel& at(std::size_t index) const { return classes_.at(index); }
  const std::string& name(std::size_t index) const { return classes_.at(index).name; }

  std::optional<std::size_t> find(std::string_view name) const;
  // Throws ValidationError naming the label when absent.
  std::size_t index_of(std::string_view name) const;

  friend bool operator==(const LabelSchema&, const LabelSchema&) = default;

 private:
  std::string task_name_;
  std::vector<ClassLabel> classes_;
};

// Schema file: {"task_name": "...", "classes": ["a", "b", ...]}
LabelSchema load_schema(const std::filesystem::path& path);
LabelSchema parse_schema(std::string_view json_text, const std::string& source_name = "<schema>");

struct Utterance {
  std::string id;
  std::string text;
  std::optional<std::size_t> gold;  // index into the dataset schema
};

class Dataset {
 public:
  // Throws ValidationError on duplicate ids, blank text or out-of-schema gold.
  Dataset(LabelSchema schema, std::vector<Utterance> utterances);

  const LabelSchema& schema() const { return schema_; }
  std::span<const Utterance> utterances() const { return utterances_; }
  std::size_t size() const { return utterances_.size(); }
  const Utterance& operator[](std::size_t i) const { return utterances_[i]; }

  std::vector<std::optional<std::size_t>> gold_labels() const;

 private:
  LabelSchema schema_;
  std::vector<Utterance> utterances_;
};

// One JSON object per line: {"id": ..., "text": ..., "gold": ...}; gold optional.
Dataset load_dataset(const std::filesystem::path& path, const LabelSchema& schema);
Dataset parse_dataset(std::istream& in, const LabelSchema& schema,
                      const std::string& source_name = "<dataset>");
// Canonical form: keys in id, text, gold order, one compact object per line.
std::string serialize_dataset(const Dataset& dataset);

using TokenSequence = std::vector<std::string>;

// Lowercase, whitespace split, strip leading/trailing punctuation from each
// token (so intra-word apostrophes and hyphens survive), drop empties.
TokenSequence normalize_text(std::string_view text);

class Lexicon {
 public:
  Lexicon() = default;

  // Returns true when an existing entry was overwritten.
  bool set(std::string token, double score);
  std::optional<double> score(const std::string& token) const;
  std::size_t size() const { return entries_.size(); }
  const std::unordered_map<std::string, double>& entries() const { return entries_; }

  // Copy with every score negated.
  Lexicon negated() const;

 private:
  std::unordered_map<std::string, double> entries_;
};

// `token<TAB>score` lines; blank lines and lines starting with '#' are skipped.
// Later duplicates win; a warning per duplicate is appended to `warnings`.
Lexicon load_lexicon(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);
Lexicon parse_lexicon(std::istream& in, const std::string& source_name = "<lexicon>",
                      std::vector<std::string>* warnings = nullptr);

}  // namespace weaklab
