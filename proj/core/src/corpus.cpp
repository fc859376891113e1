#include "weaklab/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "weaklab/error.hpp"

namespace weaklab {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return in;
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

bool is_ascii_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }

}  // namespace

LabelSchema::LabelSchema(std::string task_name, const std::vector<std::string>& class_names)
    : task_name_(std::move(task_name)) {
  if (class_names.size() < 2) {
    throw ValidationError("schema '" + task_name_ + "' needs at least 2 classes");
  }
  std::unordered_set<std::string> seen;
  for (const auto& name : class_names) {
    if (name.empty()) throw ValidationError("schema '" + task_name_ + "' has an empty class name");
    if (!seen.insert(name).second) {
      throw ValidationError("schema '" + task_name_ + "' repeats class '" + name + "'");
    }
    classes_.push_back({name, classes_.size()});
  }
}

std::optional<std::size_t> LabelSchema::find(std::string_view name) const {
  for (const auto& c : classes_) {
    if (c.name == name) return c.index;
  }
  return std::nullopt;
}

std::size_t LabelSchema::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw ValidationError("unknown label '" + std::string(name) + "' for schema '" + task_name_ + "'");
}

LabelSchema parse_schema(std::string_view json_text, const std::string& source_name) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(source_name, 0, e.what());
  }
  if (!doc.is_object() || !doc.contains("task_name") || !doc.contains("classes") ||
      !doc["task_name"].is_string() || !doc["classes"].is_array()) {
    throw ParseError(source_name, 0, "schema needs string 'task_name' and array 'classes'");
  }
  std::vector<std::string> names;
  for (const auto& c : doc["classes"]) {
    if (!c.is_string()) throw ParseError(source_name, 0, "class names must be strings");
    names.push_back(c.get<std::string>());
  }
  return LabelSchema(doc["task_name"].get<std::string>(), names);
}

LabelSchema load_schema(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_schema(buf.str(), path.string());
}

Dataset::Dataset(LabelSchema schema, std::vector<Utterance> utterances)
    : schema_(std::move(schema)), utterances_(std::move(utterances)) {
  std::unordered_set<std::string> ids;
  for (const auto& u : utterances_) {
    if (u.id.empty()) throw ValidationError("utterance with empty id");
    if (!ids.insert(u.id).second) throw ValidationError("duplicate utterance id '" + u.id + "'");
    if (is_blank(u.text)) throw ValidationError("utterance '" + u.id + "' has blank text");
    if (u.gold && *u.gold >= schema_.size()) {
      throw ValidationError("utterance '" + u.id + "' has gold index outside the schema");
    }
  }
}

std::vector<std::optional<std::size_t>> Dataset::gold_labels() const {
  std::vector<std::optional<std::size_t>> out;
  out.reserve(utterances_.size());
  for (const auto& u : utterances_) out.push_back(u.gold);
  return out;
}

Dataset parse_dataset(std::istream& in, const LabelSchema& schema, const std::string& source_name) {
  std::vector<Utterance> utterances;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (is_blank(line)) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(source_name, line_no, std::string("malformed record: ") + e.what());
    }
    if (!rec.is_object() || !rec.contains("id") || !rec.contains("text") || !rec["id"].is_string() ||
        !rec["text"].is_string()) {
      throw ParseError(source_name, line_no, "record needs string fields 'id' and 'text'");
    }
    Utterance u{rec["id"].get<std::string>(), rec["text"].get<std::string>(), std::nullopt};
    if (!ids.insert(u.id).second) {
      throw ValidationError(source_name + ":" + std::to_string(line_no) + ": duplicate id '" + u.id + "'");
    }
    if (auto it = rec.find("gold"); it != rec.end() && !it->is_null()) {
      if (!it->is_string()) throw ParseError(source_name, line_no, "'gold' must be a string");
      auto label = it->get<std::string>();
      auto index = schema.find(label);
      if (!index) {
        throw ValidationError(source_name + ":" + std::to_string(line_no) + ": unknown label '" +
                              label + "' for schema '" + schema.task_name() + "'");
      }
      u.gold = index;
    }
    if (is_blank(u.text)) {
      throw ValidationError(source_name + ":" + std::to_string(line_no) + ": blank text for id '" +
                            u.id + "'");
    }
    utterances.push_back(std::move(u));
  }
  return Dataset(schema, std::move(utterances));
}

Dataset load_dataset(const std::filesystem::path& path, const LabelSchema& schema) {
  auto in = open_input(path);
  return parse_dataset(in, schema, path.string());
}

std::string serialize_dataset(const Dataset& dataset) {
  std::string out;
  for (const auto& u : dataset.utterances()) {
    ordered_json rec;
    rec["id"] = u.id;
    rec["text"] = u.text;
    if (u.gold) rec["gold"] = dataset.schema().name(*u.gold);
    out += rec.dump();
    out += '\n';
  }
  return out;
}

TokenSequence normalize_text(std::string_view text) {
  TokenSequence tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t end = i;
    while (start < end && is_ascii_punct(static_cast<unsigned char>(text[start]))) ++start;
    while (end > start && is_ascii_punct(static_cast<unsigned char>(text[end - 1]))) --end;
    if (start == end) continue;
    std::string token(text.substr(start, end - start));
    for (auto& c : token) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    tokens.push_back(std::move(token));
  }
  return tokens;
}

bool Lexicon::set(std::string token, double score) {
  if (token.empty()) throw ValidationError("lexicon token is empty");
  if (!std::isfinite(score)) throw ValidationError("lexicon score for '" + token + "' is not finite");
  for (auto& c : token) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  auto [it, inserted] = entries_.insert_or_assign(std::move(token), score);
  return !inserted;
}

std::optional<double> Lexicon::score(const std::string& token) const {
  auto it = entries_.find(token);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

Lexicon Lexicon::negated() const {
  Lexicon out;
  for (const auto& [token, s] : entries_) out.entries_.emplace(token, -s);
  return out;
}

Lexicon parse_lexicon(std::istream& in, const std::string& source_name,
                      std::vector<std::string>* warnings) {
  Lexicon lexicon;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (is_blank(line) || line.front() == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(source_name, line_no, "expected token<TAB>score");
    std::string token = line.substr(0, tab);
    std::string score_text = line.substr(tab + 1);
    if (token.empty() || is_blank(token)) throw ParseError(source_name, line_no, "empty token");
    if (std::any_of(token.begin(), token.end(), [](unsigned char c) { return std::isspace(c); })) {
      throw ParseError(source_name, line_no, "token contains whitespace");
    }
    double score = 0.0;
    std::size_t consumed = 0;
    try {
      score = std::stod(score_text, &consumed);
    } catch (const std::exception&) {
      throw ParseError(source_name, line_no, "non-numeric score '" + score_text + "'");
    }
    if (consumed != score_text.size() || !std::isfinite(score)) {
      throw ParseError(source_name, line_no, "non-numeric score '" + score_text + "'");
    }
    if (lexicon.set(token, score) && warnings) {
      warnings->push_back(source_name + ":" + std::to_string(line_no) + ": duplicate token '" + token +
                          "' overrides earlier score");
    }
  }
  return lexicon;
}

Lexicon load_lexicon(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  auto in = open_input(path);
  return parse_lexicon(in, path.string(), warnings);
}

}  // namespace weaklab
