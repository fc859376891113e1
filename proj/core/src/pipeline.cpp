#include "weaklab/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "weaklab/metrics.hpp"
#include "weaklab/prompt_sources.hpp"
#include "weaklab/rule_sources.hpp"

namespace weaklab {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr const char* kStaleFile = "STALE";

// ---------------------------------------------------------------------------
// config

const std::map<std::string, SourceKind>& source_kinds() {
  static const std::map<std::string, SourceKind> kinds = {
      {"lexicon", SourceKind::kLexicon},     {"filler", SourceKind::kFiller},
      {"repetition", SourceKind::kRepetition}, {"soundex", SourceKind::kSoundex},
      {"fluent_default", SourceKind::kFluentDefault}, {"precomputed", SourceKind::kPrecomputed},
      {"prompt", SourceKind::kPrompt},
  };
  return kinds;
}

std::string default_group(SourceKind kind) {
  switch (kind) {
    case SourceKind::kPrompt:
      return "prompt";
    case SourceKind::kPrecomputed:
      return "external";
    default:
      return "rule";
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::vector<fs::path> path_list(const json& node, const fs::path& base) {
  std::vector<fs::path> out;
  if (node.is_string()) {
    out.push_back(resolve(base, node.get<std::string>()));
  } else {
    for (const auto& p : node) out.push_back(resolve(base, p.get<std::string>()));
  }
  return out;
}

TrainConfig parse_train_config(const json& node) {
  TrainConfig cfg;
  auto get = [&](const char* key, auto& field) {
    if (node.contains(key)) field = node[key].get<std::decay_t<decltype(field)>>();
  };
  get("feature_dim", cfg.feature_dim);
  get("hidden", cfg.hidden);
  get("learning_rate", cfg.learning_rate);
  get("init_epochs", cfg.init_epochs);
  get("rounds", cfg.rounds);
  get("epochs_per_round", cfg.epochs_per_round);
  get("confidence_threshold", cfg.confidence_threshold);
  get("confidence_weight", cfg.confidence_weight);
  get("contrastive_weight", cfg.contrastive_weight);
  get("margin", cfg.margin);
  get("sharpen_temperature", cfg.sharpen_temperature);
  get("balance_pseudo_labels", cfg.balance_pseudo_labels);
  get("batch_size", cfg.batch_size);
  return cfg;
}

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw ValidationError(what + " not found: " + path.string());
}

ClassBindings resolve_bindings(const SourceConfig& sc, const LabelSchema& schema) {
  ClassBindings b;
  auto bind = [&](const char* role, std::optional<std::size_t>& slot) {
    auto it = sc.bindings.find(role);
    if (it != sc.bindings.end()) {
      slot = schema.find(it->second);
      if (!slot) {
        throw ValidationError("source '" + sc.id + "': " + role + " class '" + it->second + "' is not in the schema");
      }
    } else {
      slot = schema.find(role);  // default: a class literally named after the role
    }
  };
  bind("positive", b.positive);
  bind("negative", b.negative);
  bind("fluent", b.fluent);
  bind("disfluent", b.disfluent);
  return b;
}

std::shared_ptr<const LMBackend> make_backend(const PipelineConfig& config) {
  switch (config.backend.kind) {
    case BackendConfig::Kind::kMock: {
      auto marker = config.backend.mask_marker.empty() ? std::string("<MASK>") : config.backend.mask_marker;
      return std::make_shared<MockBackend>(load_mock_spec(*config.backend.mock_spec), marker);
    }
    case BackendConfig::Kind::kRemote: {
      auto remote = config.backend.remote;
      if (!config.backend.mask_marker.empty()) remote.mask_marker = config.backend.mask_marker;
      return std::make_shared<RemoteBackend>(remote);
    }
    case BackendConfig::Kind::kNone:
      break;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// artifacts

struct Splits {
  LabelSchema schema;
  std::vector<std::pair<std::string, Dataset>> sets;  // train first

  const Dataset* find(const std::string& name) const {
    for (const auto& [n, d] : sets) {
      if (n == name) return &d;
    }
    return nullptr;
  }
};

Splits load_splits(const PipelineConfig& config) {
  auto schema = load_schema(config.schema_path);
  Splits s{schema, {}};
  s.sets.emplace_back("train", load_dataset(config.train_path, schema));
  if (config.valid_path) s.sets.emplace_back("valid", load_dataset(*config.valid_path, schema));
  if (config.test_path) s.sets.emplace_back("test", load_dataset(*config.test_path, schema));
  return s;
}

fs::path artifact(const PipelineConfig& config, const std::string& name) { return config.output_dir / name; }

fs::path require_artifact(const PipelineConfig& config, const std::string& name, const std::string& stage) {
  auto path = artifact(config, name);
  if (!fs::is_regular_file(path)) {
    throw MissingArtifactError("missing artifact " + path.string() + "; run the '" + stage + "' stage first");
  }
  return path;
}

ordered_json read_ordered_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return ordered_json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

void write_json(const fs::path& path, const ordered_json& doc) { write_text(path, doc.dump(2) + "\n"); }

LabelMatrix load_split_matrix(const PipelineConfig& config, const std::string& split, const Dataset& dataset) {
  auto matrix = load_matrix(require_artifact(config, "matrix_" + split + ".jsonl", "label"), dataset.schema());
  if (matrix.num_samples() != dataset.size()) {
    throw Error("matrix_" + split + ".jsonl is out of date with the dataset; rerun the 'label' stage");
  }
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (matrix.sample_ids()[i] != dataset[i].id) {
      throw Error("matrix_" + split + ".jsonl is out of date with the dataset; rerun the 'label' stage");
    }
  }
  return matrix;
}

std::vector<std::size_t> gold_rows(const Dataset& dataset) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].gold) rows.push_back(i);
  }
  return rows;
}

ordered_json optional_number(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

ordered_json report_json(const EvalReport& r, const LabelSchema& schema) {
  ordered_json doc;
  doc["macro_f1"] = r.macro_f1;
  doc["coverage"] = optional_number(r.coverage);
  doc["samples"] = r.samples;
  auto per_class = ordered_json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& m = r.per_class[c];
    per_class.push_back(ordered_json{{"class", schema.name(c)},
                                     {"precision", m.precision},
                                     {"recall", m.recall},
                                     {"f1", m.f1},
                                     {"support", m.support}});
  }
  doc["per_class"] = std::move(per_class);
  doc["confusion"] = r.confusion;
  doc["abstained"] = r.abstained;
  return doc;
}

std::string group_of(const PipelineConfig& config, const std::string& source_id) {
  for (const auto& s : config.sources) {
    if (s.id == source_id) return s.group;
  }
  return "";
}

std::vector<FeatureVector> build_features(const PipelineConfig& config, const Dataset& dataset,
                                          const TrainConfig& cfg,
                                          const std::unordered_map<std::string, FeatureVector>* embeddings) {
  std::vector<FeatureVector> out;
  out.reserve(dataset.size());
  for (const auto& u : dataset.utterances()) {
    if (embeddings) {
      auto it = embeddings->find(u.id);
      if (it == embeddings->end()) {
        throw ValidationError("embeddings file " + config.embeddings->string() + " has no row for '" + u.id + "'");
      }
      out.push_back(it->second);
    } else {
      out.push_back(featurize(normalize_text(u.text), cfg.feature_dim));
    }
  }
  return out;
}

struct TrainingInputs {
  TrainConfig cfg;
  std::optional<std::unordered_map<std::string, FeatureVector>> embeddings;
};

TrainingInputs training_inputs(const PipelineConfig& config) {
  TrainingInputs in{config.train, std::nullopt};
  in.cfg.seed = config.seed;
  if (config.embeddings) {
    in.embeddings = load_embeddings(*config.embeddings);
    if (in.embeddings->empty()) throw ValidationError("embeddings file is empty");
    in.cfg.feature_dim = in.embeddings->begin()->second.dim;
  }
  return in;
}

// ---------------------------------------------------------------------------
// stages

void stage_label(const PipelineConfig& config) {
  auto splits = load_splits(config);
  std::vector<std::string> warnings;
  auto sources = build_sources(config, splits.schema, &warnings);
  fs::create_directories(config.output_dir);
  for (const auto& [name, dataset] : splits.sets) {
    auto matrix = build_matrix(dataset, sources, config.label_threads);
    std::ostringstream out;
    write_matrix(out, matrix, splits.schema);
    write_text(artifact(config, "matrix_" + name + ".jsonl"), out.str());
  }
  if (!warnings.empty()) {
    ordered_json doc = warnings;
    write_json(artifact(config, "label_warnings.json"), doc);
  }
}

void stage_aggregate(const PipelineConfig& config) {
  auto splits = load_splits(config);
  const auto& schema = splits.schema;
  ordered_json stats_doc;
  stats_doc["task"] = schema.task_name();
  ordered_json split_docs;
  std::optional<LabelMatrix> train_matrix;
  std::optional<LabelMatrix> valid_matrix;
  for (const auto& [name, dataset] : splits.sets) {
    auto matrix = load_split_matrix(config, name, dataset);
    auto gold = dataset.gold_labels();
    bool has_gold = std::any_of(gold.begin(), gold.end(), [](const auto& g) { return g.has_value(); });
    auto stats = source_stats(matrix, has_gold ? std::span(gold) : std::span<const std::optional<std::size_t>>(), schema);
    std::vector<std::optional<std::size_t>> majority;
    for (std::size_t i = 0; i < matrix.num_samples(); ++i) majority.push_back(majority_vote(matrix.row(i), schema));
    stats.push_back(label_stats("majority", majority, has_gold ? std::span(gold) : std::span<const std::optional<std::size_t>>(), schema));

    ordered_json doc;
    doc["samples"] = dataset.size();
    doc["gold_samples"] = gold_rows(dataset).size();
    auto rows = ordered_json::array();
    for (const auto& s : stats) {
      ordered_json row;
      row["source"] = s.source_id;
      row["group"] = s.source_id == "majority" ? std::string("aggregate") : group_of(config, s.source_id);
      row["coverage"] = s.coverage;
      row["covered"] = s.covered;
      row["covered_macro_f1"] = optional_number(s.covered_macro_f1);
      rows.push_back(std::move(row));
    }
    doc["sources"] = std::move(rows);
    split_docs[name] = std::move(doc);
    if (name == "train") train_matrix = std::move(matrix);
    if (name == "valid") valid_matrix = std::move(matrix);
  }
  stats_doc["splits"] = std::move(split_docs);

  AggregationMode mode = AggregationMode::kMajority;
  std::size_t source = 0;
  std::string mode_name = "majority";
  switch (config.aggregation.mode) {
    case AggregationConfig::Mode::kMajority:
      break;
    case AggregationConfig::Mode::kSoft:
      mode = AggregationMode::kSoft;
      mode_name = "soft";
      break;
    case AggregationConfig::Mode::kSource:
      mode = AggregationMode::kSource;
      mode_name = "source";
      source = *train_matrix->source_index(config.aggregation.source);
      break;
    case AggregationConfig::Mode::kBestValidSource: {
      mode = AggregationMode::kSource;
      mode_name = "best_valid_source";
      const Dataset* valid = splits.find("valid");
      if (!valid || !valid_matrix) throw ValidationError("best_valid_source needs a valid split");
      auto rows = gold_rows(*valid);
      if (rows.empty()) throw ValidationError("best_valid_source needs gold labels on the valid split");
      std::vector<std::size_t> gold;
      for (auto r : rows) gold.push_back(*(*valid)[r].gold);
      double best = -1.0;
      for (std::size_t j = 0; j < valid_matrix->num_sources(); ++j) {
        std::vector<std::optional<std::size_t>> votes;
        for (auto r : rows) votes.push_back(valid_matrix->at(r, j).label);
        double f1 = rule_baseline_eval(votes, gold, schema).macro_f1;
        if (f1 > best) {
          best = f1;
          source = j;
        }
      }
      break;
    }
  }
  auto labels = aggregate(*train_matrix, schema, mode, source);
  std::string body;
  std::size_t covered = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ordered_json rec;
    rec["id"] = train_matrix->sample_ids()[i];
    rec["hard"] = labels[i].hard ? ordered_json(schema.name(*labels[i].hard)) : ordered_json(nullptr);
    rec["soft"] = labels[i].soft ? ordered_json(*labels[i].soft) : ordered_json(nullptr);
    covered += labels[i].soft.has_value();
    body += rec.dump() + "\n";
  }
  write_text(artifact(config, "labels_train.jsonl"), body);
  ordered_json training;
  training["mode"] = mode_name;
  training["source"] = mode == AggregationMode::kSource ? ordered_json(train_matrix->source_ids()[source])
                                                         : ordered_json(nullptr);
  training["covered"] = covered;
  training["coverage"] = labels.empty() ? 0.0 : static_cast<double>(covered) / static_cast<double>(labels.size());
  stats_doc["training_labels"] = std::move(training);
  write_json(artifact(config, "source_stats.json"), stats_doc);
}

void stage_train(const PipelineConfig& config) {
  auto schema = load_schema(config.schema_path);
  auto train = load_dataset(config.train_path, schema);
  auto labels_path = require_artifact(config, "labels_train.jsonl", "aggregate");
  std::vector<std::optional<std::vector<double>>> targets;
  {
    std::ifstream in(labels_path);
    std::string line;
    std::size_t i = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto rec = json::parse(line);
      if (i >= train.size() || rec.at("id").get<std::string>() != train[i].id) {
        throw Error("labels_train.jsonl is out of date with the train split; rerun 'aggregate'");
      }
      if (rec.at("soft").is_null()) {
        targets.emplace_back();
      } else {
        targets.emplace_back(rec["soft"].get<std::vector<double>>());
      }
      ++i;
    }
    if (i != train.size()) throw Error("labels_train.jsonl is out of date with the train split; rerun 'aggregate'");
  }
  auto inputs = training_inputs(config);
  auto features = build_features(config, train, inputs.cfg, inputs.embeddings ? &*inputs.embeddings : nullptr);

  double init_loss = 0.0;
  auto init = init_train(features, targets, schema.size(), inputs.cfg, &init_loss);
  save_params(artifact(config, "params_init.bin"), init, inputs.cfg);
  auto init_checksum = init.checksum();
  auto [params, report] = self_train(std::move(init), features, inputs.cfg);
  report.init_loss = init_loss;
  save_params(artifact(config, "params.bin"), params, inputs.cfg);

  ordered_json doc;
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(inputs.cfg.hash()));
  doc["config_hash"] = hash;
  doc["seed"] = inputs.cfg.seed;
  doc["train_samples"] = train.size();
  doc["covered_samples"] = std::count_if(targets.begin(), targets.end(), [](const auto& t) { return t.has_value(); });
  doc["init_loss"] = report.init_loss;
  doc["init_checksum"] = init_checksum;
  auto rounds = ordered_json::array();
  for (const auto& r : report.rounds) {
    rounds.push_back(ordered_json{{"round", r.round},
                                  {"confident", r.confident},
                                  {"mean_confidence", r.mean_confidence},
                                  {"train_loss", r.train_loss}});
  }
  doc["rounds"] = std::move(rounds);
  doc["stopped_at_round"] = report.stopped_at_round ? ordered_json(*report.stopped_at_round) : ordered_json(nullptr);
  doc["checksum"] = report.checksum;
  write_json(artifact(config, "train_report.json"), doc);
}

void stage_eval(const PipelineConfig& config) {
  auto splits = load_splits(config);
  const auto& schema = splits.schema;
  auto inputs = training_inputs(config);
  auto init = load_params(require_artifact(config, "params_init.bin", "train"), inputs.cfg);
  auto params = load_params(require_artifact(config, "params.bin", "train"), inputs.cfg);
  const auto* embeddings = inputs.embeddings ? &*inputs.embeddings : nullptr;

  ordered_json doc;
  doc["task"] = schema.task_name();
  for (const char* name : {"valid", "test"}) {
    const Dataset* dataset = splits.find(name);
    if (!dataset) continue;
    auto rows = gold_rows(*dataset);
    if (rows.empty()) continue;
    auto matrix = load_split_matrix(config, name, *dataset);
    std::vector<std::size_t> gold;
    for (auto r : rows) gold.push_back(*(*dataset)[r].gold);

    ordered_json split;
    split["samples"] = rows.size();
    ordered_json sources;
    for (std::size_t j = 0; j < matrix.num_sources(); ++j) {
      std::vector<std::optional<std::size_t>> votes;
      for (auto r : rows) votes.push_back(matrix.at(r, j).label);
      auto entry = report_json(rule_baseline_eval(votes, gold, schema), schema);
      entry["group"] = group_of(config, matrix.source_ids()[j]);
      sources[matrix.source_ids()[j]] = std::move(entry);
    }
    split["sources"] = std::move(sources);
    std::vector<std::optional<std::size_t>> majority;
    for (auto r : rows) majority.push_back(majority_vote(matrix.row(r), schema));
    split["majority"] = report_json(rule_baseline_eval(majority, gold, schema), schema);

    auto features = build_features(config, *dataset, inputs.cfg, embeddings);
    auto predict = [&](const ClassifierParams& p) {
      std::vector<std::size_t> preds;
      for (auto r : rows) {
        auto proba = predict_proba(p, features[r]);
        preds.push_back(static_cast<std::size_t>(std::max_element(proba.begin(), proba.end()) - proba.begin()));
      }
      return macro_f1(preds, gold, schema);
    };
    split["wsm_init"] = report_json(predict(init), schema);
    split["wsm"] = report_json(predict(params), schema);
    doc[name] = std::move(split);
  }
  write_json(artifact(config, "eval_report.json"), doc);
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
  return buf;
}

std::string mean_sd(const std::vector<double>& values) {
  if (values.empty()) return "-";
  double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() == 1) return pct(mean);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return pct(mean) + " ± " + pct(std::sqrt(ss / static_cast<double>(values.size() - 1)));
}

void stage_report(const PipelineConfig& config) {
  auto stats = read_ordered_json(require_artifact(config, "source_stats.json", "aggregate"));
  auto eval = read_ordered_json(require_artifact(config, "eval_report.json", "eval"));
  auto train_path = artifact(config, "train_report.json");
  std::optional<ordered_json> train;
  if (fs::is_regular_file(train_path)) train = read_ordered_json(train_path);

  std::ostringstream md;
  md << "# weaklab report: " << stats["task"].get<std::string>() << "\n\n";

  // Weak-source table over the split that was weakly labelled.
  const auto& train_stats = stats["splits"]["train"];
  md << "## Weak sources (train split, " << train_stats["samples"].get<std::size_t>() << " samples, "
     << train_stats["gold_samples"].get<std::size_t>() << " with gold)\n\n";
  md << "| Source | Group | Coverage | Covered Macro-F1 |\n|---|---|---:|---:|\n";
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
  std::vector<std::string> group_order;
  for (const auto& row : train_stats["sources"]) {
    auto group = row["group"].get<std::string>();
    auto f1 = row["covered_macro_f1"];
    md << "| " << row["source"].get<std::string>() << " | " << group << " | " << pct(row["coverage"].get<double>())
       << " | " << (f1.is_null() ? std::string("-") : pct(f1.get<double>())) << " |\n";
    if (group == "aggregate") continue;
    if (!groups.count(group)) group_order.push_back(group);
    auto& g = groups[group];
    g.first.push_back(row["coverage"].get<double>());
    if (!f1.is_null()) g.second.push_back(f1.get<double>());
  }
  for (const auto& group : group_order) {
    md << "| mean (" << group << ") | " << group << " | " << mean_sd(groups[group].first) << " | "
       << mean_sd(groups[group].second) << " |\n";
  }
  const auto& training = stats["training_labels"];
  md << "\nTraining labels: " << training["mode"].get<std::string>();
  if (!training["source"].is_null()) md << " (" << training["source"].get<std::string>() << ")";
  md << ", coverage " << pct(training["coverage"].get<double>()) << "%\n\n";

  // Final results: abstentions count as false negatives for weak sources.
  std::vector<std::string> splits;
  for (const char* name : {"valid", "test"}) {
    if (eval.contains(name)) splits.push_back(name);
  }
  md << "## Final results (Macro-F1)\n\n| Model |";
  for (const auto& s : splits) md << " " << s << " |";
  md << "\n|---|";
  for (std::size_t i = 0; i < splits.size(); ++i) md << "---:|";
  md << "\n";
  auto cell = [](const ordered_json& r) { return pct(r["macro_f1"].get<double>()); };
  if (!splits.empty()) {
    std::vector<std::string> group_names;
    for (const auto& [id, entry] : eval[splits.front()]["sources"].items()) {
      md << "| " << id << " |";
      for (const auto& s : splits) md << " " << cell(eval[s]["sources"][id]) << " |";
      md << "\n";
      auto g = entry["group"].get<std::string>();
      if (std::find(group_names.begin(), group_names.end(), g) == group_names.end()) group_names.push_back(g);
    }
    for (const auto& g : group_names) {
      md << "| mean (" << g << ") |";
      for (const auto& s : splits) {
        std::vector<double> values;
        for (const auto& [id, entry] : eval[s]["sources"].items()) {
          if (entry["group"].get<std::string>() == g) values.push_back(entry["macro_f1"].get<double>());
        }
        md << " " << mean_sd(values) << " |";
      }
      md << "\n";
    }
    for (const auto& [key, label] : std::vector<std::pair<std::string, std::string>>{
             {"majority", "majority vote"}, {"wsm_init", "WSM (init)"}, {"wsm", "WSM"}}) {
      md << "| " << label << " |";
      for (const auto& s : splits) md << " " << cell(eval[s][key]) << " |";
      md << "\n";
    }
  }
  if (train) {
    md << "\n## Self-training\n\n| Round | Confident | Mean confidence | Loss |\n|---:|---:|---:|---:|\n";
    for (const auto& r : (*train)["rounds"]) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "| %zu | %zu | %.4f | %.4f |\n", r["round"].get<std::size_t>(),
                    r["confident"].get<std::size_t>(), r["mean_confidence"].get<double>(), r["train_loss"].get<double>());
      md << buf;
    }
    if (!(*train)["stopped_at_round"].is_null()) {
      md << "\nStopped early at round " << (*train)["stopped_at_round"].get<std::size_t>()
         << " (no confident samples).\n";
    }
    md << "\nParams checksum: " << (*train)["checksum"].get<std::string>() << "\n";
  }
  write_text(artifact(config, "summary.md"), md.str());
}

}  // namespace

// ---------------------------------------------------------------------------

PipelineConfig load_config(const fs::path& path) {
  json doc;
  {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config " + path.string());
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ParseError(path.string(), 0, e.what());
    }
  }
  const fs::path base = path.parent_path().empty() ? fs::path(".") : path.parent_path();
  PipelineConfig config;
  try {
    config.schema_path = resolve(base, doc.at("schema").get<std::string>());
    const auto& data = doc.at("data");
    config.train_path = resolve(base, data.at("train").get<std::string>());
    if (data.contains("valid")) config.valid_path = resolve(base, data["valid"].get<std::string>());
    if (data.contains("test")) config.test_path = resolve(base, data["test"].get<std::string>());

    for (const auto& node : doc.at("sources")) {
      SourceConfig sc;
      sc.id = node.at("id").get<std::string>();
      auto type = node.at("type").get<std::string>();
      auto kind = source_kinds().find(type);
      if (kind == source_kinds().end()) throw ValidationError("source '" + sc.id + "': unknown type '" + type + "'");
      sc.kind = kind->second;
      sc.group = node.value("group", default_group(sc.kind));
      if (node.contains("lexicon")) sc.lexicons = path_list(node["lexicon"], base);
      sc.theta = node.value("theta", 0.0);
      if (node.contains("fillers")) sc.fillers = resolve(base, node["fillers"].get<std::string>());
      sc.max_ngram = node.value("max_ngram", std::size_t{3});
      for (const char* role : {"positive", "negative", "fluent", "disfluent"}) {
        if (node.contains(role)) sc.bindings[role] = node[role].get<std::string>();
      }
      if (node.contains("confidence")) sc.confidence = node["confidence"].get<double>();
      if (node.contains("votes")) sc.votes = resolve(base, node["votes"].get<std::string>());
      if (node.contains("templates")) sc.templates = path_list(node["templates"], base);
      sc.separator = node.value("separator", std::string(" "));
      config.sources.push_back(std::move(sc));
    }

    if (doc.contains("backend")) {
      const auto& b = doc["backend"];
      auto kind = b.at("kind").get<std::string>();
      config.backend.mask_marker = b.value("mask_marker", std::string());
      if (kind == "mock") {
        config.backend.kind = BackendConfig::Kind::kMock;
        config.backend.mock_spec = resolve(base, b.at("spec").get<std::string>());
      } else if (kind == "remote") {
        config.backend.kind = BackendConfig::Kind::kRemote;
        auto& r = config.backend.remote;
        r.endpoint = b.value("endpoint", std::string());
        r.timeout = std::chrono::milliseconds(b.value("timeout_ms", 30000));
        r.retry.max_retries = b.value("max_retries", std::size_t{3});
        r.retry.initial_backoff = std::chrono::milliseconds(b.value("backoff_ms", 100));
        r.capabilities.entailment = b.value("entailment", true);
        r.capabilities.mask_fill = b.value("mask_fill", true);
        config.label_threads = b.value("max_in_flight", std::size_t{4});
      } else {
        throw ValidationError("backend kind must be \"mock\" or \"remote\", got \"" + kind + "\"");
      }
    }
    if (const char* endpoint = std::getenv("WEAKLAB_BACKEND_ENDPOINT"); endpoint && *endpoint &&
                                                                       config.backend.kind == BackendConfig::Kind::kRemote) {
      config.backend.remote.endpoint = endpoint;
    }

    if (doc.contains("aggregation")) {
      const auto& a = doc["aggregation"];
      auto mode = a.value("mode", std::string("majority"));
      if (mode == "majority") {
        config.aggregation.mode = AggregationConfig::Mode::kMajority;
      } else if (mode == "soft") {
        config.aggregation.mode = AggregationConfig::Mode::kSoft;
      } else if (mode == "source") {
        config.aggregation.mode = AggregationConfig::Mode::kSource;
        config.aggregation.source = a.at("source").get<std::string>();
      } else if (mode == "best_valid_source") {
        config.aggregation.mode = AggregationConfig::Mode::kBestValidSource;
      } else {
        throw ValidationError("unknown aggregation mode '" + mode + "'");
      }
    }
    if (doc.contains("train")) {
      config.train = parse_train_config(doc["train"]);
      if (doc["train"].contains("embeddings")) {
        config.embeddings = resolve(base, doc["train"]["embeddings"].get<std::string>());
      }
    }
    if (doc.contains("label_threads")) config.label_threads = doc["label_threads"].get<std::size_t>();
    config.output_dir = resolve(base, doc.value("output_dir", std::string("out")));
    config.seed = doc.value("seed", std::uint64_t{0});
    config.train.seed = config.seed;
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return config;
}

void set_seed(PipelineConfig& config, std::uint64_t seed) {
  config.seed = seed;
  config.train.seed = seed;
}

void validate_config(const PipelineConfig& config) {
  require_file(config.schema_path, "schema");
  auto schema = load_schema(config.schema_path);
  require_file(config.train_path, "train split");
  if (config.valid_path) require_file(*config.valid_path, "valid split");
  if (config.test_path) require_file(*config.test_path, "test split");
  if (config.sources.empty()) throw ValidationError("config lists no sources");
  if (config.label_threads < 1) throw ValidationError("label_threads must be >= 1");
  std::unordered_set<std::string> ids;
  bool needs_backend = false;
  for (const auto& sc : config.sources) {
    if (sc.id.empty()) throw ValidationError("source with empty id");
    if (sc.id == "majority") throw ValidationError("source id 'majority' is reserved");
    if (!ids.insert(sc.id).second) throw ValidationError("duplicate source id '" + sc.id + "'");
    auto bindings = resolve_bindings(sc, schema);
    switch (sc.kind) {
      case SourceKind::kLexicon:
        if (sc.lexicons.empty()) throw ValidationError("source '" + sc.id + "': no lexicon");
        for (const auto& p : sc.lexicons) require_file(p, "lexicon for source '" + sc.id + "'");
        if (!(sc.theta >= 0.0)) throw ValidationError("source '" + sc.id + "': theta must be >= 0");
        if (!bindings.positive || !bindings.negative) {
          throw ValidationError("source '" + sc.id + "': needs positive and negative class bindings");
        }
        break;
      case SourceKind::kFiller:
      case SourceKind::kRepetition:
      case SourceKind::kSoundex:
      case SourceKind::kFluentDefault:
        if (sc.fillers) require_file(*sc.fillers, "filler set for source '" + sc.id + "'");
        if (sc.max_ngram < 1) throw ValidationError("source '" + sc.id + "': max_ngram must be >= 1");
        if (sc.kind == SourceKind::kFluentDefault ? !bindings.fluent : !bindings.disfluent) {
          throw ValidationError("source '" + sc.id + "': missing class binding");
        }
        break;
      case SourceKind::kPrecomputed:
        if (!sc.votes) throw ValidationError("source '" + sc.id + "': no votes file");
        require_file(*sc.votes, "votes for source '" + sc.id + "'");
        break;
      case SourceKind::kPrompt:
        if (sc.templates.empty()) throw ValidationError("source '" + sc.id + "': no templates");
        for (const auto& p : sc.templates) require_file(p, "template for source '" + sc.id + "'");
        needs_backend = true;
        break;
    }
    if (sc.confidence && !(*sc.confidence > 0.0 && *sc.confidence <= 1.0)) {
      throw ValidationError("source '" + sc.id + "': confidence must be in (0, 1]");
    }
  }
  if (needs_backend) {
    switch (config.backend.kind) {
      case BackendConfig::Kind::kNone:
        throw ValidationError("prompt sources need a backend");
      case BackendConfig::Kind::kMock:
        require_file(*config.backend.mock_spec, "mock backend spec");
        break;
      case BackendConfig::Kind::kRemote:
        if (config.backend.remote.endpoint.empty()) {
          throw ValidationError("remote backend needs an endpoint (config or WEAKLAB_BACKEND_ENDPOINT)");
        }
        break;
    }
  }
  if (config.aggregation.mode == AggregationConfig::Mode::kSource && !ids.count(config.aggregation.source)) {
    throw ValidationError("aggregation source '" + config.aggregation.source + "' is not a configured source");
  }
  if (config.aggregation.mode == AggregationConfig::Mode::kBestValidSource && !config.valid_path) {
    throw ValidationError("best_valid_source aggregation needs a valid split");
  }
  if (config.embeddings) require_file(*config.embeddings, "embeddings");
  config.train.validate();
}

std::vector<std::shared_ptr<const WeakSource>> build_sources(const PipelineConfig& config, const LabelSchema& schema,
                                                             std::vector<std::string>* warnings) {
  std::vector<std::shared_ptr<const WeakSource>> out;
  std::shared_ptr<const LMBackend> backend;
  for (const auto& sc : config.sources) {
    auto bindings = resolve_bindings(sc, schema);
    switch (sc.kind) {
      case SourceKind::kLexicon: {
        Lexicon merged;
        for (const auto& p : sc.lexicons) {
          auto lex = load_lexicon(p, warnings);
          for (const auto& [token, score] : lex.entries()) {
            if (merged.set(token, score) && warnings) {
              warnings->push_back(p.string() + ": token '" + token + "' overrides an earlier lexicon");
            }
          }
        }
        out.push_back(std::make_shared<LexiconSource>(sc.id, std::move(merged), sc.theta, bindings));
        break;
      }
      case SourceKind::kFiller:
      case SourceKind::kRepetition:
      case SourceKind::kSoundex:
      case SourceKind::kFluentDefault: {
        RuleSourceConfig rc;
        rc.theta = sc.theta;
        rc.max_ngram = sc.max_ngram;
        if (sc.fillers) rc.fillers = load_filler_set(*sc.fillers);
        rc.bindings = bindings;
        DisfluencyRule rule = DisfluencyRule::kFiller;
        if (sc.kind == SourceKind::kRepetition) rule = DisfluencyRule::kRepetition;
        if (sc.kind == SourceKind::kSoundex) rule = DisfluencyRule::kSoundex;
        if (sc.kind == SourceKind::kFluentDefault) rule = DisfluencyRule::kFluentDefault;
        if (sc.confidence) {
          if (rule == DisfluencyRule::kSoundex) {
            rc.confidences.soundex = *sc.confidence;
          } else if (rule == DisfluencyRule::kFluentDefault) {
            rc.confidences.fluent = *sc.confidence;
          } else {
            rc.confidences.hard = *sc.confidence;
          }
        }
        out.push_back(std::make_shared<DisfluencySource>(sc.id, rule, std::move(rc)));
        break;
      }
      case SourceKind::kPrecomputed:
        out.push_back(std::make_shared<PrecomputedSource>(sc.id, load_precomputed_votes(*sc.votes, schema, sc.id)));
        break;
      case SourceKind::kPrompt: {
        if (!backend) backend = make_backend(config);
        if (!backend) throw ValidationError("source '" + sc.id + "' needs a backend");
        std::vector<EnsembleMember> members;
        for (const auto& p : sc.templates) {
          auto spec = load_prompt_spec(p, schema);
          members.push_back({std::move(spec.prompt), std::move(spec.demos)});
        }
        out.push_back(std::make_shared<PromptSource>(sc.id, std::move(members), backend, sc.separator));
        break;
      }
    }
  }
  return out;
}

void run_stage(const std::string& stage, const PipelineConfig& config) {
  const auto stale = config.output_dir / kStaleFile;
  try {
    if (stage == "label") {
      stage_label(config);
    } else if (stage == "aggregate") {
      stage_aggregate(config);
    } else if (stage == "train") {
      stage_train(config);
    } else if (stage == "eval") {
      stage_eval(config);
    } else if (stage == "report") {
      stage_report(config);
    } else {
      throw ValidationError("unknown stage '" + stage + "'");
    }
  } catch (const std::exception& e) {
    if (fs::is_directory(config.output_dir)) {
      std::ofstream(stale, std::ios::trunc) << "stage: " << stage << "\ncause: " << e.what()
                                           << "\nArtifacts from this stage onward are stale.\n";
    }
    throw;
  }
  // A successful rerun of the failed stage clears the marker.
  if (fs::is_regular_file(stale)) {
    std::ifstream in(stale);
    std::string first;
    std::getline(in, first);
    in.close();
    if (first == "stage: " + stage) fs::remove(stale);
  }
}

void run_pipeline(const PipelineConfig& config) {
  fs::create_directories(config.output_dir);
  fs::remove(config.output_dir / kStaleFile);
  for (const char* stage : kStages) {
    try {
      run_stage(stage, config);
    } catch (const std::exception& e) {
      throw StageError(stage, e.what());
    }
  }
}

}  // namespace weaklab
