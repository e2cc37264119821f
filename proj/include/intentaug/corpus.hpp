#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "intentaug/error.hpp"
#include "intentaug/random.hpp"
#include "intentaug/util.hpp"

namespace intentaug {

/// Intent class name as it appears in the corpus.
struct IntentLabel {
  std::string name;

  IntentLabel() = default;
  explicit IntentLabel(std::string n) : name(std::move(n)) {}

  auto operator<=>(const IntentLabel&) const = default;
};

inline void to_json(nlohmann::json& j, const IntentLabel& l) { j = l.name; }
inline void from_json(const nlohmann::json& j, IntentLabel& l) { l.name = j.get<std::string>(); }

struct LabeledUtterance {
  std::string id;
  std::string text;
  IntentLabel label;

  bool operator==(const LabeledUtterance&) const = default;
};

enum class CorpusFormat { csv, jsonl };

inline CorpusFormat parse_corpus_format(std::string_view s) {
  if (s == "csv") return CorpusFormat::csv;
  if (s == "jsonl") return CorpusFormat::jsonl;
  throw ConfigError("unknown corpus format '" + std::string(s) + "' (expected csv or jsonl)");
}

/// Optional explicit label space, with per-label prompt metadata.
///
/// JSON shape: {"labels": [...], "domain": "...", "domains": {label: domain},
/// "display_names": {label: name}}; every key except "labels" is optional.
struct LabelManifest {
  std::vector<IntentLabel> labels;
  std::string default_domain;
  std::map<IntentLabel, std::string> domains;
  std::map<IntentLabel, std::string> display_names;
};

inline LabelManifest parse_label_manifest(const nlohmann::json& j) {
  LabelManifest m;
  try {
    if (j.contains("labels")) {
      for (const auto& l : j.at("labels")) m.labels.emplace_back(l.get<std::string>());
    }
    m.default_domain = j.value("domain", std::string{});
    if (j.contains("domains")) {
      for (const auto& [k, v] : j.at("domains").items()) m.domains[IntentLabel{k}] = v.get<std::string>();
    }
    if (j.contains("display_names")) {
      for (const auto& [k, v] : j.at("display_names").items()) m.display_names[IntentLabel{k}] = v.get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed label manifest: ") + e.what());
  }
  return m;
}

inline LabelManifest load_label_manifest(const std::filesystem::path& path) {
  try {
    return parse_label_manifest(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("label manifest " + path.string() + ": " + e.what());
  }
}

class Corpus {
 public:
  Corpus(std::string name, std::vector<LabeledUtterance> utterances, const LabelManifest* manifest = nullptr)
      : name_(std::move(name)), utterances_(std::move(utterances)) {
    std::set<std::string> ids;
    for (std::size_t i = 0; i < utterances_.size(); ++i) {
      const auto& u = utterances_[i];
      if (trim(u.text).empty()) throw DataError("utterance '" + u.id + "' has empty text");
      if (u.id.empty()) throw DataError("utterance #" + std::to_string(i) + " has an empty id");
      if (!ids.insert(u.id).second) throw DataError("duplicate utterance id '" + u.id + "'");
    }

    if (manifest != nullptr && !manifest->labels.empty()) {
      std::set<IntentLabel> seen;
      for (const auto& l : manifest->labels) {
        if (!seen.insert(l).second) throw DataError("duplicate label in manifest: '" + l.name + "'");
        label_space_.push_back(l);
      }
      for (const auto& u : utterances_) {
        if (!seen.contains(u.label)) {
          throw DataError("unknown label '" + u.label.name + "' for utterance '" + u.id + "'");
        }
      }
    } else {
      std::set<IntentLabel> seen;
      for (const auto& u : utterances_) seen.insert(u.label);
      label_space_.assign(seen.begin(), seen.end());
    }
    if (label_space_.size() < 2) {
      throw DataError("corpus '" + name_ + "' needs at least 2 labels, found " + std::to_string(label_space_.size()));
    }
    for (std::size_t i = 0; i < label_space_.size(); ++i) label_index_[label_space_[i].name] = i;

    members_.resize(label_space_.size());
    for (std::size_t i = 0; i < utterances_.size(); ++i) {
      members_[label_index_.at(utterances_[i].label.name)].push_back(i);
      id_index_[utterances_[i].id] = i;
    }

    const std::string fallback = manifest && !manifest->default_domain.empty() ? manifest->default_domain : name_;
    for (const auto& l : label_space_) {
      std::string domain = fallback;
      std::string display = l.name;
      if (manifest != nullptr) {
        if (auto it = manifest->domains.find(l); it != manifest->domains.end()) domain = it->second;
        if (auto it = manifest->display_names.find(l); it != manifest->display_names.end()) display = it->second;
      }
      domains_.push_back(std::move(domain));
      display_names_.push_back(std::move(display));
    }
  }

  const std::string& name() const noexcept { return name_; }
  const std::vector<LabeledUtterance>& utterances() const noexcept { return utterances_; }
  const std::vector<IntentLabel>& label_space() const noexcept { return label_space_; }
  std::size_t num_labels() const noexcept { return label_space_.size(); }

  std::optional<std::size_t> label_index(const IntentLabel& label) const {
    if (auto it = label_index_.find(label.name); it != label_index_.end()) return it->second;
    return std::nullopt;
  }
  bool has_label(const IntentLabel& label) const { return label_index_.contains(label.name); }

  /// Positions (into utterances()) of the members of class `label_idx`, in corpus order.
  const std::vector<std::size_t>& members(std::size_t label_idx) const { return members_.at(label_idx); }

  const std::string& domain(std::size_t label_idx) const { return domains_.at(label_idx); }
  const std::string& display_name(std::size_t label_idx) const { return display_names_.at(label_idx); }

  const LabeledUtterance& find(const std::string& id) const {
    auto it = id_index_.find(id);
    if (it == id_index_.end()) throw DataError("unknown utterance id '" + id + "' in corpus '" + name_ + "'");
    return utterances_[it->second];
  }
  bool contains_id(const std::string& id) const { return id_index_.contains(id); }

  bool operator==(const Corpus& o) const {
    return name_ == o.name_ && utterances_ == o.utterances_ && label_space_ == o.label_space_ &&
           domains_ == o.domains_ && display_names_ == o.display_names_;
  }

 private:
  std::string name_;
  std::vector<LabeledUtterance> utterances_;
  std::vector<IntentLabel> label_space_;
  std::vector<std::string> domains_;
  std::vector<std::string> display_names_;
  std::unordered_map<std::string, std::size_t> label_index_;
  std::unordered_map<std::string, std::size_t> id_index_;
  std::vector<std::vector<std::size_t>> members_;
};

namespace detail {

inline std::vector<LabeledUtterance> read_csv_utterances(std::string_view text) {
  const auto records = parse_csv(text);
  if (records.empty()) throw DataError("csv corpus is empty (expected header id,text,label)");
  const auto& header = records.front().fields;
  if (header != std::vector<std::string>{"id", "text", "label"}) {
    throw DataError("line 1: expected header 'id,text,label'");
  }
  std::vector<LabeledUtterance> out;
  out.reserve(records.size() - 1);
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.fields.size() != 3) {
      throw DataError("line " + std::to_string(rec.line) + ": expected 3 fields, found " +
                      std::to_string(rec.fields.size()));
    }
    if (trim(rec.fields[1]).empty()) throw DataError("line " + std::to_string(rec.line) + ": empty text");
    if (rec.fields[2].empty()) throw DataError("line " + std::to_string(rec.line) + ": empty label");
    out.push_back({rec.fields[0], rec.fields[1], IntentLabel{rec.fields[2]}});
  }
  return out;
}

inline std::vector<LabeledUtterance> read_jsonl_utterances(std::string_view text) {
  std::vector<LabeledUtterance> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = trim(text.substr(pos, nl - pos));
    ++line_no;
    pos = nl + 1;
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + "malformed record (" + e.what() + ")");
    }
    if (!j.is_object()) throw DataError(where + "record is not an object");
    for (const char* key : {"id", "text", "label"}) {
      if (!j.contains(key) || !j.at(key).is_string()) {
        throw DataError(where + "missing string field '" + key + "'");
      }
    }
    auto t = j.at("text").get<std::string>();
    if (trim(t).empty()) throw DataError(where + "empty text");
    out.push_back({j.at("id").get<std::string>(), std::move(t), IntentLabel{j.at("label").get<std::string>()}});
  }
  return out;
}

}  // namespace detail

inline Corpus parse_corpus(std::string_view text, CorpusFormat format, std::string name,
                           const LabelManifest* manifest = nullptr) {
  auto utts = format == CorpusFormat::csv ? detail::read_csv_utterances(text) : detail::read_jsonl_utterances(text);
  return Corpus(std::move(name), std::move(utts), manifest);
}

/// Loads and validates a corpus file. The corpus name defaults to the file stem.
inline Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format,
                          const LabelManifest* manifest = nullptr, std::string name = {}) {
  if (name.empty()) name = path.stem().string();
  try {
    return parse_corpus(read_file(path), format, std::move(name), manifest);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline std::string serialize_corpus(const Corpus& corpus, CorpusFormat format) {
  std::string out;
  if (format == CorpusFormat::csv) {
    out = csv_row({"id", "text", "label"});
    for (const auto& u : corpus.utterances()) out += csv_row({u.id, u.text, u.label.name});
  } else {
    for (const auto& u : corpus.utterances()) {
      out += nlohmann::json{{"id", u.id}, {"text", u.text}, {"label", u.label.name}}.dump();
      out += '\n';
    }
  }
  return out;
}

/// n-shot ICL selection for every class, reproducible from (seed, round).
struct ShotSample {
  std::string corpus_name;
  std::size_t n = 0;
  std::uint64_t round = 0;
  std::uint64_t seed = 0;
  std::map<IntentLabel, std::vector<std::string>> picks;

  bool operator==(const ShotSample&) const = default;
};

inline nlohmann::json to_manifest(const ShotSample& s) {
  nlohmann::json picks = nlohmann::json::object();
  for (const auto& [label, ids] : s.picks) picks[label.name] = ids;
  return {{"corpus", s.corpus_name}, {"n", s.n}, {"round", s.round}, {"seed", s.seed}, {"picks", picks}};
}

inline ShotSample shot_sample_from_manifest(const nlohmann::json& j) {
  ShotSample s;
  s.corpus_name = j.at("corpus").get<std::string>();
  s.n = j.at("n").get<std::size_t>();
  s.round = j.at("round").get<std::uint64_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& [k, v] : j.at("picks").items()) s.picks[IntentLabel{k}] = v.get<std::vector<std::string>>();
  return s;
}

/// Draws n ICL utterances per class without replacement.
///
/// Each class gets its own mt19937_64 stream seeded from (seed, round, class
/// index), so a class's picks do not depend on the other classes.
inline ShotSample sample_shots(const Corpus& corpus, std::size_t n, std::uint64_t round, std::uint64_t seed) {
  if (n == 0) throw DataError("n-shot must be positive");
  ShotSample sample{corpus.name(), n, round, seed, {}};
  for (std::size_t c = 0; c < corpus.num_labels(); ++c) {
    const auto& label = corpus.label_space()[c];
    const auto& members = corpus.members(c);
    if (members.size() < n) {
      throw DataError("class '" + label.name + "' has " + std::to_string(members.size()) +
                      " utterances, fewer than n=" + std::to_string(n));
    }
    std::vector<std::size_t> pool = members;
    Engine eng(stream_seed(seed, round, c));
    partial_shuffle(std::span<std::size_t>(pool), n, eng);
    auto& ids = sample.picks[label];
    for (std::size_t i = 0; i < n; ++i) ids.push_back(corpus.utterances()[pool[i]].id);
  }
  return sample;
}

/// ICL texts of one class, in pick order.
inline std::vector<std::string> shot_texts(const Corpus& corpus, const ShotSample& shots, const IntentLabel& label) {
  std::vector<std::string> out;
  for (const auto& id : shots.picks.at(label)) out.push_back(corpus.find(id).text);
  return out;
}

}  // namespace intentaug
