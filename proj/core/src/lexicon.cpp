#include "kattn/lexicon.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kattn/errors.hpp"

namespace kattn {

using nlohmann::json;

const char* to_string(IndicatorSource source) {
  return source == IndicatorSource::FrameUnit ? "frame_unit" : "synonym";
}

std::vector<LexiconEntry> parse_lexicon(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::vector<LexiconEntry> entries;
  std::vector<std::size_t> entry_line;
  std::set<std::pair<std::vector<std::string>, std::vector<std::string>>> seen;
  std::string row;
  std::size_t line = 0;
  while (std::getline(in, row)) {
    ++line;
    if (row.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(row);
    } catch (const json::parse_error& e) {
      throw ParseError(origin, line, e.what());
    }
    LexiconEntry e;
    try {
      e.relation = j.at("relation").get<std::string>();
      e.frame = j.at("frame").get<std::string>();
      e.words = j.at("words").get<std::vector<std::string>>();
      e.pos_tags = j.at("pos_tags").get<std::vector<std::string>>();
      const std::string source = j.at("source").get<std::string>();
      if (source == "frame_unit") {
        e.source = IndicatorSource::FrameUnit;
      } else if (source == "synonym") {
        e.source = IndicatorSource::Synonym;
      } else {
        throw ParseError(origin, line, "unknown source tag \"" + source + "\"");
      }
    } catch (const json::exception& ex) {
      throw ParseError(origin, line, ex.what());
    }
    if (e.words.empty()) throw ParseError(origin, line, "lexical unit has no words");
    if (e.words.size() != e.pos_tags.size()) {
      throw ParseError(origin, line,
                       std::to_string(e.words.size()) + " words but " +
                           std::to_string(e.pos_tags.size()) + " POS tags");
    }
    if (!seen.insert({e.words, e.pos_tags}).second) continue;
    entries.push_back(std::move(e));
    entry_line.push_back(line);
  }
  std::set<std::string> framed;
  for (const LexiconEntry& e : entries) {
    if (e.source == IndicatorSource::FrameUnit) framed.insert(e.relation);
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].source == IndicatorSource::Synonym && !framed.count(entries[i].relation)) {
      throw ParseError(origin, entry_line[i],
                       "synonym for relation \"" + entries[i].relation +
                           "\" which has no frame_unit entry");
    }
  }
  return entries;
}

std::vector<LexiconEntry> load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open lexicon " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_lexicon(ss.str(), path.string());
}

std::string lexicon_to_jsonl(std::span<const LexiconEntry> entries) {
  std::string out;
  for (const LexiconEntry& e : entries) {
    json j;
    j["relation"] = e.relation;
    j["frame"] = e.frame;
    j["words"] = e.words;
    j["pos_tags"] = e.pos_tags;
    j["source"] = to_string(e.source);
    out += j.dump();
    out += '\n';
  }
  return out;
}

void save_lexicon(const std::filesystem::path& path, std::span<const LexiconEntry> entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write lexicon " + path.string());
  out << lexicon_to_jsonl(entries);
}

std::vector<std::string> lexicon_words(std::span<const LexiconEntry> entries) {
  std::vector<std::string> words;
  std::set<std::string> seen;
  for (const LexiconEntry& e : entries) {
    for (const std::string& w : e.words) {
      if (seen.insert(w).second) words.push_back(w);
    }
  }
  return words;
}

IndicatorBuilder::IndicatorBuilder(std::span<const LexiconEntry> entries, const Vocab& vocab,
                                   bool include_synonyms) {
  for (const LexiconEntry& e : entries) {
    if (!include_synonyms && e.source == IndicatorSource::Synonym) continue;
    std::vector<std::size_t> w, p;
    for (std::size_t i = 0; i < e.words.size(); ++i) {
      w.push_back(vocab.words.id(e.words[i]));
      p.push_back(vocab.pos.id(e.pos_tags[i]));
    }
    entries_.push_back(e);
    word_ids_.push_back(std::move(w));
    pos_ids_.push_back(std::move(p));
  }
}

RelationIndicatorSet IndicatorBuilder::build(const EmbeddingTables& tables) const {
  if (entries_.empty()) throw ConfigError("relation indicator set is empty");
  RelationIndicatorSet set;
  set.keys = concat_cols(
      {mean_gather_rows(tables.word, word_ids_), mean_gather_rows(tables.pos, pos_ids_)});
  set.mean = mean_rows(set.keys);
  set.provenance = entries_;
  return set;
}

RelationIndicatorSet build_indicators(std::span<const LexiconEntry> entries,
                                      const EmbeddingTables& tables, const Vocab& vocab,
                                      bool include_synonyms) {
  return IndicatorBuilder(entries, vocab, include_synonyms).build(tables);
}

FrameMap load_frame_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open frame map " + path.string());
  FrameMap map;
  try {
    const json j = json::parse(in);
    for (const auto& [relation, frames] : j.items()) {
      map[relation] = frames.get<std::vector<std::string>>();
    }
  } catch (const json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  return map;
}

namespace {

// Splits "key<TAB>w/T w/T" into the key and the word/tag columns.
bool split_unit_line(const std::string& row, const std::string& origin, std::size_t line,
                     std::string& key, std::vector<std::string>& words,
                     std::vector<std::string>& tags) {
  const auto first = row.find_first_not_of(" \t\r");
  if (first == std::string::npos || row[first] == '#') return false;
  const auto tab = row.find('\t');
  if (tab == std::string::npos) throw ParseError(origin, line, "expected <key><TAB><units>");
  key = row.substr(0, tab);
  std::istringstream in(row.substr(tab + 1));
  std::string item;
  words.clear();
  tags.clear();
  while (in >> item) {
    const auto slash = item.rfind('/');
    if (slash == std::string::npos || slash == 0 || slash + 1 == item.size()) {
      throw ParseError(origin, line, "expected word/TAG, got \"" + item + "\"");
    }
    words.push_back(item.substr(0, slash));
    tags.push_back(item.substr(slash + 1));
  }
  if (words.empty()) throw ParseError(origin, line, "lexical unit has no words");
  return true;
}

}  // namespace

std::vector<LexiconEntry> assemble_lexicon(const FrameMap& frames, const std::string& units,
                                           const std::string& synonyms,
                                           const std::string& units_origin,
                                           const std::string& synonyms_origin) {
  std::map<std::string, std::vector<std::string>> relations_of;
  for (const auto& [relation, fs] : frames) {
    for (const std::string& f : fs) relations_of[f].push_back(relation);
  }
  std::vector<LexiconEntry> raw;
  std::map<std::string, std::string> first_frame;
  std::string key, row;
  std::vector<std::string> words, tags;
  std::istringstream unit_in(units);
  for (std::size_t line = 1; std::getline(unit_in, row); ++line) {
    if (!split_unit_line(row, units_origin, line, key, words, tags)) continue;
    const auto it = relations_of.find(key);
    if (it == relations_of.end()) {
      throw ParseError(units_origin, line, "frame \"" + key + "\" is not mapped to any relation");
    }
    for (const std::string& relation : it->second) {
      raw.push_back({relation, key, words, tags, IndicatorSource::FrameUnit});
      first_frame.emplace(relation, key);
    }
  }
  std::istringstream syn_in(synonyms);
  for (std::size_t line = 1; std::getline(syn_in, row); ++line) {
    if (!split_unit_line(row, synonyms_origin, line, key, words, tags)) continue;
    const auto it = first_frame.find(key);
    if (it == first_frame.end()) {
      throw ParseError(synonyms_origin, line,
                       "synonym for relation \"" + key + "\" which has no frame unit");
    }
    raw.push_back({key, it->second, words, tags, IndicatorSource::Synonym});
  }
  return parse_lexicon(lexicon_to_jsonl(raw), units_origin);
}

}  // namespace kattn
