#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "kattn/tensor.hpp"
#include "kattn/vocab.hpp"

namespace kattn {

enum class IndicatorSource { FrameUnit, Synonym };

const char* to_string(IndicatorSource source);

/// A lexical unit (word or phrase) attached to a relation through a frame.
struct LexiconEntry {
  std::string relation;
  std::string frame;
  std::vector<std::string> words;
  std::vector<std::string> pos_tags;
  IndicatorSource source = IndicatorSource::FrameUnit;

  friend bool operator==(const LexiconEntry&, const LexiconEntry&) = default;
};

/// Parses and validates a JSON Lines lexicon. Entries with identical
/// words + POS tags collapse to the first occurrence.
std::vector<LexiconEntry> load_lexicon(const std::filesystem::path& path);
std::vector<LexiconEntry> parse_lexicon(const std::string& text, const std::string& origin);
void save_lexicon(const std::filesystem::path& path, std::span<const LexiconEntry> entries);
std::string lexicon_to_jsonl(std::span<const LexiconEntry> entries);

/// Relation -> frames table (the frame-to-relation mapping file, a JSON object).
using FrameMap = std::map<std::string, std::vector<std::string>>;
FrameMap load_frame_map(const std::filesystem::path& path);

/// Builds lexicon entries from tab-separated text. `units` lines are
/// "Frame<TAB>word/TAG word/TAG ..." and yield one frame_unit entry for every
/// relation mapped to that frame; `synonyms` lines are
/// "relation<TAB>word/TAG ..." and inherit the frame of the relation's first
/// unit. Blank lines and lines starting with '#' are skipped. The result is
/// validated and deduplicated like a loaded lexicon.
std::vector<LexiconEntry> assemble_lexicon(const FrameMap& frames, const std::string& units,
                                           const std::string& synonyms,
                                           const std::string& units_origin = "units",
                                           const std::string& synonyms_origin = "synonyms");

/// Every distinct word mentioned by the lexicon, in first-seen order.
std::vector<std::string> lexicon_words(std::span<const LexiconEntry> entries);

/// Indicator matrix K (one row per accepted entry) with provenance.
struct RelationIndicatorSet {
  Tensor keys;   // m x (d_w + d_t)
  Tensor mean;   // 1 x (d_w + d_t), column mean of `keys`
  std::vector<LexiconEntry> provenance;

  std::size_t size() const { return provenance.size(); }
};

/// Word/POS ids of the selected lexicon entries, resolved once so that the
/// indicator matrix can be rebuilt cheaply from the current embeddings.
class IndicatorBuilder {
 public:
  IndicatorBuilder(std::span<const LexiconEntry> entries, const Vocab& vocab,
                   bool include_synonyms);

  /// k_i = mean over the unit's words of [word_emb ; pos_emb]. Differentiable
  /// with respect to both tables when a tape is active.
  RelationIndicatorSet build(const EmbeddingTables& tables) const;

  std::size_t size() const { return entries_.size(); }
  const std::vector<LexiconEntry>& entries() const { return entries_; }

 private:
  std::vector<LexiconEntry> entries_;
  std::vector<std::vector<std::size_t>> word_ids_;
  std::vector<std::vector<std::size_t>> pos_ids_;
};

RelationIndicatorSet build_indicators(std::span<const LexiconEntry> entries,
                                      const EmbeddingTables& tables, const Vocab& vocab,
                                      bool include_synonyms);

}  // namespace kattn
