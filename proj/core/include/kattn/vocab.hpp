#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "kattn/positions.hpp"
#include "kattn/tensor.hpp"

namespace kattn {

/// One TACRED-format record.
struct RawExample {
  std::string id;
  std::vector<std::string> tokens;
  Span subj;
  Span obj;
  std::string subj_type;
  std::string obj_type;
  std::vector<std::string> pos;
  std::vector<std::string> ner;
  std::string relation;
};

/// Reads a JSON Lines dataset. Throws ParseError with the failing line.
std::vector<RawExample> load_dataset(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, std::span<const RawExample> examples);

inline constexpr std::size_t kPadId = 0;
inline constexpr std::size_t kUnkId = 1;
inline constexpr const char* kPadToken = "<PAD>";
inline constexpr const char* kUnkToken = "<UNK>";

std::string subject_token(const std::string& ner_type);
std::string object_token(const std::string& ner_type);

/// Dense string <-> id table with PAD at 0 and UNK at 1.
class IdTable {
 public:
  IdTable();

  std::size_t add(const std::string& key);
  /// Id of `key`, or kUnkId when absent.
  std::size_t id(const std::string& key) const;
  bool contains(const std::string& key) const { return index_.count(key) != 0; }
  const std::string& key(std::size_t id) const { return keys_.at(id); }
  std::size_t size() const { return keys_.size(); }
  const std::vector<std::string>& keys() const { return keys_; }

  friend bool operator==(const IdTable& a, const IdTable& b) { return a.keys_ == b.keys_; }

 private:
  std::vector<std::string> keys_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Word, POS, NER, entity-category and relation vocabularies.
struct Vocab {
  IdTable words;
  IdTable pos;
  IdTable ner;
  /// "SUBJTYPE|OBJTYPE" pairs.
  IdTable categories;
  /// Relation labels in first-seen order; not PAD/UNK-prefixed.
  std::vector<std::string> relations;

  /// Builds every table from the training split plus extra words (lexicon
  /// units), registering SUBJ-/OBJ- tokens for every NER type seen.
  static Vocab build(std::span<const RawExample> train,
                     std::span<const std::string> extra_words,
                     const std::string& negative_class);

  std::size_t relation_id(const std::string& name) const;
  std::size_t negative_id() const { return 0; }
  std::size_t num_relations() const { return relations.size(); }
  std::size_t category_id(const std::string& subj_type, const std::string& obj_type) const;

  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);
  std::string to_json() const;
  static Vocab from_json(const std::string& text);

  friend bool operator==(const Vocab&, const Vocab&) = default;
};

/// Replaces every token of the subject (object) span with SUBJ-<type>
/// (OBJ-<type>). Overlapping spans are a DataError.
std::vector<std::string> mask_entities(std::span<const std::string> tokens, const Span& subj,
                                       const Span& obj, const std::string& subj_type,
                                       const std::string& obj_type);

/// Model-ready index sequence.
struct EncodedExample {
  std::string id;
  std::vector<std::size_t> token_ids;
  std::vector<std::size_t> pos_ids;
  std::vector<std::size_t> ner_ids;
  Span subj;
  Span obj;
  std::vector<std::size_t> bin_subj;
  std::vector<std::size_t> bin_obj;
  std::size_t category = kUnkId;
  std::size_t gold = 0;
  std::vector<bool> pad_mask;

  std::size_t length() const { return token_ids.size(); }
  /// Checks span bounds, pad mask and binned positions; throws DataError.
  void validate() const;
};

struct EncodeOptions {
  bool mask_entities = true;
};

EncodedExample encode_example(const RawExample& raw, const Vocab& vocab,
                              const EncodeOptions& options = {});
std::vector<EncodedExample> encode_all(std::span<const RawExample> raw, const Vocab& vocab,
                                       const EncodeOptions& options = {});

struct EmbeddingDims {
  std::size_t word = 300;
  std::size_t pos = 30;
  std::size_t position = 30;
  std::size_t ner = 30;
  std::size_t category = 60;
  bool with_ner = false;
  bool with_category = false;
};

/// Learned lookup tables. All are gradient-tape parameters.
struct EmbeddingTables {
  Tensor word;
  Tensor pos;
  Tensor position;
  Tensor ner;       // empty shape when unused
  Tensor category;  // empty shape when unused

  /// Word rows uniform in +-init_range/d_w; other tables uniform in +-init_range;
  /// PAD rows are zero.
  static EmbeddingTables init(const Vocab& vocab, const EmbeddingDims& dims, std::mt19937_64& rng,
                              double init_range = 0.5);

  std::size_t input_dim() const { return word.cols() + pos.cols(); }
  bool has_ner() const { return ner.rank() == 2; }
  bool has_category() const { return category.rank() == 2; }
  EmbeddingTables clone() const;
};

/// Copies vectors for in-vocabulary tokens from a whitespace-separated text
/// file. Rows for tokens not in the file keep their initialization; the PAD row
/// is forced to zero. Returns the number of rows copied.
std::size_t load_word_embeddings(const std::filesystem::path& path, const Vocab& vocab,
                                 EmbeddingTables& tables);

/// Rows [word(token_i) ; pos(pos_i)], zero at padded positions.
Tensor embed_sequence(const EncodedExample& ex, const EmbeddingTables& tables);

/// A padded minibatch. Token-level arrays are laid out example-major with
/// `len` slots per example.
struct Batch {
  std::size_t size = 0;
  std::size_t len = 0;
  std::vector<std::size_t> token_ids;
  std::vector<std::size_t> pos_ids;
  std::vector<std::size_t> ner_ids;
  std::vector<std::size_t> bin_subj;
  std::vector<std::size_t> bin_obj;
  std::vector<bool> pad;
  std::vector<std::size_t> category;
  std::vector<std::size_t> gold;
  std::vector<std::size_t> example_index;
};

/// Pads the selected examples to their longest length.
Batch make_batch(std::span<const EncodedExample> data, std::span<const std::size_t> indices);

/// Stacked [word ; pos] rows for a batch, zero at padding.
Tensor embed_batch(const Batch& batch, const EmbeddingTables& tables);
/// Stacked [position(bin_subj) ; position(bin_obj)] rows.
Tensor position_features(const Batch& batch, const EmbeddingTables& tables);

}  // namespace kattn
