#include "kattn/vocab.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kattn/errors.hpp"

namespace kattn {

using nlohmann::json;

namespace {

template <typename T>
T field(const json& j, const char* name, const std::string& file, std::size_t line) {
  auto it = j.find(name);
  if (it == j.end()) throw ParseError(file, line, std::string("missing field \"") + name + "\"");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ParseError(file, line, std::string("field \"") + name + "\": " + e.what());
  }
}

}  // namespace

std::vector<RawExample> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  const std::string file = path.string();
  std::vector<RawExample> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(file, line, e.what());
    }
    RawExample ex;
    ex.id = field<std::string>(j, "id", file, line);
    ex.tokens = field<std::vector<std::string>>(j, "token", file, line);
    ex.subj = {field<std::size_t>(j, "subj_start", file, line),
               field<std::size_t>(j, "subj_end", file, line)};
    ex.obj = {field<std::size_t>(j, "obj_start", file, line),
              field<std::size_t>(j, "obj_end", file, line)};
    ex.subj_type = field<std::string>(j, "subj_type", file, line);
    ex.obj_type = field<std::string>(j, "obj_type", file, line);
    ex.pos = field<std::vector<std::string>>(j, "stanford_pos", file, line);
    ex.ner = field<std::vector<std::string>>(j, "stanford_ner", file, line);
    ex.relation = field<std::string>(j, "relation", file, line);
    const std::size_t n = ex.tokens.size();
    if (n == 0) throw ParseError(file, line, "empty token list");
    if (ex.pos.size() != n || ex.ner.size() != n) {
      throw ParseError(file, line, "stanford_pos/stanford_ner length differs from token length");
    }
    if (ex.subj.start > ex.subj.end || ex.subj.end >= n || ex.obj.start > ex.obj.end ||
        ex.obj.end >= n) {
      throw ParseError(file, line, "entity span outside the sentence");
    }
    if (ex.subj.overlaps(ex.obj)) throw ParseError(file, line, "subject and object spans overlap");
    out.push_back(std::move(ex));
  }
  return out;
}

void save_dataset(const std::filesystem::path& path, std::span<const RawExample> examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset " + path.string());
  for (const RawExample& ex : examples) {
    json j;
    j["id"] = ex.id;
    j["token"] = ex.tokens;
    j["subj_start"] = ex.subj.start;
    j["subj_end"] = ex.subj.end;
    j["obj_start"] = ex.obj.start;
    j["obj_end"] = ex.obj.end;
    j["subj_type"] = ex.subj_type;
    j["obj_type"] = ex.obj_type;
    j["stanford_pos"] = ex.pos;
    j["stanford_ner"] = ex.ner;
    j["relation"] = ex.relation;
    out << j.dump() << '\n';
  }
}

std::string subject_token(const std::string& ner_type) { return "SUBJ-" + ner_type; }
std::string object_token(const std::string& ner_type) { return "OBJ-" + ner_type; }

// ---- IdTable ---------------------------------------------------------------

IdTable::IdTable() {
  add(kPadToken);
  add(kUnkToken);
}

std::size_t IdTable::add(const std::string& key) {
  auto [it, inserted] = index_.try_emplace(key, keys_.size());
  if (inserted) keys_.push_back(key);
  return it->second;
}

std::size_t IdTable::id(const std::string& key) const {
  auto it = index_.find(key);
  return it == index_.end() ? kUnkId : it->second;
}

// ---- Vocab -----------------------------------------------------------------

Vocab Vocab::build(std::span<const RawExample> train, std::span<const std::string> extra_words,
                   const std::string& negative_class) {
  Vocab v;
  v.relations.push_back(negative_class);
  std::set<std::string> ner_types;
  for (const RawExample& ex : train) {
    ner_types.insert(ex.subj_type);
    ner_types.insert(ex.obj_type);
  }
  // Entity tokens first so their ids do not depend on corpus word order.
  for (const std::string& t : ner_types) {
    v.words.add(subject_token(t));
    v.words.add(object_token(t));
  }
  for (const RawExample& ex : train) {
    for (const std::string& tok : ex.tokens) v.words.add(tok);
    for (const std::string& p : ex.pos) v.pos.add(p);
    for (const std::string& n : ex.ner) v.ner.add(n);
    v.categories.add(ex.subj_type + "|" + ex.obj_type);
    if (std::find(v.relations.begin(), v.relations.end(), ex.relation) == v.relations.end()) {
      v.relations.push_back(ex.relation);
    }
  }
  for (const std::string& w : extra_words) v.words.add(w);
  return v;
}

std::size_t Vocab::relation_id(const std::string& name) const {
  auto it = std::find(relations.begin(), relations.end(), name);
  if (it == relations.end()) throw LabelError("unknown relation \"" + name + "\"");
  return static_cast<std::size_t>(it - relations.begin());
}

std::size_t Vocab::category_id(const std::string& subj_type, const std::string& obj_type) const {
  return categories.id(subj_type + "|" + obj_type);
}

std::string Vocab::to_json() const {
  json j;
  j["words"] = words.keys();
  j["pos"] = pos.keys();
  j["ner"] = ner.keys();
  j["categories"] = categories.keys();
  j["relations"] = relations;
  return j.dump();
}

Vocab Vocab::from_json(const std::string& text) {
  const json j = json::parse(text);
  Vocab v;
  auto fill = [](IdTable& table, const json& keys) {
    const auto list = keys.get<std::vector<std::string>>();
    if (list.size() < 2 || list[0] != kPadToken || list[1] != kUnkToken) {
      throw DataError("vocabulary table does not start with PAD, UNK");
    }
    for (const std::string& k : list) table.add(k);
    if (table.size() != list.size()) throw DataError("vocabulary table has duplicate keys");
  };
  fill(v.words, j.at("words"));
  fill(v.pos, j.at("pos"));
  fill(v.ner, j.at("ner"));
  fill(v.categories, j.at("categories"));
  v.relations = j.at("relations").get<std::vector<std::string>>();
  return v;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary " + path.string());
  out << to_json() << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

// ---- masking and encoding ----------------------------------------------------

std::vector<std::string> mask_entities(std::span<const std::string> tokens, const Span& subj,
                                       const Span& obj, const std::string& subj_type,
                                       const std::string& obj_type) {
  if (subj.start > subj.end || obj.start > obj.end || subj.end >= tokens.size() ||
      obj.end >= tokens.size()) {
    throw DataError("mask_entities: span outside the sentence");
  }
  if (subj.overlaps(obj)) throw DataError("mask_entities: subject and object spans overlap");
  std::vector<std::string> out(tokens.begin(), tokens.end());
  for (std::size_t i = subj.start; i <= subj.end; ++i) out[i] = subject_token(subj_type);
  for (std::size_t i = obj.start; i <= obj.end; ++i) out[i] = object_token(obj_type);
  return out;
}

void EncodedExample::validate() const {
  const std::size_t n = token_ids.size();
  if (pos_ids.size() != n || ner_ids.size() != n || bin_subj.size() != n || bin_obj.size() != n ||
      pad_mask.size() != n) {
    throw DataError("encoded example " + id + ": per-token arrays differ in length");
  }
  if (subj.start > subj.end || subj.end >= n || obj.start > obj.end || obj.end >= n) {
    throw DataError("encoded example " + id + ": span outside the sentence");
  }
  if (subj.overlaps(obj)) throw DataError("encoded example " + id + ": spans overlap");
  for (std::size_t i = 0; i < n; ++i) {
    if (pad_mask[i] != (token_ids[i] == kPadId)) {
      throw DataError("encoded example " + id + ": pad mask disagrees with PAD tokens");
    }
  }
  if (bin_subj != binned_position_ids(n, subj) || bin_obj != binned_position_ids(n, obj)) {
    throw DataError("encoded example " + id + ": binned positions do not match offsets");
  }
}

EncodedExample encode_example(const RawExample& raw, const Vocab& vocab,
                              const EncodeOptions& options) {
  const std::vector<std::string> tokens =
      options.mask_entities
          ? mask_entities(raw.tokens, raw.subj, raw.obj, raw.subj_type, raw.obj_type)
          : raw.tokens;
  EncodedExample ex;
  ex.id = raw.id;
  const std::size_t n = tokens.size();
  ex.token_ids.resize(n);
  ex.pos_ids.resize(n);
  ex.ner_ids.resize(n);
  ex.pad_mask.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    ex.token_ids[i] = vocab.words.id(tokens[i]);
    ex.pos_ids[i] = vocab.pos.id(raw.pos[i]);
    ex.ner_ids[i] = vocab.ner.id(raw.ner[i]);
    ex.pad_mask[i] = ex.token_ids[i] == kPadId;
  }
  ex.subj = raw.subj;
  ex.obj = raw.obj;
  ex.bin_subj = binned_position_ids(n, raw.subj);
  ex.bin_obj = binned_position_ids(n, raw.obj);
  ex.category = vocab.category_id(raw.subj_type, raw.obj_type);
  ex.gold = vocab.relation_id(raw.relation);
  ex.validate();
  return ex;
}

std::vector<EncodedExample> encode_all(std::span<const RawExample> raw, const Vocab& vocab,
                                       const EncodeOptions& options) {
  std::vector<EncodedExample> out;
  out.reserve(raw.size());
  for (const RawExample& r : raw) out.push_back(encode_example(r, vocab, options));
  return out;
}

// ---- embeddings ------------------------------------------------------------

namespace {

Tensor uniform_table(std::size_t rows, std::size_t cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(rows * cols);
  for (double& v : values) v = dist(rng);
  std::fill_n(values.begin(), cols, 0.0);  // PAD row
  return Tensor::parameter({rows, cols}, std::move(values));
}

}  // namespace

EmbeddingTables EmbeddingTables::init(const Vocab& vocab, const EmbeddingDims& dims,
                                      std::mt19937_64& rng, double init_range) {
  EmbeddingTables t;
  t.word = uniform_table(vocab.words.size(), dims.word, init_range / static_cast<double>(dims.word),
                         rng);
  t.pos = uniform_table(vocab.pos.size(), dims.pos, init_range, rng);
  // Bin ids have no PAD row; row 0 is the farthest-left bin.
  {
    std::uniform_real_distribution<double> dist(-init_range, init_range);
    std::vector<double> values(kPositionVocabSize * dims.position);
    for (double& v : values) v = dist(rng);
    t.position = Tensor::parameter({kPositionVocabSize, dims.position}, std::move(values));
  }
  t.ner = dims.with_ner ? uniform_table(vocab.ner.size(), dims.ner, init_range, rng) : Tensor();
  t.category = dims.with_category
                   ? uniform_table(vocab.categories.size(), dims.category, init_range, rng)
                   : Tensor();
  return t;
}

EmbeddingTables EmbeddingTables::clone() const {
  EmbeddingTables t;
  t.word = word.clone();
  t.pos = pos.clone();
  t.position = position.clone();
  t.ner = has_ner() ? ner.clone() : Tensor();
  t.category = has_category() ? category.clone() : Tensor();
  return t;
}

std::size_t load_word_embeddings(const std::filesystem::path& path, const Vocab& vocab,
                                 EmbeddingTables& tables) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embeddings " + path.string());
  const std::string file = path.string();
  const std::size_t dim = tables.word.cols();
  auto data = tables.word.mutable_data();
  std::vector<bool> seen(vocab.words.size(), false);
  std::size_t copied = 0;
  std::string text;
  std::size_t line = 0;
  std::vector<double> values;
  while (std::getline(in, text)) {
    ++line;
    std::istringstream fields(text);
    std::string token;
    if (!(fields >> token)) continue;
    values.clear();
    std::string num;
    while (fields >> num) {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), v);
      if (ec != std::errc() || ptr != num.data() + num.size()) {
        throw ParseError(file, line, "bad number \"" + num + "\"");
      }
      values.push_back(v);
    }
    if (values.size() != dim) {
      if (line == 1 && !values.empty()) {
        throw ConfigError(file + ": embedding dimension " + std::to_string(values.size()) +
                          " does not match configured " + std::to_string(dim));
      }
      throw ParseError(file, line,
                       "expected " + std::to_string(dim) + " values, got " +
                           std::to_string(values.size()));
    }
    if (!vocab.words.contains(token)) continue;
    const std::size_t id = vocab.words.id(token);
    if (id == kPadId || seen[id]) continue;
    seen[id] = true;
    std::copy(values.begin(), values.end(), data.begin() + id * dim);
    ++copied;
  }
  std::fill_n(data.begin(), dim, 0.0);
  return copied;
}

Tensor embed_sequence(const EncodedExample& ex, const EmbeddingTables& tables) {
  const Tensor words = gather_rows(tables.word, ex.token_ids);
  const Tensor tags = gather_rows(tables.pos, ex.pos_ids);
  return mask_rows(concat_cols({words, tags}), ex.pad_mask);
}

Batch make_batch(std::span<const EncodedExample> data, std::span<const std::size_t> indices) {
  Batch b;
  b.size = indices.size();
  for (std::size_t idx : indices) b.len = std::max(b.len, data[idx].length());
  const std::size_t total = b.size * b.len;
  b.token_ids.assign(total, kPadId);
  b.pos_ids.assign(total, kPadId);
  b.ner_ids.assign(total, kPadId);
  b.bin_subj.assign(total, position_bin_id(0));
  b.bin_obj.assign(total, position_bin_id(0));
  b.pad.assign(total, true);
  for (std::size_t s = 0; s < b.size; ++s) {
    const EncodedExample& ex = data[indices[s]];
    const std::size_t base = s * b.len;
    for (std::size_t i = 0; i < ex.length(); ++i) {
      b.token_ids[base + i] = ex.token_ids[i];
      b.pos_ids[base + i] = ex.pos_ids[i];
      b.ner_ids[base + i] = ex.ner_ids[i];
      b.bin_subj[base + i] = ex.bin_subj[i];
      b.bin_obj[base + i] = ex.bin_obj[i];
      b.pad[base + i] = ex.pad_mask[i];
    }
    // Padding slots continue the offset pattern past the sentence end.
    for (std::size_t i = ex.length(); i < b.len; ++i) {
      b.bin_subj[base + i] = position_bin_id(bin_position(span_offset(i, ex.subj)));
      b.bin_obj[base + i] = position_bin_id(bin_position(span_offset(i, ex.obj)));
    }
    b.category.push_back(ex.category);
    b.gold.push_back(ex.gold);
    b.example_index.push_back(indices[s]);
  }
  return b;
}

Tensor embed_batch(const Batch& batch, const EmbeddingTables& tables) {
  const Tensor words = gather_rows(tables.word, batch.token_ids);
  const Tensor tags = gather_rows(tables.pos, batch.pos_ids);
  return mask_rows(concat_cols({words, tags}), batch.pad);
}

Tensor position_features(const Batch& batch, const EmbeddingTables& tables) {
  return concat_cols(
      {gather_rows(tables.position, batch.bin_subj), gather_rows(tables.position, batch.bin_obj)});
}

}  // namespace kattn
