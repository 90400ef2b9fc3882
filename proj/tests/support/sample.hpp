#pragma once

// Small hand-made records and scratch directories for unit tests.

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "kattn/config.hpp"
#include "kattn/lexicon.hpp"
#include "kattn/model.hpp"
#include "kattn/train.hpp"
#include "kattn/vocab.hpp"

namespace kattn::testkit {

inline RawExample make_example(const std::string& id, std::vector<std::string> tokens, Span subj,
                               Span obj, const std::string& relation,
                               const std::string& subj_type = "PERSON",
                               const std::string& obj_type = "ORGANIZATION") {
  RawExample ex;
  ex.id = id;
  ex.pos.assign(tokens.size(), "NN");
  ex.ner.assign(tokens.size(), "O");
  for (std::size_t i = subj.start; i <= subj.end; ++i) ex.ner[i] = subj_type;
  for (std::size_t i = obj.start; i <= obj.end; ++i) ex.ner[i] = obj_type;
  ex.tokens = std::move(tokens);
  ex.subj = subj;
  ex.obj = obj;
  ex.subj_type = subj_type;
  ex.obj_type = obj_type;
  ex.relation = relation;
  return ex;
}

inline std::vector<RawExample> sample_examples() {
  return {
      make_example("s0", {"James", "Dobson", "works", "for", "Acme", "."}, {0, 1}, {4, 4},
                   "per:employee_of"),
      make_example("s1", {"Ann", "graduated", "from", "Riverside", "University"}, {0, 0}, {3, 4},
                   "per:schools_attended"),
      make_example("s2", {"Bo", "said", "Globex", "rose", "today", "."}, {0, 0}, {2, 2},
                   "no_relation"),
      make_example("s3", {"Initech", "hired", "Cy"}, {2, 2}, {0, 0}, "per:employee_of"),
  };
}

inline std::vector<LexiconEntry> sample_lexicon() {
  return {
      {"per:employee_of", "Employing", {"works", "for"}, {"VBZ", "IN"}, IndicatorSource::FrameUnit},
      {"per:employee_of", "Employing", {"hired"}, {"VBN"}, IndicatorSource::FrameUnit},
      {"per:schools_attended", "Education_teaching", {"graduated"}, {"VBD"},
       IndicatorSource::FrameUnit},
      {"per:employee_of", "Employing", {"recruited"}, {"VBN"}, IndicatorSource::Synonym},
  };
}

/// Small dimensions so that models build and run in milliseconds.
inline ModelConfig tiny_config(ModelKind kind = ModelKind::Knowledge) {
  ModelConfig c;
  c.kind = kind;
  c.word_dim = 8;
  c.pos_dim = 4;
  c.position_dim = 3;
  c.ner_dim = 4;
  c.category_dim = 5;
  c.heads = 2;
  c.ffn_dim = 7;
  c.relative_dim = 4;
  c.relative_clip = 3;
  c.pool_attention_dim = 6;
  c.mca_attention_dim = 5;
  c.fc_dim = 6;
  c.batch_size = 2;
  c.epochs = 2;
  c.seeds = 1;
  return c;
}

/// Vocabulary, lexicon and encoded splits over the sample records (every
/// split holds all four).
struct TinySetup {
  ModelConfig config;
  RawSplits raw;
  std::vector<LexiconEntry> lexicon;
  Vocab vocab;
  EncodedSplits data;

  RelationModel model() const { return RelationModel(config, vocab, lexicon); }
  Batch batch() const {
    const std::vector<std::size_t> all{0, 1, 2, 3};
    return make_batch(data.train, all);
  }
};

inline TinySetup tiny_setup(ModelKind kind = ModelKind::Knowledge) {
  TinySetup t;
  t.config = tiny_config(kind);
  t.raw = {sample_examples(), sample_examples(), sample_examples()};
  t.lexicon = sample_lexicon();
  t.vocab = build_vocab(t.raw, t.lexicon, t.config);
  t.data = encode_splits(t.raw, t.vocab, encode_options(t.config));
  return t;
}

/// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("kattn_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace kattn::testkit
