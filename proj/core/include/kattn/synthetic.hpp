#pragma once

// Desk-scale stand-in for TACRED: templated sentences with masked-entity
// spans, relation cue phrases drawn from a generated lexicon, POS/NER tags,
// and a GloVe-like embedding file in which cue words cluster by relation.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kattn/lexicon.hpp"
#include "kattn/train.hpp"

namespace kattn {

struct SyntheticOptions {
  std::size_t n_relations = 8;
  std::size_t n_train = 2000;
  std::size_t n_dev = 500;
  std::size_t n_test = 500;
  double negative_fraction = 0.4;
  /// Share of negatives with a type-incompatible cue between the entities.
  double mismatched_fraction = 0.2;
  std::uint64_t seed = 1;
  std::size_t embedding_dim = 300;
  std::string negative_class = "no_relation";
};

struct SyntheticData {
  RawSplits splits;
  std::vector<LexiconEntry> lexicon;
  /// Every word that can occur, in a fixed order, with its vector.
  std::vector<std::string> embedding_words;
  std::vector<std::vector<double>> embedding_vectors;
  /// Relation names: the negative class, then positives in generation order.
  std::vector<std::string> relations;
};

/// Maximum number of positive relations the generator knows about.
std::size_t synthetic_relation_capacity();

SyntheticData generate_synthetic(const SyntheticOptions& options);

/// Writes train/dev/test.jsonl, lexicon.jsonl and embeddings.txt into `dir`.
void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir);

}  // namespace kattn
