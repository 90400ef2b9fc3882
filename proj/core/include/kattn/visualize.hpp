#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kattn/model.hpp"
#include "kattn/vocab.hpp"

namespace kattn {

/// Pooling attention of every channel for one example.
struct AttentionRecord {
  std::string id;
  std::vector<std::string> tokens;
  std::string gold;
  std::string predicted;
  std::vector<std::pair<std::string, std::vector<double>>> channels;
};

/// Evaluation-mode forward over the single example.
AttentionRecord trace_attention(const RelationModel& model, const RawExample& raw,
                                const EncodedExample& encoded);

/// Static page, one row per channel per example; token background opacity is
/// the token's weight relative to the largest weight in that row.
std::string render_html(std::span<const AttentionRecord> records);
std::string attention_json(std::span<const AttentionRecord> records);

}  // namespace kattn
