#pragma once

#include <cstddef>
#include <vector>

namespace kattn {

/// Inclusive token span [start, end].
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  bool contains(std::size_t i) const { return i >= start && i <= end; }
  bool overlaps(const Span& other) const { return start <= other.end && other.start <= end; }
  friend bool operator==(const Span&, const Span&) = default;
};

/// Logarithmic distance binning: offsets within +-2 are kept, larger ones
/// become sign(p) * ceil(log2|p| + 1).
int bin_position(long offset);

/// Largest bin magnitude kept in the position vocabulary; covers |offset| <= 512.
inline constexpr int kMaxPositionBin = 10;
inline constexpr std::size_t kPositionVocabSize = 2 * kMaxPositionBin + 1;

/// Signed distance of token i from a span: negative before it, positive after
/// it, measured to the nearest span token, and 0 inside.
long span_offset(std::size_t i, const Span& span);

/// Bin ids (bin shifted into [0, kPositionVocabSize)) for every position of an
/// n-token sequence relative to `span`.
std::vector<std::size_t> binned_position_ids(std::size_t n, const Span& span);

inline std::size_t position_bin_id(int bin) {
  const int clamped = bin < -kMaxPositionBin ? -kMaxPositionBin
                      : bin > kMaxPositionBin ? kMaxPositionBin
                                              : bin;
  return static_cast<std::size_t>(clamped + kMaxPositionBin);
}

}  // namespace kattn
