#include "kattn/positions.hpp"

#include <bit>
#include <cstdint>

namespace kattn {

int bin_position(long offset) {
  const std::uint64_t mag = offset < 0 ? static_cast<std::uint64_t>(-offset)
                                       : static_cast<std::uint64_t>(offset);
  if (mag <= 2) return static_cast<int>(offset);
  // ceil(log2(mag) + 1): bit_width(mag) = floor(log2 mag) + 1, and the ceiling
  // adds one more unless mag is an exact power of two.
  const int bin = static_cast<int>(std::bit_width(mag)) + (std::has_single_bit(mag) ? 0 : 1);
  return offset < 0 ? -bin : bin;
}

long span_offset(std::size_t i, const Span& span) {
  if (i < span.start) return static_cast<long>(i) - static_cast<long>(span.start);
  if (i > span.end) return static_cast<long>(i) - static_cast<long>(span.end);
  return 0;
}

std::vector<std::size_t> binned_position_ids(std::size_t n, const Span& span) {
  std::vector<std::size_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = position_bin_id(bin_position(span_offset(i, span)));
  return ids;
}

}  // namespace kattn
