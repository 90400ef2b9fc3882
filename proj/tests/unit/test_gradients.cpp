#include <gtest/gtest.h>

#include "gradcheck.hpp"

namespace {

class GradientCase : public ::testing::TestWithParam<std::size_t> {};

const std::vector<kattn::testkit::GradCase>& cases() {
  static const auto all = kattn::testkit::gradient_cases();
  return all;
}

TEST_P(GradientCase, MatchesCentralDifferences) {
  const auto& c = cases()[GetParam()];
  const auto r = c.run();
  EXPECT_GT(r.entries, 0u);
  EXPECT_LT(r.max_rel_error, 1e-4) << c.name << ": worst parameter " << r.worst;
}

std::string case_name(const ::testing::TestParamInfo<std::size_t>& info) {
  std::string name = cases()[info.param].name;
  for (char& ch : name) {
    if (!std::isalnum(static_cast<unsigned char>(ch))) ch = '_';
  }
  return name;
}

INSTANTIATE_TEST_SUITE_P(All, GradientCase, ::testing::Range<std::size_t>(0, cases().size()),
                         case_name);

}  // namespace
