#include "otb/magic.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <vector>

using namespace otb;

namespace {

void check_magic_sums(const Mat& M) {
  const int n = static_cast<int>(M.rows());
  const double s = n * (static_cast<double>(n) * n + 1) / 2;
  std::vector<double> seen;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) seen.push_back(M(i, j));
  std::sort(seen.begin(), seen.end());
  for (int v = 0; v < n * n; ++v) REQUIRE(seen[v] == v + 1);
  for (int i = 0; i < n; ++i) {
    REQUIRE(M.row(i).sum() == s);
    REQUIRE(M.col(i).sum() == s);
  }
  double d1 = 0, d2 = 0;
  for (int i = 0; i < n; ++i) {
    d1 += M(i, i);
    d2 += M(i, n - 1 - i);
  }
  REQUIRE(d1 == s);
  REQUIRE(d2 == s);
}

}  // namespace

TEST_CASE("magic squares have the magic sums for n = 3..12") {
  for (int n = 3; n <= 12; ++n) check_magic_sums(magic_square(n));
}

TEST_CASE("odd order uses the reference Siamese layout") {
  Mat expect(3, 3);
  expect << 8, 1, 6, 3, 5, 7, 4, 9, 2;
  CHECK(magic_square(3) == expect);
}

TEST_CASE("doubly even order uses the reference complement layout") {
  Mat expect(4, 4);
  expect << 16, 2, 3, 13, 5, 11, 10, 8, 9, 7, 6, 12, 4, 14, 15, 1;
  CHECK(magic_square(4) == expect);
  check_magic_sums(magic_square(4));
}

TEST_CASE("singly even order uses the reference block layout") {
  Mat expect(6, 6);
  expect << 35, 1, 6, 26, 19, 24,
             3, 32, 7, 21, 23, 25,
            31, 9, 2, 22, 27, 20,
             8, 28, 33, 17, 10, 15,
            30, 5, 34, 12, 14, 16,
             4, 36, 29, 13, 18, 11;
  CHECK(magic_square(6) == expect);
}

TEST_CASE("orders below 3 are rejected") {
  CHECK_THROWS_AS(magic_square(2), std::invalid_argument);
  CHECK_THROWS_AS(magic_square(0), std::invalid_argument);
}
