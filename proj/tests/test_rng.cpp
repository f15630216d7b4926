#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "sslosr/rng.hpp"

using namespace sslosr;

TEST_CASE("same seed reproduces the stream") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    REQUIRE(a.uniform() == b.uniform());
    REQUIRE(a.normal() == b.normal());
  }
}

TEST_CASE("different seeds differ") {
  Rng a(1), b(2);
  bool any_diff = false;
  for (int i = 0; i < 10; ++i) any_diff |= (a.uniform() != b.uniform());
  REQUIRE(any_diff);
}

TEST_CASE("serialize/deserialize continues identically") {
  Rng a(7);
  for (int i = 0; i < 137; ++i) a.normal();
  const std::string state = a.serialize();
  Rng b;
  b.deserialize(state);
  for (int i = 0; i < 100; ++i) {
    REQUIRE(a.normal() == b.normal());
    REQUIRE(a.index(17) == b.index(17));
  }
}

TEST_CASE("deserialize garbage raises integrity error") {
  Rng a;
  REQUIRE_THROWS_AS(a.deserialize("not a state"), integrity_error);
}

TEST_CASE("uniform in [0,1), normal has sane moments") {
  Rng r(3);
  double sum = 0, sq = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    const double g = r.normal();
    sum += g;
    sq += g * g;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  REQUIRE(std::abs(mean) < 0.02);
  REQUIRE(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("index stays in bounds and covers the range") {
  Rng r(11);
  std::set<std::size_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto v = r.index(7);
    REQUIRE(v < 7);
    seen.insert(v);
  }
  REQUIRE(seen.size() == 7);
  REQUIRE_THROWS_AS(r.index(0), argument_error);
}

TEST_CASE("shuffle is a permutation") {
  Rng r(5);
  std::vector<int> v{1, 2, 3, 4, 5, 6, 7, 8};
  auto sorted = v;
  r.shuffle(v);
  auto check = v;
  std::sort(check.begin(), check.end());
  REQUIRE(check == sorted);
}

TEST_CASE("sample_without_replacement yields k distinct indices") {
  Rng r(9);
  auto s = r.sample_without_replacement(10, 4);
  REQUIRE(s.size() == 4);
  std::set<std::size_t> uniq(s.begin(), s.end());
  REQUIRE(uniq.size() == 4);
  for (auto i : s) REQUIRE(i < 10);
  REQUIRE_THROWS_AS(r.sample_without_replacement(3, 4), argument_error);
}

TEST_CASE("derive_seed separates sub-streams") {
  REQUIRE(derive_seed(1, 0) != derive_seed(1, 1));
  REQUIRE(derive_seed(1, 0) != derive_seed(2, 0));
  REQUIRE(derive_seed(123, 7) == derive_seed(123, 7));
}
