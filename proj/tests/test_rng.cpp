#include "jampr/rng.hpp"

#include <cmath>
#include <set>

#include "doctest.h"

using jampr::Rng;

TEST_CASE("philox4x32-10 known-answer vector") {
  // Published KAT: zero counter, zero key.
  Rng r(0, 0);
  CHECK(r.next_u32() == 0x6627e8d5u);
  CHECK(r.next_u32() == 0xe169c58du);
  CHECK(r.next_u32() == 0xbc57ac4cu);
  CHECK(r.next_u32() == 0x9b00dbd8u);
}

TEST_CASE("streams are reproducible and independent") {
  Rng a(42, 7), b(42, 7);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng c(42, 8);
  int same = 0;
  Rng a2(42, 7);
  for (int i = 0; i < 64; ++i)
    if (a2.next_u32() == c.next_u32()) ++same;
  CHECK(same <= 1);
}

TEST_CASE("derive produces distinct sub-seeds") {
  std::set<uint64_t> seen;
  for (uint64_t i = 0; i < 1000; ++i) seen.insert(Rng::derive(123, i));
  CHECK(seen.size() == 1000);
  CHECK(Rng::derive(123, 5) != Rng::derive(124, 5));
}

TEST_CASE("uniform range and moments") {
  Rng r(1);
  double sum = 0, lo = 1, hi = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double u = r.uniform();
    sum += u;
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo >= 0.0);
  CHECK(hi < 1.0);
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("normal moments") {
  Rng r(2);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double z = r.normal();
    sum += z;
    sq += z * z;
  }
  double mean = sum / n;
  double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.03);
  CHECK(var == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("below stays in range and covers values") {
  Rng r(3);
  std::set<uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    uint64_t v = r.below(7);
    CHECK(v < 7);
    seen.insert(v);
  }
  CHECK(seen.size() == 7);
}
