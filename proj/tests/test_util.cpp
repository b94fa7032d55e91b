#include <doctest.h>

#include <cmath>
#include <random>

#include "ravl/util.hpp"

using namespace ravl;

TEST_CASE("fnv1a64 matches published reference vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("splitmix64 matches the reference finalizer") {
  CHECK(splitmix64(0) == 0xe220a8397b1dcdafull);
  CHECK(splitmix64(1) == 0x910a2dec89025cc1ull);
  CHECK(splitmix64(0xDEADBEEFull) == 0x4adfb90f68c9eb9bull);
}

TEST_CASE("uniform01 stays in [0, 1) and is deterministic") {
  std::mt19937_64 a(7), b(7);
  for (int i = 0; i < 10000; ++i) {
    double u = uniform01(a);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(u == uniform01(b));
  }
}

TEST_CASE("gaussian draws have standard-normal sample moments") {
  std::mt19937_64 rng(123);
  const int n = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double g = gaussian(rng);
    sum += g;
    sum2 += g * g;
  }
  double mean = sum / n;
  double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.05);
}
