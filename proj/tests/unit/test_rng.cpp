#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "skslab/rng.hpp"

using namespace sks;

TEST_CASE("streams are deterministic and reproducible") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());

  Rng c(42), d(43);
  int same = 0;
  for (int i = 0; i < 64; ++i) same += (c.next_u64() == d.next_u64());
  REQUIRE(same == 0);
}

TEST_CASE("derived streams are distinct per path and purpose") {
  std::set<std::uint64_t> seeds;
  for (std::uint64_t i = 0; i < 1000; ++i) seeds.insert(path_seed(7, i));
  REQUIRE(seeds.size() == 1000);

  const std::uint64_t p = path_seed(7, 3);
  REQUIRE(derive_stream(p, stream::common_noise) != derive_stream(p, stream::particle_brownian));
  REQUIRE(derive_stream(p, stream::common_noise) != derive_stream(p, stream::initial_condition));
}

TEST_CASE("normal draws have the right first moments") {
  Rng rng(2024);
  const int n = 200000;
  double s = 0.0, s2 = 0.0, s4 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
    s4 += x * x * x * x;
  }
  REQUIRE(std::fabs(s / n) < 0.01);
  REQUIRE(std::fabs(s2 / n - 1.0) < 0.02);
  REQUIRE(std::fabs(s4 / n - 3.0) < 0.1);
}

TEST_CASE("uniform01 lies in (0, 1]") {
  Rng rng(5);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform01();
    REQUIRE(u > 0.0);
    REQUIRE(u <= 1.0);
  }
}
