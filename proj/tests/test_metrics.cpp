#include <random>

#include "doctest.h"
#include "longiseg/metrics.hpp"
#include "oracles.hpp"

using namespace longiseg;
using namespace longiseg::metrics;

TEST_CASE("formula examples") {
  CHECK(dsc({2, 1, 1}) == doctest::Approx(4.0 / 6.0));
  CHECK(ppv({3, 1, 0}) == 0.75);
  CHECK(tpr({1, 0, 3}) == 0.25);
  CHECK(ppv({4, 0, 2}) == 1.0);
  CHECK(ppv({0, 3, 2}) == 0.0);
  CHECK(tpr({4, 2, 0}) == 1.0);
  CHECK(tpr({0, 2, 3}) == 0.0);
  CHECK(vd(150, 100) == 50.0);
  CHECK(vd(100, 100) == 0.0);
  CHECK(vd(0, 100) == 100.0);
  CHECK(vd(0, 0) == 0.0);
  CHECK_THROWS_AS(vd(5, 0), std::domain_error);
  CHECK(dsc({0, 0, 0}) == 1.0);
  CHECK(ppv({0, 0, 0}) == 1.0);
  CHECK(tpr({0, 0, 0}) == 1.0);
}

TEST_CASE("confusion edge cases") {
  VoxelGrid<std::uint8_t> all({3, 3, 3}, 1), none({3, 3, 3}, 0);
  auto c = confusion(all, none, 1);
  CHECK(c.tp == 0);
  CHECK(c.fp == 27);
  CHECK(c.fn == 0);
  auto same = confusion(all, all, 1);
  CHECK(same.fp == 0);
  CHECK(same.fn == 0);
  CHECK(dsc(same) == 1.0);
  VoxelGrid<std::uint8_t> other({3, 3, 3}, 2);
  CHECK(dsc(confusion(all, other, 1)) == 0.0);
  VoxelGrid<std::uint8_t> wrong({3, 3, 2});
  CHECK_THROWS_AS(confusion(all, wrong, 1), ShapeError);
  const auto s = score(all, none, 1);
  CHECK_FALSE(s.vd_defined);
}

TEST_CASE("scores match a voxel-loop oracle on random volumes") {
  std::mt19937 rng(42);
  for (int trial = 0; trial < 500; ++trial) {
    VoxelGrid<std::uint8_t> pred({8, 8, 8}), gt({8, 8, 8});
    // Vary density so empty classes occur.
    const unsigned mod = 2 + rng() % 40;
    for (auto& v : pred.values()) v = rng() % mod == 0 ? static_cast<std::uint8_t>(1 + rng() % 2) : 0;
    for (auto& v : gt.values()) v = rng() % mod == 0 ? static_cast<std::uint8_t>(1 + rng() % 2) : 0;
    for (int cls = 1; cls <= 2; ++cls) {
      const auto o = oracle::metrics(pred.storage(), gt.storage(), cls);
      const auto c = confusion(pred, gt, cls);
      CHECK(c.tp == o.tp);
      CHECK(c.fp == o.fp);
      CHECK(c.fn == o.fn);
      const auto s = score(pred, gt, cls);
      CHECK(std::abs(s.dsc - o.dsc) <= 1e-12);
      CHECK(std::abs(s.ppv - o.ppv) <= 1e-12);
      CHECK(std::abs(s.tpr - o.tpr) <= 1e-12);
      CHECK(s.vd_defined == o.vd.has_value());
      if (o.vd) CHECK(std::abs(s.vd - *o.vd) <= 1e-12);
      if (c.predicted() > 0 && c.actual() > 0 && s.ppv + s.tpr > 0) {
        CHECK(std::abs(s.dsc - 2 * s.ppv * s.tpr / (s.ppv + s.tpr)) <= 1e-12);
      }
      CHECK(score(gt, pred, cls).dsc == s.dsc);
    }
  }
}
