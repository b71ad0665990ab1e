#include <algorithm>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "ptal/error.hpp"
#include "ptal/mining.hpp"

using namespace ptal;
using mining::MiningMode;

TEST_CASE("sectional mining examples") {
  const std::vector<double> q{0.1, 0.99, 0.30, 0.98, 0.1};
  const std::vector<std::size_t> act{1, 5};
  CHECK(mining::mine_pseudo_background(q, act, 0.95, MiningMode::sectional_fill) ==
        std::vector<std::size_t>{2, 3, 4});
  CHECK(mining::mine_pseudo_background(q, act, 0.95, MiningMode::sectional) == std::vector<std::size_t>{2, 4});
  const std::vector<double> low{0.1, 0.3, 0.5, 0.1};
  const std::vector<std::size_t> act2{1, 4};
  CHECK(mining::mine_pseudo_background(low, act2, 0.95, MiningMode::sectional) == std::vector<std::size_t>{3});
}

TEST_CASE("fallback ties go to the earliest segment") {
  const std::vector<double> q{0.1, 0.4, 0.4, 0.1};
  const std::vector<std::size_t> act{1, 4};
  CHECK(mining::mine_pseudo_background(q, act, 0.95, MiningMode::sectional) == std::vector<std::size_t>{2});
}

TEST_CASE("edges and adjacent points are not mined") {
  const std::vector<double> q{0.99, 0.99, 0.99, 0.1, 0.99};
  const std::vector<std::size_t> act{2, 3};
  CHECK(mining::mine_pseudo_background(q, act, 0.95, MiningMode::sectional_fill).empty());
  const std::vector<std::size_t> none;
  CHECK_THROWS_AS(mining::mine_pseudo_background(q, none, 0.95, MiningMode::sectional), InvalidArgument);
}

TEST_CASE("global mining takes the top eta*M non-action segments") {
  const std::vector<double> q{0.9, 0.2, 0.8, 0.7, 0.1, 0.6};
  const std::vector<std::size_t> act{1};
  CHECK(mining::mine_pseudo_background(q, act, 0.95, MiningMode::global, 2) == std::vector<std::size_t>{3, 4});
  CHECK(mining::mine_pseudo_background(q, act, 0.95, MiningMode::global, 10).size() == 5);
}

TEST_CASE("mining properties on random inputs") {
  oracle::Gen g(31);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t T = g.index(2, 60);
    const std::vector<double> q = g.probs(T);
    const auto act = g.distinct(g.index(1, std::min<std::size_t>(T, 6)), T);
    const double gamma = g.uniform(0.5, 0.99);
    const auto fill = mining::mine_pseudo_background(q, act, gamma, MiningMode::sectional_fill);
    const auto plain = mining::mine_pseudo_background(q, act, gamma, MiningMode::sectional);
    const std::size_t eta = g.index(1, 6);
    const auto global = mining::mine_pseudo_background(q, act, gamma, MiningMode::global, eta);

    const std::set<std::size_t> act_set(act.begin(), act.end());
    for (const auto* out : {&fill, &plain, &global}) {
      CHECK(std::is_sorted(out->begin(), out->end()));
      CHECK(std::adjacent_find(out->begin(), out->end()) == out->end());
      for (std::size_t t : *out) CHECK_FALSE(act_set.contains(t));
    }
    for (std::size_t i = 0; i + 1 < act.size(); ++i) {
      if (act[i + 1] - act[i] < 2) continue;
      auto in_section = [&](const std::vector<std::size_t>& v) {
        return std::any_of(v.begin(), v.end(), [&](std::size_t t) { return t > act[i] && t < act[i + 1]; });
      };
      CHECK(in_section(fill));
      CHECK(in_section(plain));
    }
    CHECK(std::includes(fill.begin(), fill.end(), plain.begin(), plain.end()));
    CHECK(global.size() == std::min(eta * act.size(), T - act.size()));

    const auto higher = mining::mine_pseudo_background(q, act, std::min(0.999, gamma + 0.05), MiningMode::sectional);
    std::size_t above_hi = 0, above_lo = 0;
    for (std::size_t t : higher) above_hi += q[t - 1] > gamma + 0.05;
    for (std::size_t t : plain) above_lo += q[t - 1] > gamma;
    CHECK(above_hi <= above_lo);
  }
}

TEST_CASE("point set helpers") {
  mining::PointSet ps;
  ps.action = {{2, 1}, {5, 0}, {9, 1}};
  ps.background = {{3, mining::kBackground}};
  CHECK_NOTHROW(ps.validate(10));
  CHECK(ps.present_classes() == std::vector<int>{0, 1});
  CHECK(mining::video_label(ps.action, 3) == std::vector<int>{1, 1, 0});
  CHECK_THROWS_AS(mining::video_label(ps.action, 1), InvalidArgument);
  CHECK_THROWS_AS(ps.validate(8), InvalidArgument);
  ps.background.push_back({5, mining::kBackground});
  CHECK_THROWS_AS(ps.validate(10), InvalidArgument);
}
