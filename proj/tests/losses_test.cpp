// Copyright 2026 The l2ieval Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <sstream>

#include "l2i/losses.hpp"
#include "oracles.hpp"

using Map = l2i::AttentionMap<double>;
using Mask = l2i::AmodalMask<double>;
using l2i::Grid;

namespace {

Grid<double> grid(Eigen::Index h, Eigen::Index w, std::initializer_list<double> xs) {
  Grid<double> g(h, w);
  auto it = xs.begin();
  for (Eigen::Index r = 0; r < h; ++r)
    for (Eigen::Index c = 0; c < w; ++c) g(r, c) = *it++;
  return g;
}

std::vector<double> flat(const Grid<double>& g) { return {g.data(), g.data() + g.size()}; }

l2i::LossFixture fixture(const std::string& name) {
  return l2i::read_loss_fixture_file(std::string(L2I_FIXTURES) + "/losses/" + name);
}

double token(const l2i::LossFixture& f) { return l2i::token_loss<double>(f.maps, f.masks); }

struct Instance {
  std::vector<Map> maps;
  std::vector<Mask> masks;
};

/// Random instance with probabilities in [0.05, 0.95] and a mixed mask.
Instance random_instance(std::mt19937_64& rng, int count, int lo = 4, int hi = 16) {
  std::uniform_int_distribution<int> side(lo, hi);
  std::uniform_real_distribution<double> p(0.05, 0.95);
  const int h = side(rng), w = side(rng);
  Instance inst;
  for (int k = 0; k < count; ++k) {
    Grid<double> a(h, w), m(h, w);
    for (Eigen::Index u = 0; u < a.size(); ++u) {
      a(u) = p(rng);
      m(u) = (rng() & 1) ? 1.0 : 0.0;
    }
    m(0) = 1.0;
    m(1) = 0.0;
    inst.maps.emplace_back(a);
    inst.masks.emplace_back(m);
  }
  return inst;
}

}  // namespace

TEST_CASE("map and mask validation") {
  CHECK_THROWS_AS(Map(Grid<double>::Zero(2, 2)), l2i::LossError);
  CHECK_THROWS_AS(Map(grid(1, 2, {-0.1, 1})), l2i::LossError);
  CHECK_THROWS_AS(Map(grid(1, 2, {NAN, 1})), l2i::LossError);
  CHECK_THROWS_AS(Mask(grid(1, 2, {0.5, 1})), l2i::LossError);
  const std::vector<Map> maps{Map(grid(1, 2, {1, 1}))};
  const std::vector<Mask> masks{Mask(grid(2, 1, {1, 0}))};
  CHECK_THROWS_AS(l2i::token_loss<double>(maps, masks), l2i::LossError);
  CHECK_THROWS_AS(l2i::token_loss<double>(std::vector<Map>{}, std::vector<Mask>{}), l2i::LossError);
}

TEST_CASE("token loss worked examples") {
  CHECK(token(fixture("token_inside.txt")) == 0.0);
  CHECK(token(fixture("token_outside.txt")) == 1.0);
  const auto w = fixture("token_worked.txt");
  CHECK(std::abs(token(w) - 0.7) < 1e-12);
  CHECK(std::abs(token(w) - oracle::token_term(flat(w.maps[0].values()), flat(w.masks[0].values()))) < 1e-15);
}

TEST_CASE("pixel loss worked examples") {
  const auto w = fixture("pixel_worked.txt");
  const double v = l2i::pixel_loss(w.maps[0].values(), w.masks[0]);
  CHECK(std::abs(v - oracle::pixel_ce(flat(w.maps[0].values()), flat(w.masks[0].values()), 1e-6)) < 1e-15);
  CHECK(v == doctest::Approx(0.1643).epsilon(1e-3));

  // Perfect prediction sits at the clamp floor.
  const Mask m(grid(2, 2, {1, 0, 0, 1}));
  CHECK(l2i::pixel_loss(m.values(), m) == doctest::Approx(-std::log(1 - 1e-6)).epsilon(1e-9));

  // Uniform one half gives log 2 for any mask.
  const Grid<double> half = Grid<double>::Constant(2, 2, 0.5);
  CHECK(l2i::pixel_loss(half, m) == doctest::Approx(std::log(2.0)));
  CHECK(l2i::pixel_loss(half, Mask(Grid<double>::Ones(2, 2))) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("probability conversions") {
  const Map a(grid(1, 3, {1, 2, 4}));
  const Grid<double> mx = l2i::to_probabilities(a, l2i::ProbabilityMap::MaxScale);
  CHECK(mx(2) == 1.0);
  CHECK(mx(0) == 0.25);
  const Grid<double> sm = l2i::to_probabilities(a, l2i::ProbabilityMap::Softmax);
  CHECK(sm.sum() == doctest::Approx(1.0));
  CHECK(sm(2) > sm(1));
}

TEST_CASE("token loss properties") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  for (int t = 0; t < 200; ++t) {
    const auto inst = random_instance(rng, 3);
    const double v = l2i::token_loss<double>(inst.maps, inst.masks);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    double expected = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      expected += oracle::token_term(flat(inst.maps[i].values()), flat(inst.masks[i].values()));
    }
    CHECK(std::abs(v - expected / 3) < 1e-12);

    auto scaled = inst.maps;
    scaled[t % 3] = Map(inst.maps[t % 3].values() * scale(rng));
    CHECK(std::abs(l2i::token_loss<double>(scaled, inst.masks) - v) < 1e-12);
  }
}

TEST_CASE("pixel loss is minimized at the mask") {
  std::mt19937_64 rng(43);
  for (int t = 0; t < 100; ++t) {
    const auto inst = random_instance(rng, 1, 3, 6);
    const auto& m = inst.masks[0];
    const double best = l2i::pixel_loss(m.values(), m);
    CHECK(l2i::pixel_loss(inst.maps[0].values(), m) >= best);
    CHECK(best >= 0.0);
  }
}

TEST_CASE("total loss composition") {
  const l2i::LossWeights zero{0, 0};
  CHECK(l2i::compose_total(2.5, 0.7, 0.16, zero).total == 2.5);
  CHECK_THROWS_AS(l2i::compose_total(0, 0, 0, {-1, 0}), l2i::LossError);

  // Affine in lambda and beta: two-point evaluation recovers the components.
  std::mt19937_64 rng(47);
  const auto inst = random_instance(rng, 2);
  const l2i::PixelLossOptions none{1e-6, l2i::ProbabilityMap::None};
  const auto base = l2i::total_loss<double>(0.3, inst.maps, inst.masks, {0, 0}, none);
  const auto dl = l2i::total_loss<double>(0.3, inst.maps, inst.masks, {1, 0}, none);
  const auto db = l2i::total_loss<double>(0.3, inst.maps, inst.masks, {0, 1}, none);
  CHECK(base.total == 0.3);
  CHECK(dl.total - base.total == doctest::Approx(base.token));
  CHECK(db.total - base.total == doctest::Approx(base.pixel));
  const auto both = l2i::total_loss<double>(0.3, inst.maps, inst.masks, {0.5, 1}, none);
  CHECK(both.total == doctest::Approx(0.3 + 0.5 * base.token + base.pixel));

  // Perfect alignment costs almost nothing beyond ldm.
  const Mask m(grid(2, 2, {1, 0, 0, 1}));
  const std::vector<Map> maps{Map(m.values())};
  const std::vector<Mask> masks{m};
  const auto perfect = l2i::total_loss<double>(1.25, maps, masks, l2i::LossWeights::creatilayout_am(), none);
  CHECK(perfect.total == doctest::Approx(1.25).epsilon(1e-5));
}

TEST_CASE("eligen averaging") {
  const Map a(grid(2, 2, {0.1, 0.2, 0.3, 0.4}));
  const std::vector<Map> one{a};
  CHECK((l2i::average_attention<double>(one).values() == a.values()).all());
  const std::vector<Map> pair{a, Map(a.values() * 3)};
  CHECK((l2i::average_attention<double>(pair).values() == a.values() * 2).all());
  CHECK_THROWS_AS(l2i::average_attention<double>(std::vector<Map>{}), l2i::LossError);

  std::mt19937_64 rng(53);
  const auto inst = random_instance(rng, 5);
  const Grid<double> avg = l2i::average_attention<double>(inst.maps).values();
  for (Eigen::Index u = 0; u < avg.size(); ++u) {
    double s = 0;
    for (const auto& m : inst.maps) s += m.values()(u);
    CHECK(std::abs(avg(u) - s / 5) < 1e-15);
  }
}

TEST_CASE("analytic gradients match central differences") {
  std::mt19937_64 rng(59);
  for (int t = 0; t < 30; ++t) {
    const auto inst = random_instance(rng, 2);
    CHECK(l2i::finite_diff_check<double>(l2i::LossKind::Token, inst.maps, inst.masks).max_rel_error < 1e-4);
    CHECK(l2i::finite_diff_check<double>(l2i::LossKind::Pixel, inst.maps, inst.masks).max_rel_error < 1e-4);
  }

  // Constant attention inside the mask, small leak outside.
  Grid<double> a = Grid<double>::Constant(4, 4, 0.01);
  Grid<double> m = Grid<double>::Zero(4, 4);
  a.block(1, 1, 2, 2).setConstant(0.5);
  m.block(1, 1, 2, 2).setConstant(1);
  const std::vector<Map> maps{Map(a)};
  const std::vector<Mask> masks{Mask(m)};
  const auto r = l2i::finite_diff_check<double>(l2i::LossKind::Token, maps, masks);
  CHECK(r.max_rel_error < 1e-4);
  CHECK(r.coordinates == 16);
}

TEST_CASE("token gradient against a test-side difference") {
  std::mt19937_64 rng(61);
  const auto inst = random_instance(rng, 1, 5, 5);
  const auto g = l2i::token_loss_grad<double>(inst.maps, inst.masks);
  const auto a = flat(inst.maps[0].values()), m = flat(inst.masks[0].values());
  for (std::size_t u = 0; u < a.size(); ++u) {
    auto hi = a, lo = a;
    hi[u] += 1e-5;
    lo[u] -= 1e-5;
    const double fd = (oracle::token_term(hi, m) - oracle::token_term(lo, m)) / 2e-5;
    CHECK(std::abs(g[0](static_cast<Eigen::Index>(u)) - fd) / (std::abs(fd) + 1e-8) < 1e-4);
  }
}

TEST_CASE("float scalar instantiation") {
  using MapF = l2i::AttentionMap<float>;
  using MaskF = l2i::AmodalMask<float>;
  l2i::Grid<float> a(1, 4), m(1, 4);
  a << 0.1f, 0.2f, 0.3f, 0.4f;
  m << 1, 1, 0, 0;
  const std::vector<MapF> maps{MapF(a)};
  const std::vector<MaskF> masks{MaskF(m)};
  CHECK(l2i::token_loss<float>(maps, masks) == doctest::Approx(0.7f).epsilon(1e-6));
}

TEST_CASE("fixture round trip") {
  std::mt19937_64 rng(67);
  const auto inst = random_instance(rng, 3);
  std::stringstream buf;
  l2i::write_loss_fixture(buf, {inst.maps, inst.masks});
  const auto back = l2i::read_loss_fixture(buf);
  REQUIRE(back.maps.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK((back.maps[k].values() == inst.maps[k].values()).all());
    CHECK((back.masks[k].values() == inst.masks[k].values()).all());
  }
  std::istringstream bad("2 2 1\n0.1 0.2\n");
  CHECK_THROWS_AS(l2i::read_loss_fixture(bad), l2i::LossError);
}
