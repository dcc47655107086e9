#include <algorithm>

#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "scfam/rng.hpp"
#include "scfam/semantic_labels.hpp"

using scfam::labels::AnnotatedScene;
using scfam::labels::Box;
using scfam::labels::LabelingConfig;
using scfam::labels::label_global;
using scfam::labels::label_map_local;
using scfam::labels::label_map_mid;
using scfam::labels::label_semantic_vector;
using scfam::rf::ConvStackSpec;
using scfam::rf::FieldRect;

namespace {

const ConvStackSpec kStack{{{3, 1, 1}, {3, 2, 1}, {3, 1, 1}, {3, 2, 1}}};

AnnotatedScene scene_with(int h, int w, std::vector<Box> boxes) {
  AnnotatedScene s;
  s.height = h;
  s.width = w;
  s.channels = 1;
  s.boxes = std::move(boxes);
  return s;
}

}  // namespace

TEST_CASE("semantic vector basics", "[labels]") {
  const FieldRect field{0, 0, 10, 10};

  SECTION("box inside field sets only its class") {
    const auto v = label_semantic_vector({{2, 2, 4, 4, 3}}, 5, 0.6, field);
    CHECK(v == std::vector<std::uint8_t>{0, 0, 0, 1, 0});
  }
  SECTION("disjoint box yields zero vector") {
    const auto v = label_semantic_vector({{20, 20, 30, 30, 1}}, 3, 0.1, field);
    CHECK(v == std::vector<std::uint8_t>{0, 0, 0});
  }
  SECTION("large box with small overlap stays absent") {
    // box area 100, intersection 20, S_p = min(100,100) = 100, ratio 0.2
    const auto v = label_semantic_vector({{8, 0, 18, 10, 0}}, 2, 0.6, field);
    CHECK(v == std::vector<std::uint8_t>{0, 0});
  }
  SECTION("ratio exactly zeta counts as present") {
    // field 10x10, box 10x10 shifted by 4: intersection 60, ratio 0.6
    const auto v = label_semantic_vector({{4, 0, 14, 10, 0}}, 1, 0.6, field);
    CHECK(v == std::vector<std::uint8_t>{1});
  }
  SECTION("empty box list is a valid zero vector") {
    const auto v = label_semantic_vector({}, 4, 0.5, field);
    CHECK(v == std::vector<std::uint8_t>{0, 0, 0, 0});
  }
  SECTION("zero-area field is an error") {
    CHECK_THROWS_AS(label_semantic_vector({}, 2, 0.5, FieldRect{3, 3, 3, 8}),
                    std::invalid_argument);
  }
}

TEST_CASE("semantic vector matches the rasterized oracle", "[labels]") {
  scfam::Rng rng(77001);
  for (int trial = 0; trial < 300; ++trial) {
    const int fx0 = rng.uniform_int(0, 20);
    const int fy0 = rng.uniform_int(0, 20);
    const FieldRect field{fx0, fy0, fx0 + rng.uniform_int(1, 12),
                          fy0 + rng.uniform_int(1, 12)};
    const int k = rng.uniform_int(2, 5);
    std::vector<Box> boxes;
    const int nb = rng.uniform_int(0, 5);
    for (int b = 0; b < nb; ++b) {
      const int x0 = rng.uniform_int(0, 28);
      const int y0 = rng.uniform_int(0, 28);
      boxes.push_back({x0, y0, x0 + rng.uniform_int(1, 10),
                       y0 + rng.uniform_int(1, 10), rng.uniform_int(0, k - 1)});
    }
    // zeta drawn from a set including values that make exact-boundary ratios
    const double zetas[] = {0.1, 0.25, 0.5, 0.6, 0.75, 1.0};
    const double zeta = zetas[rng.uniform_int(0, 5)];
    const auto got = label_semantic_vector(boxes, k, zeta, field);
    const auto want = oracles::rasterized_semantic_vector(boxes, k, zeta, field);
    REQUIRE(got == want);
  }
}

TEST_CASE("local map basics", "[labels]") {
  const LabelingConfig cfg{0.6, 3};

  SECTION("empty scene is all zeros") {
    const auto map = label_map_local(scene_with(32, 32, {}), kStack, 4, cfg);
    for (auto v : map.values) CHECK(v == 0);
  }
  SECTION("full-image box is all ones") {
    const auto map =
        label_map_local(scene_with(32, 32, {{0, 0, 32, 32, 1}}), kStack, 4, cfg);
    for (auto v : map.values) CHECK(v == 1);
  }
  SECTION("small centered box matches per-position recomputation") {
    const auto scene = scene_with(32, 32, {{13, 13, 19, 19, 2}});
    const auto map = label_map_local(scene, kStack, 4, cfg);
    bool any_one = false, any_zero = false;
    for (int i = 0; i < map.h; ++i)
      for (int j = 0; j < map.w; ++j) {
        const auto f = scfam::rf::project_field(kStack, 4, i, j, 32, 32);
        const auto vec =
            oracles::rasterized_semantic_vector(scene.boxes, 3, 0.6, f);
        const bool want = vec[0] || vec[1] || vec[2];
        REQUIRE(map.at(i, j) == (want ? 1 : 0));
        any_one |= want;
        any_zero |= !want;
      }
    CHECK(any_one);
    CHECK(any_zero);
  }
}

TEST_CASE("mid map basics", "[labels]") {
  const LabelingConfig cfg{0.6, 3};

  SECTION("empty scene is all zeros") {
    const auto map = label_map_mid(scene_with(32, 32, {}), kStack, 2, cfg);
    for (auto v : map.values) CHECK(v == 0);
  }
  SECTION("single class everywhere fills exactly one channel") {
    const auto map =
        label_map_mid(scene_with(32, 32, {{0, 0, 32, 32, 1}}), kStack, 2, cfg);
    for (int i = 0; i < map.h; ++i)
      for (int j = 0; j < map.w; ++j) {
        CHECK(map.at(0, i, j) == 0);
        CHECK(map.at(1, i, j) == 1);
        CHECK(map.at(2, i, j) == 0);
      }
  }
  SECTION("two corner boxes: corners single-class, overlap region mixed") {
    const auto scene =
        scene_with(32, 32, {{0, 0, 12, 12, 0}, {20, 20, 32, 32, 2}});
    const auto map = label_map_mid(scene, kStack, 2, cfg);
    // oracle recomputation, position by position
    int mixed = 0, only0 = 0, only2 = 0;
    for (int i = 0; i < map.h; ++i)
      for (int j = 0; j < map.w; ++j) {
        const auto f = scfam::rf::project_field(kStack, 2, i, j, 32, 32);
        const auto vec =
            oracles::rasterized_semantic_vector(scene.boxes, 3, 0.6, f);
        for (int c = 0; c < 3; ++c) REQUIRE(map.at(c, i, j) == vec[c]);
        if (vec[0] && vec[2]) ++mixed;
        if (vec[0] && !vec[2]) ++only0;
        if (!vec[0] && vec[2]) ++only2;
      }
    CHECK(only0 > 0);
    CHECK(only2 > 0);
  }
}

TEST_CASE("global labels", "[labels]") {
  CHECK(label_global(scene_with(16, 16, {}), 5) ==
        std::vector<std::uint8_t>{0, 0, 0, 0, 0});
  CHECK(label_global(scene_with(16, 16, {{0, 0, 4, 4, 1}, {8, 8, 12, 12, 4}}), 5) ==
        std::vector<std::uint8_t>{0, 1, 0, 0, 1});
  // duplicate boxes of one class: union is idempotent
  CHECK(label_global(scene_with(16, 16, {{0, 0, 4, 4, 2}, {1, 1, 5, 5, 2}}), 3) ==
        std::vector<std::uint8_t>{0, 0, 1});
}

TEST_CASE("labeling properties", "[labels]") {
  scfam::Rng rng(88332);
  const LabelingConfig base{0.6, 4};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Box> boxes;
    const int nb = rng.uniform_int(1, 5);
    for (int b = 0; b < nb; ++b) {
      const int x0 = rng.uniform_int(0, 24);
      const int y0 = rng.uniform_int(0, 24);
      boxes.push_back({x0, y0, x0 + rng.uniform_int(2, 8), y0 + rng.uniform_int(2, 8),
                       rng.uniform_int(0, 3)});
    }
    auto scene = scene_with(32, 32, boxes);
    scfam::labels::normalize_boxes(scene);

    // raising zeta never adds a one
    const double z_lo = 0.3, z_hi = 0.8;
    const auto mid_lo = label_map_mid(scene, kStack, 3, {z_lo, 4});
    const auto mid_hi = label_map_mid(scene, kStack, 3, {z_hi, 4});
    for (std::size_t i = 0; i < mid_lo.values.size(); ++i)
      REQUIRE(mid_hi.values[i] <= mid_lo.values[i]);

    // mid collapsed by any-channel OR equals local on the same grid/layer
    const auto local = label_map_local(scene, kStack, 3, base);
    const auto mid = label_map_mid(scene, kStack, 3, base);
    for (int i = 0; i < local.h; ++i)
      for (int j = 0; j < local.w; ++j) {
        std::uint8_t any = 0;
        for (int c = 0; c < 4; ++c) any |= mid.at(c, i, j);
        REQUIRE(any == local.at(i, j));
      }

    // box order never matters
    auto reversed = scene;
    std::reverse(reversed.boxes.begin(), reversed.boxes.end());
    CHECK(label_map_mid(reversed, kStack, 3, base).values == mid.values);
    CHECK(label_global(reversed, 4) == label_global(scene, 4));
  }
}

TEST_CASE("normalize_boxes clips and drops degenerates", "[labels]") {
  auto scene = scene_with(16, 16, {{-4, -4, 4, 4, 0}, {10, 10, 10, 14, 1}, {30, 30, 40, 40, 2}});
  const int dropped = scfam::labels::normalize_boxes(scene);
  CHECK(dropped == 2);
  REQUIRE(scene.boxes.size() == 1);
  CHECK(scene.boxes[0].x0 == 0);
  CHECK(scene.boxes[0].y0 == 0);
}
