#include <cmath>
#include <cstdio>
#include <filesystem>

#include <catch2/catch_amalgamated.hpp>

#include "scfam/diff/ops.hpp"
#include "scfam/losses.hpp"
#include "scfam/net.hpp"
#include "scfam/rng.hpp"

using namespace scfam;
using diff::Shape;
using diff::Tensor;

namespace {

net::NetConfig small_config(bool spm = true, bool sbc = true, bool mda = true) {
  net::NetConfig cfg;
  cfg.backbone.image_channels = 3;
  cfg.backbone.layers = {
      {3, 1, 1, 6}, {3, 2, 1, 6}, {3, 1, 1, 12}, {3, 2, 1, 12}, {3, 1, 1, 16}, {3, 2, 1, 16}};
  cfg.backbone.tap_f1 = 2;
  cfg.backbone.tap_f2 = 4;
  cfg.backbone.tap_f3 = 6;
  cfg.num_classes = 3;
  cfg.s1 = 4;
  cfg.s2 = 5;
  cfg.sg = 6;
  cfg.disc_width = 8;
  cfg.det_width = 8;
  cfg.with_spm = spm;
  cfg.with_sbc = sbc;
  cfg.with_mda = mda;
  return cfg;
}

Tensor random_image(Rng& rng, int c, int h, int w) {
  std::vector<double> data(static_cast<std::size_t>(c) * h * w);
  for (auto& v : data) v = rng.uniform();
  return Tensor::from_data({c, h, w}, std::move(data));
}

}  // namespace

TEST_CASE("backbone taps have the stride-arithmetic grid sizes", "[net]") {
  const auto cfg = small_config();
  net::ScfamNet model(cfg, 1);
  Rng rng(2);
  const Tensor img = random_image(rng, 3, 32, 32);
  const auto taps = model.forward_backbone(img);

  const auto stack = cfg.backbone.stack();
  const auto g1 = rf::output_grid(stack, cfg.backbone.tap_f1, 32, 32);
  const auto g2 = rf::output_grid(stack, cfg.backbone.tap_f2, 32, 32);
  const auto g3 = rf::output_grid(stack, cfg.backbone.tap_f3, 32, 32);
  CHECK(taps.f1.shape() == Shape{6, g1.h, g1.w});
  CHECK(taps.f2.shape() == Shape{12, g2.h, g2.w});
  CHECK(taps.f3.shape() == Shape{16, g3.h, g3.w});

  SECTION("zero image gives finite activations") {
    const auto z = model.forward_backbone(Tensor::zeros({3, 32, 32}));
    for (double v : z.f3.data()) CHECK(std::isfinite(v));
  }
  SECTION("identical inputs give identical taps") {
    const auto again = model.forward_backbone(img);
    CHECK(taps.f3.data() == again.f3.data());
  }
  SECTION("wrong channel count is rejected") {
    CHECK_THROWS_AS(model.forward_backbone(Tensor::zeros({1, 32, 32})),
                    std::invalid_argument);
  }
}

TEST_CASE("spm outputs are probabilities with the right shapes", "[net]") {
  const auto cfg = small_config();
  net::ScfamNet model(cfg, 3);
  Rng rng(4);

  double acc = 0.0;
  int count = 0;
  for (int trial = 0; trial < 8; ++trial) {
    const auto taps = model.forward_backbone(random_image(rng, 3, 32, 32));
    const auto spm = model.forward_spm(taps);
    REQUIRE(spm.p_local.shape() == Shape{1, 16, 16});
    REQUIRE(spm.p_mid.shape() == Shape{3, 8, 8});
    REQUIRE(spm.p_global.shape() == Shape{3});
    REQUIRE(spm.s1_feat.shape() == Shape{4, 16, 16});
    REQUIRE(spm.s2_feat.shape() == Shape{5, 8, 8});
    for (double v : spm.p_local.data()) {
      REQUIRE(v > 0.0);
      REQUIRE(v < 1.0);
    }
    for (double v : spm.p_mid.data()) {
      acc += v;
      ++count;
      REQUIRE(v > 0.0);
      REQUIRE(v < 1.0);
    }
    CHECK(diff::channel_max(spm.p_mid).shape() == Shape{8, 8});
  }
  // untrained heads hover around 1/2
  CHECK(acc / count == Catch::Approx(0.5).margin(0.2));
}

TEST_CASE("semantic bridge concatenates and splits exactly", "[net]") {
  Rng rng(5);
  const Tensor f = random_image(rng, 4, 8, 8);
  const Tensor s = random_image(rng, 2, 8, 8);
  const Tensor bridged = net::semantic_bridge(f, s);
  REQUIRE(bridged.shape() == Shape{6, 8, 8});
  for (std::size_t i = 0; i < f.data().size(); ++i)
    REQUIRE(bridged.data()[i] == f.data()[i]);
  for (std::size_t i = 0; i < s.data().size(); ++i)
    REQUIRE(bridged.data()[f.data().size() + i] == s.data()[i]);

  CHECK_THROWS_AS(net::semantic_bridge(f, random_image(rng, 2, 4, 4)),
                  std::invalid_argument);
}

TEST_CASE("discriminator channel accounting", "[net]") {
  SECTION("with the bridge: C+S channels") {
    net::ScfamNet model(small_config(true, true, true), 7);
    const auto [in_l, in_m] = model.discriminator_in_channels();
    CHECK(in_l == 6 + 4);
    CHECK(in_m == 12 + 5);
  }
  SECTION("without the bridge: C channels") {
    net::ScfamNet model(small_config(true, false, true), 7);
    const auto [in_l, in_m] = model.discriminator_in_channels();
    CHECK(in_l == 6);
    CHECK(in_m == 12);
  }
  SECTION("toggling the bridge never changes SPM outputs for one seed") {
    net::ScfamNet with(small_config(true, true, true), 11);
    net::ScfamNet without(small_config(true, false, true), 11);
    Rng rng(8);
    const Tensor img = random_image(rng, 3, 32, 32);
    const auto a = with.forward_spm(with.forward_backbone(img));
    const auto b = without.forward_spm(without.forward_backbone(img));
    CHECK(a.p_local.data() == b.p_local.data());
    CHECK(a.p_mid.data() == b.p_mid.data());
    CHECK(a.p_global.data() == b.p_global.data());
  }
  SECTION("sbc without spm is rejected") {
    CHECK_THROWS_AS(net::ScfamNet(small_config(false, true, true), 1),
                    std::invalid_argument);
  }
}

TEST_CASE("discriminator outputs and GRL wiring", "[net]") {
  const auto cfg = small_config();
  net::ScfamNet model(cfg, 13);
  Rng rng(14);
  const Tensor img = random_image(rng, 3, 32, 32);
  const auto taps = model.forward_backbone(img);
  const auto spm = model.forward_spm(taps);
  const auto disc = model.forward_discriminators(
      net::semantic_bridge(taps.f1, spm.s1_feat),
      net::semantic_bridge(taps.f2, spm.s2_feat), taps.f3);
  CHECK(disc.d_local.shape() == Shape{1, 16, 16});
  CHECK(disc.d_mid.shape() == Shape{1, 8, 8});
  CHECK(disc.d_global.shape() == Shape{1});
  for (double v : disc.d_local.data()) {
    REQUIRE(v > 0.0);
    REQUIRE(v < 1.0);
  }

  SECTION("discriminator loss gradient flips sign through the GRL") {
    // two-parameter toy: feature = w * x, discriminator p = sigmoid(v * feat)
    auto disc_loss_grad_w = [](bool use_grl) {
      const Tensor w = Tensor::from_data({1}, {0.8}, true);
      const Tensor v = Tensor::from_data({1}, {1.3}, true);
      const Tensor x = Tensor::from_data({1}, {0.5});
      Tensor feat = diff::mul(w, x);
      if (use_grl) feat = diff::gradient_reversal(feat);
      const Tensor p = diff::sigmoid(diff::mul(v, feat));
      const Tensor loss = losses::loss_da_pixel(diff::reshape(p, {1, 1}),
                                                losses::DomainTag::kTarget);
      diff::backward(loss);
      return w.grad()[0];
    };
    const double with_grl = disc_loss_grad_w(true);
    const double without_grl = disc_loss_grad_w(false);
    CHECK(with_grl == -without_grl);
    CHECK(with_grl != 0.0);
  }
}

TEST_CASE("detection head", "[net]") {
  const auto cfg = small_config();
  net::ScfamNet model(cfg, 15);
  Rng rng(16);
  const auto taps = model.forward_backbone(random_image(rng, 3, 32, 32));
  const auto det = model.forward_det_head(taps.f3);
  CHECK(det.objectness.shape() == Shape{1, 4, 4});
  CHECK(det.class_map.shape() == Shape{3, 4, 4});
  CHECK(det.box_map.shape() == Shape{4, 4, 4});

  // deterministic given seed: rebuild and compare
  net::ScfamNet again(cfg, 15);
  Rng rng2(16);
  const auto det2 = again.forward_det_head(
      again.forward_backbone(random_image(rng2, 3, 32, 32)).f3);
  CHECK(det.objectness.data() == det2.objectness.data());
  CHECK(det.box_map.data() == det2.box_map.data());
}

TEST_CASE("checkpoint round trip restores behavior", "[net]") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "scfam_ckpt_test";
  fs::create_directories(dir);
  const std::string base = (dir / "weights").string();

  const auto cfg = small_config();
  net::ScfamNet model(cfg, 21);
  // perturb away from init so the round trip is meaningful
  for (auto& [name, t] : model.parameters())
    for (auto& v : t.data()) v += 0.01;
  model.save(base);

  Rng rng(22);
  const Tensor img = random_image(rng, 3, 32, 32);
  const auto want = model.forward_det_head(model.forward_backbone(img).f3);

  net::ScfamNet restored(cfg, 999);  // different seed, then overwritten by load
  restored.load(base);
  const auto got = restored.forward_det_head(restored.forward_backbone(img).f3);
  CHECK(got.objectness.data() == want.objectness.data());
  CHECK(got.class_map.data() == want.class_map.data());
  CHECK(got.box_map.data() == want.box_map.data());

  SECTION("loading into a mismatched architecture fails") {
    net::ScfamNet other(small_config(true, false, true), 1);
    CHECK_THROWS_AS(other.load(base), std::runtime_error);
  }
  fs::remove_all(dir);
}
