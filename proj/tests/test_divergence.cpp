#include <cmath>

#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "scfam/divergence.hpp"
#include "scfam/rng.hpp"

using namespace scfam;
using divergence::DomainFeatureSet;
using divergence::FeatureSample;
using divergence::TrainerConfig;

namespace {

std::vector<std::vector<double>> gaussian_cloud(Rng& rng, int n, double mx,
                                                double my, double sx, double sy) {
  std::vector<std::vector<double>> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    out.push_back({mx + sx * rng.normal(), my + sy * rng.normal()});
  return out;
}

}  // namespace

TEST_CASE("identical distributions give near-zero divergence", "[divergence]") {
  Rng rng(101);
  const auto s = gaussian_cloud(rng, 400, 0.0, 0.0, 1.0, 1.0);
  const auto t = gaussian_cloud(rng, 400, 0.0, 0.0, 1.0, 1.0);
  const double d = divergence::estimate_h_divergence(s, t, TrainerConfig{});
  CHECK(d <= 0.15);
}

TEST_CASE("separable clusters give near-maximal divergence", "[divergence]") {
  Rng rng(102);
  const auto s = gaussian_cloud(rng, 300, -4.0, 0.0, 0.3, 0.3);
  const auto t = gaussian_cloud(rng, 300, 4.0, 0.0, 0.3, 0.3);
  const double d = divergence::estimate_h_divergence(s, t, TrainerConfig{});
  CHECK(d >= 1.85);
}

TEST_CASE("overlapping gaussians track the Bayes oracle", "[divergence]") {
  Rng rng(103);
  const double sep = 1.6;
  const auto s = gaussian_cloud(rng, 1000, 0.0, 0.0, 1.0, 1.0);
  const auto t = gaussian_cloud(rng, 1000, sep, 0.0, 1.0, 1.0);
  const double got = divergence::estimate_h_divergence(s, t, TrainerConfig{});
  const double want = oracles::bayes_h_divergence(
      [](double x, double y) { return oracles::gaussian2(x, y, 0.0, 0.0, 1.0, 1.0); },
      [&](double x, double y) { return oracles::gaussian2(x, y, sep, 0.0, 1.0, 1.0); },
      -6.0, 6.0 + sep, -6.0, 6.0, 400);
  INFO("estimate " << got << " vs bayes " << want);
  CHECK(std::fabs(got - want) <= 0.15);
}

TEST_CASE("estimate is invariant to sample order", "[divergence]") {
  Rng rng(104);
  auto s = gaussian_cloud(rng, 120, 0.0, 0.0, 1.0, 1.0);
  auto t = gaussian_cloud(rng, 120, 1.0, 0.5, 1.0, 1.0);
  const double a = divergence::estimate_h_divergence(s, t, TrainerConfig{});
  Rng shuffler(9);
  shuffler.shuffle(s);
  shuffler.shuffle(t);
  const double b = divergence::estimate_h_divergence(s, t, TrainerConfig{});
  CHECK(a == b);
}

TEST_CASE("sample floor is enforced", "[divergence]") {
  Rng rng(105);
  const auto s = gaussian_cloud(rng, 4, 0.0, 0.0, 1.0, 1.0);
  const auto t = gaussian_cloud(rng, 100, 0.0, 0.0, 1.0, 1.0);
  CHECK_THROWS_AS(divergence::estimate_h_divergence(s, t, TrainerConfig{}),
                  std::invalid_argument);
}

TEST_CASE("mixed-class enumeration", "[divergence]") {
  DomainFeatureSet data;
  auto add = [&](std::vector<int> subset, int domain) {
    data.samples.push_back(FeatureSample{{0.0, 0.0}, std::move(subset), domain});
  };
  add({2}, 0);
  add({1, 2}, 0);
  add({1}, 0);
  add({2, 1}, 1);  // unsorted duplicate of {1,2}
  add({1}, 1);

  const auto subsets = divergence::enumerate_mixed_classes(data);
  REQUIRE(subsets.size() == 3);
  CHECK(subsets[0] == std::vector<int>{1});
  CHECK(subsets[1] == std::vector<int>{2});
  CHECK(subsets[2] == std::vector<int>{1, 2});
}

TEST_CASE("mch reporting and additivity", "[divergence]") {
  Rng rng(106);
  TrainerConfig cfg;
  cfg.min_per_domain = 8;

  DomainFeatureSet data;
  auto add_cloud = [&](std::vector<int> subset, int domain, int n, double mx) {
    for (const auto& v : gaussian_cloud(rng, n, mx, 0.0, 0.6, 0.6))
      data.samples.push_back(FeatureSample{v, subset, domain});
  };
  // subset {0}: same distribution in both domains
  add_cloud({0}, 0, 60, 0.0);
  add_cloud({0}, 1, 60, 0.0);
  // subset {1}: shifted
  add_cloud({1}, 0, 60, 0.0);
  add_cloud({1}, 1, 60, 3.0);
  // subset {0,1}: only observed in the source domain -> unestimable
  add_cloud({0, 1}, 0, 30, 1.0);

  const auto report = divergence::estimate_mch(data, cfg);
  REQUIRE(report.per_subset.size() == 3);

  const auto& t0 = report.per_subset[0];
  CHECK(t0.subset == std::vector<int>{0});
  CHECK(t0.estimable);
  CHECK(t0.d_h <= 0.5);

  const auto& t1 = report.per_subset[1];
  CHECK(t1.subset == std::vector<int>{1});
  CHECK(t1.estimable);
  CHECK(t1.d_h >= 1.5);

  const auto& t01 = report.per_subset[2];
  CHECK(t01.subset == std::vector<int>{0, 1});
  CHECK_FALSE(t01.estimable);
  CHECK(t01.n_target == 0);

  // additivity, exact
  double sum = 0.0;
  for (const auto& t : report.per_subset)
    if (t.estimable) sum += t.d_h;
  CHECK(report.total == sum);

  for (const auto& t : report.per_subset) {
    CHECK(t.d_h >= 0.0);
    CHECK(t.d_h <= 2.0);
  }
}

TEST_CASE("mch restricted to singletons is the per-class estimator", "[divergence]") {
  Rng rng(107);
  TrainerConfig cfg;
  DomainFeatureSet data;
  std::vector<std::vector<double>> s0 = gaussian_cloud(rng, 40, 0.0, 0.0, 1.0, 1.0);
  std::vector<std::vector<double>> t0 = gaussian_cloud(rng, 40, 1.0, 0.0, 1.0, 1.0);
  std::vector<std::vector<double>> s1 = gaussian_cloud(rng, 40, -1.0, 0.0, 1.0, 1.0);
  std::vector<std::vector<double>> t1 = gaussian_cloud(rng, 40, 2.0, 0.0, 1.0, 1.0);
  for (const auto& v : s0) data.samples.push_back({v, {0}, 0});
  for (const auto& v : t0) data.samples.push_back({v, {0}, 1});
  for (const auto& v : s1) data.samples.push_back({v, {1}, 0});
  for (const auto& v : t1) data.samples.push_back({v, {1}, 1});

  const auto report = divergence::estimate_mch(data, cfg);
  REQUIRE(report.per_subset.size() == 2);
  CHECK(report.per_subset[0].d_h ==
        divergence::estimate_h_divergence(s0, t0, cfg));
  CHECK(report.per_subset[1].d_h ==
        divergence::estimate_h_divergence(s1, t1, cfg));
  CHECK(report.total ==
        report.per_subset[0].d_h + report.per_subset[1].d_h);
}

TEST_CASE("mch with no estimable subset errors", "[divergence]") {
  Rng rng(108);
  DomainFeatureSet data;
  for (const auto& v : gaussian_cloud(rng, 30, 0.0, 0.0, 1.0, 1.0))
    data.samples.push_back({v, {0}, 0});  // source only
  CHECK_THROWS_AS(divergence::estimate_mch(data, TrainerConfig{}),
                  std::runtime_error);
}
