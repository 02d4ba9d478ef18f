#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "agis/discriminator.hpp"

using namespace agis;

TEST_CASE("score map sizes for the standard inputs") {
  Rng rng(0);
  PatchDiscriminator d(3, 8, rng);
  CHECK(d.score_map_size(64) == 6);
  CHECK(d.score_map_size(32) == 2);
  Tensor img64({2, 3, 64, 64}), img32({2, 3, 32, 32});
  fill_normal(img64, rng, 0.5);
  fill_normal(img32, rng, 0.5);
  CHECK(d(Var(img64, false)).shape() == std::vector<int>{2, 1, 6, 6});
  CHECK(d(Var(img32, false)).shape() == std::vector<int>{2, 1, 2, 2});
}

TEST_CASE("shape discriminator accepts 1ch or an equal-channel 3ch view") {
  Rng rng(1);
  DiscriminatorSet set(8, rng);
  Tensor gray1({1, 1, 32, 32});
  fill_normal(gray1, rng, 0.5);
  Var s1 = score_shape(set.sha, Var(gray1, false));
  CHECK(s1.shape() == std::vector<int>{1, 1, 2, 2});

  Tensor gray3({1, 3, 32, 32});
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 32; ++i)
      for (int j = 0; j < 32; ++j) gray3.at4(0, c, i, j) = gray1.at4(0, 0, i, j);
  Var s3 = score_shape(set.sha, Var(gray3, false));
  CHECK((s1.value().data() == s3.value().data()).all());

  Tensor color({1, 3, 32, 32});
  fill_normal(color, rng, 0.5);
  CHECK_THROWS(score_shape(set.sha, Var(color, false)));
}

TEST_CASE("scores are deterministic per seed") {
  Rng r1(4), r2(4);
  PatchDiscriminator a(3, 8, r1), b(3, 8, r2);
  Tensor img({1, 3, 32, 32});
  Rng data(7);
  fill_normal(img, data, 0.5);
  CHECK((a(Var(img, false)).value().data() == b(Var(img, false)).value().data()).all());
}

TEST_CASE("parameters are named uniquely and cover all layers") {
  Rng rng(5);
  DiscriminatorSet set(8, rng);
  ParamList params = set.params();
  CHECK(params.size() > 10);
  std::set<std::string> names;
  for (const auto& p : params) names.insert(p.name);
  CHECK(names.size() == params.size());
}
