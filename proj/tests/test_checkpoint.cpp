#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "agis/checkpoint.hpp"
#include "agis/trainer.hpp"

using namespace agis;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "agis_test_ckpt";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("checkpoint round-trips tensors and metadata bit-exactly") {
  Rng rng(1);
  Tensor a({3, 4});
  Tensor b({2, 2, 2});
  fill_normal(a, rng, 1.0);
  fill_normal(b, rng, 1.0);
  nlohmann::json meta = {{"note", "round trip"}, {"k", 7}};
  fs::path p = temp_file("basic.ckpt");
  save_checkpoint(p.string(), meta, {{"a", a}, {"b", b}});

  CheckpointData got = load_checkpoint(p.string());
  CHECK(got.meta["note"] == "round trip");
  CHECK(got.meta["k"] == 7);
  REQUIRE(got.tensors.size() == 2);
  CHECK(got.tensors[0].first == "a");
  CHECK(got.tensors[0].second.shape() == a.shape());
  CHECK((got.tensors[0].second.data() == a.data()).all());
  CHECK((got.tensors[1].second.data() == b.data()).all());
}

TEST_CASE("loading rejects corrupt or missing files") {
  CHECK_THROWS(load_checkpoint(temp_file("nope.ckpt").string()));
  fs::path p = temp_file("corrupt.ckpt");
  std::ofstream(p) << "not a checkpoint";
  CHECK_THROWS(load_checkpoint(p.string()));
}

TEST_CASE("generator spec serializes through JSON") {
  GeneratorSpec s;
  s.levels = 3;
  s.base_channels = 16;
  s.image_size = 32;
  s.style_count = 2;
  GeneratorSpec back = spec_from_json(spec_to_json(s));
  CHECK(back == s);
}

TEST_CASE("model checkpoints restore exact weights and validate the spec") {
  GeneratorSpec spec;
  spec.levels = 2;
  spec.base_channels = 4;
  spec.image_size = 8;
  spec.style_count = 2;
  Rng r1(3);
  Models m1(spec, 4, r1, ConvStackExtractor::hermetic(), 1);
  fs::path p = temp_file("models.ckpt");
  save_models(p.string(), m1.gen, m1.discs);

  CHECK(peek_checkpoint_spec(p.string()) == spec);

  Rng r2(99);  // different init, then restored from disk
  Models m2(spec, 4, r2, ConvStackExtractor::hermetic(), 1);
  load_models(p.string(), m2.gen, m2.discs);
  auto p1 = m1.gen.params(), p2 = m2.gen.params();
  REQUIRE(p1.size() == p2.size());
  for (size_t i = 0; i < p1.size(); ++i)
    CHECK((p1[i].var.value().data() == p2[i].var.value().data()).all());

  Tensor xc({1, 3, 8, 8}), xs({1, 6, 8, 8});
  Rng data(5);
  fill_normal(xc, data, 0.5);
  fill_normal(xs, data, 0.5);
  auto [g1, y1] = m1.gen.forward(Var(xc, false), Var(xs, false));
  auto [g2, y2] = m2.gen.forward(Var(xc, false), Var(xs, false));
  CHECK((y1.value().data() == y2.value().data()).all());

  // spec mismatch is rejected
  GeneratorSpec other = spec;
  other.base_channels = 8;
  Rng r3(7);
  Models m3(other, 4, r3, ConvStackExtractor::hermetic(), 1);
  CHECK_THROWS(load_models(p.string(), m3.gen, m3.discs));
}

TEST_CASE("assign_params flags missing names and shape mismatches") {
  Rng rng(8);
  Tensor t({2, 3});
  fill_normal(t, rng, 1.0);
  fs::path p = temp_file("assign.ckpt");
  save_checkpoint(p.string(), {}, {{"w", t}});
  CheckpointData ckpt = load_checkpoint(p.string());

  ParamList ok = {{"w", Var(Tensor({2, 3}), true)}};
  assign_params(ok, ckpt);
  CHECK((ok[0].var.value().data() == t.data()).all());

  ParamList wrong_name = {{"v", Var(Tensor({2, 3}), true)}};
  CHECK_THROWS(assign_params(wrong_name, ckpt));
  ParamList wrong_shape = {{"w", Var(Tensor({3, 2}), true)}};
  CHECK_THROWS(assign_params(wrong_shape, ckpt));
}
