#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <set>

#include "agis/dataset.hpp"
#include "agis/image_io.hpp"

using namespace agis;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("agis_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

bool tensors_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && (a.data() == b.data()).all();
}

}  // namespace

TEST_CASE("glyph rendering is deterministic and near-binary") {
  GlyphImage a = render_glyph("font-a", U'A', 64);
  GlyphImage b = render_glyph("font-a", U'A', 64);
  CHECK(tensors_equal(a, b));
  CHECK(a.shape() == std::vector<int>{3, 64, 64});
  CHECK(in_unit_range(a));
  CHECK(is_near_binary(a));
  // some ink, some background
  CHECK((a.data() < 0).any());
  CHECK((a.data() > 0).any());
}

TEST_CASE("all 26 letters render to distinct images") {
  std::set<std::string> seen;
  for (char32_t c = U'A'; c <= U'Z'; ++c) {
    GlyphImage g = render_glyph("font-a", c, 32);
    std::string bytes(reinterpret_cast<const char*>(g.data().data()),
                      static_cast<size_t>(g.size()) * sizeof(Scalar));
    seen.insert(bytes);
  }
  CHECK(seen.size() == 26);
}

TEST_CASE("different fonts produce different shapes for one character") {
  CHECK_FALSE(tensors_equal(render_glyph("font-a", U'B', 64), render_glyph("font-b", U'B', 64)));
}

TEST_CASE("render errors") {
  CHECK_THROWS_AS(render_glyph("font-a", U'@', 64), MissingGlyphError);
  CHECK_THROWS(render_glyph("font-a", U'A', 8));
  CHECK(font_has_glyph(U'A'));
  CHECK(font_has_glyph(U'z'));
  CHECK_FALSE(font_has_glyph(U'@'));
}

TEST_CASE("font params are deterministic and content fonts are neutral") {
  FontParams p1 = font_params("font-xyz");
  FontParams p2 = font_params("font-xyz");
  CHECK(p1.stroke_width == p2.stroke_width);
  CHECK(p1.slant == p2.slant);
  CHECK(font_params("content-regular").slant == 0.0);
}

TEST_CASE("texture spec validation") {
  TextureSpec s;
  s.kind = TextureSpec::Kind::stripes;
  s.period = 1.0;
  CHECK_THROWS(s.validate());
  s.period = 4.0;
  s.width = 5.0;
  CHECK_THROWS(s.validate());
  s.width = 2.0;
  s.color_a = {2.0, 0.0, 0.0};
  CHECK_THROWS(s.validate());
}

TEST_CASE("apply_texture colors only the ink and survives a disk round trip") {
  GlyphImage glyph = render_glyph("font-a", U'G', 64);
  TextureSpec spec;
  spec.kind = TextureSpec::Kind::gradient;
  spec.color_a = {0.9, 0.1, 0.1};
  spec.color_b = {0.1, 0.1, 0.9};
  spec.angle = 0.7;
  GlyphImage tex = apply_texture(glyph, spec);
  CHECK(in_unit_range(tex));
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c)
      if (pixel_luminance(glyph, r, c) > 0)  // background pixel
        for (int ch = 0; ch < 3; ++ch) CHECK(tex.at3(ch, r, c) == glyph.at3(ch, r, c));

  fs::path p = temp_dir("roundtrip") / "g.ppm";
  write_image(p.string(), tex);
  CHECK(tensors_equal(read_image(p.string()), tex));
}

TEST_CASE("texture presets are seeded and mix both kinds") {
  auto a = texture_presets(42, 10);
  auto b = texture_presets(42, 10);
  REQUIRE(a.size() == 10);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].color_a == b[i].color_a);
    CHECK(a[i].kind == b[i].kind);
    a[i].validate();
  }
  bool has_gradient = false, has_stripes = false;
  for (const auto& s : a) (s.kind == TextureSpec::Kind::gradient ? has_gradient : has_stripes) = true;
  CHECK(has_gradient);
  CHECK(has_stripes);
  CHECK(texture_presets(42, 10)[0].color_a != texture_presets(43, 10)[0].color_a);
}

TEST_CASE("grayscale uses Rec.601 weights on equalized channels") {
  GlyphImage img({3, 1, 1});
  img.at3(0, 0, 0) = 1.0;
  img.at3(1, 0, 0) = -1.0;
  img.at3(2, 0, 0) = 0.5;
  GlyphImage g = to_grayscale(img);
  Scalar expect = 0.299 * 1.0 + 0.587 * -1.0 + 0.114 * 0.5;
  for (int c = 0; c < 3; ++c) CHECK(g.at3(c, 0, 0) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("corpus formula: 3 fonts x 5 chars x 10 textures = 150 unique entries") {
  fs::path dir = temp_dir("forge150");
  ForgeOptions opts;
  opts.textures_per_style = 10;
  CorpusManifest m = forge_corpus({"font-a", "font-b", "font-c"}, U"ABCDE", dir.string(), opts);
  CHECK(m.entries.size() == 150);
  std::set<std::tuple<std::string, std::string, int>> keys;
  for (const auto& e : m.entries) {
    keys.insert({e.style_id, e.char_id, e.texture_id});
    CHECK(fs::exists(dir / e.path));
    CHECK(e.split == "pretrain");
  }
  CHECK(keys.size() == 150);
  CHECK(m.style_ids().size() == 30);  // fonts x textures

  // manifest round trip
  CorpusManifest loaded = load_manifest((dir / "manifest.tsv").string());
  REQUIRE(loaded.entries.size() == m.entries.size());
  CHECK(loaded.content_font_id == m.content_font_id);
  for (size_t i = 0; i < m.entries.size(); ++i) {
    CHECK(loaded.entries[i].style_id == m.entries[i].style_id);
    CHECK(loaded.entries[i].char_id == m.entries[i].char_id);
    CHECK(loaded.entries[i].texture_id == m.entries[i].texture_id);
    CHECK(loaded.entries[i].path == m.entries[i].path);
    CHECK(loaded.entries[i].split == m.entries[i].split);
  }
  // every image round-trips losslessly
  const auto& e0 = m.entries.front();
  Tensor back = read_image((dir / e0.path).string());
  CHECK(in_unit_range(back));
}

TEST_CASE("full-scale corpus size reproduces 246 x 639 x 10") {
  CHECK(246LL * 639LL * 10LL == 1571940LL);
}

TEST_CASE("holdout styles are labeled finetune-test") {
  fs::path dir = temp_dir("forge_holdout");
  ForgeOptions opts;
  opts.textures_per_style = 2;
  opts.holdout_styles = 1;
  CorpusManifest m = forge_corpus({"font-a", "font-b"}, U"AB", dir.string(), opts);
  for (const auto& e : m.entries) {
    bool holdout = e.style_id.rfind("font-b", 0) == 0;
    CHECK(e.split == (holdout ? "finetune-test" : "pretrain"));
  }
}

TEST_CASE("missing glyphs are skipped and reported") {
  fs::path dir = temp_dir("forge_skip");
  ForgeOptions opts;
  opts.textures_per_style = 1;
  std::vector<std::string> skipped;
  CorpusManifest m = forge_corpus({"font-a"}, U"A@", dir.string(), opts, &skipped);
  CHECK(m.entries.size() == 1);
  REQUIRE(skipped.size() == 1);
  CHECK(skipped[0].find("64") != std::string::npos);  // '@' is codepoint 64
}

TEST_CASE("reference-set and style-input sampling are deterministic") {
  fs::path dir = temp_dir("forge_sample");
  ForgeOptions opts;
  opts.textures_per_style = 2;
  CorpusManifest m = forge_corpus({"font-a"}, U"ABCDEFG", dir.string(), opts);
  std::string style = m.style_ids().front();

  StyleReferenceSet r1 = sample_reference_set(m, style, 5, 7);
  StyleReferenceSet r2 = sample_reference_set(m, style, 5, 7);
  REQUIRE(r1.size() == 5);
  CHECK(r1.char_ids == r2.char_ids);
  std::set<std::string> distinct(r1.char_ids.begin(), r1.char_ids.end());
  CHECK(distinct.size() == 5);
  StyleReferenceSet r3 = sample_reference_set(m, style, 5, 8);
  CHECK(r1.char_ids != r3.char_ids);  // overwhelmingly likely for C(7,5) draws

  Rng rng(3);
  StyleInput xs = sample_style_input(r1, 4, rng);
  REQUIRE(xs.images.size() == 4);
  Tensor cat = xs.concatenated();
  CHECK(cat.shape() == std::vector<int>{12, 64, 64});
  auto split = split_style_input(cat, 4);
  REQUIRE(split.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(tensors_equal(split[static_cast<size_t>(i)], xs.images[static_cast<size_t>(i)]));

  // consecutive draws from one stream differ; equal seeds agree
  Rng rng_a(9), rng_b(9);
  StyleInput a1 = sample_style_input(r1, 2, rng_a);
  StyleInput a2 = sample_style_input(r1, 2, rng_a);
  StyleInput b1 = sample_style_input(r1, 2, rng_b);
  CHECK(tensors_equal(a1.concatenated(), b1.concatenated()));
  CHECK_FALSE(tensors_equal(a1.concatenated(), a2.concatenated()));

  CHECK_THROWS(sample_style_input(r1, 5, rng));  // m must be < n
}

TEST_CASE("repeated style-input draws cover more than one subset") {
  fs::path dir = temp_dir("forge_subsets");
  ForgeOptions opts;
  opts.textures_per_style = 1;
  CorpusManifest m = forge_corpus({"font-a"}, U"ABCDE", dir.string(), opts);
  StyleReferenceSet rs = sample_reference_set(m, m.style_ids().front(), 5, 0);
  Rng rng(0);
  std::set<std::string> subsets;
  for (int i = 0; i < 40; ++i) {
    StyleInput xs = sample_style_input(rs, 4, rng);
    Tensor cat = xs.concatenated();
    subsets.insert(std::string(reinterpret_cast<const char*>(cat.data().data()),
                               static_cast<size_t>(cat.size()) * sizeof(Scalar)));
  }
  CHECK(subsets.size() >= 4);
}
