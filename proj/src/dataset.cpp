#include "agis/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "agis/image_io.hpp"

namespace fs = std::filesystem;

namespace agis {

bool in_unit_range(const GlyphImage& img) {
  return (img.data().abs() <= 1.0 + 1e-12).all();
}

bool is_near_binary(const GlyphImage& img, Scalar fraction, Scalar tol) {
  Eigen::Index ok = ((img.data().abs() - 1.0).abs() <= tol).count();
  return static_cast<Scalar>(ok) >= fraction * static_cast<Scalar>(img.size());
}

Scalar pixel_luminance(const GlyphImage& img, int row, int col) {
  if (img.dim(0) == 1) return img.at3(0, row, col);
  auto to01 = [](Scalar v) { return (v + 1.0) / 2.0; };
  Scalar l = 0.299 * to01(img.at3(0, row, col)) + 0.587 * to01(img.at3(1, row, col)) +
             0.114 * to01(img.at3(2, row, col));
  return l * 2.0 - 1.0;
}

// ---- texturing ----

void TextureSpec::validate() const {
  auto color_ok = [](const std::array<Scalar, 3>& c) {
    return c[0] >= 0 && c[0] <= 1 && c[1] >= 0 && c[1] <= 1 && c[2] >= 0 && c[2] <= 1;
  };
  if (!color_ok(color_a) || !color_ok(color_b))
    throw std::invalid_argument("texture spec: colors must be RGB in [0,1]");
  if (kind == Kind::stripes) {
    if (period < 2.0) throw std::invalid_argument("texture spec: stripe period must be >= 2 px");
    if (width <= 0.0 || width >= period)
      throw std::invalid_argument("texture spec: stripe width must be in (0, period)");
  }
}

GlyphImage apply_texture(const GlyphImage& glyph, const TextureSpec& spec) {
  spec.validate();
  if (glyph.rank() != 3 || glyph.dim(0) != 3)
    throw std::invalid_argument("apply_texture: expected [3,H,W] glyph");
  int h = glyph.dim(1), w = glyph.dim(2);
  GlyphImage out = glyph;
  Scalar cs = std::cos(spec.angle), sn = std::sin(spec.angle);
  // Projection range across the canvas, for gradient normalization.
  Scalar pmin = std::min({0.0, cs * w, sn * h, cs * w + sn * h});
  Scalar pmax = std::max({0.0, cs * w, sn * h, cs * w + sn * h});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      if (pixel_luminance(glyph, i, j) >= 0) continue;  // background stays white
      Scalar proj = cs * (j + 0.5) + sn * (i + 0.5);
      std::array<Scalar, 3> rgb;
      if (spec.kind == TextureSpec::Kind::gradient) {
        Scalar t = pmax > pmin ? (proj - pmin) / (pmax - pmin) : 0.0;
        for (int ch = 0; ch < 3; ++ch)
          rgb[static_cast<size_t>(ch)] =
              spec.color_a[static_cast<size_t>(ch)] +
              t * (spec.color_b[static_cast<size_t>(ch)] - spec.color_a[static_cast<size_t>(ch)]);
      } else {
        Scalar phase = std::fmod(proj, spec.period);
        if (phase < 0) phase += spec.period;
        rgb = phase < spec.width ? spec.color_a : spec.color_b;
      }
      for (int ch = 0; ch < 3; ++ch)
        out.at3(ch, i, j) = quantize8(rgb[static_cast<size_t>(ch)] * 2.0 - 1.0);
    }
  return out;
}

std::vector<TextureSpec> texture_presets(std::uint64_t style_seed, int count) {
  Rng rng(style_seed);
  std::vector<TextureSpec> specs;
  for (int i = 0; i < count; ++i) {
    TextureSpec s;
    for (int ch = 0; ch < 3; ++ch) {
      s.color_a[static_cast<size_t>(ch)] = rng.uniform(0.0, 1.0);
      s.color_b[static_cast<size_t>(ch)] = rng.uniform(0.0, 1.0);
    }
    s.angle = rng.uniform(0.0, 3.14159265358979);
    if (i % 2 == 0) {
      s.kind = TextureSpec::Kind::gradient;
    } else {
      s.kind = TextureSpec::Kind::stripes;
      s.period = rng.uniform(3.0, 10.0);
      s.width = s.period * rng.uniform(0.3, 0.7);
    }
    specs.push_back(s);
  }
  return specs;
}

GlyphImage to_grayscale(const GlyphImage& img) {
  if (img.rank() != 3 || img.dim(0) != 3)
    throw std::invalid_argument("to_grayscale: expected [3,H,W]");
  GlyphImage out(img.shape());
  int h = img.dim(1), w = img.dim(2);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      Scalar l = pixel_luminance(img, i, j);
      for (int ch = 0; ch < 3; ++ch) out.at3(ch, i, j) = l;
    }
  return out;
}

// ---- manifest ----

std::vector<std::string> CorpusManifest::style_ids() const {
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (const auto& e : entries)
    if (seen.insert(e.style_id).second) ids.push_back(e.style_id);
  return ids;
}

std::vector<const ManifestEntry*> CorpusManifest::entries_for_style(
    const std::string& style_id) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.style_id == style_id) out.push_back(&e);
  return out;
}

void save_manifest(const CorpusManifest& m, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open manifest for writing: " + path);
  f << "#content_font\t" << m.content_font_id << "\n";
  for (const auto& e : m.entries)
    f << e.style_id << "\t" << e.char_id << "\t" << e.texture_id << "\t" << e.path << "\t"
      << e.split << "\n";
  if (!f) throw std::runtime_error("manifest write failed: " + path);
}

CorpusManifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open manifest: " + path);
  CorpusManifest m;
  m.root_dir = fs::path(path).parent_path().string();
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ss(line.substr(1));
      std::string key, value;
      std::getline(ss, key, '\t');
      std::getline(ss, value, '\t');
      if (key == "content_font") m.content_font_id = value;
      continue;
    }
    std::istringstream ss(line);
    ManifestEntry e;
    std::string tex;
    if (!std::getline(ss, e.style_id, '\t') || !std::getline(ss, e.char_id, '\t') ||
        !std::getline(ss, tex, '\t') || !std::getline(ss, e.path, '\t') ||
        !std::getline(ss, e.split, '\t'))
      throw std::runtime_error("malformed manifest line: " + line);
    e.texture_id = std::stoi(tex);
    m.entries.push_back(std::move(e));
  }
  return m;
}

CorpusManifest forge_corpus(const std::vector<std::string>& fonts, const std::u32string& chars,
                            const std::string& out_dir, const ForgeOptions& opts,
                            std::vector<std::string>* skipped) {
  if (fonts.empty()) throw std::invalid_argument("forge_corpus: no fonts");
  if (chars.empty()) throw std::invalid_argument("forge_corpus: no characters");
  if (opts.textures_per_style < 1)
    throw std::invalid_argument("forge_corpus: textures_per_style must be >= 1");
  fs::create_directories(out_dir);

  CorpusManifest m;
  m.content_font_id = opts.content_font_id;
  m.root_dir = out_dir;

  Rng seed_rng(opts.seed);
  int holdout_from = static_cast<int>(fonts.size()) - opts.holdout_styles;
  for (size_t fi = 0; fi < fonts.size(); ++fi) {
    const std::string& font = fonts[fi];
    std::uint64_t style_seed = seed_rng.raw();
    auto specs = texture_presets(style_seed, opts.textures_per_style);
    std::string split = static_cast<int>(fi) < holdout_from ? "pretrain" : "finetune-test";
    for (int ti = 0; ti < opts.textures_per_style; ++ti) {
      std::string style_id = font + "_t" + std::to_string(ti);
      fs::path style_dir = fs::path(out_dir) / style_id;
      fs::create_directories(style_dir);
      for (char32_t cp : chars) {
        std::string char_id = std::to_string(static_cast<std::uint32_t>(cp));
        GlyphImage glyph;
        try {
          glyph = render_glyph(font, cp);
        } catch (const MissingGlyphError&) {
          if (skipped) skipped->push_back(font + "/" + char_id);
          continue;
        }
        GlyphImage textured = apply_texture(glyph, specs[static_cast<size_t>(ti)]);
        std::string rel = style_id + "/c" + char_id + ".ppm";
        fs::path abs = fs::path(out_dir) / rel;
        try {
          write_image(abs.string(), textured);
        } catch (const std::exception& ex) {
          throw std::runtime_error(std::string("forge_corpus: ") + ex.what());
        }
        m.entries.push_back({style_id, char_id, ti, rel, split});
      }
    }
  }
  save_manifest(m, (fs::path(out_dir) / "manifest.tsv").string());
  return m;
}

// ---- few-shot sampling ----

StyleReferenceSet sample_reference_set(const CorpusManifest& m, const std::string& style_id,
                                       int n, std::uint64_t seed) {
  auto entries = m.entries_for_style(style_id);
  if (entries.empty()) throw std::invalid_argument("unknown style: " + style_id);
  std::sort(entries.begin(), entries.end(),
            [](const ManifestEntry* a, const ManifestEntry* b) { return a->char_id < b->char_id; });
  if (static_cast<int>(entries.size()) < n)
    throw std::invalid_argument("style " + style_id + " has only " +
                                std::to_string(entries.size()) + " characters, need " +
                                std::to_string(n));
  Rng rng(seed);
  auto idx = rng.sample_without_replacement(static_cast<int>(entries.size()), n);
  StyleReferenceSet rs;
  rs.style_id = style_id;
  for (int i : idx) {
    const ManifestEntry* e = entries[static_cast<size_t>(i)];
    rs.char_ids.push_back(e->char_id);
    rs.images.push_back(read_image((fs::path(m.root_dir) / e->path).string()));
  }
  return rs;
}

Tensor StyleInput::concatenated() const {
  if (images.empty()) throw std::logic_error("empty style input");
  int h = images[0].dim(1), w = images[0].dim(2);
  Tensor out({static_cast<int>(images.size()) * 3, h, w});
  Eigen::Index per = 3LL * h * w;
  for (size_t i = 0; i < images.size(); ++i)
    out.data().segment(static_cast<Eigen::Index>(i) * per, per) = images[i].data();
  return out;
}

StyleInput sample_style_input(const StyleReferenceSet& rs, int m, Rng& rng) {
  if (m >= rs.size())
    throw std::invalid_argument("style input size m=" + std::to_string(m) +
                                " must be smaller than the reference set n=" +
                                std::to_string(rs.size()));
  auto idx = rng.sample_without_replacement(rs.size(), m);
  StyleInput si;
  for (int i : idx) si.images.push_back(rs.images[static_cast<size_t>(i)]);
  return si;
}

std::vector<GlyphImage> split_style_input(const Tensor& concatenated, int m) {
  if (concatenated.dim(0) != 3 * m)
    throw std::invalid_argument("split_style_input: channel count is not 3m");
  int h = concatenated.dim(1), w = concatenated.dim(2);
  Eigen::Index per = 3LL * h * w;
  std::vector<GlyphImage> out;
  for (int i = 0; i < m; ++i)
    out.emplace_back(std::vector<int>{3, h, w},
                     ArrayX(concatenated.data().segment(static_cast<Eigen::Index>(i) * per, per)));
  return out;
}

}  // namespace agis
