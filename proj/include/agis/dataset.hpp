#pragma once

#include <array>
#include <string>
#include <vector>

#include "agis/rng.hpp"
#include "agis/tensor.hpp"

namespace agis {

// Glyph images are [C,H,W] tensors with values in [-1,1]; content glyphs are
// near-binary (background +1, ink -1).
using GlyphImage = Tensor;

bool in_unit_range(const GlyphImage& img);
/// True when at least `fraction` of the pixels are within `tol` of +-1.
bool is_near_binary(const GlyphImage& img, Scalar fraction = 0.95, Scalar tol = 0.1);
/// Rec.601 luminance of one pixel, on the [-1,1] scale.
Scalar pixel_luminance(const GlyphImage& img, int row, int col);

// ---- glyph rendering ----

struct FontParams {
  Scalar stroke_width;  // fraction of glyph height
  Scalar slant;         // horizontal shear per unit height
  Scalar x_scale;
};

/// Deterministic style parameters derived from the font id. Ids beginning
/// with "content" map to a fixed neutral style (the standard content font).
FontParams font_params(const std::string& font_id);

bool font_has_glyph(char32_t codepoint);

struct MissingGlyphError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Render one codepoint: stroke skeleton sheared/scaled per the font, bounding
/// box fit into a centered inner box of 54/64 of the canvas. Background +1,
/// ink -1, 3 channels.
GlyphImage render_glyph(const std::string& font_id, char32_t codepoint, int canvas = 64);

// ---- texturing ----

struct TextureSpec {
  enum class Kind { gradient, stripes };
  Kind kind = Kind::gradient;
  std::array<Scalar, 3> color_a{0, 0, 0};  // RGB in [0,1]
  std::array<Scalar, 3> color_b{0, 0, 0};
  Scalar angle = 0.0;   // direction, radians
  Scalar period = 4.0;  // stripes: repeat length in px, >= 2
  Scalar width = 2.0;   // stripes: width of color_a band in px

  void validate() const;
};

/// Replace ink pixels by texture colors; background stays untouched. Output
/// values are quantized to the 8-bit grid so forged images round-trip disk
/// bit-exactly.
GlyphImage apply_texture(const GlyphImage& glyph, const TextureSpec& spec);

/// The per-style texturing menu: `count` seeded presets alternating gradients
/// and stripes.
std::vector<TextureSpec> texture_presets(std::uint64_t style_seed, int count = 10);

/// Luminance-weighted grayscale replicated across 3 equal channels.
GlyphImage to_grayscale(const GlyphImage& img);

// ---- corpus manifest ----

struct ManifestEntry {
  std::string style_id;
  std::string char_id;  // decimal codepoint
  int texture_id = 0;
  std::string path;  // relative to the manifest directory
  std::string split; // "pretrain" or "finetune-test"
};

struct CorpusManifest {
  std::string content_font_id;
  std::string root_dir;  // directory the entry paths are relative to
  std::vector<ManifestEntry> entries;

  std::vector<std::string> style_ids() const;
  std::vector<const ManifestEntry*> entries_for_style(const std::string& style_id) const;
};

void save_manifest(const CorpusManifest& m, const std::string& path);
CorpusManifest load_manifest(const std::string& path);

struct ForgeOptions {
  int textures_per_style = 10;
  std::uint64_t seed = 0;
  int holdout_styles = 0;  // trailing styles labeled finetune-test
  std::string content_font_id = "content-regular";
};

/// Render fonts x chars x textures_per_style images to out_dir and write
/// out_dir/manifest.tsv. Characters a font cannot render are skipped and
/// reported via `skipped` when non-null.
CorpusManifest forge_corpus(const std::vector<std::string>& fonts, const std::u32string& chars,
                            const std::string& out_dir, const ForgeOptions& opts,
                            std::vector<std::string>* skipped = nullptr);

// ---- few-shot sampling ----

struct StyleReferenceSet {
  std::string style_id;
  std::vector<std::string> char_ids;
  std::vector<GlyphImage> images;  // one per char_id, same order

  int size() const { return static_cast<int>(images.size()); }
};

struct StyleInput {
  std::vector<GlyphImage> images;  // m references, draw order
  /// Channel-wise concatenation [3m,H,W]; layout equals list order, so
  /// de-concatenating recovers the source images exactly.
  Tensor concatenated() const;
};

/// n distinct characters of one style, deterministic per seed.
StyleReferenceSet sample_reference_set(const CorpusManifest& m, const std::string& style_id,
                                       int n, std::uint64_t seed);

/// m distinct elements of rs; consecutive calls on one Rng give fresh draws.
StyleInput sample_style_input(const StyleReferenceSet& rs, int m, Rng& rng);

/// Inverse of StyleInput::concatenated, for layout checks.
std::vector<GlyphImage> split_style_input(const Tensor& concatenated, int m);

}  // namespace agis
