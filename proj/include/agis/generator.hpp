#pragma once

#include <utility>
#include <vector>

#include "agis/nn.hpp"

namespace agis {

/// Architecture description of the dual-branch generator. Channel counts are
/// derivable from this struct alone, which the wiring tests rely on.
struct GeneratorSpec {
  int levels = 6;           // encoder levels == decoder levels
  int base_channels = 64;   // channels after the first encoder conv
  int max_channels = 512;   // cap while doubling per level
  int style_count = 4;      // m: images concatenated into the style input
  int image_size = 64;      // input spatial size, must be divisible by 2^levels
  int content_channels = 3;

  int enc_channels(int level) const {  // level in 1..levels
    long c = static_cast<long>(base_channels) << (level - 1);
    return static_cast<int>(std::min<long>(c, max_channels));
  }
  /// Output channels of decoder level i (1 = deepest, levels = last up-conv).
  int dec_out_channels(int level) const {
    return level < levels ? enc_channels(levels - level) : base_channels;
  }
  /// Input channels of shape-decoder level i: previous decoder features plus
  /// the mirrored level of both encoders.
  int shape_dec_in_channels(int level) const {
    int prev = level == 1 ? 0 : dec_out_channels(level - 1);
    return prev + 2 * enc_channels(levels + 1 - level);
  }
  /// Texture-decoder level i additionally consumes the shape-decoder features
  /// at the same resolution (the output of shape level i-1, which carries the
  /// same channel count as each encoder skip at that level). The deepest level
  /// has no shape feature yet.
  int tex_dec_in_channels(int level) const {
    return shape_dec_in_channels(level) + (level == 1 ? 0 : dec_out_channels(level - 1));
  }
  int style_in_channels() const { return 3 * style_count; }

  bool operator==(const GeneratorSpec&) const = default;
};

/// Per-level feature tensors from one encoder pass; levels[k] has spatial
/// size image_size / 2^(k+1).
struct EncoderActivations {
  std::vector<Var> levels;
};

/// Dual-branch generator: content encoder, style encoder, shape decoder emitting
/// the gray glyph y_gray and texture decoder emitting the color image y, with
/// cross-branch skip connections at every level.
class Generator {
 public:
  Generator(const GeneratorSpec& spec, Rng& rng);

  EncoderActivations encode_content(const Var& x_c) const;
  EncoderActivations encode_style(const Var& xs) const;

  /// Returns (y_gray, per-level shape decoder features).
  std::pair<Var, std::vector<Var>> decode_shape(const EncoderActivations& content,
                                                const EncoderActivations& style) const;
  Var decode_texture(const EncoderActivations& content, const EncoderActivations& style,
                     const std::vector<Var>& shape_feats, const Var& y_gray) const;

  /// One full pass: (y_gray [N,1,S,S], y [N,3,S,S]), both in [-1,1].
  std::pair<Var, Var> forward(const Var& x_c, const Var& xs) const;

  const GeneratorSpec& spec() const { return spec_; }
  ParamList params();

 private:
  EncoderActivations run_encoder(const Var& x, const std::vector<Conv2d>& convs,
                                 const std::vector<InstanceNorm>& norms) const;

  GeneratorSpec spec_;
  std::vector<Conv2d> content_convs_, style_convs_;
  std::vector<InstanceNorm> content_norms_, style_norms_;  // none on first layer
  std::vector<ConvTranspose2d> shape_deconvs_, tex_deconvs_;
  std::vector<InstanceNorm> shape_norms_, tex_norms_;
  Conv2d shape_head_;  // dec features -> 1 channel, tanh
  Conv2d tex_head_;    // dec features + y_gray -> 3 channels, tanh
};

}  // namespace agis
