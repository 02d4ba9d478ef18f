#pragma once

#include <string>
#include <vector>

#include "agis/nn.hpp"

namespace agis {

/// PatchGAN-style discriminator: 3 stride-2 convs with leaky ReLU (slope 0.2)
/// and instance norm (except the first layer), then a stride-1 score conv.
/// Emits a spatial map of realism logits rather than a single value.
class PatchDiscriminator {
 public:
  PatchDiscriminator() = default;
  PatchDiscriminator(int in_channels, int base_channels, Rng& rng, int layers = 3);

  /// img [N,in_channels,S,S] -> logits [N,1,s,s].
  Var operator()(const Var& img) const;

  /// Score-map side length for a given input size (input must be square).
  int score_map_size(int input_size) const;

  int in_channels() const { return in_channels_; }
  ParamList params(const std::string& prefix);

 private:
  int in_channels_ = 0;
  std::vector<Conv2d> convs_;
  std::vector<InstanceNorm> norms_;
  Conv2d score_conv_;
};

/// The three adversaries of the model, sharing one base width.
/// D_sha scores 1-channel gray glyphs, D_tex 3-channel textured glyphs and
/// D_local 3-channel 32x32 patches.
struct DiscriminatorSet {
  PatchDiscriminator sha, tex, local;

  DiscriminatorSet(int base_channels, Rng& rng, int layers = 3)
      : sha(1, base_channels, rng, layers),
        tex(3, base_channels, rng, layers),
        local(3, base_channels, rng, layers) {}

  ParamList params() {
    ParamList out = sha.params("d_sha");
    for (auto& p : tex.params("d_tex")) out.push_back(p);
    for (auto& p : local.params("d_local")) out.push_back(p);
    return out;
  }
};

/// Gray-image realism logits; input must be 1-channel, or a 3-channel view
/// with exactly equal channels (which is reduced to 1 channel first).
Var score_shape(const PatchDiscriminator& d_sha, const Var& img);
Var score_texture(const PatchDiscriminator& d_tex, const Var& img);
/// 32x32x3 patch realism logits.
Var score_patch(const PatchDiscriminator& d_local, const Var& patch);

}  // namespace agis
