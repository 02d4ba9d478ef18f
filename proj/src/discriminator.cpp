#include "agis/discriminator.hpp"

#include <stdexcept>

namespace agis {

PatchDiscriminator::PatchDiscriminator(int in_channels, int base_channels, Rng& rng, int layers)
    : in_channels_(in_channels) {
  int cin = in_channels;
  for (int i = 0; i < layers; ++i) {
    int cout = base_channels << i;
    convs_.emplace_back(cin, cout, 4, 2, 1, rng);
    if (i > 0) norms_.emplace_back(cout);
    cin = cout;
  }
  score_conv_ = Conv2d(cin, 1, 3, 1, 0, rng);
}

Var PatchDiscriminator::operator()(const Var& img) const {
  if (img.value().rank() != 4 || img.shape()[1] != in_channels_)
    throw std::invalid_argument("discriminator: expected " + std::to_string(in_channels_) +
                                " channels, got " + Tensor::shape_str(img.shape()));
  Var h = img;
  for (size_t i = 0; i < convs_.size(); ++i) {
    h = convs_[i](h);
    if (i > 0) h = norms_[i - 1](h);
    h = leaky_relu(h, 0.2);
  }
  return score_conv_(h);
}

int PatchDiscriminator::score_map_size(int input_size) const {
  int s = input_size;
  for (size_t i = 0; i < convs_.size(); ++i) s = (s + 2 - 4) / 2 + 1;  // k4 s2 p1
  return s - 2;                                                        // k3 s1 p0
}

ParamList PatchDiscriminator::params(const std::string& prefix) {
  ParamList out;
  for (size_t i = 0; i < convs_.size(); ++i)
    convs_[i].register_params(out, prefix + ".conv" + std::to_string(i + 1));
  for (size_t i = 0; i < norms_.size(); ++i)
    norms_[i].register_params(out, prefix + ".norm" + std::to_string(i + 2));
  score_conv_.register_params(out, prefix + ".score");
  return out;
}

Var score_shape(const PatchDiscriminator& d_sha, const Var& img) {
  Var in = img;
  if (img.shape()[1] == 3) {
    // 3-channel gray view: channels must be equal, keep the first.
    const Tensor& t = img.value();
    int n = t.dim(0), h = t.dim(2), w = t.dim(3);
    for (int b = 0; b < n; ++b)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
          if (t.at4(b, 0, i, j) != t.at4(b, 1, i, j) || t.at4(b, 0, i, j) != t.at4(b, 2, i, j))
            throw std::invalid_argument("score_shape: 3-channel input is not gray");
    in = slice_channels(img, 0, 1);
  }
  return d_sha(in);
}

Var score_texture(const PatchDiscriminator& d_tex, const Var& img) { return d_tex(img); }

Var score_patch(const PatchDiscriminator& d_local, const Var& patch) { return d_local(patch); }

}  // namespace agis
