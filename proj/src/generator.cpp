#include "agis/generator.hpp"

#include <stdexcept>

namespace agis {

Generator::Generator(const GeneratorSpec& spec, Rng& rng) : spec_(spec) {
  if (spec.image_size % (1 << spec.levels) != 0)
    throw std::invalid_argument("generator: image_size must be divisible by 2^levels");
  int L = spec.levels;
  for (int i = 1; i <= L; ++i) {
    int cin = i == 1 ? spec.content_channels : spec.enc_channels(i - 1);
    content_convs_.emplace_back(cin, spec.enc_channels(i), 4, 2, 1, rng);
    int sin = i == 1 ? spec.style_in_channels() : spec.enc_channels(i - 1);
    style_convs_.emplace_back(sin, spec.enc_channels(i), 4, 2, 1, rng);
    if (i > 1) {
      content_norms_.emplace_back(spec.enc_channels(i));
      style_norms_.emplace_back(spec.enc_channels(i));
    }
  }
  for (int i = 1; i <= L; ++i) {
    shape_deconvs_.emplace_back(spec.shape_dec_in_channels(i), spec.dec_out_channels(i), 4, 2, 1,
                                rng);
    shape_norms_.emplace_back(spec.dec_out_channels(i));
    tex_deconvs_.emplace_back(spec.tex_dec_in_channels(i), spec.dec_out_channels(i), 4, 2, 1, rng);
    tex_norms_.emplace_back(spec.dec_out_channels(i));
  }
  shape_head_ = Conv2d(spec.dec_out_channels(L), 1, 3, 1, 1, rng);
  tex_head_ = Conv2d(spec.dec_out_channels(L) + 1, 3, 3, 1, 1, rng);
}

EncoderActivations Generator::run_encoder(const Var& x, const std::vector<Conv2d>& convs,
                                          const std::vector<InstanceNorm>& norms) const {
  EncoderActivations acts;
  Var h = x;
  for (size_t i = 0; i < convs.size(); ++i) {
    h = convs[i](h);
    // No norm on the first layer (keeps input statistics) or on 1x1 maps,
    // where per-instance normalization would erase the activation.
    if (i > 0 && h.shape()[2] > 1) h = norms[i - 1](h);
    h = relu(h);
    acts.levels.push_back(h);
  }
  return acts;
}

EncoderActivations Generator::encode_content(const Var& x_c) const {
  if (x_c.value().rank() != 4 || x_c.shape()[1] != spec_.content_channels ||
      x_c.shape()[2] != spec_.image_size || x_c.shape()[3] != spec_.image_size)
    throw std::invalid_argument("encode_content: expected [N," +
                                std::to_string(spec_.content_channels) + "," +
                                std::to_string(spec_.image_size) + "," +
                                std::to_string(spec_.image_size) + "], got " +
                                Tensor::shape_str(x_c.shape()));
  return run_encoder(x_c, content_convs_, content_norms_);
}

EncoderActivations Generator::encode_style(const Var& xs) const {
  if (xs.value().rank() != 4 || xs.shape()[1] != spec_.style_in_channels() ||
      xs.shape()[2] != spec_.image_size || xs.shape()[3] != spec_.image_size)
    throw std::invalid_argument("encode_style: expected " +
                                std::to_string(spec_.style_in_channels()) +
                                " input channels (m=" + std::to_string(spec_.style_count) +
                                "), got " + Tensor::shape_str(xs.shape()));
  return run_encoder(xs, style_convs_, style_norms_);
}

std::pair<Var, std::vector<Var>> Generator::decode_shape(const EncoderActivations& content,
                                                         const EncoderActivations& style) const {
  int L = spec_.levels;
  if (static_cast<int>(content.levels.size()) != L || static_cast<int>(style.levels.size()) != L)
    throw std::invalid_argument("decode_shape: encoder level count mismatch");
  std::vector<Var> feats;
  Var h;
  for (int i = 1; i <= L; ++i) {
    const Var& ce = content.levels[static_cast<size_t>(L - i)];
    const Var& se = style.levels[static_cast<size_t>(L - i)];
    Var in = i == 1 ? concat_channels({ce, se}) : concat_channels({h, ce, se});
    h = relu(shape_norms_[static_cast<size_t>(i - 1)](
        shape_deconvs_[static_cast<size_t>(i - 1)](in)));
    feats.push_back(h);
  }
  Var y_gray = tanh_act(shape_head_(h));
  return {y_gray, feats};
}

Var Generator::decode_texture(const EncoderActivations& content, const EncoderActivations& style,
                              const std::vector<Var>& shape_feats, const Var& y_gray) const {
  int L = spec_.levels;
  if (static_cast<int>(shape_feats.size()) != L)
    throw std::invalid_argument("decode_texture: shape activations missing");
  Var h;
  for (int i = 1; i <= L; ++i) {
    const Var& ce = content.levels[static_cast<size_t>(L - i)];
    const Var& se = style.levels[static_cast<size_t>(L - i)];
    // Shape features at this resolution are the output of shape level i-1;
    // the bottleneck level has none.
    Var in = i == 1 ? concat_channels({ce, se})
                    : concat_channels({h, ce, se, shape_feats[static_cast<size_t>(i - 2)]});
    h = relu(tex_norms_[static_cast<size_t>(i - 1)](tex_deconvs_[static_cast<size_t>(i - 1)](in)));
  }
  return tanh_act(tex_head_(concat_channels({h, y_gray})));
}

std::pair<Var, Var> Generator::forward(const Var& x_c, const Var& xs) const {
  auto content = encode_content(x_c);
  auto style = encode_style(xs);
  auto [y_gray, shape_feats] = decode_shape(content, style);
  Var y = decode_texture(content, style, shape_feats, y_gray);
  return {y_gray, y};
}

ParamList Generator::params() {
  ParamList out;
  for (size_t i = 0; i < content_convs_.size(); ++i)
    content_convs_[i].register_params(out, "content_enc" + std::to_string(i + 1));
  for (size_t i = 0; i < content_norms_.size(); ++i)
    content_norms_[i].register_params(out, "content_norm" + std::to_string(i + 2));
  for (size_t i = 0; i < style_convs_.size(); ++i)
    style_convs_[i].register_params(out, "style_enc" + std::to_string(i + 1));
  for (size_t i = 0; i < style_norms_.size(); ++i)
    style_norms_[i].register_params(out, "style_norm" + std::to_string(i + 2));
  for (size_t i = 0; i < shape_deconvs_.size(); ++i) {
    shape_deconvs_[i].register_params(out, "shape_dec" + std::to_string(i + 1));
    shape_norms_[i].register_params(out, "shape_dec_norm" + std::to_string(i + 1));
  }
  for (size_t i = 0; i < tex_deconvs_.size(); ++i) {
    tex_deconvs_[i].register_params(out, "tex_dec" + std::to_string(i + 1));
    tex_norms_[i].register_params(out, "tex_dec_norm" + std::to_string(i + 1));
  }
  shape_head_.register_params(out, "shape_head");
  tex_head_.register_params(out, "tex_head");
  return out;
}

}  // namespace agis
