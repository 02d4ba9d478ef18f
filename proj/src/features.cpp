#include "agis/features.hpp"

#include <stdexcept>

#include "agis/checkpoint.hpp"

namespace agis {

ConvStackExtractor::ConvStackExtractor(int in_channels, std::vector<int> channels,
                                       std::vector<int> taps, std::uint64_t seed)
    : taps_(std::move(taps)) {
  if (channels.empty() || taps_.empty())
    throw std::invalid_argument("ConvStackExtractor: empty layer configuration");
  for (int t : taps_)
    if (t < 1 || t > static_cast<int>(channels.size()))
      throw std::invalid_argument("ConvStackExtractor: tap index out of range");
  Rng rng(seed);
  int cin = in_channels;
  for (int cout : channels) {
    convs_.emplace_back(cin, cout, 3, 2, 1, rng, 0.2);
    cin = cout;
  }
  // Frozen: gradients flow through the input image only.
  ParamList ps = params();
  for (auto& p : ps) p.var.set_requires_grad(false);
}

std::shared_ptr<ConvStackExtractor> ConvStackExtractor::hermetic(std::uint64_t seed) {
  return std::make_shared<ConvStackExtractor>(3, std::vector<int>{8, 16}, std::vector<int>{1, 2},
                                              seed);
}

std::shared_ptr<ConvStackExtractor> ConvStackExtractor::production(
    const std::string& weights_path) {
  // Mid-depth taps of a deeper stack, analogous to the usual perceptual-layer
  // choice. L = 2 tapped layers.
  auto ex = std::make_shared<ConvStackExtractor>(
      3, std::vector<int>{32, 64, 128, 256}, std::vector<int>{2, 3}, 0xfeedbeef);
  if (!weights_path.empty()) ex->load_weights(weights_path);
  return ex;
}

std::vector<Var> ConvStackExtractor::extract(const Var& img) const {
  if (img.value().rank() != 4 || img.shape()[0] != 1 || img.shape()[1] != 3)
    throw std::invalid_argument("extractor: expected [1,3,H,W], got " +
                                Tensor::shape_str(img.shape()));
  std::vector<Var> out;
  Var h = img;
  int layer = 0;
  for (const auto& conv : convs_) {
    h = relu(conv(h));
    ++layer;
    for (int t : taps_)
      if (t == layer) out.push_back(spatial_vectors(h));
  }
  return out;
}

std::vector<std::string> ConvStackExtractor::layer_names() const {
  std::vector<std::string> names;
  for (int t : taps_) names.push_back("conv" + std::to_string(t));
  return names;
}

ParamList ConvStackExtractor::params() {
  ParamList out;
  for (size_t i = 0; i < convs_.size(); ++i)
    convs_[i].register_params(out, "extractor.conv" + std::to_string(i + 1));
  return out;
}

void ConvStackExtractor::load_weights(const std::string& path) {
  ParamList ps = params();
  assign_params(ps, load_checkpoint(path));
  for (auto& p : ps) p.var.set_requires_grad(false);
}

}  // namespace agis
