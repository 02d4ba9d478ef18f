#pragma once

#include <memory>
#include <string>
#include <vector>

#include "agis/nn.hpp"

namespace agis {

/// Pluggable perceptual feature extractor used by the contextual loss.
/// extract() maps one [1,3,S,S] image to one feature matrix per tapped layer;
/// each matrix holds one row per spatial position (shape [H_l*W_l, C_l]).
/// Extractors have frozen weights; gradients flow through the input only.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<Var> extract(const Var& img) const = 0;
  virtual std::vector<std::string> layer_names() const = 0;
};

/// Stack of stride-2 3x3 convs with ReLU; a configurable subset of layer
/// outputs is tapped. Weights come either from a fixed seed (hermetic test
/// extractor) or from a checkpoint file (production perceptual network).
class ConvStackExtractor : public FeatureExtractor {
 public:
  /// channels[i] = output width of conv layer i; taps = 1-based layer indices to emit.
  ConvStackExtractor(int in_channels, std::vector<int> channels, std::vector<int> taps,
                     std::uint64_t seed);

  /// The default hermetic extractor: two tapped layers, fixed seed, runs offline.
  static std::shared_ptr<ConvStackExtractor> hermetic(std::uint64_t seed = 0x5eed);

  /// Deeper stack standing in for a pretrained perceptual network; weights are
  /// loaded from `weights_path` when non-empty (see checkpoint format),
  /// otherwise seeded.
  static std::shared_ptr<ConvStackExtractor> production(const std::string& weights_path);

  std::vector<Var> extract(const Var& img) const override;
  std::vector<std::string> layer_names() const override;

  ParamList params();
  void load_weights(const std::string& path);

 private:
  std::vector<Conv2d> convs_;
  std::vector<int> taps_;
};

}  // namespace agis
