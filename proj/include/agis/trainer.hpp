#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "agis/dataset.hpp"
#include "agis/discriminator.hpp"
#include "agis/generator.hpp"
#include "agis/losses.hpp"

namespace agis {

struct TrainConfig {
  enum class Phase { pretrain, finetune };
  Phase phase = Phase::finetune;
  int epochs = 3000;
  int batch_size = 26;
  int n = 5;  // few-shot reference set size
  int m = 4;  // style input size
  Scalar lr = 2e-4;
  std::uint64_t seed = 0;
  int validate_every = 50;
  LossWeights weights;
  int disc_base_channels = 64;
  int patches_per_image = 4;
  int patch_size = 32;
  std::u32string exploration_chars = U"ABCDEFGHIJKLMNOPQRSTUVWXYZ";
  std::string checkpoint_dir;  // empty: no checkpoints written

  void validate() const;
};

/// Generator, the three discriminators and the perceptual extractor, built
/// together so one seed fixes every initial weight.
struct Models {
  Generator gen;
  DiscriminatorSet discs;
  std::shared_ptr<FeatureExtractor> extractor;

  Models(const GeneratorSpec& spec, int disc_base_channels, Rng& rng,
         std::shared_ptr<FeatureExtractor> ex, int disc_layers = 3);
};

struct Optimizers {
  Adam g;
  Adam d;
  Optimizers(Models& models, Scalar lr);
};

/// One training sample. When seen is false the ground-truth tensors stay empty
/// and the reconstruction terms are gated off.
struct Sample {
  Tensor x_c;          // [3,S,S] content glyph
  StyleInput xs;       // m style references
  bool seen = false;
  Tensor y_truth;      // [3,S,S]
  Tensor y_gray_truth; // [1,S,S]
  std::string char_id;
};

struct StepRecord {
  Scalar d_sha = 0, d_tex = 0, d_local = 0;
  Scalar g_adv_sha = 0, g_adv_tex = 0, g_l1 = 0, g_cx = 0, g_local = 0;
  Scalar g_total = 0;
};

struct TrainState {
  int epoch = 0;
  std::vector<StepRecord> history;
  Scalar best_validation = std::numeric_limits<Scalar>::infinity();
  std::string best_checkpoint_path;
};

struct TrainAbortError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Generator-side objective for a forward pass that has already produced
/// (y_gray, y). Exposed separately so the finite-difference oracle can
/// re-evaluate it with identical patch corners (patch_seed).
struct GeneratorObjective {
  GeneratorLossParts parts;
  Var total;
};
GeneratorObjective generator_objective(Models& models, const std::vector<Sample>& batch,
                                       const Var& y_gray, const Var& y, const TrainConfig& cfg,
                                       std::uint64_t patch_seed);

/// One alternating minimax step: update D_sha, D_tex, D_local on the current
/// detached fakes, then update G on the total generator loss. Real samples for
/// the discriminators are the ground truth when seen, otherwise a random
/// element of the style input. Throws TrainAbortError on non-finite losses.
StepRecord train_step(const std::vector<Sample>& batch, Models& models, Optimizers& opt,
                      const TrainConfig& cfg, Rng& rng);

/// Pre-training over the manifest's pretrain split: every character has
/// ground truth, so the reconstruction terms are always active.
TrainState pretrain(const CorpusManifest& manifest, Models& models, const TrainConfig& cfg);

/// Few-shot fine-tuning on one style. Seen gating is applied per character;
/// validation is the mean per-pixel L1 over the seen characters, and the best
/// checkpoint by that value is retained.
TrainState finetune(Models& models, const StyleReferenceSet& rs, const TrainConfig& cfg);

struct SynthResult {
  std::string char_id;
  GlyphImage y_gray;  // [1,S,S]
  GlyphImage y;       // [3,S,S]
};

/// Deterministic inference for a list of characters; the style input is drawn
/// once per character from rs with the given seed.
std::vector<SynthResult> synthesize(Models& models, const std::string& content_font,
                                    const std::u32string& chars, const StyleReferenceSet& rs,
                                    int m, std::uint64_t seed);

void save_models(const std::string& path, Generator& gen, DiscriminatorSet& discs);
/// Loads weights into existing models; the stored GeneratorSpec must equal
/// the live one.
void load_models(const std::string& path, Generator& gen, DiscriminatorSet& discs);
GeneratorSpec peek_checkpoint_spec(const std::string& path);

void export_history(const std::vector<StepRecord>& history, const std::string& path);

}  // namespace agis
