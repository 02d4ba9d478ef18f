#pragma once

#include <vector>

#include "agis/discriminator.hpp"
#include "agis/features.hpp"
#include "agis/rng.hpp"

namespace agis {

/// The seven balancing coefficients of the objective plus the seen/unseen
/// gate. When seen == false the reconstruction terms (L1 and contextual, both
/// streams) contribute exactly zero loss and zero gradient.
struct LossWeights {
  Scalar adv_sha = 1.0;
  Scalar adv_tex = 1.0;
  Scalar l1_gray = 50.0;
  Scalar l1_tex = 100.0;
  Scalar cx_gray = 15.0;
  Scalar cx_tex = 25.0;
  Scalar local = 1.0;
  bool seen = true;
};

struct AdversarialPair {
  Var d_loss;  // for the discriminator step (uses the detached fake scores)
  Var g_loss;  // for the generator step (gradients flow through score_fake)
};

/// Standard adversarial game on score-map logits, as stable cross-entropy.
/// d_loss = E[ce(real,1)] + E[ce(fake_detached,0)]; g_loss = E[ce(fake,1)]
/// (non-saturating generator objective).
AdversarialPair adversarial_losses(const Var& score_real, const Var& score_fake_detached,
                                   const Var& score_fake);

/// lambda_l1gray * mean|y_gray - truth_gray| + lambda_l1tex * mean|y - truth|,
/// or an exact zero constant when w.seen is false.
Var l1_pair(const Var& y_gray, const Var& truth_gray, const Var& y, const Var& truth,
            const LossWeights& w);

/// Per-layer feature-vector collections of an image (values only; see
/// FeatureExtractor for the differentiable path).
std::vector<Tensor> extract_features(const FeatureExtractor& ex, const Tensor& img);

/// CX(X,Y) per the contextual-loss definition: cosine distances d_ij between
/// rows, d^_ij = d_ij/(min_k d_ik + eps), w_ij = exp((1-d^_ij)/h),
/// CX_ij = w_ij / sum_k w_ik, CX = mean_j max_i CX_ij. Result in (0,1].
Var contextual_similarity(const Var& x, const Var& y, Scalar eps = 1e-5, Scalar h = 0.5);

/// -(1/L) * sum_l log CX(phi_l(img), phi_l(target)) over the extractor's layers.
Var contextual_loss(const FeatureExtractor& ex, const Var& img, const Var& target);

/// Weighted gray+texture contextual term, gated to an exact zero when unseen.
/// Gray inputs are 1-channel and are replicated to 3 channels for extraction.
Var contextual_pair(const FeatureExtractor& ex, const Var& y_gray, const Var& truth_gray,
                    const Var& y, const Var& truth, const LossWeights& w);

enum class Provenance { real, blurred, generated };

struct PatchBatch {
  Provenance provenance;
  std::vector<Var> patches;                 // each [1,3,p,p]
  std::vector<std::pair<int, int>> corners; // (h0, w0) per patch
};

/// k patches with uniformly sampled top-left corners; gradients flow back to
/// the source image (used on generated images).
PatchBatch cut_patches(const Var& img, int k, int patch, Rng& rng,
                       Provenance tag = Provenance::real);

/// Gaussian-filtered (5x5, sigma 1) copies of real patches, tagged blurred.
/// The kernel is renormalized at borders, so DC is preserved exactly.
PatchBatch blur_patches(const PatchBatch& pb);

/// Gaussian blur of a [C,H,W] or [N,C,H,W] tensor (values, no grads).
Tensor gaussian_blur(const Tensor& img, int ksize = 5, Scalar sigma = 1.0);

struct LocalPair {
  Var d_loss;
  Var g_loss;
};

/// D_local treats real patches as positives, blurred and generated patches as
/// negatives. g_loss = lambda_local * E[ce(D(generated),1)] on generated
/// patches only (pass the attached patches in gen_pb).
LocalPair local_losses(const PatchDiscriminator& d_local, const PatchBatch& real_pb,
                       const PatchBatch& blur_pb, const PatchBatch& gen_pb, Scalar lambda_local);

struct GeneratorLossParts {
  Var adv_sha_g;  // unweighted E[ce(D_sha(y_gray),1)]
  Var adv_tex_g;
  Var l1;         // already gated + weighted
  Var cx;         // already gated + weighted
  Var local_g;    // already weighted by lambda_local
};

/// L(G) = lambda_adv_sha * adv_sha + lambda_adv_tex * adv_tex + L1 + CX + L_local.
Var total_generator_loss(const GeneratorLossParts& parts, const LossWeights& w);

}  // namespace agis
