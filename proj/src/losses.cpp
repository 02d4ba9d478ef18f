#include "agis/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace agis {

AdversarialPair adversarial_losses(const Var& score_real, const Var& score_fake_detached,
                                   const Var& score_fake) {
  if (!score_real.value().same_shape(score_fake.value()))
    throw std::invalid_argument("adversarial_losses: score map shape mismatch");
  Var d = add(mean_all(sigmoid_ce(score_real, 1.0)),
              mean_all(sigmoid_ce(score_fake_detached, 0.0)));
  Var g = mean_all(sigmoid_ce(score_fake, 1.0));
  return {d, g};
}

Var l1_pair(const Var& y_gray, const Var& truth_gray, const Var& y, const Var& truth,
            const LossWeights& w) {
  if (!w.seen) return Var(Tensor::scalar(0.0));
  if (!y_gray.defined() || !truth_gray.defined() || !y.defined() || !truth.defined())
    throw std::invalid_argument("l1_pair: ground truth required when seen");
  Var gray_term = mean_all(abs_elem(sub(y_gray, truth_gray)));
  Var tex_term = mean_all(abs_elem(sub(y, truth)));
  return add(affine(gray_term, w.l1_gray, 0.0), affine(tex_term, w.l1_tex, 0.0));
}

std::vector<Tensor> extract_features(const FeatureExtractor& ex, const Tensor& img) {
  Tensor in = img;
  if (in.rank() == 3) in = in.reshaped({1, in.dim(0), in.dim(1), in.dim(2)});
  std::vector<Var> feats = ex.extract(Var(in, false));
  std::vector<Tensor> out;
  out.reserve(feats.size());
  for (const auto& f : feats) out.push_back(f.value());
  return out;
}

Var contextual_similarity(const Var& x, const Var& y, Scalar eps, Scalar h) {
  if (x.value().rank() != 2 || y.value().rank() != 2 || x.shape()[1] != y.shape()[1])
    throw std::invalid_argument("contextual_similarity: need [N,d] and [M,d] with equal d");
  Var xn = rowwise_l2_normalize(x);
  Var yn = rowwise_l2_normalize(y);
  // d_ij = 1 - <x_i, y_j> ; zero-norm rows normalize to zero, giving d = 1.
  Var dist = affine(matmul(xn, transpose(yn)), -1.0, 1.0);
  Var dmin = affine(rowwise_min(dist), 1.0, eps);
  Var dhat = div_colvec(dist, dmin);
  Var w = exp_elem(affine(dhat, -1.0 / h, 1.0 / h));
  Var cx = div_colvec(w, rowwise_sum(w));
  return mean_all(colwise_max(cx));
}

Var contextual_loss(const FeatureExtractor& ex, const Var& img, const Var& target) {
  std::vector<Var> fx = ex.extract(img);
  std::vector<Var> ft = ex.extract(target);
  Var acc;
  for (size_t l = 0; l < fx.size(); ++l) {
    Var term = log_elem(contextual_similarity(fx[l], ft[l]));
    acc = acc.defined() ? add(acc, term) : term;
  }
  return affine(acc, -1.0 / static_cast<Scalar>(fx.size()), 0.0);
}

namespace {
Var as_rgb(const Var& img) {
  return img.shape()[1] == 1 ? replicate_channel(img, 3) : img;
}
}  // namespace

Var contextual_pair(const FeatureExtractor& ex, const Var& y_gray, const Var& truth_gray,
                    const Var& y, const Var& truth, const LossWeights& w) {
  if (!w.seen) return Var(Tensor::scalar(0.0));
  Var gray = contextual_loss(ex, as_rgb(y_gray), as_rgb(truth_gray));
  Var tex = contextual_loss(ex, y, truth);
  return add(affine(gray, w.cx_gray, 0.0), affine(tex, w.cx_tex, 0.0));
}

PatchBatch cut_patches(const Var& img, int k, int patch, Rng& rng, Provenance tag) {
  int h = img.shape()[2], w = img.shape()[3];
  if (h < patch || w < patch)
    throw std::invalid_argument("cut_patches: image smaller than patch size");
  PatchBatch pb;
  pb.provenance = tag;
  for (int i = 0; i < k; ++i) {
    int h0 = rng.uniform_int(h - patch + 1);
    int w0 = rng.uniform_int(w - patch + 1);
    pb.corners.emplace_back(h0, w0);
    Var p = crop(img, h0, w0, patch, patch);
    pb.patches.push_back(p.shape()[1] == 1 ? replicate_channel(p, 3) : p);
  }
  return pb;
}

Tensor gaussian_blur(const Tensor& img, int ksize, Scalar sigma) {
  Tensor in = img;
  if (in.rank() == 3) in = in.reshaped({1, in.dim(0), in.dim(1), in.dim(2)});
  int n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  int r = ksize / 2;
  std::vector<Scalar> k1(static_cast<size_t>(ksize));
  for (int i = 0; i < ksize; ++i) {
    Scalar d = static_cast<Scalar>(i - r);
    k1[static_cast<size_t>(i)] = std::exp(-d * d / (2 * sigma * sigma));
  }
  Tensor out(in.shape());
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          Scalar acc = 0, wsum = 0;
          for (int di = -r; di <= r; ++di)
            for (int dj = -r; dj <= r; ++dj) {
              int ii = i + di, jj = j + dj;
              if (ii < 0 || ii >= h || jj < 0 || jj >= w) continue;
              Scalar kw = k1[static_cast<size_t>(di + r)] * k1[static_cast<size_t>(dj + r)];
              acc += kw * in.at4(b, ch, ii, jj);
              wsum += kw;
            }
          out.at4(b, ch, i, j) = acc / wsum;
        }
  return img.rank() == 3 ? out.reshaped(img.shape()) : out;
}

PatchBatch blur_patches(const PatchBatch& pb) {
  if (pb.provenance != Provenance::real)
    throw std::invalid_argument("blur_patches: only real patches may be blurred");
  PatchBatch out;
  out.provenance = Provenance::blurred;
  out.corners = pb.corners;
  for (const auto& p : pb.patches)
    out.patches.emplace_back(gaussian_blur(p.value()), false);
  return out;
}

LocalPair local_losses(const PatchDiscriminator& d_local, const PatchBatch& real_pb,
                       const PatchBatch& blur_pb, const PatchBatch& gen_pb,
                       Scalar lambda_local) {
  if (real_pb.patches.empty() || blur_pb.patches.empty() || gen_pb.patches.empty())
    throw std::invalid_argument("local_losses: empty patch batch");
  // Detached generated patches for the discriminator side.
  std::vector<Var> gen_detached;
  gen_detached.reserve(gen_pb.patches.size());
  for (const auto& p : gen_pb.patches) gen_detached.push_back(p.detach());

  Var real_scores = d_local(concat_batch(real_pb.patches));
  Var blur_scores = d_local(concat_batch(blur_pb.patches));
  Var gen_scores_d = d_local(concat_batch(gen_detached));
  Var d = add(mean_all(sigmoid_ce(real_scores, 1.0)),
              add(mean_all(sigmoid_ce(blur_scores, 0.0)),
                  mean_all(sigmoid_ce(gen_scores_d, 0.0))));
  Var g;
  if (lambda_local == 0.0) {
    g = Var(Tensor::scalar(0.0));
  } else {
    Var gen_scores = d_local(concat_batch(gen_pb.patches));
    g = affine(mean_all(sigmoid_ce(gen_scores, 1.0)), lambda_local, 0.0);
  }
  return {d, g};
}

Var total_generator_loss(const GeneratorLossParts& parts, const LossWeights& w) {
  Var adv = add(affine(parts.adv_sha_g, w.adv_sha, 0.0), affine(parts.adv_tex_g, w.adv_tex, 0.0));
  return add(add(adv, parts.l1), add(parts.cx, parts.local_g));
}

}  // namespace agis
