#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agis/dataset.hpp"

namespace agis {

/// Single-scale SSIM on the luminance channel. Constants K1=0.01, K2=0.03,
/// dynamic range 255 (images are mapped from [-1,1] to 8-bit scale) and an
/// 11x11 Gaussian window with sigma 1.5, averaged over valid positions.
Scalar ssim(const GlyphImage& a, const GlyphImage& b);

/// Fraction of pixels whose binarization agrees. Both images are thresholded
/// at luminance 0 (the midpoint of [-1,1]); the darker side is foreground.
Scalar pix_acc(const GlyphImage& a, const GlyphImage& b);

/// Embedding + class-probability heads for distribution metrics. Pluggable so
/// desk-scale tests can use a tiny fixed-seed model.
class EvalEmbedder {
 public:
  virtual ~EvalEmbedder() = default;
  virtual Eigen::VectorXd embed(const GlyphImage& img) const = 0;
  virtual Eigen::VectorXd class_probs(const GlyphImage& img) const = 0;
  virtual int embed_dim() const = 0;
  virtual int num_classes() const = 0;
};

/// Fixed-seed random-projection embedder: tanh of a seeded linear map over a
/// pooled image, with a softmax class head on top. Deterministic per seed.
class TinyEmbedder : public EvalEmbedder {
 public:
  TinyEmbedder(std::uint64_t seed = 0x5eedu, int embed_dim = 16, int num_classes = 8,
               int pool_size = 8);
  Eigen::VectorXd embed(const GlyphImage& img) const override;
  Eigen::VectorXd class_probs(const GlyphImage& img) const override;
  int embed_dim() const override { return static_cast<int>(w_.rows()); }
  int num_classes() const override { return static_cast<int>(v_.rows()); }

 private:
  Eigen::MatrixXd w_, v_;
  Eigen::VectorXd bw_, bv_;
  int pool_;
};

/// Frechet distance between Gaussian fits (mu, C): |mu1-mu2|^2 +
/// tr(C1 + C2 - 2 sqrtm(C1^1/2 C2 C1^1/2)). Covariances are regularized with
/// eps on the diagonal before the matrix square roots.
Scalar frechet_distance(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& c1,
                        const Eigen::VectorXd& mu2, const Eigen::MatrixXd& c2,
                        Scalar eps = 1e-10);

/// exp of the mean KL divergence between each row of probs and the marginal.
Scalar inception_score(const Eigen::MatrixXd& probs);

struct FidIs {
  Scalar fid = 0;
  Scalar is = 0;
};

/// FID between Gaussian fits of the two sets' embeddings, and IS of the
/// generated set's class probabilities.
FidIs fid_is(const std::vector<GlyphImage>& gen_set, const std::vector<GlyphImage>& real_set,
             const EvalEmbedder& ex);

struct StyleMetrics {
  Scalar ssim = 0;
  Scalar pix_acc = 0;
  int count = 0;
};

struct MetricReport {
  std::map<std::string, StyleMetrics> per_style;
  StyleMetrics aggregate;
  std::optional<Scalar> fid;
  std::optional<Scalar> is;

  void validate() const;
  /// Line-delimited human-readable report.
  std::string to_text() const;
  /// Machine-readable JSON string.
  std::string to_json() const;
  void save(const std::string& text_path, const std::string& json_path) const;
};

/// Accumulate per-style and aggregate SSIM / pix-acc over (style, gen, truth)
/// triples.
MetricReport evaluate_pairs(
    const std::vector<std::tuple<std::string, GlyphImage, GlyphImage>>& pairs);

struct SheetRow {
  std::string label;
  std::vector<GlyphImage> images;  // equal sizes within the row
};

/// Composite bitmap: one row per entry, the label typeset in a fixed-width
/// left column, images side by side with a 2px gutter. Deterministic; written
/// as a lossless bitmap.
void render_sheet(const std::vector<SheetRow>& rows, const std::string& out_path);

}  // namespace agis
