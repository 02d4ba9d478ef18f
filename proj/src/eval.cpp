#include "agis/eval.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

#include "agis/image_io.hpp"
#include "agis/rng.hpp"

namespace agis {

namespace {

Eigen::MatrixXd luminance_255(const GlyphImage& img) {
  int h = img.dim(1), w = img.dim(2);
  Eigen::MatrixXd out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      out(r, c) = (pixel_luminance(img, r, c) + 1.0) * 127.5;
  return out;
}

Eigen::MatrixXd gaussian_window(int k, Scalar sigma) {
  Eigen::MatrixXd win(k, k);
  int half = k / 2;
  for (int r = 0; r < k; ++r)
    for (int c = 0; c < k; ++c) {
      Scalar dr = r - half, dc = c - half;
      win(r, c) = std::exp(-(dr * dr + dc * dc) / (2 * sigma * sigma));
    }
  win /= win.sum();
  return win;
}

void check_same_shape(const GlyphImage& a, const GlyphImage& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("metric inputs have different shapes: " +
                                Tensor::shape_str(a.shape()) + " vs " +
                                Tensor::shape_str(b.shape()));
}

}  // namespace

Scalar ssim(const GlyphImage& a, const GlyphImage& b) {
  check_same_shape(a, b);
  Eigen::MatrixXd x = luminance_255(a), y = luminance_255(b);
  int h = static_cast<int>(x.rows()), w = static_cast<int>(x.cols());
  int k = std::min({11, h, w});
  if (k % 2 == 0) --k;
  if (k < 1) throw std::invalid_argument("ssim: image too small");
  Eigen::MatrixXd win = gaussian_window(k, 1.5);

  const Scalar c1 = (0.01 * 255) * (0.01 * 255);
  const Scalar c2 = (0.03 * 255) * (0.03 * 255);

  Scalar acc = 0;
  int count = 0;
  for (int r = 0; r + k <= h; ++r)
    for (int c = 0; c + k <= w; ++c) {
      auto bx = x.block(r, c, k, k), by = y.block(r, c, k, k);
      Scalar mx = (win.array() * bx.array()).sum();
      Scalar my = (win.array() * by.array()).sum();
      Scalar sxx = (win.array() * bx.array().square()).sum() - mx * mx;
      Scalar syy = (win.array() * by.array().square()).sum() - my * my;
      Scalar sxy = (win.array() * bx.array() * by.array()).sum() - mx * my;
      acc += ((2 * mx * my + c1) * (2 * sxy + c2)) /
             ((mx * mx + my * my + c1) * (sxx + syy + c2));
      ++count;
    }
  return acc / count;
}

Scalar pix_acc(const GlyphImage& a, const GlyphImage& b) {
  check_same_shape(a, b);
  int h = a.dim(1), w = a.dim(2);
  int agree = 0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      bool fa = pixel_luminance(a, r, c) < 0.0;  // darker side = foreground
      bool fb = pixel_luminance(b, r, c) < 0.0;
      agree += (fa == fb);
    }
  return static_cast<Scalar>(agree) / (static_cast<Scalar>(h) * w);
}

TinyEmbedder::TinyEmbedder(std::uint64_t seed, int embed_dim, int num_classes, int pool_size)
    : pool_(pool_size) {
  Rng rng(seed);
  int in = pool_size * pool_size;
  w_.resize(embed_dim, in);
  v_.resize(num_classes, embed_dim);
  bw_.resize(embed_dim);
  bv_.resize(num_classes);
  for (Eigen::Index i = 0; i < w_.size(); ++i) w_.data()[i] = rng.normal(0.0, 1.0 / std::sqrt(in));
  for (Eigen::Index i = 0; i < v_.size(); ++i)
    v_.data()[i] = rng.normal(0.0, 1.0 / std::sqrt(embed_dim));
  for (Eigen::Index i = 0; i < bw_.size(); ++i) bw_[i] = rng.normal(0.0, 0.1);
  for (Eigen::Index i = 0; i < bv_.size(); ++i) bv_[i] = rng.normal(0.0, 0.1);
}

Eigen::VectorXd TinyEmbedder::embed(const GlyphImage& img) const {
  int h = img.dim(1), w = img.dim(2);
  // Mean-pool luminance onto a pool_ x pool_ grid, then a tanh projection.
  Eigen::VectorXd pooled = Eigen::VectorXd::Zero(pool_ * pool_);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(pool_ * pool_);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      int pr = std::min(pool_ - 1, r * pool_ / h);
      int pc = std::min(pool_ - 1, c * pool_ / w);
      pooled[pr * pool_ + pc] += pixel_luminance(img, r, c);
      counts[pr * pool_ + pc] += 1;
    }
  pooled.array() /= counts.array().max(1.0);
  return (w_ * pooled + bw_).array().tanh();
}

Eigen::VectorXd TinyEmbedder::class_probs(const GlyphImage& img) const {
  Eigen::VectorXd logits = v_ * embed(img) + bv_;
  logits.array() -= logits.maxCoeff();
  Eigen::VectorXd p = logits.array().exp();
  return p / p.sum();
}

namespace {

/// Symmetric PSD square root via eigendecomposition, negative eigenvalues
/// (numerical noise) clamped to zero.
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  Eigen::VectorXd ev = es.eigenvalues().array().max(0.0).sqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

Scalar frechet_distance(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& c1,
                        const Eigen::VectorXd& mu2, const Eigen::MatrixXd& c2, Scalar eps) {
  Eigen::Index d = mu1.size();
  Eigen::MatrixXd r1 = c1 + eps * Eigen::MatrixXd::Identity(d, d);
  Eigen::MatrixXd r2 = c2 + eps * Eigen::MatrixXd::Identity(d, d);
  // tr sqrtm(C1 C2) computed via the symmetric form sqrtm(C1)^1/2-free trick:
  // sqrtm(C1 C2) has the same trace as sqrtm(S C2 S) with S = sqrtm(C1).
  Eigen::MatrixXd s = sqrtm_psd(r1);
  Eigen::MatrixXd cross = sqrtm_psd(s * r2 * s);
  Scalar fid = (mu1 - mu2).squaredNorm() + r1.trace() + r2.trace() - 2.0 * cross.trace();
  return std::max<Scalar>(fid, 0.0);
}

Scalar inception_score(const Eigen::MatrixXd& probs) {
  if (probs.rows() == 0) throw std::invalid_argument("inception_score: empty probability set");
  Eigen::VectorXd marginal = probs.colwise().mean();
  Scalar kl = 0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i)
    for (Eigen::Index j = 0; j < probs.cols(); ++j) {
      Scalar p = probs(i, j);
      if (p > 0) kl += p * std::log(p / std::max<Scalar>(marginal[j], 1e-300));
    }
  return std::exp(kl / static_cast<Scalar>(probs.rows()));
}

namespace {

void gaussian_fit(const std::vector<GlyphImage>& set, const EvalEmbedder& ex,
                  Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
  int n = static_cast<int>(set.size());
  int d = ex.embed_dim();
  Eigen::MatrixXd emb(n, d);
  for (int i = 0; i < n; ++i) emb.row(i) = ex.embed(set[static_cast<size_t>(i)]);
  mu = emb.colwise().mean();
  Eigen::MatrixXd centered = emb.rowwise() - mu.transpose();
  cov = centered.transpose() * centered / std::max(1, n - 1);
}

}  // namespace

FidIs fid_is(const std::vector<GlyphImage>& gen_set, const std::vector<GlyphImage>& real_set,
             const EvalEmbedder& ex) {
  if (gen_set.empty() || real_set.empty())
    throw std::invalid_argument("fid_is: both sets must be non-empty");
  Eigen::VectorXd mu_g, mu_r;
  Eigen::MatrixXd c_g, c_r;
  gaussian_fit(gen_set, ex, mu_g, c_g);
  gaussian_fit(real_set, ex, mu_r, c_r);
  FidIs out;
  out.fid = frechet_distance(mu_g, c_g, mu_r, c_r);
  Eigen::MatrixXd probs(static_cast<Eigen::Index>(gen_set.size()), ex.num_classes());
  for (size_t i = 0; i < gen_set.size(); ++i)
    probs.row(static_cast<Eigen::Index>(i)) = ex.class_probs(gen_set[i]);
  out.is = inception_score(probs);
  return out;
}

void MetricReport::validate() const {
  auto check = [](const StyleMetrics& m, const std::string& who) {
    if (m.count <= 0) throw std::invalid_argument("metric report: " + who + " has count <= 0");
    if (m.ssim < -1.0 || m.ssim > 1.0 + 1e-12)
      throw std::invalid_argument("metric report: " + who + " ssim out of [-1,1]");
    if (m.pix_acc < 0.0 || m.pix_acc > 1.0)
      throw std::invalid_argument("metric report: " + who + " pix_acc out of [0,1]");
  };
  check(aggregate, "aggregate");
  for (const auto& [style, m] : per_style) check(m, style);
  if (fid && *fid < 0) throw std::invalid_argument("metric report: fid < 0");
}

std::string MetricReport::to_text() const {
  std::string out;
  char line[256];
  for (const auto& [style, m] : per_style) {
    std::snprintf(line, sizeof line, "style %s: ssim %.6f pix_acc %.6f n %d\n", style.c_str(),
                  m.ssim, m.pix_acc, m.count);
    out += line;
  }
  std::snprintf(line, sizeof line, "aggregate: ssim %.6f pix_acc %.6f n %d\n", aggregate.ssim,
                aggregate.pix_acc, aggregate.count);
  out += line;
  if (fid) {
    std::snprintf(line, sizeof line, "fid %.6f\n", *fid);
    out += line;
  }
  if (is) {
    std::snprintf(line, sizeof line, "is %.6f\n", *is);
    out += line;
  }
  return out;
}

std::string MetricReport::to_json() const {
  nlohmann::json j;
  for (const auto& [style, m] : per_style)
    j["per_style"][style] = {{"ssim", m.ssim}, {"pix_acc", m.pix_acc}, {"count", m.count}};
  j["aggregate"] = {{"ssim", aggregate.ssim},
                    {"pix_acc", aggregate.pix_acc},
                    {"count", aggregate.count}};
  if (fid) j["fid"] = *fid;
  if (is) j["is"] = *is;
  return j.dump(2);
}

void MetricReport::save(const std::string& text_path, const std::string& json_path) const {
  std::ofstream t(text_path);
  if (!t) throw std::runtime_error("cannot open " + text_path);
  t << to_text();
  std::ofstream m(json_path);
  if (!m) throw std::runtime_error("cannot open " + json_path);
  m << to_json() << "\n";
}

MetricReport evaluate_pairs(
    const std::vector<std::tuple<std::string, GlyphImage, GlyphImage>>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("evaluate_pairs: empty input");
  MetricReport rep;
  for (const auto& [style, gen, truth] : pairs) {
    Scalar s = ssim(gen, truth);
    Scalar p = pix_acc(gen, truth);
    auto& m = rep.per_style[style];
    m.ssim += s;
    m.pix_acc += p;
    m.count += 1;
    rep.aggregate.ssim += s;
    rep.aggregate.pix_acc += p;
    rep.aggregate.count += 1;
  }
  for (auto& [style, m] : rep.per_style) {
    m.ssim /= m.count;
    m.pix_acc /= m.count;
  }
  rep.aggregate.ssim /= rep.aggregate.count;
  rep.aggregate.pix_acc /= rep.aggregate.count;
  return rep;
}

namespace {

constexpr int kLabelGlyph = 12;   // px per typeset label character
constexpr int kLabelChars = 8;    // fixed label column width, truncating longer labels
constexpr int kGutter = 2;

void blit(Tensor& canvas, const GlyphImage& img, int top, int left) {
  int ch = img.dim(0), h = img.dim(1), w = img.dim(2);
  for (int c = 0; c < 3; ++c) {
    int src_c = ch == 3 ? c : 0;
    for (int r = 0; r < h; ++r)
      for (int cc = 0; cc < w; ++cc)
        canvas.at3(c, top + r, left + cc) = img.at3(src_c, r, cc);
  }
}

}  // namespace

void render_sheet(const std::vector<SheetRow>& rows, const std::string& out_path) {
  if (rows.empty()) throw std::invalid_argument("render_sheet: no rows");
  int label_w = kLabelChars * kLabelGlyph + kGutter;
  int total_w = 0, total_h = kGutter;
  for (const auto& row : rows) {
    if (row.images.empty()) throw std::invalid_argument("render_sheet: empty row");
    int h = row.images[0].dim(1), w = row.images[0].dim(2);
    for (const auto& img : row.images)
      if (img.dim(1) != h || img.dim(2) != w)
        throw std::invalid_argument("render_sheet: inconsistent image sizes in one row");
    int row_w = label_w + static_cast<int>(row.images.size()) * (w + kGutter);
    total_w = std::max(total_w, row_w);
    total_h += std::max(h, kLabelGlyph) + kGutter;
  }

  Tensor canvas = Tensor::constant({3, total_h, total_w}, 1.0);  // white background
  int top = kGutter;
  for (const auto& row : rows) {
    int h = row.images[0].dim(1), w = row.images[0].dim(2);
    // Typeset the label with the built-in glyphs; unsupported characters show
    // as blanks rather than failing the sheet.
    std::string label = row.label.substr(0, kLabelChars);
    for (size_t i = 0; i < label.size(); ++i) {
      char32_t cp = static_cast<char32_t>(static_cast<unsigned char>(label[i]));
      if (!font_has_glyph(cp)) continue;
      GlyphImage g = render_glyph("content-regular", cp, kLabelGlyph + 4);
      // Crop the rendered padding back to the cell.
      Tensor cell({3, kLabelGlyph, kLabelGlyph});
      for (int c = 0; c < 3; ++c)
        for (int r = 0; r < kLabelGlyph; ++r)
          for (int cc = 0; cc < kLabelGlyph; ++cc)
            cell.at3(c, r, cc) = g.at3(c, r + 2, cc + 2);
      blit(canvas, cell, top, static_cast<int>(i) * kLabelGlyph);
    }
    for (size_t i = 0; i < row.images.size(); ++i)
      blit(canvas, row.images[i], top, label_w + static_cast<int>(i) * (w + kGutter));
    top += std::max(h, kLabelGlyph) + kGutter;
  }
  write_image(out_path, canvas);
}

}  // namespace agis
