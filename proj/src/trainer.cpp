#include "agis/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "agis/checkpoint.hpp"
#include "agis/image_io.hpp"

namespace fs = std::filesystem;

namespace agis {

void TrainConfig::validate() const {
  if (epochs <= 0) throw std::invalid_argument("train config: epochs must be > 0");
  if (validate_every <= 0) throw std::invalid_argument("train config: validate_every must be > 0");
  if (batch_size <= 0) throw std::invalid_argument("train config: batch_size must be > 0");
  if (m >= n) throw std::invalid_argument("train config: m must be < n");
}

Models::Models(const GeneratorSpec& spec, int disc_base_channels, Rng& rng,
               std::shared_ptr<FeatureExtractor> ex, int disc_layers)
    : gen(spec, rng), discs(disc_base_channels, rng, disc_layers), extractor(std::move(ex)) {}

Optimizers::Optimizers(Models& models, Scalar lr)
    : g(models.gen.params(), lr), d(models.discs.params(), lr) {}

namespace {

Tensor luminance_1ch(const Tensor& rgb) {
  GlyphImage g3 = to_grayscale(rgb);
  Tensor out({1, g3.dim(1), g3.dim(2)});
  out.data() = g3.data().segment(0, out.size());
  return out;
}

Var batch_of(const std::vector<Tensor>& imgs) {
  std::vector<Var> vars;
  vars.reserve(imgs.size());
  for (const auto& t : imgs)
    vars.emplace_back(t.reshaped({1, t.dim(0), t.dim(1), t.dim(2)}), false);
  return concat_batch(vars);
}

Var d_side_loss(const Var& score_real, const Var& score_fake_detached) {
  return add(mean_all(sigmoid_ce(score_real, 1.0)),
             mean_all(sigmoid_ce(score_fake_detached, 0.0)));
}

void check_finite(const StepRecord& r) {
  for (Scalar v : {r.d_sha, r.d_tex, r.d_local, r.g_adv_sha, r.g_adv_tex, r.g_l1, r.g_cx,
                   r.g_local, r.g_total})
    if (!std::isfinite(v))
      throw TrainAbortError(
          "non-finite loss encountered (d_sha=" + std::to_string(r.d_sha) +
          " d_tex=" + std::to_string(r.d_tex) + " d_local=" + std::to_string(r.d_local) +
          " g_total=" + std::to_string(r.g_total) + ")");
}

}  // namespace

GeneratorObjective generator_objective(Models& models, const std::vector<Sample>& batch,
                                       const Var& y_gray, const Var& y, const TrainConfig& cfg,
                                       std::uint64_t patch_seed) {
  int b = static_cast<int>(batch.size());
  GeneratorLossParts parts;
  parts.adv_sha_g = mean_all(sigmoid_ce(models.discs.sha(y_gray), 1.0));
  parts.adv_tex_g = mean_all(sigmoid_ce(models.discs.tex(y), 1.0));

  // Reconstruction terms over the seen sub-batch only; exact zeros otherwise.
  std::vector<Var> ygs, ys;
  std::vector<Tensor> tgs, ts;
  for (int i = 0; i < b; ++i)
    if (batch[static_cast<size_t>(i)].seen && cfg.weights.seen) {
      ygs.push_back(batch_slice(y_gray, i));
      ys.push_back(batch_slice(y, i));
      tgs.push_back(batch[static_cast<size_t>(i)].y_gray_truth);
      ts.push_back(batch[static_cast<size_t>(i)].y_truth);
    }
  if (ygs.empty()) {
    parts.l1 = Var(Tensor::scalar(0.0));
    parts.cx = Var(Tensor::scalar(0.0));
  } else {
    LossWeights w_seen = cfg.weights;
    w_seen.seen = true;
    parts.l1 = l1_pair(concat_batch(ygs), batch_of(tgs), concat_batch(ys), batch_of(ts), w_seen);
    Var cx_acc;
    for (size_t i = 0; i < ygs.size(); ++i) {
      Var truth_gray(tgs[i].reshaped({1, 1, tgs[i].dim(1), tgs[i].dim(2)}), false);
      Var truth(ts[i].reshaped({1, 3, ts[i].dim(1), ts[i].dim(2)}), false);
      Var term = contextual_pair(*models.extractor, ygs[i], truth_gray, ys[i], truth, w_seen);
      cx_acc = cx_acc.defined() ? add(cx_acc, term) : term;
    }
    parts.cx = affine(cx_acc, 1.0 / static_cast<Scalar>(ygs.size()), 0.0);
  }

  // Local refinement: generated patches scored as real (non-saturating).
  if (cfg.weights.local == 0.0) {
    parts.local_g = Var(Tensor::scalar(0.0));
  } else {
    Rng patch_rng(patch_seed);
    std::vector<Var> gen_patches;
    for (int i = 0; i < b; ++i) {
      PatchBatch pb = cut_patches(batch_slice(y, i), cfg.patches_per_image, cfg.patch_size,
                                  patch_rng, Provenance::generated);
      for (auto& p : pb.patches) gen_patches.push_back(p);
    }
    Var scores = models.discs.local(concat_batch(gen_patches));
    parts.local_g = affine(mean_all(sigmoid_ce(scores, 1.0)), cfg.weights.local, 0.0);
  }

  GeneratorObjective obj;
  obj.parts = parts;
  obj.total = total_generator_loss(parts, cfg.weights);
  return obj;
}

StepRecord train_step(const std::vector<Sample>& batch, Models& models, Optimizers& opt,
                      const TrainConfig& cfg, Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  int b = static_cast<int>(batch.size());

  std::vector<Tensor> xc_list, xs_list;
  for (const auto& s : batch) {
    xc_list.push_back(s.x_c);
    xs_list.push_back(s.xs.concatenated());
  }
  Var x_c = batch_of(xc_list);
  Var xs = batch_of(xs_list);
  auto [y_gray, y] = models.gen.forward(x_c, xs);

  // Real-sample rule: ground truth when the character is in R_s, otherwise a
  // random element of this sample's style input.
  std::vector<Tensor> real_tex, real_gray;
  for (const auto& s : batch) {
    const Tensor& r =
        s.seen ? s.y_truth
               : s.xs.images[static_cast<size_t>(
                     rng.uniform_int(static_cast<int>(s.xs.images.size())))];
    real_tex.push_back(r);
    real_gray.push_back(luminance_1ch(r));
  }

  // ---- discriminator updates (fakes detached) ----
  Var y_gray_det = y_gray.detach();
  Var y_det = y.detach();
  Var d_sha = d_side_loss(models.discs.sha(batch_of(real_gray)), models.discs.sha(y_gray_det));
  Var d_tex = d_side_loss(models.discs.tex(batch_of(real_tex)), models.discs.tex(y_det));

  // Local: positives cut from the style reference input, negatives are their
  // blurred copies (half of them) plus generated patches.
  std::vector<Var> real_patches, blur_patches_v, gen_patches;
  for (int i = 0; i < b; ++i) {
    const auto& s = batch[static_cast<size_t>(i)];
    const Tensor& ref =
        s.xs.images[static_cast<size_t>(rng.uniform_int(static_cast<int>(s.xs.images.size())))];
    Var ref_var(ref.reshaped({1, 3, ref.dim(1), ref.dim(2)}), false);
    PatchBatch real_pb = cut_patches(ref_var, cfg.patches_per_image, cfg.patch_size, rng);
    PatchBatch blur_pb = blur_patches(real_pb);
    size_t keep = (real_pb.patches.size() + 1) / 2;
    for (auto& p : real_pb.patches) real_patches.push_back(p);
    for (size_t k = 0; k < keep; ++k) blur_patches_v.push_back(blur_pb.patches[k]);
    PatchBatch gen_pb =
        cut_patches(batch_slice(y_det, i), cfg.patches_per_image, cfg.patch_size, rng,
                    Provenance::generated);
    for (auto& p : gen_pb.patches) gen_patches.push_back(p);
  }
  Var d_local = add(mean_all(sigmoid_ce(models.discs.local(concat_batch(real_patches)), 1.0)),
                    add(mean_all(sigmoid_ce(models.discs.local(concat_batch(blur_patches_v)), 0.0)),
                        mean_all(sigmoid_ce(models.discs.local(concat_batch(gen_patches)), 0.0))));

  Var d_total = add(add(d_sha, d_tex), d_local);
  backward(d_total);
  opt.d.step();
  opt.d.zero_grad();

  // ---- generator update against the freshly updated discriminators ----
  GeneratorObjective obj = generator_objective(models, batch, y_gray, y, cfg, rng.raw());
  backward(obj.total);
  opt.g.step();
  opt.g.zero_grad();
  opt.d.zero_grad();  // D weights also received grads through the attached scores

  StepRecord rec;
  rec.d_sha = d_sha.item();
  rec.d_tex = d_tex.item();
  rec.d_local = d_local.item();
  rec.g_adv_sha = obj.parts.adv_sha_g.item();
  rec.g_adv_tex = obj.parts.adv_tex_g.item();
  rec.g_l1 = obj.parts.l1.item();
  rec.g_cx = obj.parts.cx.item();
  rec.g_local = obj.parts.local_g.item();
  rec.g_total = obj.total.item();
  check_finite(rec);
  return rec;
}

namespace {

/// Small read-through caches so epoch loops do not hit disk per step.
struct ImageCache {
  std::map<std::string, Tensor> images;
  const Tensor& get(const std::string& path) {
    auto it = images.find(path);
    if (it == images.end()) it = images.emplace(path, read_image(path)).first;
    return it->second;
  }
};

Tensor content_glyph(const std::string& font, const std::string& char_id, int canvas,
                     std::map<std::string, Tensor>& cache) {
  auto it = cache.find(char_id);
  if (it == cache.end()) {
    char32_t cp = static_cast<char32_t>(std::stoul(char_id));
    it = cache.emplace(char_id, render_glyph(font, cp, canvas)).first;
  }
  return it->second;
}

}  // namespace

TrainState pretrain(const CorpusManifest& manifest, Models& models, const TrainConfig& cfg) {
  cfg.validate();
  std::vector<const ManifestEntry*> entries;
  for (const auto& e : manifest.entries)
    if (e.split == "pretrain") entries.push_back(&e);
  if (entries.empty())
    throw std::invalid_argument("pretrain: manifest has no pretrain entries");

  std::map<std::string, std::vector<const ManifestEntry*>> by_style;
  for (const auto* e : entries) by_style[e->style_id].push_back(e);

  int canvas = models.gen.spec().image_size;
  ImageCache cache;
  std::map<std::string, Tensor> content_cache;
  Optimizers opt(models, cfg.lr);
  TrainState state;
  Rng master(cfg.seed);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng = master.fork();
    std::vector<const ManifestEntry*> order = entries;
    rng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<Sample> batch;
      for (size_t i = start; i < stop; ++i) {
        const ManifestEntry* e = order[i];
        const auto& style_entries = by_style[e->style_id];
        Sample s;
        s.char_id = e->char_id;
        s.seen = true;
        s.x_c = content_glyph(manifest.content_font_id, e->char_id, canvas, content_cache);
        Tensor truth = cache.get((fs::path(manifest.root_dir) / e->path).string());
        s.y_truth = truth;
        s.y_gray_truth = luminance_1ch(truth);
        // In-memory reference set for this style, then the m-image style input.
        int n_avail = std::min<int>(cfg.n, static_cast<int>(style_entries.size()));
        auto ref_idx = rng.sample_without_replacement(static_cast<int>(style_entries.size()),
                                                      n_avail);
        StyleReferenceSet rs;
        rs.style_id = e->style_id;
        for (int ri : ref_idx) {
          const ManifestEntry* re = style_entries[static_cast<size_t>(ri)];
          rs.char_ids.push_back(re->char_id);
          rs.images.push_back(cache.get((fs::path(manifest.root_dir) / re->path).string()));
        }
        s.xs = sample_style_input(rs, std::min(cfg.m, n_avail - 1), rng);
        batch.push_back(std::move(s));
      }
      state.history.push_back(train_step(batch, models, opt, cfg, rng));
    }
    state.epoch = epoch + 1;
    if (!cfg.checkpoint_dir.empty()) {
      fs::create_directories(cfg.checkpoint_dir);
      save_models((fs::path(cfg.checkpoint_dir) / "pretrain.ckpt").string(), models.gen,
                  models.discs);
    }
  }
  return state;
}

namespace {

Scalar validation_l1(Models& models, const StyleReferenceSet& rs, const std::string& content_font,
                     int m, std::uint64_t seed) {
  std::u32string chars;
  for (const auto& cid : rs.char_ids) chars.push_back(static_cast<char32_t>(std::stoul(cid)));
  auto results = synthesize(models, content_font, chars, rs, m, seed);
  Scalar acc = 0;
  for (size_t i = 0; i < results.size(); ++i)
    acc += (results[i].y.data() - rs.images[i].data()).abs().mean();
  return acc / static_cast<Scalar>(results.size());
}

}  // namespace

TrainState finetune(Models& models, const StyleReferenceSet& rs, const TrainConfig& cfg) {
  cfg.validate();
  if (rs.size() != cfg.n)
    throw std::invalid_argument("finetune: reference set size " + std::to_string(rs.size()) +
                                " does not match n=" + std::to_string(cfg.n));
  const std::string content_font = "content-regular";
  int canvas = models.gen.spec().image_size;
  std::map<std::string, Tensor> content_cache;
  std::map<std::string, size_t> rs_index;
  for (size_t i = 0; i < rs.char_ids.size(); ++i) rs_index[rs.char_ids[i]] = i;

  Optimizers opt(models, cfg.lr);
  TrainState state;
  Rng master(cfg.seed);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng = master.fork();
    std::vector<char32_t> order(cfg.exploration_chars.begin(), cfg.exploration_chars.end());
    rng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<Sample> batch;
      for (size_t i = start; i < stop; ++i) {
        std::string char_id = std::to_string(static_cast<std::uint32_t>(order[i]));
        Sample s;
        s.char_id = char_id;
        s.x_c = content_glyph(content_font, char_id, canvas, content_cache);
        s.xs = sample_style_input(rs, cfg.m, rng);
        auto it = rs_index.find(char_id);
        if (it != rs_index.end()) {
          s.seen = true;
          s.y_truth = rs.images[it->second];
          s.y_gray_truth = luminance_1ch(s.y_truth);
        }
        batch.push_back(std::move(s));
      }
      state.history.push_back(train_step(batch, models, opt, cfg, rng));
    }
    state.epoch = epoch + 1;
    if ((epoch + 1) % cfg.validate_every == 0 || epoch + 1 == cfg.epochs) {
      Scalar val = validation_l1(models, rs, content_font, cfg.m, cfg.seed + 1);
      if (val < state.best_validation) {
        state.best_validation = val;
        if (!cfg.checkpoint_dir.empty()) {
          fs::create_directories(cfg.checkpoint_dir);
          state.best_checkpoint_path =
              (fs::path(cfg.checkpoint_dir) / "finetune_best.ckpt").string();
          save_models(state.best_checkpoint_path, models.gen, models.discs);
        }
      }
    }
  }
  return state;
}

std::vector<SynthResult> synthesize(Models& models, const std::string& content_font,
                                    const std::u32string& chars, const StyleReferenceSet& rs,
                                    int m, std::uint64_t seed) {
  Rng rng(seed);
  int canvas = models.gen.spec().image_size;
  std::vector<SynthResult> out;
  for (char32_t cp : chars) {
    GlyphImage x_c = render_glyph(content_font, cp, canvas);  // throws on missing glyph
    StyleInput xs = sample_style_input(rs, m, rng);
    Var xc_var(x_c.reshaped({1, 3, canvas, canvas}), false);
    Tensor xst = xs.concatenated();
    Var xs_var(xst.reshaped({1, xst.dim(0), canvas, canvas}), false);
    auto [y_gray, y] = models.gen.forward(xc_var, xs_var);
    SynthResult r;
    r.char_id = std::to_string(static_cast<std::uint32_t>(cp));
    r.y_gray = y_gray.value().reshaped({1, canvas, canvas});
    r.y = y.value().reshaped({3, canvas, canvas});
    out.push_back(std::move(r));
  }
  return out;
}

void save_models(const std::string& path, Generator& gen, DiscriminatorSet& discs) {
  std::vector<std::pair<std::string, Tensor>> tensors;
  for (auto& p : gen.params()) tensors.emplace_back("gen." + p.name, p.var.value());
  for (auto& p : discs.params()) tensors.emplace_back("discs." + p.name, p.var.value());
  nlohmann::json meta;
  meta["spec"] = spec_to_json(gen.spec());
  save_checkpoint(path, meta, tensors);
}

void load_models(const std::string& path, Generator& gen, DiscriminatorSet& discs) {
  CheckpointData ckpt = load_checkpoint(path);
  GeneratorSpec stored = spec_from_json(ckpt.meta.at("spec"));
  if (!(stored == gen.spec()))
    throw std::runtime_error("checkpoint generator spec does not match the live model");
  ParamList all;
  for (auto& p : gen.params()) all.push_back({"gen." + p.name, p.var});
  for (auto& p : discs.params()) all.push_back({"discs." + p.name, p.var});
  assign_params(all, ckpt);
}

GeneratorSpec peek_checkpoint_spec(const std::string& path) {
  return spec_from_json(load_checkpoint(path).meta.at("spec"));
}

void export_history(const std::vector<StepRecord>& history, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open history file: " + path);
  for (size_t i = 0; i < history.size(); ++i) {
    const auto& r = history[i];
    nlohmann::json j = {{"step", i},
                        {"d_sha", r.d_sha},
                        {"d_tex", r.d_tex},
                        {"d_local", r.d_local},
                        {"g_adv_sha", r.g_adv_sha},
                        {"g_adv_tex", r.g_adv_tex},
                        {"g_l1", r.g_l1},
                        {"g_cx", r.g_cx},
                        {"g_local", r.g_local},
                        {"g_total", r.g_total}};
    f << j.dump() << "\n";
  }
}

}  // namespace agis
