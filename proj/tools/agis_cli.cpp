// agis command line: forge / pretrain / finetune / synth / eval / sheet.
//
// Configuration is layered: built-in defaults < AGIS_* environment variables
// < config file (flat key=value) < command-line flags. Every run writes the
// fully resolved configuration to <workdir>/<subcommand>_run.log so it can be
// reproduced exactly. Progress goes to stderr; results go to files only.
//
// Exit codes: 0 success, 2 unknown flag / bad usage, 3 missing input file,
// 4 training aborted on non-finite losses, 1 other errors.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "agis/checkpoint.hpp"
#include "agis/eval.hpp"
#include "agis/image_io.hpp"
#include "agis/trainer.hpp"

namespace fs = std::filesystem;
using namespace agis;

namespace {

struct MissingFileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Ordered key=value store with the documented precedence.
class Config {
 public:
  void set_default(const std::string& key, const std::string& value) {
    order_.push_back(key);
    defaults_[key] = value;
    // Environment overrides defaults only.
    std::string env_key = "AGIS_";
    for (char c : key) env_key += c == '-' ? '_' : static_cast<char>(std::toupper(c));
    if (const char* v = std::getenv(env_key.c_str())) env_[key] = v;
  }

  void load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw MissingFileError("config file not found: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key=value");
      std::string key = line.substr(0, eq);
      if (!defaults_.count(key)) {
        std::cerr << "warning: " << path << ":" << lineno << ": unknown key '" << key
                  << "' ignored\n";
        continue;
      }
      file_[key] = line.substr(eq + 1);
    }
  }

  void set_flag(const std::string& key, const std::string& value) { flags_[key] = value; }

  std::string get(const std::string& key) const {
    if (auto it = flags_.find(key); it != flags_.end()) return it->second;
    if (auto it = file_.find(key); it != file_.end()) return it->second;
    if (auto it = env_.find(key); it != env_.end()) return it->second;
    return defaults_.at(key);
  }
  int get_int(const std::string& key) const { return std::stoi(get(key)); }
  double get_double(const std::string& key) const { return std::stod(get(key)); }
  std::uint64_t get_u64(const std::string& key) const { return std::stoull(get(key)); }

  void write_log(const std::string& path, const std::string& subcommand) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write run log: " + path);
    f << "subcommand=" << subcommand << "\n";
    for (const auto& key : order_) f << key << "=" << get(key) << "\n";
  }

  const std::vector<std::string>& keys() const { return order_; }

 private:
  std::vector<std::string> order_;
  std::map<std::string, std::string> defaults_, env_, file_, flags_;
};

/// Register one --key flag backed by the layered config.
void bind(CLI::App* cmd, Config& cfg, const std::string& key, const std::string& desc) {
  cmd->add_option_function<std::string>(
         "--" + key, [&cfg, key](const std::string& v) { cfg.set_flag(key, v); }, desc)
      ->default_str(cfg.get(key));
}

std::string require_file(const std::string& path) {
  if (!fs::exists(path)) throw MissingFileError("missing file: " + path);
  return path;
}

fs::path resolve(const Config& cfg, const std::string& key) {
  fs::path p = cfg.get(key);
  if (p.is_absolute()) return p;
  return fs::path(cfg.get("workdir")) / p;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::u32string to_u32(const std::string& ascii) {
  std::u32string out;
  for (unsigned char c : ascii) out.push_back(static_cast<char32_t>(c));
  return out;
}

void add_common(Config& cfg) {
  cfg.set_default("workdir", ".");
  cfg.set_default("seed", "0");
}

void finalize(Config& cfg, const std::string& config_file, const std::string& subcommand) {
  if (!config_file.empty()) cfg.load_file(config_file);
  fs::create_directories(cfg.get("workdir"));
  cfg.write_log((fs::path(cfg.get("workdir")) / (subcommand + "_run.log")).string(), subcommand);
  std::cerr << "[" << subcommand << "] resolved config:";
  for (const auto& k : cfg.keys()) std::cerr << " " << k << "=" << cfg.get(k);
  std::cerr << "\n";
}

GeneratorSpec spec_from_config(const Config& cfg) {
  GeneratorSpec spec;
  spec.levels = cfg.get_int("levels");
  spec.base_channels = cfg.get_int("base-channels");
  spec.image_size = cfg.get_int("image-size");
  spec.style_count = cfg.get_int("m");
  return spec;
}

std::shared_ptr<FeatureExtractor> extractor_from_config(const Config& cfg) {
  std::string path = cfg.get("extractor-weights");
  if (path.empty()) return ConvStackExtractor::hermetic();
  return ConvStackExtractor::production(require_file(path));
}

TrainConfig train_config(const Config& cfg) {
  TrainConfig t;
  t.epochs = cfg.get_int("epochs");
  t.batch_size = cfg.get_int("batch");
  t.n = cfg.get_int("n");
  t.m = cfg.get_int("m");
  t.lr = cfg.get_double("lr");
  t.seed = cfg.get_u64("seed");
  t.validate_every = cfg.get_int("validate-every");
  t.disc_base_channels = cfg.get_int("disc-base-channels");
  t.checkpoint_dir = resolve(cfg, "ckpt-out").string();
  return t;
}

int run_forge(const Config& cfg) {
  ForgeOptions opts;
  opts.textures_per_style = cfg.get_int("textures");
  opts.seed = cfg.get_u64("seed");
  opts.holdout_styles = cfg.get_int("holdout");
  std::vector<std::string> fonts = split(cfg.get("fonts"), ',');
  if (fonts.empty()) throw std::runtime_error("forge: --fonts must list at least one font id");
  std::vector<std::string> skipped;
  CorpusManifest m =
      forge_corpus(fonts, to_u32(cfg.get("chars")), resolve(cfg, "out").string(), opts, &skipped);
  for (const auto& s : skipped) std::cerr << "skipped: " << s << "\n";
  std::cerr << "forged " << m.entries.size() << " images into " << m.root_dir << "\n";
  return 0;
}

int run_pretrain(const Config& cfg) {
  CorpusManifest manifest = load_manifest(require_file(resolve(cfg, "corpus").string()));
  TrainConfig t = train_config(cfg);
  t.phase = TrainConfig::Phase::pretrain;
  Rng rng(t.seed);
  Models models(spec_from_config(cfg), t.disc_base_channels, rng, extractor_from_config(cfg));
  TrainState state = pretrain(manifest, models, t);
  export_history(state.history, (fs::path(t.checkpoint_dir) / "pretrain_history.jsonl").string());
  std::cerr << "pretrain done: " << state.history.size() << " steps, final g_total "
            << state.history.back().g_total << "\n";
  return 0;
}

int run_finetune(const Config& cfg) {
  TrainConfig t = train_config(cfg);
  t.phase = TrainConfig::Phase::finetune;
  std::string ckpt = require_file(resolve(cfg, "ckpt").string());
  Rng rng(t.seed);
  Models models(peek_checkpoint_spec(ckpt), t.disc_base_channels, rng,
                extractor_from_config(cfg));
  load_models(ckpt, models.gen, models.discs);
  CorpusManifest manifest = load_manifest(require_file(resolve(cfg, "corpus").string()));
  StyleReferenceSet rs =
      sample_reference_set(manifest, cfg.get("style"), t.n, t.seed);
  TrainState state = finetune(models, rs, t);
  fs::create_directories(t.checkpoint_dir);
  save_models((fs::path(t.checkpoint_dir) / "finetune_last.ckpt").string(), models.gen,
              models.discs);
  export_history(state.history, (fs::path(t.checkpoint_dir) / "finetune_history.jsonl").string());
  std::cerr << "finetune done: best validation L1 " << state.best_validation << "\n";
  return 0;
}

int run_synth(const Config& cfg) {
  std::string ckpt = require_file(resolve(cfg, "ckpt").string());
  Rng rng(cfg.get_u64("seed"));
  Models models(peek_checkpoint_spec(ckpt), cfg.get_int("disc-base-channels"), rng,
                ConvStackExtractor::hermetic());
  load_models(ckpt, models.gen, models.discs);
  CorpusManifest manifest = load_manifest(require_file(resolve(cfg, "corpus").string()));
  StyleReferenceSet rs =
      sample_reference_set(manifest, cfg.get("style"), cfg.get_int("n"), cfg.get_u64("seed"));
  auto results = synthesize(models, manifest.content_font_id, to_u32(cfg.get("chars")), rs,
                            cfg.get_int("m"), cfg.get_u64("seed"));
  fs::path out = resolve(cfg, "out");
  fs::create_directories(out);
  for (const auto& r : results) {
    write_image((out / (r.char_id + ".ppm")).string(), r.y);
    write_image((out / (r.char_id + "_gray.pgm")).string(), r.y_gray);
  }
  std::cerr << "wrote " << results.size() << " glyphs to " << out << "\n";
  return 0;
}

int run_eval(const Config& cfg) {
  fs::path gen_dir = require_file(resolve(cfg, "gen").string());
  fs::path truth_dir = require_file(resolve(cfg, "truth").string());
  std::vector<std::tuple<std::string, GlyphImage, GlyphImage>> pairs;
  std::vector<GlyphImage> gen_set, real_set;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(gen_dir))
    if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    fs::path truth = truth_dir / f.filename();
    if (!fs::exists(truth)) continue;
    GlyphImage g = read_image(f.string());
    GlyphImage t = read_image(truth.string());
    pairs.emplace_back(cfg.get("style"), g, t);
    gen_set.push_back(g);
    real_set.push_back(t);
  }
  if (pairs.empty()) throw MissingFileError("eval: no matching .ppm pairs between directories");
  MetricReport rep = evaluate_pairs(pairs);
  if (pairs.size() >= 2) {
    FidIs fi = fid_is(gen_set, real_set, TinyEmbedder());
    rep.fid = fi.fid;
    rep.is = fi.is;
  }
  rep.validate();
  fs::path report = resolve(cfg, "report");
  rep.save(report.string(), report.string() + ".json");
  std::cerr << rep.to_text();
  return 0;
}

int run_sheet(const Config& cfg) {
  // --inputs: semicolon-separated rows of label:path1,path2,...
  std::vector<SheetRow> rows;
  for (const std::string& row_spec : split(cfg.get("inputs"), ';')) {
    auto colon = row_spec.find(':');
    if (colon == std::string::npos)
      throw std::runtime_error("sheet: row must look like label:path1,path2,...");
    SheetRow row;
    row.label = row_spec.substr(0, colon);
    for (const std::string& p : split(row_spec.substr(colon + 1), ',')) {
      fs::path full = fs::path(p).is_absolute() ? fs::path(p) : fs::path(cfg.get("workdir")) / p;
      row.images.push_back(read_image(require_file(full.string())));
    }
    rows.push_back(std::move(row));
  }
  render_sheet(rows, resolve(cfg, "out").string());
  std::cerr << "wrote sheet with " << rows.size() << " rows\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"agis: few-shot artistic glyph synthesis pipeline"};
  app.require_subcommand(1);

  Config forge_cfg, pre_cfg, fine_cfg, synth_cfg, eval_cfg, sheet_cfg;
  std::string forge_file, pre_file, fine_file, synth_file, eval_file, sheet_file;

  auto setup = [&](CLI::App* cmd, Config& cfg, std::string& cfg_file,
                   std::initializer_list<std::pair<const char*, const char*>> keys) {
    add_common(cfg);
    for (auto& [k, d] : keys) cfg.set_default(k, d);
    bind(cmd, cfg, "workdir", "base directory for relative paths and the run log");
    bind(cmd, cfg, "seed", "master random seed");
    cmd->add_option("--config", cfg_file, "flat key=value config file");
    for (auto& [k, d] : keys)
      if (std::string(k) != "workdir" && std::string(k) != "seed") bind(cmd, cfg, k, "");
  };

  auto* forge = app.add_subcommand("forge", "render the synthetic glyph corpus");
  setup(forge, forge_cfg, forge_file,
        {{"fonts", "skel-00,skel-01,skel-02"},
         {"chars", "ABCDE"},
         {"textures", "10"},
         {"holdout", "0"},
         {"out", "corpus"}});

  auto* pre = app.add_subcommand("pretrain", "pre-train on the full corpus");
  setup(pre, pre_cfg, pre_file,
        {{"corpus", "corpus/manifest.tsv"}, {"epochs", "10"},      {"batch", "26"},
         {"n", "5"},                        {"m", "4"},            {"lr", "0.0002"},
         {"validate-every", "50"},          {"levels", "6"},       {"base-channels", "64"},
         {"image-size", "64"},              {"disc-base-channels", "64"},
         {"extractor-weights", ""},         {"ckpt-out", "checkpoints"}});

  auto* fine = app.add_subcommand("finetune", "few-shot fine-tune on one style");
  setup(fine, fine_cfg, fine_file,
        {{"ckpt", "checkpoints/pretrain.ckpt"}, {"corpus", "corpus/manifest.tsv"},
         {"style", ""},                         {"epochs", "3000"},
         {"batch", "26"},                       {"n", "5"},
         {"m", "4"},                            {"lr", "0.0002"},
         {"validate-every", "50"},              {"disc-base-channels", "64"},
         {"extractor-weights", ""},             {"ckpt-out", "checkpoints"}});

  auto* synth = app.add_subcommand("synth", "synthesize glyphs from a checkpoint");
  setup(synth, synth_cfg, synth_file,
        {{"ckpt", "checkpoints/finetune_best.ckpt"},
         {"corpus", "corpus/manifest.tsv"},
         {"style", ""},
         {"chars", "ABCDE"},
         {"n", "5"},
         {"m", "4"},
         {"disc-base-channels", "64"},
         {"out", "synth"}});

  auto* evalc = app.add_subcommand("eval", "score generated glyphs against ground truth");
  setup(evalc, eval_cfg, eval_file,
        {{"gen", "synth"}, {"truth", "truth"}, {"style", "style"}, {"report", "report.txt"}});

  auto* sheet = app.add_subcommand("sheet", "compose labeled result sheets");
  setup(sheet, sheet_cfg, sheet_file, {{"inputs", ""}, {"out", "sheet.ppm"}});

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, returns 0
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (forge->parsed()) {
      finalize(forge_cfg, forge_file, "forge");
      return run_forge(forge_cfg);
    }
    if (pre->parsed()) {
      finalize(pre_cfg, pre_file, "pretrain");
      return run_pretrain(pre_cfg);
    }
    if (fine->parsed()) {
      finalize(fine_cfg, fine_file, "finetune");
      return run_finetune(fine_cfg);
    }
    if (synth->parsed()) {
      finalize(synth_cfg, synth_file, "synth");
      return run_synth(synth_cfg);
    }
    if (evalc->parsed()) {
      finalize(eval_cfg, eval_file, "eval");
      return run_eval(eval_cfg);
    }
    if (sheet->parsed()) {
      finalize(sheet_cfg, sheet_file, "sheet");
      return run_sheet(sheet_cfg);
    }
  } catch (const MissingFileError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const TrainAbortError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
