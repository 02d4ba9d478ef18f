// End-to-end exercise of the command-line tool: forge -> pretrain -> finetune
// -> synth -> eval -> sheet on a toy corpus, plus the documented exit codes.
// argv[1] is the path to the agis_cli binary.
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

static std::string g_cli;
static fs::path g_work;

namespace {

int run(const std::string& args) {
  std::string cmd = g_cli + " " + args + " >> " + (g_work / "stdout.log").string() + " 2>> " +
                    (g_work / "stderr.log").string();
  int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("exit codes: help 0, unknown flag 2, missing file 3") {
  CHECK(run("--help") == 0);
  CHECK(run("forge --help") == 0);
  CHECK(run("forge --no-such-flag 1") == 2);
  CHECK(run("bogus-subcommand") == 2);
  CHECK(run("pretrain --workdir " + (g_work / "w").string() +
            " --corpus does-not-exist.tsv") == 3);
}

TEST_CASE("toy pipeline end to end") {
  std::string w = " --workdir " + g_work.string();
  std::string small = " --levels 4 --base-channels 4 --disc-base-channels 4";

  REQUIRE(run("forge" + w + " --fonts font-a,font-b --chars ABC --textures 2 --out corpus") == 0);
  REQUIRE(fs::exists(g_work / "corpus" / "manifest.tsv"));
  REQUIRE(fs::exists(g_work / "forge_run.log"));
  // 2 fonts x 3 chars x 2 textures
  std::string manifest = slurp(g_work / "corpus" / "manifest.tsv");
  CHECK(std::count(manifest.begin(), manifest.end(), '\n') >= 12);

  REQUIRE(run("pretrain" + w + small +
              " --corpus corpus/manifest.tsv --epochs 1 --batch 6 --n 3 --m 2"
              " --ckpt-out ckpt") == 0);
  REQUIRE(fs::exists(g_work / "ckpt" / "pretrain.ckpt"));
  REQUIRE(fs::exists(g_work / "ckpt" / "pretrain_history.jsonl"));
  std::string resolved = slurp(g_work / "pretrain_run.log");
  CHECK(resolved.find("epochs=1") != std::string::npos);
  CHECK(resolved.find("seed=0") != std::string::npos);

  REQUIRE(run("finetune" + w + " --disc-base-channels 4"
              " --ckpt ckpt/pretrain.ckpt --corpus corpus/manifest.tsv --style font-a_t0"
              " --epochs 1 --batch 4 --n 3 --m 2 --validate-every 1 --ckpt-out ckpt") == 0);
  REQUIRE(fs::exists(g_work / "ckpt" / "finetune_best.ckpt"));
  REQUIRE(fs::exists(g_work / "ckpt" / "finetune_last.ckpt"));

  REQUIRE(run("synth" + w + " --disc-base-channels 4"
              " --ckpt ckpt/finetune_best.ckpt --corpus corpus/manifest.tsv --style font-a_t0"
              " --chars ABC --n 3 --m 2 --out synth") == 0);
  for (const char* id : {"65", "66", "67"}) {
    CHECK(fs::exists(g_work / "synth" / (std::string(id) + ".ppm")));
    CHECK(fs::exists(g_work / "synth" / (std::string(id) + "_gray.pgm")));
  }

  // ground truth for eval: the forged style directory holds c<codepoint>.ppm
  fs::create_directories(g_work / "truth");
  for (const char* id : {"65", "66", "67"})
    fs::copy_file(g_work / "corpus" / "font-a_t0" / ("c" + std::string(id) + ".ppm"),
                  g_work / "truth" / (std::string(id) + ".ppm"),
                  fs::copy_options::overwrite_existing);
  REQUIRE(run("eval" + w + " --gen synth --truth truth --style font-a_t0 --report report.txt") ==
          0);
  REQUIRE(fs::exists(g_work / "report.txt"));
  REQUIRE(fs::exists(g_work / "report.txt.json"));
  CHECK(slurp(g_work / "report.txt").find("aggregate:") != std::string::npos);

  REQUIRE(run("sheet" + w +
              " --inputs 'truth:truth/65.ppm,truth/66.ppm;gen:synth/65.ppm,synth/66.ppm'"
              " --out sheet.ppm") == 0);
  REQUIRE(fs::exists(g_work / "sheet.ppm"));

  // config file layering: the file sets epochs, a flag overrides it
  std::ofstream cfg(g_work / "cfg.txt");
  cfg << "epochs=9999\nbatch=6\n";
  cfg.close();
  REQUIRE(run("pretrain" + w + small +
              " --config " + (g_work / "cfg.txt").string() +
              " --corpus corpus/manifest.tsv --epochs 1 --n 3 --m 2 --ckpt-out ckpt2") == 0);
  std::string log2 = slurp(g_work / "pretrain_run.log");
  CHECK(log2.find("epochs=1") != std::string::npos);   // flag wins
  CHECK(log2.find("batch=6") != std::string::npos);    // file beats default
}

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <agis_cli binary>\n", argv[0]);
    return 1;
  }
  g_cli = argv[1];
  g_work = fs::temp_directory_path() / "agis_test_cli";
  fs::remove_all(g_work);
  fs::create_directories(g_work);
  doctest::Context ctx;
  return ctx.run();
}
