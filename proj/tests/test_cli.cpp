#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "tlm/cli.hpp"
#include "tlm/data.hpp"
#include "testing.hpp"

using namespace tlm;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "tlm");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = runCli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// A tiny but complete run config over toy data in `dir`.
std::string writeConfig(const testing::TempDir& dir, const std::string& extra = "") {
  const std::string path = dir.file("run.cfg");
  std::ofstream(path) << "arch = enc-only\n"
                         "layers = 1\n"
                         "d_model = 16\n"
                         "d_ff = 16\n"
                         "heads = 2\n"
                         "max_len = 40\n"
                         "steps = 6\n"
                         "warmup = 3\n"
                         "eval_interval = 3\n"
                         "batch_tokens = 150\n"
                         "noise = true\n"
                         "beam = 2\n"
                         "train_src = " << dir.file("toy/train.src") << "\n"
                      << "train_tgt = " << dir.file("toy/train.tgt") << "\n"
                      << "dev_src = " << dir.file("toy/dev.src") << "\n"
                      << "dev_tgt = " << dir.file("toy/dev.tgt") << "\n"
                      << "test_src = " << dir.file("toy/test.src") << "\n"
                      << "test_tgt = " << dir.file("toy/test.tgt") << "\n"
                      << "run_dir = " << dir.file("run") << "\n"
                      << extra;
  return path;
}

void makeToy(const testing::TempDir& dir) {
  const Run r = run({"make-toy", "--task", "reversal", "--out", dir.file("toy"), "--train", "40", "--dev", "8",
                     "--test", "6", "--mono", "5", "--symbols", "8", "--min-len", "2", "--max-len", "4"});
  REQUIRE(r.code == 0);
}

}  // namespace

TEST_CASE("mask-dump prints the combined mask") {
  Run r = run({"mask-dump", "2", "2", "--no-labels"});
  CHECK(r.code == 0);
  CHECK(r.out == "1 1 0 0\n1 1 0 0\n1 1 1 0\n1 1 1 1\n");
  r = run({"mask-dump", "2", "2", "--variant", "triangular", "--no-labels"});
  CHECK(r.out == "1 0 0 0\n1 1 0 0\n1 1 1 0\n1 1 1 1\n");
  r = run({"mask-dump", "2", "2"});
  CHECK(r.out.find('|') != std::string::npos);
  r = run({"mask-dump", "3", "2", "--encdec"});
  CHECK(r.out.find("cross (2x3)\n1 1 1\n1 1 1\n") != std::string::npos);
  r = run({"mask-dump", "2", "2", "--variant", "diagonal"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.rfind("error: config:", 0) == 0);
}

TEST_CASE("usage errors exit with 1 and a single diagnostic line") {
  for (const auto& args : std::vector<std::vector<std::string>>{{}, {"frobnicate"}, {"mask-dump", "2"},
                                                               {"translate", "--input", "x"}}) {
    const Run r = run(args);
    CHECK(r.code == kExitUsage);
    CHECK(r.err.rfind("error: usage: ", 0) == 0);
    CHECK(r.err.find('\n') == r.err.size() - 1);
  }
}

TEST_CASE("score prints corpus BLEU") {
  testing::TempDir dir("cli");
  std::ofstream(dir.file("hyp")) << "a b c d\n";
  std::ofstream(dir.file("ref")) << "a b c d e\n";
  const Run r = run({"score", dir.file("hyp"), dir.file("ref")});
  CHECK(r.code == 0);
  CHECK(r.out == "BLEU 77.88 (1.0000/1.0000/1.0000/1.0000, BP=0.7788, hyp=4, ref=5)\n");
  const Run missing = run({"score", dir.file("nope"), dir.file("ref")});
  CHECK(missing.code == kExitData);
  CHECK(missing.err.rfind("error: data:", 0) == 0);
}

TEST_CASE("bpe-train and bpe-apply round trip") {
  testing::TempDir dir("cli");
  std::ofstream(dir.file("text")) << "lower lowest newer newest\nwider widest\n";
  Run r = run({"bpe-train", "--input", dir.file("text"), "--merges", "10", "--output", dir.file("merges")});
  REQUIRE(r.code == 0);
  r = run({"bpe-apply", "--model", dir.file("merges"), "--input", dir.file("text"), "--output", dir.file("seg")});
  REQUIRE(r.code == 0);
  CHECK(slurp(dir.file("seg")).find("@@") != std::string::npos);
  r = run({"bpe-apply", "--decode", "--input", dir.file("seg"), "--output", dir.file("back")});
  REQUIRE(r.code == 0);
  CHECK(slurp(dir.file("back")) == slurp(dir.file("text")));
  r = run({"bpe-apply", "--input", dir.file("seg"), "--output", dir.file("x")});
  CHECK(r.code == kExitUsage);
}

TEST_CASE("make-toy writes aligned splits") {
  testing::TempDir dir("cli");
  makeToy(dir);
  const auto src = readLines(dir.file("toy/train.src"));
  const auto tgt = readLines(dir.file("toy/train.tgt"));
  REQUIRE(src.size() == 40);
  REQUIRE(tgt.size() == 40);
  auto words = splitWhitespace(src[0]);
  std::reverse(words.begin(), words.end());
  CHECK(splitWhitespace(tgt[0]) == words);
  CHECK(readLines(dir.file("toy/mono.tgt")).size() == 5);
  const Run again = run({"make-toy", "--task", "reversal", "--out", dir.file("toy2"), "--train", "40", "--dev", "8",
                         "--test", "6", "--mono", "5", "--symbols", "8", "--min-len", "2", "--max-len", "4"});
  REQUIRE(again.code == 0);
  CHECK(slurp(dir.file("toy/train.src")) == slurp(dir.file("toy2/train.src")));
  const Run ml = run({"make-toy", "--multilingual", "--out", dir.file("ml"), "--train", "10", "--dev", "0",
                      "--test", "0", "--symbols", "6"});
  REQUIRE(ml.code == 0);
  CHECK(readLines(dir.file("ml/train.x-y.x")) == readLines(dir.file("ml/train.x-z.x")));
  CHECK(readLines(dir.file("ml/train.z-y.y")).size() == 10);
}

TEST_CASE("train, translate and backtranslate end to end") {
  testing::TempDir dir("cli");
  makeToy(dir);
  const std::string cfg = writeConfig(dir);

  Run r = run({"train", cfg});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.find("test BLEU") != std::string::npos);
  for (const char* f : {"vocab.txt", "config.txt", "metrics.tsv", "best.ckpt", "last.ckpt", "test_bleu.txt"})
    CHECK(std::filesystem::exists(dir.file(std::string("run/") + f)));
  const std::string metrics = slurp(dir.file("run/metrics.tsv"));
  CHECK(metrics.rfind("step\tL_MT\tL_RE\tlambda\tdevPPL\tdevPPL_full\n", 0) == 0);

  SUBCASE("same config and seed give identical metrics") {
    r = run({"train", cfg, "--set", "run_dir=" + dir.file("run2")});
    REQUIRE(r.code == 0);
    CHECK(slurp(dir.file("run2/metrics.tsv")) == metrics);
    r = run({"train", cfg, "--set", "run_dir=" + dir.file("run3"), "--set", "seed=9"});
    REQUIRE(r.code == 0);
    CHECK(slurp(dir.file("run3/metrics.tsv")) != metrics);
  }
  SUBCASE("the echoed config reproduces the run") {
    r = run({"train", dir.file("run/config.txt"), "--set", "run_dir=" + dir.file("echo")});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(slurp(dir.file("echo/metrics.tsv")) == metrics);
  }
  SUBCASE("translate") {
    const std::string ckpt = dir.file("run/best.ckpt"), vocab = dir.file("run/vocab.txt");
    std::ofstream(dir.file("empty.src")).flush();
    r = run({"translate", "--checkpoint", ckpt, "--vocab", vocab, "--input", dir.file("empty.src"), "--output",
             dir.file("empty.out")});
    CHECK(r.code == 0);
    CHECK(std::filesystem::exists(dir.file("empty.out")));
    CHECK(slurp(dir.file("empty.out")).empty());

    r = run({"translate", "--checkpoint", ckpt, "--vocab", vocab, "--input", dir.file("toy/test.src"), "--output",
             dir.file("plain.out")});
    REQUIRE(r.code == 0);
    r = run({"translate", "--checkpoint", ckpt, "--vocab", vocab, "--input", dir.file("toy/test.src"), "--output",
             dir.file("scored.out"), "--scores"});
    REQUIRE(r.code == 0);
    const auto plain = readLines(dir.file("plain.out"));
    const auto scored = readLines(dir.file("scored.out"));
    REQUIRE(plain.size() == 6);
    REQUIRE(scored.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
      const auto tab = scored[i].rfind('\t');
      REQUIRE(tab != std::string::npos);
      CHECK(scored[i].substr(0, tab) == plain[i]);
      CHECK(std::stod(scored[i].substr(tab + 1)) <= 0.0);
    }
    r = run({"translate", "--checkpoint", dir.file("nope.ckpt"), "--vocab", vocab, "--input", dir.file("empty.src"),
             "--output", dir.file("x")});
    CHECK(r.code == kExitData);
  }
  SUBCASE("backtranslate reports skips and keeps files aligned") {
    std::ofstream(dir.file("mono.txt")) << "w1 w2\n\nw3 w1 w2\n";
    r = run({"backtranslate", "--checkpoint", dir.file("run/best.ckpt"), "--vocab", dir.file("run/vocab.txt"),
             "--mono", dir.file("mono.txt"), "--out-src", dir.file("bt.src"), "--out-tgt", dir.file("bt.tgt")});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto s = readLines(dir.file("bt.src")), t = readLines(dir.file("bt.tgt"));
    CHECK(s.size() == t.size());
    CHECK(r.err.find("backtranslated " + std::to_string(s.size()) + " sentences, skipped " +
                     std::to_string(3 - s.size())) != std::string::npos);
  }
}

TEST_CASE("configuration errors") {
  testing::TempDir dir("cli");
  makeToy(dir);
  Run r = run({"train", writeConfig(dir, "shedule = exp\n")});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("shedule") != std::string::npos);
  r = run({"train", writeConfig(dir), "--set", "steps=abc"});
  CHECK(r.code == kExitUsage);
  r = run({"train", writeConfig(dir), "--set", "arch=enc-dec", "--set", "mono=" + dir.file("toy/mono.tgt"), "--set",
           "mono_ratio=0.3"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("monolingual") != std::string::npos);
}

TEST_CASE("grid emits 33 rows and resumes finished cells") {
  testing::TempDir dir("cli");
  makeToy(dir);
  const std::string cfg = writeConfig(dir, "");
  Run r = run({"grid", cfg, "--set", "steps=2", "--set", "eval_interval=2", "--jobs", "2"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto lines = readLines(dir.file("run/grid.tsv"));
  REQUIRE(lines.size() == 34);
  CHECK(lines[0] == "task\tmask\tnoise\tschedule\tbleu\tdevPPL");
  CHECK(lines.back().rfind("enc-dec\t-\t-\t-\t", 0) == 0);
  std::size_t lm = 0;
  for (const std::string& l : lines) lm += l.rfind("LM\t", 0) == 0;
  CHECK(lm == 16);

  r = run({"grid", cfg, "--set", "steps=2", "--set", "eval_interval=2"});
  REQUIRE(r.code == 0);
  std::size_t resumed = 0, pos = 0;
  while ((pos = r.err.find("resumed ", pos)) != std::string::npos) ++resumed, ++pos;
  CHECK(resumed == 33);
  CHECK(readLines(dir.file("run/grid.tsv")) == lines);
}
