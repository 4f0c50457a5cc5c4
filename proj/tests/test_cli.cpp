#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "icd/cli.hpp"
#include "icd/config.hpp"
#include "icd/error.hpp"
#include "icd/trainkit.hpp"

using namespace icd;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) out.push_back(line);
  return out;
}

double report_value(const std::string& report, const std::string& key) {
  for (const auto& l : lines(report)) {
    if (l.rfind(key + "\t", 0) == 0) return std::stod(l.substr(key.size() + 1));
  }
  FAIL("missing " << key);
  return 0;
}

// Scratch directory holding a small corpus and its embeddings, shared by the
// CLI tests.
struct Workspace {
  fs::path dir;
  fs::path corpus, emb;

  Workspace() {
    dir = fs::temp_directory_path() / ("icd_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    corpus = dir / "corpus.txt";
    emb = dir / "emb.txt";
    auto g = run({"gen-data", "--out", corpus.string(), "--set", "gen.n_docs=200", "--seed", "5"});
    REQUIRE(g.code == 0);
    auto e = run({"embed", "--corpus", corpus.string(), "--out", emb.string(), "--set", "encoder.model_dim=16",
                  "--set", "encoder.n_heads=2"});
    REQUIRE(e.code == 0);
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

Workspace& workspace() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("key-value config parsing") {
  auto kv = config::KvConfig::parse("# comment\n train.lr_peak = 1e-3 \n\nmodel.arch=llama2_c # tail\n");
  CHECK(kv.get("train.lr_peak") == "1e-3");
  CHECK(kv.get("model.arch") == "llama2_c");
  CHECK_FALSE(kv.contains("gen.seed"));
  try {
    config::KvConfig::parse("a = 1\nno equals sign\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(config::KvConfig::parse(" = 3\n"), ParseError);

  config::RunConfig cfg;
  config::apply(config::KvConfig::parse("train.preset = llama_top50\ntrain.seed = 9\nmrcnn.kernel_sizes = 3,7\n"), cfg);
  CHECK(cfg.train.epochs == 5);
  CHECK(cfg.train.seed == 9);
  CHECK(cfg.model.mrcnn.kernel_sizes == std::vector<std::size_t>{3, 7});
  CHECK_THROWS_AS(config::apply(config::KvConfig::parse("train.lr = 1\n"), cfg), ValidationError);
  CHECK_THROWS_AS(config::apply(config::KvConfig::parse("train.epochs = many\n"), cfg), ValidationError);

  // Serialization is a fixed point.
  const auto text = config::to_kv(cfg).to_text();
  config::RunConfig back;
  config::apply(config::KvConfig::parse(text), back);
  CHECK(config::to_kv(back).to_text() == text);
}

TEST_CASE("gen-data") {
  auto& w = workspace();
  const auto text = slurp(w.corpus);
  CHECK(text.rfind("CORPUS v1 200 2000 50\n", 0) == 0);

  const auto again = w.path("again.txt");
  REQUIRE(run({"gen-data", "--out", again, "--set", "gen.n_docs=200", "--seed", "5"}).code == 0);
  CHECK(slurp(again) == text);
  REQUIRE(run({"gen-data", "--out", again, "--set", "gen.n_docs=200", "--seed", "6"}).code == 0);
  CHECK(slurp(again) != text);

  auto bad = run({"gen-data", "--out", again, "--set", "gen.n_labels=700"});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("C*m") != std::string::npos);
  CHECK(run({"gen-data"}).code == 2);
  CHECK(run({"gen-data", "--out", again, "--set", "nonsense.key=1"}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);

  const auto cfg_path = w.path("gen.cfg");
  std::ofstream(cfg_path) << "gen.n_docs = 100\ngen.seed = 5\n";
  REQUIRE(run({"gen-data", "--config", cfg_path, "--out", again}).code == 0);
  CHECK(slurp(again).rfind("CORPUS v1 100 ", 0) == 0);
  REQUIRE(run({"gen-data", "--config", cfg_path, "--set", "gen.n_docs=120", "--out", again}).code == 0);
  CHECK(slurp(again).rfind("CORPUS v1 120 ", 0) == 0);
}

TEST_CASE("embed") {
  auto& w = workspace();
  const auto text = slurp(w.emb);
  CHECK(text.rfind("EMB v1 200 16\n", 0) == 0);
  const auto again = w.path("emb2.txt");
  REQUIRE(run({"embed", "--corpus", w.corpus.string(), "--out", again, "--set", "encoder.model_dim=16", "--set",
               "encoder.n_heads=2"})
              .code == 0);
  CHECK(slurp(again) == text);

  auto over = run({"embed", "--corpus", w.corpus.string(), "--out", again, "--set", "encoder.posenc.alpha=1"});
  CHECK(over.code == 3);
  CHECK(over.err.find("document d0") != std::string::npos);
  CHECK(over.err.find("S_new=128") != std::string::npos);
}

TEST_CASE("train, eval and report") {
  auto& w = workspace();
  const auto ck = w.path("mrcnn.ck");
  auto t = run({"train", "--corpus", w.corpus.string(), "--embeddings", w.emb.string(), "--arch", "llama2_r_mrcnn",
                "--set", "train.epochs=2", "--set", "mrcnn.filters_per_kernel=4", "--out", ck});
  REQUIRE(t.code == 0);
  CHECK(t.out.find("arch llama2_r_mrcnn") != std::string::npos);
  const auto hist = lines(slurp(ck + ".history.tsv"));
  CHECK(hist.size() >= 2);
  CHECK(hist.size() <= 3);

  const auto ck_text = train::load_checkpoint(ck).config_text;
  CHECK(ck_text.find("model.arch = llama2_r_mrcnn\n") != std::string::npos);
  CHECK(ck_text.find("model.reduction = CNN-1024_map_256\n") != std::string::npos);
  CHECK(ck_text.find("train.preset = mrcnn_top50\n") != std::string::npos);
  CHECK(ck_text.find("train.lr_peak = 1e-04\n") != std::string::npos);

  // Seeded re-run writes identical bytes.
  const auto ck2 = w.path("mrcnn2.ck");
  REQUIRE(run({"train", "--corpus", w.corpus.string(), "--embeddings", w.emb.string(), "--arch", "llama2_r_mrcnn",
               "--set", "train.epochs=2", "--set", "mrcnn.filters_per_kernel=4", "--out", ck2})
              .code == 0);
  CHECK(slurp(ck) == slurp(ck2));
  CHECK(slurp(ck + ".history.tsv") == slurp(ck2 + ".history.tsv"));

  auto ev = run({"eval", "--corpus", w.corpus.string(), "--embeddings", w.emb.string(), "--checkpoint", ck});
  REQUIRE(ev.code == 0);
  const auto rep = lines(ev.out);
  REQUIRE(rep.size() == 8);
  CHECK(rep[0].rfind("f1_macro\t", 0) == 0);
  CHECK(rep[7].rfind("n_labels_scored_macro\t", 0) == 0);
  const auto rep_path = w.path("report.txt");
  REQUIRE(run({"eval", "--corpus", w.corpus.string(), "--embeddings", w.emb.string(), "--checkpoint", ck, "--out",
               rep_path})
              .code == 0);
  CHECK(slurp(rep_path) == ev.out);

  auto mismatch = run({"eval", "--corpus", w.corpus.string(), "--embeddings", w.emb.string(), "--checkpoint", ck,
                       "--arch", "llama2_c"});
  CHECK(mismatch.code == 5);
  const auto other = w.path("other.txt");
  REQUIRE(run({"gen-data", "--out", other, "--set", "gen.n_docs=50", "--set", "gen.n_labels=20"}).code == 0);
  CHECK(run({"eval", "--corpus", other, "--checkpoint", ck}).code == 5);

  auto rp = run({"report", "--checkpoint", ck});
  REQUIRE(rp.code == 0);
  CHECK(rp.out.rfind(ck_text, 0) == 0);
  CHECK(rp.out.find("param\treduce.cnn0.weight\t[1x16x8]\t128\n") != std::string::npos);
  CHECK(rp.out.find("total_params\t") != std::string::npos);

  const auto head = w.path("head.ck");
  auto th = run({"train", "--corpus", w.corpus.string(), "--embeddings", w.emb.string(), "--arch", "llama2_c",
                 "--set", "train.epochs=1", "--set", "train.grad_accum_steps=2", "--out", head});
  REQUIRE(th.code == 0);
  CHECK(train::load_checkpoint(head).config_text.find("train.preset = llama_top50\n") != std::string::npos);
  CHECK(run({"eval", "--corpus", w.corpus.string(), "--embeddings", w.emb.string(), "--checkpoint", head}).code == 0);
}

TEST_CASE("plateau run stops early") {
  auto& w = workspace();
  const auto ck = w.path("plateau.ck");
  auto t = run({"train", "--corpus", w.corpus.string(), "--embeddings", w.emb.string(), "--arch", "llama2_c",
                "--preset", "mrcnn_top50", "--set", "train.lr_peak=0.01", "--freeze-lr-after", "2", "--out", ck});
  REQUIRE(t.code == 0);
  const auto hist = lines(slurp(ck + ".history.tsv"));
  CHECK(hist.size() - 1 < 15);
  CHECK(t.out.find("stopped early") != std::string::npos);
}

TEST_CASE("oracle and random-weight evaluation") {
  auto& w = workspace();
  auto oracle = run({"eval", "--corpus", w.corpus.string(), "--oracle", "--split", "train"});
  REQUIRE(oracle.code == 0);
  CHECK(report_value(oracle.out, "f1_micro") >= 0.97);
  CHECK(report_value(oracle.out, "auc_micro") >= 0.97);

  const auto ck = w.path("random.ck");
  REQUIRE(run({"train", "--corpus", w.corpus.string(), "--embeddings", w.emb.string(), "--set", "train.epochs=0",
               "--set", "mrcnn.filters_per_kernel=4", "--out", ck})
              .code == 0);
  auto ev = run({"eval", "--corpus", w.corpus.string(), "--embeddings", w.emb.string(), "--checkpoint", ck, "--split",
                 "train"});
  REQUIRE(ev.code == 0);
  CHECK(std::abs(report_value(ev.out, "auc_micro") - 0.5) < 0.05);
}

TEST_CASE("reduction shape report") {
  auto desk = run({"report", "--reduction", "CNN-1024_map_256"});
  REQUIRE(desk.code == 0);
  CHECK(desk.out == "preset\tCNN-1024_map_256\ninput\t[4x64]\nstage0\t[4x32]\nstage1\t[4x16]\n");
  auto paper = run({"report", "--reduction", "CNN-1024_map_256", "--paper-dims"});
  REQUIRE(paper.code == 0);
  CHECK(paper.out == "preset\tCNN-1024_map_256\ninput\t[4x4096]\nstage0\t[4x1024]\nstage1\t[4x256]\n");
  auto res = run({"report", "--reduction", "Residual-128", "--paper-dims"});
  CHECK(res.out.find("residual\t[4x128]\n") != std::string::npos);
  CHECK(run({"report", "--reduction", "CNN-9"}).code == 2);
  CHECK(run({"report"}).code == 2);
}
