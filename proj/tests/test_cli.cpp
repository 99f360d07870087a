#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "adsorbtext/cli.hpp"
#include "adsorbtext/eval_pairs.hpp"
#include "adsorbtext/featurizer.hpp"
#include "test_support.hpp"

using namespace adsorbtext;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

const std::string kS4 = "<s>NH3</s>VCr3 (2 1 0)</s>[N Cr Cr bridge [Cr Cr Cr Cr V V V N] [Cr Cr Cr Cr V V V N]]</s>";

struct EnvSeed {
  explicit EnvSeed(const char* v) { setenv("ADSORBTEXT_SEED", v, 1); }
  ~EnvSeed() { unsetenv("ADSORBTEXT_SEED"); }
};

}  // namespace

TEST_CASE("usage errors") {
  auto r = invoke({});
  CHECK(r.code != 0);
  CHECK(r.out.find("featurize") != std::string::npos);
  CHECK(invoke({"no-such-command"}).code == cli::kExitUserError);
  CHECK(invoke({"featurize"}).code == cli::kExitUserError);
  CHECK(invoke({"--help"}).code == 0);
}

TEST_CASE("featurize writes the corpus and a manifest") {
  testing::TempDir tmp("cli-feat");
  auto out = (tmp / "c.jsonl").string();
  auto r = invoke({"featurize", "--in", testing::nh3_fixture().string(), "--out", out, "--format", "s4"});
  REQUIRE(r.code == 0);
  auto corpus = load_corpus(out);
  REQUIRE(corpus.size() == 1);
  CHECK(corpus[0].text == kS4);
  auto manifest = nlohmann::json::parse(read_file(out + ".manifest.json"));
  CHECK(manifest.at("command") == "featurize");
  CHECK(manifest.at("config").at("format") == "s4");
  CHECK(manifest.contains("config_hash"));
}

TEST_CASE("errors produce a structured diagnostic") {
  testing::TempDir tmp("cli-err");
  write_file_atomic(tmp / "bad.jsonl", "{not json\n");
  auto r = invoke({"featurize", "--in", (tmp / "bad.jsonl").string(), "--out", (tmp / "c.jsonl").string()});
  CHECK(r.code == cli::kExitUserError);
  auto d = nlohmann::json::parse(r.err.substr(0, r.err.find('\n')));
  CHECK(d.at("status") == "error");
  CHECK(d.at("command") == "featurize");
  CHECK(d.at("kind") == "parse");
  CHECK(d.at("message").get<std::string>().find(":1:") != std::string::npos);
  CHECK_FALSE(fs::exists(tmp / "c.jsonl"));
}

TEST_CASE("config file values override flags") {
  testing::TempDir tmp("cli-config");
  write_file_atomic(tmp / "cfg.json", R"({"format": "s1"})");
  auto out = (tmp / "c.jsonl").string();
  auto r = invoke({"featurize", "--in", testing::nh3_fixture().string(), "--out", out, "--format", "s4", "--config",
                   (tmp / "cfg.json").string()});
  REQUIRE(r.code == 0);
  CHECK(load_corpus(out)[0].text == "<s>NH3</s>VCr3 (2 1 0)</s>");

  write_file_atomic(tmp / "bad.json", "[1, 2]");
  CHECK(invoke({"featurize", "--in", testing::nh3_fixture().string(), "--out", out, "--config",
                (tmp / "bad.json").string()})
            .code == cli::kExitUserError);
}

TEST_CASE("environment seed overrides the flag") {
  testing::TempDir tmp("cli-seed");
  REQUIRE(invoke({"synth", "--n", "20", "--seed", "5", "--out", (tmp / "a.jsonl").string()}).code == 0);
  REQUIRE(invoke({"synth", "--n", "20", "--seed", "6", "--out", (tmp / "b.jsonl").string()}).code == 0);
  {
    EnvSeed env("5");
    REQUIRE(invoke({"synth", "--n", "20", "--seed", "6", "--out", (tmp / "c.jsonl").string()}).code == 0);
  }
  CHECK(read_file(tmp / "a.jsonl") == read_file(tmp / "c.jsonl"));
  CHECK(read_file(tmp / "a.jsonl") != read_file(tmp / "b.jsonl"));
  auto manifest = nlohmann::json::parse(read_file((tmp / "c.jsonl").string() + ".manifest.json"));
  CHECK(manifest.at("seed") == 5);
  {
    EnvSeed env("abc");
    CHECK(invoke({"synth", "--n", "5", "--out", (tmp / "d.jsonl").string()}).code == cli::kExitUserError);
  }
}

TEST_CASE("pairs report counts every within-split pair") {
  testing::TempDir tmp("cli-pairs");
  std::vector<PredictionRecord> records;
  const std::array<Split, 2> splits{Split::ID, Split::OOD_cat};
  for (int i = 0; i < 25; ++i)
    records.push_back({"p" + std::to_string(100 + i), splits[i % 2], i % 3 ? "*O" : "*OH", i % 4 ? "Pt" : "Ni",
                       0.1 * i, 0.1 * i + 0.05 * ((i * 7) % 5 - 2)});
  save_predictions(tmp / "pred.tsv", records);
  auto r = invoke({"pairs", "--pred", (tmp / "pred.tsv").string(), "--report", (tmp / "rep").string()});
  REQUIRE(r.code == 0);
  auto report = nlohmann::json::parse(read_file(tmp / "rep" / "pairs_report.json"));
  std::uint64_t total = 0;
  for (const auto& s : report.at("pair_scopes")) total += s.at("pairs").get<std::uint64_t>();
  CHECK(total == pair_count(13) + pair_count(12));
  CHECK(fs::exists(tmp / "rep" / "pairs_report.txt"));
  CHECK(fs::exists(tmp / "rep" / "run_manifest.json"));

  auto g = invoke({"pairs", "--pred", (tmp / "pred.tsv").string(), "--report", (tmp / "rep2").string(), "--global"});
  REQUIRE(g.code == 0);
  auto global = nlohmann::json::parse(read_file(tmp / "rep2" / "pairs_report.json"));
  CHECK(global.at("pair_scopes").at(0).at("pairs") == pair_count(25));
}

TEST_CASE("end-to-end smoke run") {
  testing::TempDir tmp("cli-smoke");
  cli::SmokeOptions o;
  o.fixture = cli::bundled_fixture();
  o.seed = 3;

  SUBCASE("artifacts exist and reruns are byte identical") {
    o.out_dir = tmp / "a";
    auto ra = cli::end_to_end_smoke(o);
    CHECK(ra.stages.size() == 7);
    CHECK(ra.artifacts.size() == cli::smoke_artifacts().size());
    for (const auto& a : ra.artifacts) CHECK(fs::exists(a));
    o.out_dir = tmp / "b";
    cli::end_to_end_smoke(o);
    for (auto rel : {"eval/report.json", "train/checkpoint/params.bin", "predictions.tsv", "heatmap.jsonl"})
      CHECK(read_file(tmp / "a" / rel) == read_file(tmp / "b" / rel));
  }
  SUBCASE("a corrupted intermediate names the failing stage") {
    o.out_dir = tmp / "c";
    o.after_stage = [](const std::string& stage, const fs::path& dir) {
      if (stage == "build-vocab") write_file_atomic(dir / "vocab.txt", "garbage\n");
    };
    try {
      cli::end_to_end_smoke(o);
      FAIL("expected a stage failure");
    } catch (const cli::StageError& e) {
      CHECK(e.stage() == "pretrain");
    }
  }
  SUBCASE("missing fixture") {
    o.fixture = tmp / "missing.jsonl";
    o.out_dir = tmp / "d";
    CHECK_THROWS_AS(cli::end_to_end_smoke(o), IoError);
  }
}

TEST_CASE("train rejects a checkpoint from another vocabulary size") {
  testing::TempDir tmp("cli-mismatch");
  auto fixture = cli::bundled_fixture().string();
  auto p = [&](const char* rel) { return (tmp / rel).string(); };
  REQUIRE(invoke({"featurize", "--in", fixture, "--out", p("s4.jsonl"), "--format", "s4"}).code == 0);
  REQUIRE(invoke({"featurize", "--in", fixture, "--out", p("s1.jsonl"), "--format", "s1"}).code == 0);
  REQUIRE(invoke({"build-vocab", "--corpus", p("s4.jsonl"), "--out", p("v4.txt")}).code == 0);
  REQUIRE(invoke({"build-vocab", "--corpus", p("s1.jsonl"), "--out", p("v1.txt")}).code == 0);
  std::vector<std::string> small{"--layers", "1", "--heads", "1", "--hidden", "8", "--ffn", "8", "--epochs", "1"};
  std::vector<std::string> a{"train", "--corpus", p("s4.jsonl"), "--vocab", p("v4.txt"), "--out", p("t4")};
  a.insert(a.end(), small.begin(), small.end());
  REQUIRE(invoke(a).code == 0);
  CHECK(fs::exists(tmp / "t4" / "history.jsonl"));
  std::vector<std::string> b{"train", "--corpus", p("s1.jsonl"), "--vocab", p("v1.txt"), "--init", p("t4"),
                             "--out", p("t1")};
  b.insert(b.end(), small.begin(), small.end());
  auto r = invoke(b);
  CHECK(r.code == cli::kExitUserError);
  CHECK_FALSE(fs::exists(tmp / "t1"));
}
