#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

std::string bin() {
  const char* b = std::getenv("RMNET_BIN");
  REQUIRE_MESSAGE(b != nullptr, "RMNET_BIN must point at the cli binary");
  return b;
}

struct TempDir {
  fs::path path;
  TempDir() {
    static int c = 0;
    path = fs::temp_directory_path() /
           ("rmnet_cli_" + std::to_string(uint64_t(::getpid())) + "_" +
            std::to_string(c++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
  std::string sub(const std::string& name) const {
    return (path / name).string();
  }
};

int run(const std::string& args, const std::string& capture = "") {
  std::string cmd = bin() + " " + args;
  if (!capture.empty()) cmd += " >" + capture + " 2>&1";
  else cmd += " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  if (rc == -1) return -1;
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -2;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::map<std::string, std::string> kv(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

// Shared tiny corpus + one trained classifier checkpoint for the suite.
struct Fixture {
  TempDir dir;
  std::string data, ckpt;

  Fixture() {
    data = dir.sub("data");
    ckpt = dir.sub("model.ck");
    REQUIRE(run("gen-data --out " + data +
                " --n 120 --classes 4 --canvas 32 --seed 3") == 0);
    REQUIRE(run("train --data " + data + " --out " + ckpt +
                " --preset tiny --rm 1:3 --epochs 3 --batch 16"
                " --lr0 0.02 --seed 1 --strict"
                " --resize-short 24 --crop 16") == 0);
  }
  static Fixture& get() {
    static Fixture f;
    return f;
  }
};

std::string common_train_flags() {
  return " --preset tiny --epochs 1 --batch 16 --lr0 0.02 --seed 1 --strict"
         " --resize-short 24 --crop 16";
}

}  // namespace

TEST_CASE("gen-data writes a loadable corpus and refuses to clobber") {
  auto& f = Fixture::get();
  CHECK(fs::exists(fs::path(f.data) / "labels.csv"));
  CHECK(fs::exists(fs::path(f.data) / "gen.txt"));
  // no --force onto the same directory
  CHECK(run("gen-data --out " + f.data + " --n 120 --classes 4 --canvas 32") ==
        2);
  CHECK(run("gen-data --out " + f.data +
            " --n 120 --classes 4 --canvas 32 --seed 3 --force") == 0);
  // config errors exit 2
  TempDir t;
  CHECK(run("gen-data --out " + t.sub("x") + " --n 7 --classes 4") == 2);
}

TEST_CASE("train writes a checkpoint and is byte-reproducible under strict") {
  auto& f = Fixture::get();
  CHECK(fs::exists(f.ckpt));

  TempDir t;
  const std::string again = t.sub("again.ck");
  REQUIRE(run("train --data " + f.data + " --out " + again +
              " --preset tiny --rm 1:3 --epochs 3 --batch 16"
              " --lr0 0.02 --seed 1 --strict"
              " --resize-short 24 --crop 16") == 0);
  CHECK(slurp(f.ckpt) == slurp(again));  // identical bytes

  // train summary reports the fingerprint and structure
  const std::string out = t.sub("train_out.txt");
  const std::string third = t.sub("third.ck");
  REQUIRE(run("train --data " + f.data + " --out " + third + " --rm 1:3" +
              common_train_flags(), out) == 0);
  auto m = kv(slurp(out));
  CHECK(m.count("fingerprint"));
  CHECK(m["structure"] == "strict");
  CHECK(m["params"] != "");
}

TEST_CASE("bad configuration exits 2, divergence exits 3") {
  auto& f = Fixture::get();
  TempDir t;
  // k * theta must cover the circle
  CHECK(run("train --data " + f.data + " --out " + t.sub("x.ck") +
            " --rm 1:3 --k 3" + common_train_flags()) == 2);
  // unknown preset
  CHECK(run("train --data " + f.data + " --out " + t.sub("x.ck") +
            " --preset giant --epochs 1 --strict") == 2);
  // missing data directory
  CHECK(run("train --data " + t.sub("absent") + " --out " + t.sub("x.ck") +
            common_train_flags()) == 1);
  // crop mismatching the model input extent
  CHECK(run("train --data " + f.data + " --out " + t.sub("x.ck") +
            " --preset tiny --epochs 1 --strict --resize-short 40 --crop 32") ==
        2);
  // diverging lr
  CHECK(run("train --data " + f.data + " --out " + t.sub("x.ck") +
            " --preset tiny --rm 1:3 --epochs 2 --batch 16 --lr0 1e9"
            " --seed 1 --strict --resize-short 24 --crop 16") == 3);
}

TEST_CASE("config file merges under explicit flags") {
  auto& f = Fixture::get();
  TempDir t;
  const std::string cfg = t.sub("train.cfg");
  {
    std::ofstream out(cfg);
    out << "# base configuration\n"
        << "preset=tiny\n"
        << "rm_span=1:3\n"
        << "epochs=1\n"
        << "batch=16\n"
        << "lr0=0.02\n"
        << "seed=1\n"
        << "strict=1\n"
        << "resize_short=24\n"
        << "crop=16\n";
  }
  const std::string out1 = t.sub("o1.txt");
  REQUIRE(run("train --config " + cfg + " --data " + f.data + " --out " +
              t.sub("a.ck"), out1) == 0);
  auto m = kv(slurp(out1));
  CHECK(m["structure"] == "strict");

  // an explicit flag overrides the file: no span -> baseline structure
  const std::string out2 = t.sub("o2.txt");
  REQUIRE(run("train --config " + cfg + " --data " + f.data + " --rm none" +
              " --out " + t.sub("b.ck"), out2) == 0);
  CHECK(kv(slurp(out2))["structure"] == "baseline");

  // malformed file
  const std::string bad = t.sub("bad.cfg");
  std::ofstream(bad) << "epochs: 3\n";
  CHECK(run("train --config " + bad + " --data " + f.data + " --out " +
            t.sub("c.ck")) == 2);
}

TEST_CASE("eval writes a parseable report with the paper metrics") {
  auto& f = Fixture::get();
  TempDir t;
  const std::string report = t.sub("eval.txt");
  REQUIRE(run("eval --ckpt " + f.ckpt + " --data " + f.data +
              " --split test --report " + report) == 0);
  auto m = kv(slurp(report));
  for (const char* key :
       {"accuracy", "kappa", "kappa_band", "macro_precision",
        "macro_sensitivity", "macro_specificity", "loss", "items"})
    CHECK_MESSAGE(m.count(key), "missing ", key);
  CHECK(std::stod(m["accuracy"]) >= 0.0);
  CHECK(std::stod(m["accuracy"]) <= 1.0);
  CHECK(m["items"] == "12");  // 10% of 120
  CHECK(m.count("class.c0.precision"));
  CHECK(m.count("class.c3.specificity"));
  // confusion matrix block accompanies the key=value fields
  CHECK(slurp(report).find("# confusion matrix") != std::string::npos);

  // rotated protocol is deterministic given the seed
  const std::string r1 = t.sub("rot1.txt"), r2 = t.sub("rot2.txt");
  REQUIRE(run("eval --ckpt " + f.ckpt + " --data " + f.data +
              " --rotate --rotate-seed 5 --report " + r1) == 0);
  REQUIRE(run("eval --ckpt " + f.ckpt + " --data " + f.data +
              " --rotate --rotate-seed 5 --report " + r2) == 0);
  CHECK(slurp(r1) == slurp(r2));
  CHECK(kv(slurp(r1))["rotated"] == "1");

  // unknown split exits 2; missing checkpoint exits 1
  CHECK(run("eval --ckpt " + f.ckpt + " --data " + f.data +
            " --split half") == 2);
  CHECK(run("eval --ckpt " + t.sub("none.ck") + " --data " + f.data) == 1);
}

TEST_CASE("check audits invariance and respects the exit-code contract") {
  auto& f = Fixture::get();
  TempDir t;
  const std::string report = t.sub("check.txt");
  REQUIRE(run("check --ckpt " + f.ckpt + " --probes 4", report) == 0);
  auto m = kv(slurp(report));
  CHECK(m["structure"] == "strict");
  CHECK(m["enforced"] == "1");
  CHECK(m["pass"] == "1");
  CHECK(std::stod(m["span_equivariance_dev"]) < 1e-5);
  CHECK(std::stod(m["pooled_invariance_dev"]) < 1e-5);
  CHECK(std::stod(m["logits_invariance_dev"]) < 1e-4);

  // baseline checkpoints are reported but not enforced
  const std::string base_ck = t.sub("base.ck");
  REQUIRE(run("train --data " + f.data + " --out " + base_ck +
              common_train_flags()) == 0);
  const std::string breport = t.sub("bcheck.txt");
  REQUIRE(run("check --ckpt " + base_ck + " --probes 2", breport) == 0);
  CHECK(kv(slurp(breport))["enforced"] == "0");
}

TEST_CASE("retrieve round-trips its index and guards the fingerprint") {
  auto& f = Fixture::get();
  TempDir t;
  const std::string hck = t.sub("hash.ck");
  REQUIRE(run("train --data " + f.data + " --out " + hck +
              " --rm 1:3 --head hasher --hash-bits 8" + common_train_flags()) ==
          0);

  const std::string index = t.sub("items.idx");
  const std::string rep1 = t.sub("ret1.txt");
  REQUIRE(run("retrieve --ckpt " + hck + " --data " + f.data +
              " --save-index " + index + " --report " + rep1) == 0);
  auto m1 = kv(slurp(rep1));
  CHECK(m1["database"] == "96");  // 80% of 120
  CHECK(m1["queries"] == "12");
  CHECK(m1.count("map_at_10"));
  CHECK(m1.count("mrr_at_10"));
  const double map1 = std::stod(m1["map_at_10"]);
  CHECK(map1 >= 0.0);
  CHECK(map1 <= 1.0);

  // loading the saved index reproduces the metrics exactly
  const std::string rep2 = t.sub("ret2.txt");
  REQUIRE(run("retrieve --ckpt " + hck + " --data " + f.data + " --index " +
              index + " --report " + rep2) == 0);
  auto m2 = kv(slurp(rep2));
  CHECK(m2["map_at_10"] == m1["map_at_10"]);
  CHECK(m2["mrr_at_10"] == m1["mrr_at_10"]);

  // an index built by different weights is rejected with exit 5
  const std::string other_ck = t.sub("other.ck");
  REQUIRE(run("train --data " + f.data + " --out " + other_ck +
              " --preset tiny --rm 1:3 --head hasher --hash-bits 8"
              " --epochs 1 --batch 16 --lr0 0.01 --seed 9 --strict"
              " --resize-short 24 --crop 16") == 0);
  CHECK(run("retrieve --ckpt " + other_ck + " --data " + f.data + " --index " +
            index) == 5);

  // classifier checkpoints cannot answer retrieval queries
  CHECK(run("retrieve --ckpt " + f.ckpt + " --data " + f.data) == 2);
}

TEST_CASE("bench reports the operator overhead ratio") {
  TempDir t;
  const std::string report = t.sub("bench.txt");
  REQUIRE(run("bench --preset tiny --rm 1:3 --reps 3 --batch 2", report) == 0);
  auto m = kv(slurp(report));
  CHECK(m["k"] == "4");
  CHECK(m.count("block_ms"));
  CHECK(m.count("rm_ms"));
  CHECK(m.count("ratio"));
  CHECK(std::stod(m["ratio"]) > 1.0);
}

TEST_CASE("usage errors exit 2") {
  CHECK(run("") == 2);             // no subcommand
  CHECK(run("explode") == 2);      // unknown subcommand
  CHECK(run("train") == 2);          // data/out validated inside the command
  CHECK(run("eval --ckpt x") == 2);  // missing --data
}
