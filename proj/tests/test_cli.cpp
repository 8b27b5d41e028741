#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "helpers.hpp"
#include "semcon/trainer/phases.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kTiny = " --smoke --set data.image_size=32 data.crop=32 data.n_src=8 data.n_tgt=8 data.n_val_tgt=8";

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SEMCON_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("exit codes for bad input") {
    const auto dir = testing::scratch("cli_errors");
    const auto log = dir / "log.txt";
    CHECK(run("gen-data -r " + (dir / "a").string() + kTiny + " data.bogus=1", log) == 2);
    CHECK(slurp(log).find("data.bogus") != std::string::npos);
    CHECK(run("eval -r " + (dir / "b").string() + kTiny + " --checkpoint " + (dir / "none.ckpt").string(), log) == 3);
    CHECK(run("ablate -r " + (dir / "c").string() + kTiny + " --variants nonsense", log) == 2);
    CHECK(slurp(log).find("no_cgan") != std::string::npos);
    CHECK(run("run seg --name i2i_full -r " + (dir / "d").string() + kTiny, log) == 3);
    CHECK(run("frobnicate", log) == 2);
  }

  TEST_CASE("gen-data is byte-identical across runs") {
    const auto dir = testing::scratch("cli_gen");
    REQUIRE(run("gen-data -r " + (dir / "a").string() + kTiny, dir / "a.log") == 0);
    REQUIRE(run("gen-data -r " + (dir / "b").string() + kTiny, dir / "b.log") == 0);
    for (const char* f : {"data/source.tsv", "data/target.tsv", "data/target_val.tsv", "data/class_histograms.json"})
      CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    const auto manifest = slurp(dir / "a/data/source.tsv");
    const auto first_image = manifest.substr(0, manifest.find('\t'));
    REQUIRE(fs::exists(dir / "a/data" / first_image));
    CHECK(slurp(dir / "a/data" / first_image) == slurp(dir / "b/data" / first_image));
  }

  TEST_CASE("eval scores an oracle prediction manifest as perfect") {
    const auto dir = testing::scratch("cli_eval");
    const auto rd = dir / "run";
    REQUIRE(run("gen-data -r " + rd.string() + kTiny, dir / "g.log") == 0);
    // The target-val manifest itself, read as predictions, is the ground truth.
    REQUIRE(run("eval -r " + rd.string() + kTiny + " --predictions " + (rd / "data/target_val.tsv").string() + " --out " +
                    (dir / "oracle.json").string(),
                dir / "e.log") == 0);
    const auto report = json::parse(slurp(dir / "oracle.json"));
    CHECK(report["miou"].get<double>() == 1.0);
  }

  TEST_CASE("probe evaluation reports the closed gap") {
    const auto dir = testing::scratch("cli_probe");
    const auto rd = dir / "run";
    REQUIRE(run("gen-data -r " + rd.string() + kTiny, dir / "g.log") == 0);
    torch::manual_seed(1);
    semcon::nets::Segmenter f;
    semcon::save_segmenter(dir / "f.ckpt", f);
    REQUIRE(run("eval -r " + rd.string() + kTiny + " --checkpoint " + (dir / "f.ckpt").string() +
                    " --probe --upper 68 --source 39.6 --method 59 --out " + (dir / "probe.json").string(),
                dir / "p.log") == 0);
    const auto report = json::parse(slurp(dir / "probe.json"));
    CHECK(std::abs(report["gap"]["closed_gap_pct"].get<double>() - 68.3) <= 0.1);
    CHECK(report.contains("probed"));
    CHECK(report.contains("unprobed"));
  }
}
