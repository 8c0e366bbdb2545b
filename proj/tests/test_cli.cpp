// Drives the pamo executable end to end on small runs.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string err;
};

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pamo_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small, fast scene: 4 frames, 6 low-resolution views.
const char* kSmall =
    " -s scene.frame_count=4 -s cameras.count=6 -s cameras.width=160 -s cameras.height=120"
    " -s cameras.fx=200 -s budget.min=60 -s budget.max=80";

Outcome run(const std::string& args, const fs::path& dir) {
  fs::create_directories(dir);
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string(PAMO_BIN) + " " + args + " 2> \"" + err.string() + "\" > /dev/null";
  const int status = std::system(cmd.c_str());
  Outcome o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  o.err = slurp(err);
  return o;
}

std::size_t count_files(const fs::path& dir, const std::string& ext) {
  std::size_t n = 0;
  if (!fs::exists(dir)) return 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) ++n;
  }
  return n;
}

}  // namespace

TEST_CASE("single-frame synth writes no flow files") {
  const auto dir = scratch("one_frame");
  const auto o = run("synth -o " + (dir / "run").string() + kSmall + " -s scene.frame_count=1", dir);
  REQUIRE(o.code == 0);
  CHECK(count_files(dir / "run" / "obs", ".flo") == 0);
  CHECK(count_files(dir / "run" / "obs", ".pimg") == 18);
  const auto manifest = nlohmann::json::parse(slurp(dir / "run" / "scene" / "manifest.json"));
  CHECK(manifest["frame_count"] == 1);
  CHECK(manifest["parts"].size() == 3);
}

TEST_CASE("synth, cluster, track and eval as separate steps") {
  const auto dir = scratch("steps");
  const std::string base = " -o " + (dir / "run").string() + kSmall;
  REQUIRE(run("synth" + base, dir).code == 0);
  CHECK(count_files(dir / "run" / "obs", ".flo") == 3 * 6 * 2);
  REQUIRE(run("cluster" + base, dir).code == 0);
  const auto clustering = nlohmann::json::parse(slurp(dir / "run" / "cluster" / "clustering.json"));
  CHECK(clustering["part_count"] == 3);
  REQUIRE(run("track --max-frames 3" + base, dir).code == 0);
  CHECK(count_files(dir / "run" / "track", ".pamo") == 3);
  REQUIRE(run("eval" + base, dir).code == 0);
  const auto metrics = nlohmann::json::parse(slurp(dir / "run" / "eval" / "metrics.json"));
  CHECK(metrics["frames"] == 3);
  const std::string csv = slurp(dir / "run" / "eval" / "metrics.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
}

TEST_CASE("a missing observation file is reported by path") {
  const auto dir = scratch("missing");
  const std::string base = " -o " + (dir / "run").string() + kSmall;
  REQUIRE(run("synth" + base, dir).code == 0);
  REQUIRE(run("cluster" + base, dir).code == 0);
  const fs::path victim = dir / "run" / "obs" / "frame_0002" / "view_03.fwd.flo";
  REQUIRE(fs::exists(victim));
  fs::remove(victim);
  const auto o = run("track" + base, dir);
  CHECK(o.code != 0);
  CHECK(o.err.find("view_03.fwd.flo") != std::string::npos);
}

TEST_CASE("eval without ground truth fails") {
  const auto dir = scratch("no_gt");
  const auto o = run("eval -o " + (dir / "run").string(), dir);
  CHECK(o.code == 2);
  CHECK(o.err.find("error:") == 0);
}

TEST_CASE("invalid configuration is a usage error") {
  const auto dir = scratch("bad_cfg");
  CHECK(run("synth -o " + (dir / "run").string() + " -s scene.frames=3", dir).code == 1);
  CHECK(run("synth -o " + (dir / "run").string() + " -c " + (dir / "absent.toml").string(), dir).code != 0);
}

TEST_CASE("config prints a TOML file that reloads to the same values") {
  const auto dir = scratch("config");
  const fs::path out = dir / "resolved.toml";
  fs::create_directories(dir);
  const std::string cmd = std::string(PAMO_BIN) + " config -s noise.flow_sigma=0.25 > \"" + out.string() + "\"";
  REQUIRE(std::system(cmd.c_str()) == 0);
  const std::string first = slurp(out);
  CHECK(first.find("flow_sigma = 0.25") != std::string::npos);
  const std::string again = std::string(PAMO_BIN) + " config -c \"" + out.string() + "\" > \"" + (dir / "again.toml").string() + "\"";
  REQUIRE(std::system(again.c_str()) == 0);
  CHECK(slurp(dir / "again.toml") == first);
}
