#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "tma-test-cli";

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " \"" TMA_BINARY "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write(const std::string& name, const std::string& text) {
  fs::create_directories(kRoot);
  const fs::path p = kRoot / name;
  std::ofstream(p) << text;
  return p;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::string quoted(const fs::path& p) { return "\"" + p.string() + "\""; }

const std::string kSmall =
    R"({"suite": "det-law", "seed": 5, "ensemble": {"draws": 4}, "points_per_draw": 2})";

}  // namespace

TEST_CASE("validate") {
  CHECK(run("validate --config " + quoted(write("ok.json", kSmall))) == 0);
  CHECK(run("validate --config " + quoted(write("bad.json", R"({"suite": "det-law"})"))) == 2);
  CHECK(run("validate --config " + quoted(write("broken.json", "{"))) == 2);
  CHECK(run("validate --config " + quoted(kRoot / "missing.json")) == 2);
  for (const auto& e : fs::directory_iterator(TMA_CONFIG_DIR)) {
    CAPTURE(e.path().string());
    CHECK(run("validate --config " + quoted(e.path())) == 0);
  }
}

TEST_CASE("run exit codes and manifests") {
  const fs::path out = kRoot / "out-pass";
  fs::remove_all(out);
  CHECK(run("run --config " + quoted(write("ok.json", kSmall)) + " --out " + quoted(out) + " --workers 2") == 0);
  CHECK(fs::exists(out / "det-law.csv"));
  const auto m = read_json(out / "manifest.json");
  CHECK(m["status"] == "pass");
  CHECK(m["workers"] == 2);

  const fs::path fail = kRoot / "out-fail";
  const auto tight = write(
      "tight.json", R"({"suite": "det-law", "seed": 5, "ensemble": {"draws": 4}, "points_per_draw": 2,
                       "tolerances": {"det_residual": 1e-300}})");
  CHECK(run("run --config " + quoted(tight) + " --out " + quoted(fail)) == 1);
  CHECK(read_json(fail / "manifest.json")["exit_code"] == 1);

  const fs::path cfg_err = kRoot / "out-config";
  fs::remove_all(cfg_err);
  const auto unseeded = write("unseeded.json", R"({"suite": "det-law", "ensemble": {"draws": 4}})");
  CHECK(run("run --config " + quoted(unseeded) + " --out " + quoted(cfg_err)) == 2);
  const auto cm = read_json(cfg_err / "manifest.json");
  CHECK(cm["status"] == "config_error");
  CHECK(cm["exit_code"] == 2);
  CHECK(run("run --config " + quoted(unseeded) + " --seed 9 --out " + quoted(cfg_err)) == 0);
  CHECK(read_json(cfg_err / "manifest.json")["config"]["seed"] == 9);
}

TEST_CASE("worker environment variable") {
  const auto cfg = quoted(write("ok.json", kSmall));
  const fs::path out = kRoot / "out-env";
  CHECK(run("run --config " + cfg + " --out " + quoted(out), "TMA_WORKERS=3") == 0);
  CHECK(read_json(out / "manifest.json")["workers"] == 3);
  CHECK(run("run --config " + cfg + " --out " + quoted(out) + " --workers 1", "TMA_WORKERS=3") == 0);
  CHECK(read_json(out / "manifest.json")["workers"] == 1);
  CHECK(run("run --config " + cfg + " --out " + quoted(out), "TMA_WORKERS=zero") == 2);
}

TEST_CASE("spec check") {
  const auto quad = write("quad.json", R"({"k":1,"l":1,"flavor":"real","kind":"quad","matrix":[[1,0],[0,-1]]})");
  CHECK(run("spec --check " + quoted(quad)) == 0);
  CHECK(run("spec --check " + quoted(quad) + " --lambda 0.5 --Lambda 2") == 0);
  const auto steep = write("steep.json", R"({"k":1,"l":1,"flavor":"real","kind":"quad","matrix":[[4,0],[0,-1]]})");
  CHECK(run("spec --check " + quoted(steep) + " --lambda 0.5 --Lambda 2") == 1);
  CHECK(run("spec --check " + quoted(quad) + " --lambda 0.5") == 2);
  const auto tan = write("tan.json", R"({"k":1,"l":1,"flavor":"real","kind":"atom","fn":"tan","affine":[1,0]})");
  CHECK(run("spec --check " + quoted(tan)) == 2);
  CHECK(run("spec --check " + quoted(write("junk.json", "[1,"))) == 2);
  CHECK(run("spec --check " + quoted(kRoot / "missing.json")) == 2);
}

TEST_CASE("usage errors") {
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("run") == 2);
}
