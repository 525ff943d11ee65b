#include "cli.hpp"
#include "config.hpp"

#include "cityest/errors.hpp"

#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace fs = std::filesystem;
using cityest::cli::run;

namespace {

const fs::path kGrid = fs::path(CITYEST_DATA_DIR) / "grid3x3";

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("cityest_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> with_fixture(const fs::path& out, std::vector<std::string> tail) {
  std::vector<std::string> args{"--config", (kGrid / "config.json").string(), "--out-dir", out.string()};
  args.insert(args.end(), tail.begin(), tail.end());
  return args;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(cli({}).code == 1);
  CHECK(cli({"no-such-command"}).code == 1);
  CHECK(cli({"--help"}).code == 0);
  TempDir dir("usage");
  const auto r = cli(with_fixture(dir.path, {"--set", "spsa.bogus=1", "refine"}));
  CHECK(r.code == 1);
  CHECK(r.err.find("spsa.bogus") != std::string::npos);
  CHECK(cli(with_fixture(dir.path, {"--set", "spsa.c0=-1", "refine"})).code == 1);
  CHECK(cli({"--out-dir", dir.path.string(), "refine"}).code == 1);  // no network
}

TEST_CASE("match on an empty trace file exits 2 naming the file") {
  TempDir dir("empty");
  const auto empty = dir.path / "traces_empty.csv";
  std::ofstream(empty).close();
  const auto r = cli(with_fixture(dir.path, {"--traces", empty.string(), "match"}));
  CHECK(r.code == 2);
  CHECK(r.err.find(empty.string()) != std::string::npos);
}

TEST_CASE("solver failure exits 3 and marks outputs partial") {
  TempDir dir("solver");
  REQUIRE(cli(with_fixture(dir.path, {"refine"})).code == 0);
  const auto r = cli(with_fixture(dir.path, {"--set", "ue.max_iter=1", "--set", "ue.tol=1e-15", "--set",
                                             "spsa.max_outer=1", "estimate-od"}));
  CHECK(r.code == 3);
  CHECK(r.err.find("did not converge") != std::string::npos);
  CHECK(!fs::exists(dir.path / "matrix.csv"));
}

TEST_CASE("pipeline equals the individual commands and reruns identically") {
  TempDir a("single"), b("split");
  REQUIRE(cli(with_fixture(a.path, {"pipeline"})).code == 0);
  for (const char* cmd : {"refine", "run-baseline", "estimate-od", "complete", "evaluate", "export-voc",
                          "export-geojson"}) {
    REQUIRE(cli(with_fixture(b.path, {cmd})).code == 0);
  }
  for (const char* f : {"matched.csv", "estimates.csv", "baseline_estimates.csv", "matrix.csv", "completed.csv",
                        "report.json", "voc.csv", "map.geojson"}) {
    CAPTURE(f);
    CHECK(slurp(a.path / f) == slurp(b.path / f));
  }
  const auto first = slurp(a.path / "manifest.json");
  REQUIRE(cli(with_fixture(a.path, {"--threads", "3", "pipeline"})).code == 0);
  CHECK(slurp(a.path / "manifest.json") == first);
  CHECK(first.find("\"sha256\"") != std::string::npos);
}

TEST_CASE("config overrides: file < --set < flags") {
  nlohmann::json doc = {{"seed", 1}, {"spsa", {{"max_outer", 7}}}};
  cityest::cli::apply_override(doc, "spsa.max_outer=9");
  cityest::cli::apply_override(doc, "paths.network=net.json");
  const auto c = cityest::cli::parse_config(doc, "/base");
  CHECK(c.seed == 1);
  CHECK(c.spsa.max_outer == 9);
  CHECK(*c.paths.network == fs::path("/base/net.json"));
  CHECK_THROWS_AS(cityest::cli::apply_override(doc, "novalue"), cityest::ConfigError);
}

TEST_CASE("sha256 of a known string") {
  TempDir dir("sha");
  std::ofstream(dir.path / "abc") << "abc";
  CHECK(cityest::cli::sha256_hex(dir.path / "abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
