#include "hsb/commands.hpp"
#include "hsb/errors.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace hsb;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string error_of(const std::string &json) {
  try {
    validate_config(parse_config(json));
  } catch (const ValidationError &e) {
    return e.what();
  }
  return "";
}

int run_binary(const std::string &args) {
  const std::string cmd = std::string(HSB_BINARY) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

RunConfig small_config(const std::string &dir) {
  RunConfig c;
  c.grid = {7, 4.0};
  c.sphere = {8, 16};
  c.modes = {Mode::Zero(), Mode(1, 0, 0)};
  c.experiment = "spectrum";
  c.output_dir = dir;
  return c;
}

} // namespace

TEST_CASE("config parsing names the offending key") {
  CHECK(error_of(R"({"grid": {"points_per_axis": 9, "extnt": 4}})").find("grid.extnt") != std::string::npos);
  const std::string even = error_of(R"({"grid": {"points_per_axis": 8}})");
  CHECK(even.find("grid.points_per_axis") != std::string::npos);
  CHECK(error_of(R"({"modes": []})").find("modes") != std::string::npos);
  CHECK(error_of(R"({"integrator": {"t_end": "long"}})").find("integrator.t_end") != std::string::npos);
  CHECK(error_of(R"({"perturbation": {"mode": [0, 0, 0]}})").find("perturbation.mode") != std::string::npos);
  CHECK(error_of("{not json").find("JSON") != std::string::npos);
  CHECK(error_of(R"({"grid": {"points_per_axis": 11}, "modes": [[1, 0, 0]]})").empty());
}

TEST_CASE("config round trip") {
  RunConfig c;
  c.grid.points_per_axis = 11;
  c.modes = {Mode(0, 0, 0), Mode(2, -1, 0)};
  c.contour.theta = 0.003;
  c.seed = 42;
  const RunConfig d = parse_config(config_to_json(c));
  CHECK(d.grid.points_per_axis == 11);
  CHECK(d.modes.size() == 2);
  CHECK(d.modes[1] == Mode(2, -1, 0));
  CHECK(d.contour.theta.has_value());
  CHECK(*d.contour.theta == 0.003);
  CHECK(!d.contour.psi.has_value());
  CHECK(d.seed == 42);
  CHECK(config_to_json(d) == config_to_json(c));

  RunConfig q;
  apply_quick_profile(q);
  CHECK(q.grid.points_per_axis == 9);
  CHECK(q.integrator.t_end == 10.0);
}

TEST_CASE("mode tags") {
  CHECK(mode_tag(Mode(1, 0, 0)) == "1_0_0");
  CHECK(mode_tag(Mode(-2, 0, 1)) == "m2_0_1");
  CHECK(default_theta(0.04, 0.1) == doctest::Approx(0.01));
  CHECK(default_theta(0.04, 0.01) == doctest::Approx(0.005));
}

TEST_CASE("reruns are byte-identical") {
  const fs::path a = fs::temp_directory_path() / "hsb_cli_a", b = fs::temp_directory_path() / "hsb_cli_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const CommandOutput oa = cmd_spectrum(small_config(a.string()));
  const CommandOutput ob = cmd_spectrum(small_config(b.string()));
  REQUIRE(oa.files.size() == ob.files.size());
  CHECK(oa.files.size() >= 3);
  for (std::size_t k = 0; k < oa.files.size(); ++k) {
    CHECK(fs::path(oa.files[k]).filename() == fs::path(ob.files[k]).filename());
    CHECK(slurp(oa.files[k]) == slurp(ob.files[k]));
  }
  CHECK(oa.summary.find("gap") != std::string::npos);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("exit codes") {
  const fs::path dir = fs::temp_directory_path() / "hsb_cli_exit";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path bad = dir / "bad.json", good = dir / "good.json";
  std::ofstream(bad) << R"({"grid": {"points_per_axis": 10}})";
  std::ofstream(good) << R"({"grid": {"points_per_axis": 7, "extent": 4.0}, "sphere": {"n_polar": 8, "n_azimuthal": 16}})";

  CHECK(run_binary("--help") == 0);
  CHECK(run_binary("") == 1);
  CHECK(run_binary("frobnicate") == 1);
  CHECK(run_binary("spectrum --config " + bad.string()) == 1);
  CHECK(run_binary("spectrum --config " + (dir / "missing.json").string()) == 1);
  CHECK(run_binary("spectrum --config " + good.string() + " --out " + (dir / "out").string()) == 0);
  CHECK(fs::exists(dir / "out" / "summary.txt"));
  // the closed-form kernel is only stated for T = 1/2, mu = 0
  std::ofstream(dir / "hot.json") << R"({"grid": {"points_per_axis": 7}, "reference": {"T": 0.7}})";
  CHECK(run_binary("kernels --config " + (dir / "hot.json").string() + " --out " + (dir / "k").string()) == 1);
  CHECK(run_command("nonsense", small_config((dir / "x").string())) != 0);
  fs::remove_all(dir);
}
