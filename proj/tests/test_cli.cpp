#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vattn/cli.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
  json doc() const { return json::parse(out); }
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "vattn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = vattn::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string write_temp(const std::string& name, const std::string& text) {
  const fs::path dir = fs::temp_directory_path() / "vattn_cli_tests";
  fs::create_directories(dir);
  const fs::path path = dir / name;
  std::ofstream(path) << text;
  return path.string();
}

json strip_time(json doc) {
  doc.erase("wall_time_ms");
  if (doc.contains("suites")) {
    for (auto& s : doc["suites"]) s.erase("wall_time_ms");
  }
  return doc;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("attn shannon on zero scores") {
  const auto in = write_temp("zeros.json", R"({"scores": [0, 0, 0]})");
  const auto r = run({"attn", in, "--reg", "shannon", "--tau", "1"});
  REQUIRE(r.code == 0);
  const json d = r.doc();
  for (const auto& x : d["distribution"]) CHECK(x.get<double>() == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(d["potential"].get<double>() == doctest::Approx(1.0986122886681097).epsilon(1e-15));
  CHECK(d["support_size"] == 3);
}

TEST_CASE("attn l2 gives the sparse solution") {
  const auto in = write_temp("sparse.json", R"({"scores": [0.5, 0.2, -1]})");
  const auto r = run({"attn", in, "--reg", "l2"});
  REQUIRE(r.code == 0);
  const json d = r.doc();
  CHECK(d["distribution"][0].get<double>() == doctest::Approx(0.65).epsilon(1e-15));
  CHECK(d["distribution"][1].get<double>() == doctest::Approx(0.35).epsilon(1e-15));
  CHECK(d["distribution"][2].get<double>() == 0.0);
  CHECK(d["support_size"] == 2);
  CHECK(d["potential"].is_null());
}

TEST_CASE("attn kl with uniform prior reproduces shannon") {
  const auto in = write_temp("kl.json", R"({"scores": [0.3, -1.7, 2.2, 0.9]})");
  const auto kl = run({"attn", in, "--reg", "kl", "--tau", "1", "--prior", "uniform"});
  const auto sh = run({"attn", in, "--reg", "shannon", "--tau", "1"});
  REQUIRE(kl.code == 0);
  REQUIRE(sh.code == 0);
  const json a = kl.doc(), b = sh.doc();
  CHECK(a["support_size"] == b["support_size"]);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(std::abs(a["distribution"][j].get<double>() - b["distribution"][j].get<double>()) <=
          1e-12);
  }
  // KL to the uniform prior is -H + log m, so values shift by the constant tau log m.
  CHECK(std::abs(b["potential"].get<double>() - a["potential"].get<double>() - std::log(4.0)) <=
        1e-12);
  CHECK(std::abs(a["objective"].get<double>() - b["objective"].get<double>() - std::log(4.0)) <=
        1e-12);
}

TEST_CASE("attn reads the regularizer from the document") {
  const auto in = write_temp("alibi.json",
                             R"({"scores": [0, 0, 0], "temperature": 1,
                                 "regularizer": {"kind": "alibi", "gamma": 1, "query_position": 2}})");
  const auto r = run({"attn", in});
  REQUIRE(r.code == 0);
  CHECK(r.doc()["distribution"][1].get<double>() ==
        doctest::Approx(0.57611688476582911).epsilon(1e-15));
}

TEST_CASE("attn prior from a file") {
  const auto prior = write_temp("prior.json", "[0.8, 0.2]");
  const auto in = write_temp("two.json", R"({"scores": [0, 0]})");
  const auto r = run({"attn", in, "--reg", "kl", "--tau", "1", "--prior", prior});
  REQUIRE(r.code == 0);
  CHECK(r.doc()["distribution"][0].get<double>() == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("exit code 2 on malformed input") {
  CHECK(run({"attn", write_temp("broken.json", "{\"scores\": [1, 2")}).code == 2);
  CHECK(run({"attn", write_temp("noscores.json", "{\"x\": 1}")}).code == 2);
  CHECK(run({"attn", write_temp("strscores.json", "{\"scores\": [\"a\"]}")}).code == 2);
  CHECK(run({"attn", write_temp("empty.json", "{\"scores\": []}")}).code == 2);
  CHECK(run({"attn", "/nonexistent/path.json"}).code == 2);
  CHECK(run({"transport", write_temp("nokeys.json", "{\"queries\": [[1]]}")}).code == 2);
  CHECK(run({"transport", write_temp("ragged.json", R"({"queries": [[1, 2]], "keys": [[1], [2, 3]]})")})
            .code == 2);
}

TEST_CASE("exit code 3 on invalid flag combinations") {
  const auto in = write_temp("three.json", R"({"scores": [1, 2, 3]})");
  CHECK(run({"attn", in, "--reg", "l2", "--tau", "1"}).code == 3);
  CHECK(run({"attn", in, "--reg", "shannon", "--alpha", "1.5"}).code == 3);
  CHECK(run({"attn", in, "--reg", "tsallis"}).code == 3);
  CHECK(run({"attn", in, "--reg", "tsallis", "--alpha", "1"}).code == 3);
  CHECK(run({"attn", in, "--reg", "alibi", "--gamma", "1"}).code == 3);
  CHECK(run({"attn", in, "--reg", "kl", "--tau", "1"}).code == 3);
  CHECK(run({"attn", in, "--reg", "kl", "--prior", write_temp("p2.json", "[0.5, 0.5]")}).code == 3);
  CHECK(run({"attn", in, "--reg", "bogus"}).code == 3);
  CHECK(run({"attn", in, "--tau", "-1"}).code == 3);
  CHECK(run({"verify", "no-such-suite"}).code == 3);
  CHECK(run({"verify", "closed-forms", "--trials", "0"}).code == 3);
  CHECK(run({"frobnicate"}).code == 3);
  CHECK(run({}).code == 3);
}

TEST_CASE("help exits 0") { CHECK(run({"--help"}).code == 0); }

TEST_CASE("verify is deterministic apart from wall time") {
  const auto a = run({"verify", "gradient-identities", "--seed", "3", "--trials", "20"});
  const auto b = run({"verify", "gradient-identities", "--seed", "3", "--trials", "20", "--jobs", "3"});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(strip_time(a.doc()).dump() == strip_time(b.doc()).dump());
  const json d = a.doc();
  CHECK(d["suite"] == "gradient-identities");
  CHECK(d["seed"] == 3);
  CHECK(d["cases_passed"] == d["cases_run"]);
  for (const auto& c : d["per_check"]) {
    CHECK(c.contains("name"));
    CHECK(c["residual"].get<double>() <= c["tolerance"].get<double>());
  }
}

TEST_CASE("verify writes to --out and lists every suite for all") {
  const fs::path out = fs::temp_directory_path() / "vattn_cli_tests" / "all.json";
  const auto r = run({"verify", "all", "--seed", "0", "--trials", "2", "--out", out.string()});
  CHECK(r.code == 0);
  CHECK(r.out.empty());
  std::ifstream f(out);
  const json d = json::parse(f);
  CHECK(d["suites"].size() == 5);
}

TEST_CASE("tolerance scale from the environment can force failures") {
  ::setenv("VATTN_TOL_SCALE", "1e-30", 1);
  const auto r = run({"verify", "duality", "--seed", "1", "--trials", "3"});
  ::unsetenv("VATTN_TOL_SCALE");
  CHECK(r.code == 1);
  CHECK_FALSE(r.out.empty());
  ::setenv("VATTN_TOL_SCALE", "abc", 1);
  CHECK(run({"verify", "duality", "--trials", "1"}).code == 3);
  ::setenv("VATTN_TOL_SCALE", "0", 1);
  CHECK(run({"verify", "duality", "--trials", "1"}).code == 3);
  ::unsetenv("VATTN_TOL_SCALE");
}

TEST_CASE("gradcheck on a random instance") {
  const auto in = write_temp("grad.json", R"({"scores": [0.3, -1.2, 2.0, 0.7, -0.4],
      "temperature": 0.5, "utilities": [1.0, -0.5, 0.25, 2.0, 0.0]})");
  const auto r = run({"gradcheck", in});
  CHECK(r.code == 0);
  const json d = r.doc();
  CHECK(d["adjustment"]["small_temperature_regime"] == false);
  CHECK(d["per_check"].size() == 6);
}

TEST_CASE("gradcheck with context gradient and values") {
  const auto in = write_temp("gradv.json", R"({"scores": [0.1, 0.2, 0.3],
      "context_gradient": [1, -1], "values": [[2, 0], [0, 3], [1, 1]]})");
  const auto r = run({"gradcheck", in});
  CHECK(r.code == 0);
  CHECK(r.doc()["per_check"].size() == 6);
}

TEST_CASE("gradcheck on constant scores") {
  const auto r = run({"gradcheck", write_temp("flat.json", R"({"scores": [2, 2, 2, 2]})")});
  CHECK(r.code == 0);
}

TEST_CASE("gradcheck flags the small temperature regime") {
  const auto in = write_temp("tiny.json", R"({"scores": [0.3, -1.2, 2.0], "temperature": 1e-6})");
  const auto r = run({"gradcheck", in});
  CHECK((r.code == 0 || r.code == 1));
  const json d = r.doc();
  CHECK(d["adjustment"]["small_temperature_regime"] == true);
  CHECK(d["adjustment"]["tolerance_widening"].get<double>() == doctest::Approx(100.0));
  CHECK(d["notes"].size() >= 1);
}

TEST_CASE("transport subcommand") {
  const auto in = write_temp("tr.json", R"({"queries": [[1, 0], [0, 1], [0, 0]],
      "keys": [[1, 1], [2, -1], [0, 0.5], [-1, 0]], "values": [[1], [2], [3], [4]]})");
  const auto r = run({"transport", in, "--tau", "1", "--oracle"});
  REQUIRE(r.code == 0);
  const json d = r.doc();
  CHECK(d["plan"].size() == 3);
  CHECK(d["oracle"]["converged"] == true);
  CHECK(d["oracle"]["max_deviation"].get<double>() <= 1e-6);
  CHECK(d["context"].size() == 3);
  for (const auto& x : d["plan"][2]) CHECK(x.get<double>() == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("json numbers round-trip exactly") {
  const double x = 0.1 + 0.2;
  const json doc = {{"x", x}, {"bad", std::nan("")}};
  const json back = json::parse(vattn::cli::dump_json(doc));
  CHECK(back["x"].get<double>() == x);
  CHECK(back["bad"].is_null());
}

}  // TEST_SUITE
