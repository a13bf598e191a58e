#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "kstab/cli.hpp"

using kstab::Rational;
using kstab::to_double;
using kstab::cli::config_to_json;
using kstab::cli::parse_config;
using kstab::cli::run_command;
using nlohmann::json;
using Catch::Matchers::ContainsSubstring;

namespace {

json interval_sphere_config() {
  return json{
      {"polytope", {{"normals", {{1}, {-1}}}, {"offsets", {0, 1}}}},
      {"fibration", {{"factors", {{{"p", {1}}, {"c", 2}, {"d", 1}, {"scal", 0}}}}}},
  };
}

json simplex_product_config() {
  return json{
      {"polytope",
       {{"normals", {{1, 0}, {0, 1}, {-1, -1}}}, {"offsets", {0, 0, 1}}}},
      {"weights",
       {{"v", {{"terms", {{{"e", {0, 0}}, {"c", 1}}}}}},
        {"w", {{"terms", {{{"e", {0, 0}}, {"c", 12}}}}}}}},
  };
}

}  // namespace

TEST_CASE("config round trip is canonical", "[cli]") {
  json raw = interval_sphere_config();
  raw["solver"] = {{"grid_n", 256}, {"futaki_sign", "consistent"}};
  raw["scan"] = {{"directions", 8}, {"offsets", 6}};
  raw["function"] = {{"type", "crease"}, {"h", {1}}, {"c", "1/2"}};
  raw["potential"] = {{"type", "guillemin"}};
  raw["output"] = {{"pretty", false}};

  auto cfg = parse_config(raw);
  json canon = config_to_json(cfg);
  auto cfg2 = parse_config(canon);
  CHECK(config_to_json(cfg2).dump() == canon.dump());
  CHECK(cfg2.solver.grid_n == 256);
  CHECK(cfg2.scan.directions == 8);
  CHECK(cfg2.output.pretty == false);
}

TEST_CASE("round trip keeps explicit weight tables", "[cli]") {
  auto cfg = parse_config(simplex_product_config());
  REQUIRE(cfg.weights.has_value());
  json canon = config_to_json(cfg);
  auto cfg2 = parse_config(canon);
  CHECK(config_to_json(cfg2).dump() == canon.dump());
  CHECK(cfg2.weights->second.eval(kstab::Vec<Rational>{Rational(0), Rational(0)}) ==
        Rational(12));
}

TEST_CASE("genus and area canonicalize into a curvature value", "[cli]") {
  json raw = interval_sphere_config();
  raw["fibration"]["factors"][0].erase("scal");
  raw["fibration"]["factors"][0]["genus"] = 1;
  raw["fibration"]["factors"][0]["area"] = 3;
  auto cfg = parse_config(raw);
  REQUIRE(cfg.fibration.has_value());
  CHECK(cfg.fibration->factors[0].scal == Rational(0));
  json canon = config_to_json(cfg);
  CHECK(canon["fibration"]["factors"][0]["scal"] == "0");
  CHECK_FALSE(canon["fibration"]["factors"][0].contains("genus"));
}

TEST_CASE("validation reports the offending field path", "[cli]") {
  json base = interval_sphere_config();

  SECTION("missing polytope") {
    json raw = {{"weights", json::object()}};
    CHECK_THROWS_WITH(parse_config(raw), ContainsSubstring("config.polytope"));
  }
  SECTION("unknown top-level key") {
    json raw = base;
    raw["polytop"] = 1;
    CHECK_THROWS_WITH(parse_config(raw), ContainsSubstring("config.polytop"));
  }
  SECTION("unknown nested key") {
    json raw = base;
    raw["scan"] = {{"direction", 8}};
    CHECK_THROWS_WITH(parse_config(raw), ContainsSubstring("config.scan.direction"));
  }
  SECTION("grid size out of range") {
    json raw = base;
    raw["solver"] = {{"grid_n", 4}};
    CHECK_THROWS_WITH(parse_config(raw), ContainsSubstring("config.solver.grid_n"));
  }
  SECTION("both weight sources") {
    json raw = base;
    raw["weights"] = {{"v", {{"terms", json::array()}}}, {"w", {{"terms", json::array()}}}};
    CHECK_THROWS_WITH(parse_config(raw), ContainsSubstring("fibration and weights"));
  }
  SECTION("neither weight source") {
    json raw = base;
    raw.erase("fibration");
    CHECK_THROWS_WITH(parse_config(raw), ContainsSubstring("fibration and weights"));
  }
  SECTION("rational strings reject decimals") {
    json raw = base;
    raw["fibration"]["factors"][0]["c"] = "0.5";
    CHECK_THROWS_WITH(parse_config(raw),
                      ContainsSubstring("config.fibration.factors[0].c"));
  }
  SECTION("scenario needs a fibration") {
    json raw = base;
    raw.erase("fibration");
    raw["weights"] = simplex_product_config()["weights"];
    raw["polytope"] = simplex_product_config()["polytope"];
    raw["scenario"] = {{"sweep", {{1}}}};
    CHECK_THROWS_WITH(parse_config(raw), ContainsSubstring("config.scenario"));
  }
  SECTION("sweep tuple arity") {
    json raw = base;
    raw["scenario"] = {{"sweep", {{1, 2}}}};
    CHECK_THROWS_WITH(parse_config(raw), ContainsSubstring("config.scenario.sweep[0]"));
  }
}

TEST_CASE("doubles convert to exact dyadic rationals", "[cli]") {
  json raw = interval_sphere_config();
  raw["fibration"]["factors"][0]["c"] = 0.25;
  auto cfg = parse_config(raw);
  CHECK(cfg.fibration->factors[0].c == Rational(1) / 4);
}

TEST_CASE("reports carry exactly the five contract keys", "[cli]") {
  auto res = run_command("check-delzant", interval_sphere_config());
  CHECK(res.exit_code == 0);
  CHECK(res.report.size() == 5);
  for (const char* key : {"command", "verdict", "evidence", "residuals", "timing"})
    CHECK(res.report.contains(key));
  CHECK(res.report["command"] == "check-delzant");
  CHECK(res.report["verdict"] == "DELZANT");
  CHECK(res.report["evidence"]["facets"] == 2);
}

TEST_CASE("check-delzant rejects a non-unimodular corner", "[cli]") {
  json raw = {
      {"polytope",
       {{"normals", {{1, 0}, {0, 1}, {-1, -2}}}, {"offsets", {0, 0, 1}}}},
      {"weights", simplex_product_config()["weights"]},
  };
  auto res = run_command("check-delzant", raw);
  CHECK(res.exit_code == 1);
  CHECK(res.report["verdict"] == "NOT_DELZANT");
  CHECK_THAT(res.report["error"].get<std::string>(), ContainsSubstring("|det| = 2"));
  CHECK(res.report["evidence"]["issues"].size() == 1);
}

TEST_CASE("extremal command reports the sphere fixture exactly", "[cli]") {
  json raw = interval_sphere_config();
  raw["fibration"]["factors"][0]["scal"] = 2;
  auto res = run_command("extremal", raw);
  REQUIRE(res.exit_code == 0);
  // v = x + 2 with base curvature 2: the Gram system is 30a + 16b = 144,
  // 16a + 11b = 84, whose exact solution is a = 120/37, b = 108/37.
  const json& ell = res.report["evidence"]["ell_ext"];
  CHECK(ell["offset"] == "120/37");
  CHECK(ell["normal"][0] == "108/37");
  CHECK(res.report["residuals"]["affine_vanishing"] == 0.0);
}

TEST_CASE("futaki command matches the crease oracle", "[cli]") {
  json raw = {
      {"polytope", {{"normals", {{1}, {-1}}}, {"offsets", {0, 1}}}},
      {"weights",
       {{"v", {{"terms", {{{"e", {0}}, {"c", 1}}}}}},
        {"w", {{"terms", {{{"e", {0}}, {"c", 4}}}}}}}},
      {"function", {{"type", "crease"}, {"h", {1}}, {"c", "1/2"}}},
  };
  auto res = run_command("futaki", raw);
  REQUIRE(res.exit_code == 0);
  CHECK(res.report["evidence"]["futaki"] == "1/2");
  CHECK(res.report["evidence"]["l1"] == "1/8");
  CHECK(res.report["evidence"]["ratio"].get<double>() == 4.0);
}

TEST_CASE("stability-scan flags a destabilized interval with exit 2", "[cli]") {
  json raw = {
      {"polytope", {{"normals", {{1}, {-1}}}, {"offsets", {0, 1}}}},
      {"weights",
       {{"v", {{"terms", {{{"e", {0}}, {"c", 1}}}}}},
        {"w",
         {{"terms",
           {{{"e", {0}}, {"c", 36}},
            {{"e", {1}}, {"c", -192}},
            {{"e", {2}}, {"c", 192}}}}}}}},
      {"scan", {{"directions", 2}, {"offsets", 16}, {"refine_top", 1}}},
  };
  auto res = run_command("stability-scan", raw);
  CHECK(res.exit_code == 2);
  CHECK(res.report["verdict"] == "NOT_STABLE");
  CHECK(res.report["evidence"]["negatives_count"].get<std::size_t>() > 0);
  CHECK(res.report["evidence"]["lambda_hat"].get<double>() < 0);
  REQUIRE(res.csv_header.size() == 5);
  CHECK(res.csv_header[0] == "h0");
  CHECK(res.csv_rows.size() ==
        res.report["evidence"]["negatives_count"].get<std::size_t>());
}

TEST_CASE("solve-1d emits the profile table", "[cli]") {
  json raw = interval_sphere_config();
  raw["solver"] = {{"grid_n", 64}};
  auto res = run_command("solve-1d", raw);
  REQUIRE(res.exit_code == 0);
  CHECK(res.report["verdict"] == "POSITIVE");
  CHECK(res.report["evidence"]["positive"] == true);
  CHECK(res.report["residuals"]["beta"].get<double>() <= 1e-12);
  REQUIRE(res.csv_header == std::vector<std::string>{"x", "phi", "correction"});
  CHECK(res.csv_rows.size() == 65);
  CHECK(res.csv_rows.front()[0] == "0");
  CHECK(res.csv_rows.back()[0] == "1");
}

TEST_CASE("solve-ak certifies the flat simplex weights", "[cli]") {
  auto res = run_command("solve-ak", simplex_product_config());
  REQUIRE(res.exit_code == 0);
  CHECK(res.report["verdict"] == "POSITIVE");
  CHECK(res.report["evidence"]["min_eig"].get<double>() > 0);
  CHECK(res.report["residuals"]["pde"].get<double>() <= 1e-9);
  CHECK(res.report["residuals"]["bc"].get<double>() <= 1e-9);
  REQUIRE(res.csv_header.size() == 6);
  CHECK(res.csv_rows.size() > 0);
  for (const auto& row : res.csv_rows)
    CHECK(std::stod(row[5]) > 0);
}

TEST_CASE("certify on the flat interval emits the profile table", "[cli]") {
  json raw = {
      {"polytope", {{"normals", {{1}, {-1}}}, {"offsets", {0, 1}}}},
      {"weights",
       {{"v", {{"terms", {{{"e", {0}}, {"c", 1}}}}}},
        {"w", {{"terms", {{{"e", {0}}, {"c", 4}}}}}}}},
      {"scan", {{"directions", 2}, {"offsets", 8}, {"refine_top", 1}}},
  };
  auto res = run_command("certify", raw);
  REQUIRE(res.exit_code == 0);
  CHECK(res.report["verdict"] == "EXISTS");
  const json& phi = res.report["evidence"]["solve1d"]["phi"]["terms"];
  REQUIRE(phi.is_array());
  CHECK(phi.size() == 2);  // 2x - 2x^2
}

TEST_CASE("certify reaches EXISTS on the interval fixture", "[cli]") {
  json raw = interval_sphere_config();
  raw["scan"] = {{"directions", 2}, {"offsets", 8}, {"refine_top", 1}};
  auto res = run_command("certify", raw);
  REQUIRE(res.exit_code == 0);
  CHECK(res.report["verdict"] == "EXISTS");
  CHECK(res.report["evidence"]["certificate_hash"].get<std::string>().size() == 16);
  CHECK(res.report["evidence"]["solve1d"]["positive"] == true);
  CHECK(res.report["evidence"]["scan"]["negatives_count"] == 0);
}

TEST_CASE("mabuchi command evaluates the canonical potential", "[cli]") {
  json raw = {
      {"polytope", {{"normals", {{1}, {-1}}}, {"offsets", {0, 1}}}},
      {"weights",
       {{"v", {{"terms", {{{"e", {0}}, {"c", 1}}}}}},
        {"w", {{"terms", {{{"e", {0}}, {"c", 4}}}}}}}},
  };
  auto res = run_command("mabuchi", raw);
  REQUIRE(res.exit_code == 0);
  CHECK(res.report["verdict"] == "OK");
  CHECK(res.report["evidence"]["potential"]["type"] == "guillemin");
  CHECK(std::abs(res.report["evidence"]["value"].get<double>() - 1.0) <= 1e-6);
}

TEST_CASE("scenario sweeps classes and aggregates verdicts", "[cli]") {
  json raw = interval_sphere_config();
  raw["scenario"] = {{"sweep", {{2}}}};
  raw["scan"] = {{"directions", 2}, {"offsets", 8}, {"refine_top", 1}};
  auto res = run_command("scenario", raw);
  REQUIRE(res.exit_code == 0);
  CHECK(res.report["verdict"] == "EXISTS");
  const json& cls = res.report["evidence"]["classes"][0];
  CHECK(cls["verdict"] == "EXISTS");
  CHECK(cls["fiber_volume"] == "5/2");
  CHECK_THAT(cls["volume"].get<std::string>(),
             ContainsSubstring("* Vol(S, omega_S^[d])"));
  CHECK(cls["certificate_hash"].get<std::string>().size() == 16);
  REQUIRE(res.csv_rows.size() == 1);
  CHECK(res.csv_rows[0][1] == "EXISTS");
}

TEST_CASE("reports are deterministic outside the timing block", "[cli]") {
  json raw = interval_sphere_config();
  raw["scan"] = {{"directions", 2}, {"offsets", 6}, {"refine_top", 1}};
  auto a = run_command("certify", raw);
  auto b = run_command("certify", raw);
  a.report.erase("timing");
  b.report.erase("timing");
  CHECK(a.report.dump() == b.report.dump());
}

TEST_CASE("unknown command and runtime errors exit 1", "[cli]") {
  auto res = run_command("solve-everything", interval_sphere_config());
  CHECK(res.exit_code == 1);
  CHECK(res.report["verdict"] == "ERROR");
  CHECK(res.report.size() == 6);  // five contract keys plus the error text

  json raw = interval_sphere_config();
  auto missing = run_command("futaki", raw);
  CHECK(missing.exit_code == 1);
  CHECK_THAT(missing.report["error"].get<std::string>(),
             ContainsSubstring("function section"));
}

TEST_CASE("run_cli writes report and csv files", "[cli]") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "kstab_cli_test";
  fs::create_directories(dir);
  fs::path config_path = dir / "config.json";
  fs::path report_path = dir / "report.json";
  fs::path csv_path = dir / "profile.csv";

  json raw = interval_sphere_config();
  raw["solver"] = {{"grid_n", 64}};
  raw["output"] = {{"report", report_path.string()}, {"csv", csv_path.string()}};
  {
    std::ofstream out(config_path);
    out << raw.dump(2) << "\n";
  }

  std::string cfg_arg = config_path.string();
  const char* argv[] = {"kstab", "solve-1d", "--config", cfg_arg.c_str()};
  int code = kstab::cli::run_cli(4, const_cast<char**>(argv));
  CHECK(code == 0);

  std::ifstream rin(report_path);
  REQUIRE(rin.good());
  json report = json::parse(rin);
  CHECK(report["command"] == "solve-1d");
  CHECK(report["verdict"] == "POSITIVE");

  std::ifstream cin_file(csv_path);
  REQUIRE(cin_file.good());
  std::string header;
  std::getline(cin_file, header);
  CHECK(header == "x,phi,correction");
  std::size_t rows = 0;
  for (std::string line; std::getline(cin_file, line);)
    if (!line.empty()) ++rows;
  CHECK(rows == 65);
  fs::remove_all(dir);
}
