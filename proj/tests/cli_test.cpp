#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "job.hpp"
#include "support.hpp"

namespace {

namespace fs = std::filesystem;
using tse::cli::Json;

Json load(const std::string& name) {
  std::ifstream in(fs::path(TSE_JOBS_DIR) / name);
  return Json::parse(in);
}

tse::cli::Output run_job(const Json& job, tse::cli::Options opt = {}) {
  return tse::cli::run(job.at("command").get<std::string>(), job, opt);
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "tse_cli_test";
  fs::create_directories(dir);
  return dir / name;
}

fs::path write_job(const std::string& name, const std::string& text) {
  const fs::path p = scratch(name);
  std::ofstream(p) << text;
  return p;
}

int exit_code(const std::string& command, const fs::path& job, const std::string& extra = "") {
  const std::string cmd = std::string("\"") + TSE_CLI_PATH + "\" " + command + " --spec \"" + job.string() + "\" " +
                          extra + " > \"" + scratch("stdout.txt").string() + "\" 2> \"" +
                          scratch("stderr.txt").string() + "\"";
  const int status = std::system(cmd.c_str());
#ifdef WEXITSTATUS
  return WEXITSTATUS(status);
#else
  return status;
#endif
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(Run, EveryExampleJobProducesVersionedOutput) {
  for (const auto& entry : fs::directory_iterator(TSE_JOBS_DIR)) {
    const Json job = load(entry.path().filename().string());
    tse::cli::Options opt;
    opt.threads = 1;
    const auto out = run_job(job, opt);
    if (out.is_csv) {
      EXPECT_EQ(out.csv.rfind("x,density", 0), 0u) << entry.path();
      continue;
    }
    const Json back = Json::parse(tse::cli::dump(out.json));
    EXPECT_EQ(back.at("version"), std::string(tse::kVersion)) << entry.path();
    EXPECT_EQ(back.at("command"), job.at("command")) << entry.path();
    EXPECT_TRUE(back.contains("values")) << entry.path();
  }
}

TEST(Run, OrthantProbabilityMatchesClosedForm) {
  const auto out = run_job(load("normal_prob.json"));
  EXPECT_NEAR(out.json["values"]["probability"].get<double>(), tse::testing::bvn_orthant(0.5), 1e-8);
}

TEST(Run, FullBoxHasUnitProbability) {
  Json job = load("normal_prob.json");
  job["box"] = {{"lower", {"-inf", "-inf"}}, {"upper", {"inf", "inf"}}};
  EXPECT_NEAR(run_job(job).json["values"]["probability"].get<double>(), 1.0, 1e-12);
}

TEST(Run, PdfGridMatchesTruncatedSkewNormal) {
  const auto out = run_job(load("sn_pdf_grid.json"));
  ASSERT_TRUE(out.is_csv);
  const auto f = [](double x) { return 2.0 * tse::testing::phi(x) * tse::testing::Phi(2.0 * x); };
  const double mass = tse::testing::simpson(f, -1.0, 2.0, 4000);
  std::istringstream in(out.csv);
  std::string line;
  std::getline(in, line);
  int rows = 0;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    const double x = std::stod(line.substr(0, comma)), d = std::stod(line.substr(comma + 1));
    const double ref = (x < -1.0 || x > 2.0) ? 0.0 : f(x) / mass;
    EXPECT_NEAR(d, ref, 1e-9) << x;
    ++rows;
  }
  EXPECT_EQ(rows, 51);
}

TEST(Run, NormalTailExpectationClosedForm) {
  Json job = {{"command", "tce"},
              {"distribution", {{"family", "normal"}, {"xi", {0.0}}, {"omega", {{1.0}}}}},
              {"alpha", 0.05}};
  const auto out = run_job(job);
  EXPECT_NEAR(out.json["values"]["tce"].get<double>(), 2.0627128, 1e-6);
}

TEST(Run, ValidateIsDeterministicForFixedSeed) {
  const Json job = load("est_validate.json");
  tse::cli::Options a, b;
  a.threads = 1;
  b.threads = 4;
  const std::string ra = tse::cli::dump(run_job(job, a).json), rb = tse::cli::dump(run_job(job, b).json);
  EXPECT_EQ(ra, rb);
  tse::cli::Options c;
  c.seed = 8;
  EXPECT_NE(ra, tse::cli::dump(run_job(job, c).json));
  EXPECT_TRUE(Json::parse(ra)["values"]["all_within_4se"].get<bool>());
}

TEST(Run, SumAllocationsAddUp) {
  const auto v = run_job(load("st_tce_sum.json")).json["values"];
  double s = 0.0;
  for (const auto& c : v["contributions"]) s += c.get<double>();
  EXPECT_NEAR(s, v["total"].get<double>(), 1e-8);
}

TEST(Run, RejectsUnknownCommandAndFields) {
  const Json job = load("normal_prob.json");
  EXPECT_THROW(tse::cli::run("frobnicate", job), tse::ValidationError);
  Json bad = job;
  bad["distribution"].erase("omega");
  EXPECT_THROW(run_job(bad), tse::ValidationError);
  bad = job;
  bad["distribution"]["omega"] = {{1.0, 2.0}, {2.0, 1.0}};
  EXPECT_THROW(run_job(bad), tse::ValidationError);
}

TEST(Binary, SuccessAndByteIdenticalOutput) {
  const fs::path job = fs::path(TSE_JOBS_DIR) / "sut_golden.json";
  ASSERT_EQ(exit_code("moments", job, "--out \"" + scratch("a.json").string() + "\""), 0);
  ASSERT_EQ(exit_code("moments", job, "--out \"" + scratch("b.json").string() + "\""), 0);
  EXPECT_EQ(slurp(scratch("a.json")), slurp(scratch("b.json")));
  EXPECT_FALSE(slurp(scratch("a.json")).empty());
}

TEST(Binary, MalformedJsonIsValidationFailure) {
  EXPECT_EQ(exit_code("prob", write_job("broken.json", "{\"command\": \"prob\", ")), 2);
  EXPECT_EQ(exit_code("prob", scratch("does_not_exist.json")), 2);
  EXPECT_EQ(exit_code("moments", write_job("negnu.json", R"({"distribution": {"family": "t", "xi": [0],
    "omega": [[1]], "nu": -2}, "box": {"lower": [0], "upper": [1]}})")), 2);
}

TEST(Binary, NonexistentMomentExitsThree) {
  const auto job = write_job("cauchy_mean.json", R"({"distribution": {"family": "t", "xi": [0, 0],
    "omega": [[1, 0], [0, 1]], "nu": 1}, "box": {"lower": [0, "-inf"], "upper": ["inf", "inf"]},
    "request": "mean"})");
  EXPECT_EQ(exit_code("moments", job), 3);
}

TEST(Binary, UnreachableQuantileExitsFour) {
  const auto job = write_job("cauchy_tce.json", R"({"distribution": {"family": "t", "xi": [0],
    "omega": [[1]], "nu": 1}, "alpha": 1e-5})");
  EXPECT_EQ(exit_code("tce", job), 4);
}

}  // namespace
