#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "job.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 2;
constexpr int kNonexistence = 3;
constexpr int kNumerical = 4;

int fail(int code, const std::string& what) {
  std::cerr << "tse: " << what << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Truncated selection-elliptical moments, probabilities and tail risk"};
  std::string command, spec_path, out_path;
  long long seed = -1;
  int threads = 0;
  app.add_option("command", command, "moments | prob | pdf-grid | tce | mtce | tce-sum | validate")->required();
  app.add_option("--spec", spec_path, "job file (JSON)")->required();
  app.add_option("--out", out_path, "write the result here instead of stdout");
  app.add_option("--seed", seed, "Monte Carlo seed, overrides the job file")->check(CLI::NonNegativeNumber);
  app.add_option("--threads", threads, "worker threads for Monte Carlo (default: all cores)")
      ->check(CLI::NonNegativeNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }

  tse::cli::Options opt;
  if (seed >= 0) opt.seed = static_cast<std::uint64_t>(seed);
  opt.threads = threads;

  try {
    std::ifstream in(spec_path);
    if (!in) return fail(kValidation, "cannot open job file '" + spec_path + "'");
    tse::cli::Json job;
    try {
      job = tse::cli::Json::parse(in);
    } catch (const tse::cli::Json::parse_error& e) {
      return fail(kValidation, "malformed JSON in '" + spec_path + "': " + e.what());
    }
    const tse::cli::Output out = tse::cli::run(command, job, opt);
    const std::string text = out.is_csv ? out.csv : tse::cli::dump(out.json);
    if (out_path.empty()) {
      std::cout << text;
    } else {
      std::ofstream f(out_path);
      if (!f) return fail(kValidation, "cannot write '" + out_path + "'");
      f << text;
    }
    return kOk;
  } catch (const tse::ValidationError& e) {
    return fail(kValidation, e.what());
  } catch (const tse::cli::Json::exception& e) {
    return fail(kValidation, std::string("job file: ") + e.what());
  } catch (const tse::NonexistenceError& e) {
    return fail(kNonexistence, e.what());
  } catch (const tse::NumericalError& e) {
    return fail(kNumerical, e.what());
  } catch (const std::exception& e) {
    return fail(kNumerical, e.what());
  }
}
