// End-to-end checks of the pve_infer binary; the path to the binary arrives
// as --bin=<path> ahead of the regular doctest arguments.
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pve/rng.hpp"

namespace {

std::string g_binary;
const std::filesystem::path kScratch = "cli_scratch";

struct RunResult {
  int status = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void spit(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

RunResult run_cli(const std::string& args) {
  const auto out_path = kScratch / "stdout.txt";
  const auto err_path = kScratch / "stderr.txt";
  const std::string command = "'" + g_binary + "' " + args + " >'" +
                              out_path.string() + "' 2>'" + err_path.string() +
                              "'";
  const int raw = std::system(command.c_str());
  RunResult result;
  result.status = (raw >= 0 && WIFEXITED(raw)) ? WEXITSTATUS(raw) : -1;
  result.out = slurp(out_path);
  result.err = slurp(err_path);
  return result;
}

std::string toy_csv() {
  const auto path = kScratch / "toy.csv";
  spit(path, "0\n1\n");
  return path.string();
}

std::string gaussian_csv(int n, int p, unsigned seed) {
  const auto path = kScratch / ("gauss_" + std::to_string(seed) + ".csv");
  pve::Rng rng(seed);
  std::ostringstream text;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) {
      if (j) text << ',';
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.17g", rng.gaussian());
      text << buf;
    }
    text << '\n';
  }
  spit(path, text.str());
  return path.string();
}

}  // namespace

TEST_CASE("toy inference report has the full schema") {
  const auto res = run_cli("infer --input " + toy_csv() +
                           " --rule none --sigma 1");
  REQUIRE(res.status == 0);
  const auto doc = nlohmann::json::parse(res.out);
  CHECK(doc.at("schema_version") == 1);
  CHECK(doc.at("command") == "infer");
  CHECK(doc.at("n") == 2);
  CHECK(doc.at("p") == 1);
  CHECK(doc.at("alpha1").get<double>() == doctest::Approx(0.075));
  CHECK(doc.at("alpha2").get<double>() == doctest::Approx(0.025));
  CHECK(doc.at("noise").at("source") == "known");
  CHECK(doc.at("scree").at("selected_r") == 1);
  CHECK(doc.at("scree").at("sample_pve").size() == 1);
  CHECK(doc.at("scree").at("truncation_sets").size() == 1);
  REQUIRE(doc.at("inferences").size() == 1);
  const auto& item = doc.at("inferences").at(0);
  CHECK(item.at("error").is_null());
  for (const char* key :
       {"p_value", "delta_interval", "num_sq_interval", "denom_interval",
        "pve_interval", "pve_interval_raw", "delta_mle", "pve_mle",
        "interval_degenerate"})
    CHECK(item.contains(key));
  const double lo = item.at("pve_interval").at(0).get<double>();
  const double hi = item.at("pve_interval").at(1).get<double>();
  CHECK(lo >= 0.0);
  CHECK(hi <= 1.0);
  CHECK(lo <= hi);
  const double pv = item.at("p_value").get<double>();
  CHECK(pv >= 0.0);
  CHECK(pv <= 1.0);
}

TEST_CASE("identical seeds give byte-identical reports") {
  const std::string input = gaussian_csv(24, 6, 42);
  const std::string base = "infer --input " + input + " --sigma 1 --seed 9";
  const auto first = run_cli(base);
  const auto second = run_cli(base);
  REQUIRE(first.status == 0);
  CHECK(first.out == second.out);
  const auto shifted = run_cli("infer --input " + input +
                               " --sigma 1 --seed 10");
  REQUIRE(shifted.status == 0);
  CHECK(shifted.out != first.out);
}

TEST_CASE("wide input points at the fix") {
  const auto path = kScratch / "wide.csv";
  spit(path, "1,2,3\n4,5,6\n");
  const auto res = run_cli("infer --input " + path.string() + " --sigma 1");
  CHECK(res.status != 0);
  CHECK(res.err.find("transpose") != std::string::npos);
}

TEST_CASE("parse failures report the cell location") {
  const auto path = kScratch / "bad.csv";
  spit(path, "1,2\n3,oops\n");
  const auto res = run_cli("infer --input " + path.string() + " --sigma 1");
  CHECK(res.status != 0);
  CHECK(res.err.find("line 2") != std::string::npos);
  CHECK(res.err.find("column 2") != std::string::npos);
}

TEST_CASE("noise source flags are mutually exclusive and required") {
  const std::string input = toy_csv();
  const auto both = run_cli("infer --input " + input +
                            " --sigma 1 --estimate-sigma");
  CHECK(both.status != 0);
  const auto neither = run_cli("infer --input " + input);
  CHECK(neither.status != 0);
  CHECK(neither.err.find("exactly one") != std::string::npos);
}

TEST_CASE("estimated noise is recorded in the report") {
  const std::string input = gaussian_csv(30, 5, 7);
  const auto res = run_cli("infer --input " + input +
                           " --estimate-sigma --rule zg --center");
  REQUIRE(res.status == 0);
  const auto doc = nlohmann::json::parse(res.out);
  CHECK(doc.at("noise").at("source") == "estimated");
  CHECK(doc.at("noise").at("sigma2").get<double>() > 0.0);
  CHECK(doc.at("centered") == true);
  CHECK(doc.at("n") == 29);  // centering removes one row of freedom
  const int r = doc.at("scree").at("selected_r").get<int>();
  CHECK(doc.at("inferences").size() == r);
}

TEST_CASE("tabular inference output is one row per component") {
  const std::string input = gaussian_csv(24, 6, 42);
  const auto res = run_cli("infer --input " + input +
                           " --sigma 1 --format csv");
  REQUIRE(res.status == 0);
  std::istringstream lines(res.out);
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) ++count;
  CHECK(count == 7);  // header + one row per component
  CHECK(res.out.rfind("k,singular_value,sample_pve,selected,r,", 0) == 0);
}

TEST_CASE("simulation smoke run emits fit statistics") {
  const auto res = run_cli("simulate type1 --reps 50 --n 20 --p 5 --seed 3");
  REQUIRE(res.status == 0);
  const auto doc = nlohmann::json::parse(res.out);
  CHECK(doc.at("schema_version") == 1);
  CHECK(doc.at("experiment") == "type1");
  CHECK(doc.at("config").at("reps") == 50);
  CHECK(doc.at("config").at("rank") == 0);
  CHECK(!doc.at("rows").empty());
  bool saw_ks = false;
  for (const auto& rec : doc.at("summary"))
    if (rec.at("metric") == "ks_selective") saw_ks = true;
  CHECK(saw_ks);
}

TEST_CASE("simulation tabular output writes rows and summary files") {
  const auto stem = (kScratch / "simout").string();
  const auto res = run_cli(
      "simulate power --reps 5 --n 14 --p 4 --rank 2 --sigma 0.5 --seed 2 "
      "--format csv --output " + stem);
  REQUIRE(res.status == 0);
  const std::string rows = slurp(stem + "_rows.csv");
  const std::string summary = slurp(stem + "_summary.csv");
  CHECK(rows.rfind("rep,sigma,alpha,r,k,", 0) == 0);
  CHECK(summary.rfind("metric,sigma,alpha,k,kept,events,value,extra", 0) == 0);
  CHECK(summary.find("detection") != std::string::npos);
  CHECK(summary.find("power") != std::string::npos);
}

TEST_CASE("usage errors exit nonzero") {
  CHECK(run_cli("simulate warp --reps 5").status != 0);
  CHECK(run_cli("infer").status != 0);
  CHECK(run_cli("").status != 0);
  const auto res = run_cli("simulate coverage --reps 2 --format csv");
  CHECK(res.status != 0);  // csv needs an output stem
}

int main(int argc, char** argv) {
  std::vector<char*> passthrough;
  passthrough.push_back(argv[0]);
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg.rfind("--bin=", 0) == 0) {
      g_binary = arg.substr(6);
      continue;
    }
    passthrough.push_back(argv[i]);
  }
  if (g_binary.empty()) {
    std::fprintf(stderr, "usage: cli_tests --bin=<path-to-pve_infer>\n");
    return 2;
  }
  std::filesystem::create_directories(kScratch);
  doctest::Context context;
  context.applyCommandLine(static_cast<int>(passthrough.size()),
                           passthrough.data());
  return context.run();
}
