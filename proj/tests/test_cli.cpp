#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cfdro/cli.hpp"
#include "cfdro/data.hpp"
#include "cfdro/policy.hpp"

using namespace cfdro;
namespace fs = std::filesystem;

namespace {

const std::string kData = std::string(CFDRO_TEST_DATA) + "/synthetic_multilabel.svm";

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cfdro");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cfdro_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("convert writes the log, the policy and the split") {
  const auto dir = scratch("convert");
  const auto r = cli({"convert", "--data", kData, "--out", dir.string(), "-P", "4", "--seed", "5"});
  REQUIRE(r.code == 0);
  for (const char* f : {"log.jsonl", "logging_policy.txt", "split.json", "config.json"}) CHECK(fs::exists(dir / f));
  const auto log = read_bandit_log((dir / "log.jsonl").string());
  CHECK(log.size() == 400);  // 100 train rows, four passes
  CHECK(load_policy((dir / "logging_policy.txt").string()).temperature() == 2.0);
  CHECK(slurp(dir / "config.json").find("\"version\"") != std::string::npos);

  const auto dir2 = scratch("convert2");
  REQUIRE(cli({"convert", "--data", kData, "--out", dir2.string(), "-P", "4", "--seed", "5"}).code == 0);
  for (const char* f : {"log.jsonl", "logging_policy.txt", "split.json"}) CHECK(slurp(dir / f) == slurp(dir2 / f));

  // outputs go to a fresh directory
  CHECK(cli({"convert", "--data", kData, "--out", dir.string(), "-P", "4"}).code == 1);
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("convert validation errors") {
  const auto dir = scratch("convert_bad");
  CHECK(cli({"convert", "--data", kData, "--out", dir.string(), "-P", "0"}).code == 1);
  CHECK(cli({"convert", "--data", "/no/such/file.svm", "--out", dir.string()}).code == 1);
  CHECK(cli({"convert", "--data", kData, "--out", dir.string(), "--train-frac", "0.7"}).code == 1);
  CHECK(cli({"convert", "--data", kData}).code == 1);
  CHECK(cli({"frobnicate"}).code == 1);
  CHECK(cli({}).code == 1);
  CHECK_FALSE(fs::exists(dir));
}

TEST_CASE("seed falls back to CF_DRO_SEED") {
  const auto a = scratch("seed_a"), b = scratch("seed_b");
  REQUIRE(cli({"convert", "--data", kData, "--out", a.string(), "--seed", "42"}).code == 0);
  setenv("CF_DRO_SEED", "42", 1);
  REQUIRE(cli({"convert", "--data", kData, "--out", b.string()}).code == 0);
  CHECK(slurp(a / "log.jsonl") == slurp(b / "log.jsonl"));
  setenv("CF_DRO_SEED", "not-a-number", 1);
  CHECK(cli({"convert", "--data", kData, "--out", scratch("seed_c").string()}).code == 1);
  unsetenv("CF_DRO_SEED");
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("evaluate") {
  const auto dir = scratch("evaluate");
  REQUIRE(cli({"convert", "--data", kData, "--out", dir.string(), "-P", "2", "--seed", "1"}).code == 0);
  const auto log = (dir / "log.jsonl").string(), pol = (dir / "logging_policy.txt").string();
  const auto out = scratch("evaluate_out");
  const auto r = cli({"evaluate", "--log", log, "--policy", pol, "--divergence", "all", "--out", out.string()});
  REQUIRE(r.code == 0);
  const auto rows = lines(r.out);
  REQUIRE(rows.size() == 7);
  CHECK(rows[0] == "method,divergence,n,delta,estimate,lower,upper,width");
  CHECK(slurp(out / "intervals.csv") == r.out);
  CHECK(fs::exists(out / "config.json"));

  CHECK(lines(cli({"evaluate", "--log", log, "--policy", pol, "--divergence", "kl", "--methods", "dro"}).out).size() ==
        2);
  CHECK(cli({"evaluate", "--log", log, "--policy", pol, "--delta", "1.5"}).code == 1);
  CHECK(cli({"evaluate", "--log", log, "--policy", pol, "--delta", "0"}).code == 1);
  CHECK(cli({"evaluate", "--log", log, "--policy", pol, "--divergence", "tv"}).code == 1);
  CHECK(cli({"evaluate", "--log", "/no/log.jsonl", "--policy", pol}).code == 1);
  fs::remove_all(dir);
  fs::remove_all(out);
}

TEST_CASE("evaluate on a constant-cost log gives degenerate DRO intervals") {
  const auto dir = scratch("evaluate_const");
  fs::create_directories(dir);
  const auto pol = LinearPolicy::zeros(2, ActionSpace::factorized(2));
  std::vector<BanditRecord> recs;
  for (int i = 0; i < 20; ++i) {
    BanditRecord r;
    r.features = Eigen::Vector2d(0.1 * i, -0.3);
    r.action = Action{static_cast<std::uint64_t>(i % 4)};
    r.propensity = 0.25;
    r.cost_raw = 1.0;
    r.cost = -0.5;
    recs.push_back(r);
  }
  write_bandit_log((dir / "log.jsonl").string(), BanditLog(recs, pol.action_space(), CostScale::hamming(2)));
  save_policy((dir / "policy.txt").string(), pol);
  const auto r = cli({"evaluate", "--log", (dir / "log.jsonl").string(), "--policy", (dir / "policy.txt").string(),
                      "--methods", "dro"});
  REQUIRE(r.code == 0);
  const auto rows = lines(r.out);
  REQUIRE(rows.size() == 5);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].find(",-0.5,-0.5,-0.5,0") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("optimize") {
  const auto dir = scratch("optimize");
  const auto r = cli({"optimize", "--data", kData, "--out", dir.string(), "--algo", "poem,dro-chi2", "--mode", "batch",
                      "--repetitions", "20", "-P", "2", "--seed", "3", "--jobs", "2"});
  REQUIRE(r.code == 0);
  const auto rows = lines(r.out);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == "algorithm,risk_mean,risk_std,greedy_mean,greedy_std,repetitions");
  CHECK(rows[1].rfind("logging,", 0) == 0);
  CHECK(rows[2].rfind("poem-b,", 0) == 0);
  CHECK(rows[3].rfind("dro-b-chi2,", 0) == 0);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].substr(rows[i].rfind(',') + 1) == "20");

  // POEM rows carry a lambda from the grid
  const auto runs = lines(slurp(dir / "runs.csv"));
  CHECK(runs.size() == 1 + 20 * 3);
  for (const auto& l : runs) {
    if (l.find(",poem-b,") == std::string::npos) continue;
    std::vector<std::string> f;
    std::stringstream ss(l);
    for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
    const double lambda = std::stod(f[4]);
    const double k = 1.5 * (std::log10(lambda) + 4.0);  // grid index
    CHECK(k == doctest::Approx(std::round(k)).epsilon(1e-9));
    CHECK(std::round(k) >= 0);
    CHECK(std::round(k) <= 6);
  }

  // same answer single-threaded
  const auto dir2 = scratch("optimize2");
  REQUIRE(cli({"optimize", "--data", kData, "--out", dir2.string(), "--algo", "poem,dro-chi2", "--repetitions", "20",
               "-P", "2", "--seed", "3"})
              .code == 0);
  CHECK(slurp(dir / "results.csv") == slurp(dir2 / "results.csv"));
  CHECK(slurp(dir / "runs.csv") == slurp(dir2 / "runs.csv"));
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("optimize variants and validation") {
  const auto dir = scratch("optimize_variants");
  const auto r = cli({"optimize", "--data", kData, "--out", dir.string(), "--algo", "dro-kl", "--mode", "stochastic",
                      "--cv", "--log-trick", "--repetitions", "1", "--max-iters", "50", "--outer-iters", "2"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("dro-s-kl,") != std::string::npos);
  CHECK(r.out.find("dro-s-kl-cv,") != std::string::npos);
  CHECK(r.out.find("dro-b-kl-logtrick,") != std::string::npos);
  fs::remove_all(dir);
  CHECK(cli({"optimize", "--data", kData, "--out", dir.string(), "--algo", "sgd"}).code == 1);
  CHECK(cli({"optimize", "--data", kData, "--out", dir.string(), "--mode", "online"}).code == 1);
  CHECK(cli({"optimize", "--data", kData, "--out", dir.string(), "--lambda-grid", "-1"}).code == 1);
  CHECK(cli({"optimize", "--data", kData, "--out", dir.string(), "--repetitions", "0"}).code == 1);
  CHECK_FALSE(fs::exists(dir));
}

TEST_CASE("coverage") {
  const auto dir = scratch("coverage");
  const auto r = cli({"coverage", "--data", kData, "--out", dir.string(), "-P", "1,2", "--replications", "1"});
  REQUIRE(r.code == 0);
  const auto rows = lines(slurp(dir / "coverage.csv"));
  REQUIRE(rows.size() == 1 + 2 * 6);
  CHECK(rows[0] == "method,divergence,n,replication,lower,upper,true_risk,covered");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const char last = rows[i].back();
    CHECK((last == '0' || last == '1'));
  }
  CHECK(fs::exists(dir / "summary.csv"));
  CHECK(fs::exists(dir / "config.json"));
  fs::remove_all(dir);
  CHECK(cli({"coverage", "--data", kData, "--out", dir.string(), "-P", "0"}).code == 1);
}

TEST_CASE("the installed binary reports exit codes") {
  const std::string bin = CFDRO_CLI_PATH;
  CHECK(std::system((bin + " --version > /dev/null").c_str()) == 0);
  const int bad = std::system((bin + " convert --data /no/such/file --out /tmp/cfdro_cli_test_x 2> /dev/null").c_str());
  CHECK(WIFEXITED(bad));
  CHECK(WEXITSTATUS(bad) == 1);
}
