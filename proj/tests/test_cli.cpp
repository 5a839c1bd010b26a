#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace {

const std::string kCli = RDIV_CLI_PATH;
const std::string kDir = "/tmp/rdiv_cli_test";

struct RunResult {
  int exit_code;
  std::string out;
  std::string err;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunResult run(const std::string& args) {
  const std::string out_path = kDir + "/stdout.txt";
  const std::string err_path = kDir + "/stderr.txt";
  const std::string cmd = kCli + " " + args + " >" + out_path + " 2>" + err_path;
  const int raw = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  return r;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

struct Setup {
  Setup() { std::system(("mkdir -p " + kDir).c_str()); }
};
const Setup setup;

}  // namespace

TEST_CASE("gen writes reproducible dataset files") {
  const std::string csv = kDir + "/blob.csv";
  auto r = run("gen --generator blob --side P --n 40 --seed 7 --out " + csv);
  REQUIRE(r.exit_code == 0);
  const std::string first = slurp(csv);
  CHECK(first.rfind("x0,x1\n", 0) == 0);

  r = run("gen --generator blob --side P --n 40 --seed 7 --out " + csv);
  REQUIRE(r.exit_code == 0);
  CHECK(slurp(csv) == first);

  const std::string bin = kDir + "/classes.bin";
  r = run("gen --generator gauss-classes --n 30 --classes 3 --d 4 --separation 5 --seed 2 "
          "--format bin --out " + bin);
  REQUIRE(r.exit_code == 0);
  CHECK(slurp(bin).rfind("RDIV0001", 0) == 0);
  CHECK(!slurp(bin + ".manifest.json").empty());
}

TEST_CASE("estimate on two identical files reports zero") {
  const std::string csv = kDir + "/same.csv";
  REQUIRE(run("gen --generator blob --side Q --n 25 --seed 3 --out " + csv).exit_code == 0);
  const auto r = run("estimate --estimator rdiv --model mean --p " + csv + " --q " + csv +
                     " --seed 1");
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("estimator,value,risk_p,risk_q,N,d,seed") != std::string::npos);
  CHECK(r.out.find("rdiv,0,") != std::string::npos);
}

TEST_CASE("estimate covers every estimator id") {
  const std::string p = kDir + "/est_p.csv";
  const std::string q = kDir + "/est_q.csv";
  REQUIRE(run("gen --generator blob --side P --n 24 --seed 5 --out " + p).exit_code == 0);
  REQUIRE(run("gen --generator blob --side Q --n 24 --seed 6 --out " + q).exit_code == 0);
  for (const std::string est : {"rdiv", "hdiv", "mmd", "c2st-s", "c2st-l"}) {
    const auto r = run("estimate --estimator " + est + " --model kde --epochs 5 --hidden 8 "
                       "--p " + p + " --q " + q + " --seed 2");
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find(est + ",") != std::string::npos);
  }
}

TEST_CASE("power emits one row per (N, d) cell and reruns byte-identical") {
  const std::string out = kDir + "/power.csv";
  const std::string curve = kDir + "/curve.csv";
  const std::string cmd = "power --scenario normal-null --estimator rdiv --model mean "
                          "--n 20,30,40 --k 4 --z 10 --alpha 0.05 --seed 1 --threads 2 --out " +
                          out + " --curve-out " + curve;
  REQUIRE(run(cmd).exit_code == 0);
  const std::string first = slurp(out);
  CHECK(first.rfind("estimator,scenario,N,d,K,Z,alpha,power,std_err\n", 0) == 0);
  CHECK(std::count(first.begin(), first.end(), '\n') == 4);  // header + 3 rows

  const std::string curve_first = slurp(curve);
  CHECK(curve_first.rfind("N,power,std_err\n", 0) == 0);
  CHECK(std::count(curve_first.begin(), curve_first.end(), '\n') == 4);
  CHECK(curve_first.find("\n20,") != std::string::npos);
  CHECK(curve_first.find("\n30,") != std::string::npos);
  CHECK(curve_first.find("\n40,") != std::string::npos);
  CHECK(curve_first.find("\n20,") < curve_first.find("\n30,"));  // ascending x
  CHECK(curve_first.find("\n30,") < curve_first.find("\n40,"));

  REQUIRE(run(cmd).exit_code == 0);
  CHECK(slurp(out) == first);
  CHECK(slurp(curve) == curve_first);
  CHECK(slurp(out + ".manifest.json").find("wall_seconds") != std::string::npos);

  // A one-point sweep writes a single-row curve.
  const std::string single = kDir + "/curve_single.csv";
  REQUIRE(run("power --scenario normal-null --estimator rdiv --model mean --n 20 --k 2 "
              "--z 10 --seed 1 --out " + out + " --curve-out " + single).exit_code == 0);
  const std::string single_data = slurp(single);
  CHECK(std::count(single_data.begin(), single_data.end(), '\n') == 2);
}

TEST_CASE("calibrate insists on a null scenario") {
  const std::string out = kDir + "/cal.csv";
  auto r = run("calibrate --scenario blob --estimator rdiv --model mean --n 16 --k 2 --z 10 "
               "--out " + out);
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("scenario") != std::string::npos);

  r = run("calibrate --scenario normal-null --estimator rdiv --model mean --n 16 --k 3 "
          "--z 10 --seed 4 --out " + out);
  REQUIRE(r.exit_code == 0);
  CHECK(slurp(out).find("normal-null") != std::string::npos);
}

TEST_CASE("config files underlay flags and reject unknown keys") {
  const std::string cfg = kDir + "/power.json";
  const std::string out = kDir + "/cfg_power.csv";
  write_file(cfg, R"({"scenario": "normal-null", "estimator": "rdiv", "model": "mean",
                      "n": "12", "k": 2, "z": 10, "alpha": 0.05, "out": ")" + out + R"("})");
  REQUIRE(run("power --config " + cfg + " --seed 9").exit_code == 0);
  CHECK(slurp(out).find(",12,") != std::string::npos);

  // Flags win over the config.
  REQUIRE(run("power --config " + cfg + " --seed 9 --n 14").exit_code == 0);
  CHECK(slurp(out).find(",14,") != std::string::npos);

  const std::string bad = kDir + "/bad.json";
  write_file(bad, R"({"alpha": 0.05, "bogus": 1})");
  const auto r = run("power --config " + bad + " --out " + out);
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("bogus") != std::string::npos);
}

TEST_CASE("malformed or missing fields exit with code 2 naming the field") {
  {
    const auto r = run("power --scenario normal-null --model mean --out x.csv --alpha");
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("alpha") != std::string::npos);
  }
  {
    const auto r = run("power --scenario normal-null --model mean --out x.csv --alpha 1.5");
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("alpha") != std::string::npos);
  }
  {
    const auto r = run("power --scenario normal-null --model mean --alpha 0.05");
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("out") != std::string::npos);
  }
  {
    const auto r = run("estimate --estimator nope --p a.csv --q b.csv");
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("estimator") != std::string::npos);
  }
}

TEST_CASE("runtime failures exit with code 1") {
  const auto r = run("estimate --estimator rdiv --model mean --p /nonexistent/p.csv "
                     "--q /nonexistent/q.csv");
  CHECK(r.exit_code == 1);
  CHECK(!r.err.empty());
}

TEST_CASE("noisy sweep emits one row per gamma and reruns byte-identical") {
  const std::string out = kDir + "/noisy.csv";
  const std::string curve = kDir + "/noisy_curve.csv";
  const std::string cmd = "noisy --n 300 --n-test 150 --classes 3 --d 3 --separation 5 "
                          "--noise-rate 0.2 --gammas 0.2,0.4 --hidden 12 --epochs 8 "
                          "--retrain-epochs 5 --seed 3 --out " + out + " --curve-out " + curve;
  REQUIRE(run(cmd).exit_code == 0);
  const std::string first = slurp(out);
  CHECK(first.rfind("gamma,pretrained_acc,retrained_acc,precision_clean,recall_clean,"
                    "precision_noisy,recall_noisy,discrepancy\n", 0) == 0);
  CHECK(std::count(first.begin(), first.end(), '\n') == 3);

  const std::string curve_data = slurp(curve);
  CHECK(curve_data.rfind("phase,gamma,epoch,loss\n", 0) == 0);
  CHECK(curve_data.find("pretrain,") != std::string::npos);
  CHECK(curve_data.find("retrain,") != std::string::npos);

  REQUIRE(run(cmd).exit_code == 0);
  CHECK(slurp(out) == first);
}
