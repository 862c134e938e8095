#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CmdResult {
  int code = -1;
  std::string out;
};

// Runs the installed binary with stderr folded into stdout.
CmdResult run(const std::string& args) {
  const std::string cmd = std::string(FAIRCDC_CLI_PATH) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  CmdResult r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, p)) r.out += buf;
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  REQUIRE(f.good());
}

// Fresh working directory per test case.
fs::path fresh_dir(const std::string& tag) {
  const fs::path d =
      fs::temp_directory_path() / ("faircdc_cli_" + std::to_string(::getpid()) + "_" + tag);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string numbers_csv(std::size_t n) {
  std::string text = "y,z,u\n";
  std::uint64_t s = 1;
  for (std::size_t i = 0; i < n; ++i) {
    s = s * 6364136223846793005ULL + 1442695040888963407ULL;
    const double y = static_cast<double>(s >> 11) / 9007199254740992.0;
    s = s * 6364136223846793005ULL + 1442695040888963407ULL;
    const double u = static_cast<double>(s >> 11) / 9007199254740992.0;
    text += json(y).dump() + ",4.25," + json(u).dump() + "\n";
  }
  return text;
}

std::string people_csv(std::size_t n) {
  std::string text = "age,job,sex,income\n";
  std::uint64_t s = 9;
  auto next = [&] {
    s = s * 6364136223846793005ULL + 1442695040888963407ULL;
    return static_cast<double>(s >> 11) / 9007199254740992.0;
  };
  const char* jobs[3] = {"tech", "sales", "care"};
  for (std::size_t i = 0; i < n; ++i) {
    const bool g = next() < 0.5;
    const bool y = next() < (g ? 0.7 : 0.4);
    const double age = 30.0 + 20.0 * next() + (y ? 6.0 : 0.0);
    text += json(age).dump();
    text += std::string(",") + jobs[i % 3] + "," + (g ? "M" : "F") + "," +
            (y ? ">50K" : "<=50K") + "\n";
  }
  return text;
}

const char* kSchema = R"({
  "features": [{"name": "age", "type": "numeric"}, {"name": "job", "type": "categorical"}],
  "label": "income",
  "sensitive": "sex",
  "positive_class": ">50K",
  "missing_policy": "drop"
})";

std::vector<json> parse_jsonl(const std::string& text) {
  std::vector<json> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(json::parse(line));
  return out;
}

std::size_t count_lines(const std::string& text) {
  std::size_t k = 0;
  for (char c : text)
    if (c == '\n') ++k;
  return k;
}

}  // namespace

TEST_CASE("stat dcov is exactly zero against a constant column") {
  const fs::path d = fresh_dir("dcov_zero");
  write_file(d / "t.csv", numbers_csv(40));
  const CmdResult r = run("stat dcov --input " + (d / "t.csv").string() + " --y y --z z --check");
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j.at("statistic") == "dcov");
  CHECK(j.at("value").get<double>() == 0.0);
  CHECK(j.at("n").get<std::size_t>() == 40);
  CHECK(j.at("check_gap").get<double>() < 1e-10);
}

TEST_CASE("stat dcov parallel route agrees with the direct definition") {
  const fs::path d = fresh_dir("dcov_check");
  write_file(d / "t.csv", numbers_csv(64));
  const CmdResult r = run("stat dcov --input " + (d / "t.csv").string() + " --y y --z u --check");
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j.at("value").get<double>() > 0.0);
  CHECK(j.at("check_gap").get<double>() < 1e-10);
}

TEST_CASE("stat cdcov applies the rule-of-thumb bandwidth and writes a manifest") {
  const fs::path d = fresh_dir("cdcov_h");
  write_file(d / "t.csv", numbers_csv(100));
  const fs::path out = d / "out";
  const CmdResult r = run("stat cdcov --input " + (d / "t.csv").string() +
                          " --y y --z z --u u --silverman --check --out-dir " + out.string());
  REQUIRE(r.code == 0);
  const json res = json::parse(read_file(out / "result.json"));
  CHECK(res.at("bandwidth").get<double>() == 0.42168460634274996);
  CHECK(res.at("n").get<std::size_t>() == 100);
  CHECK(res.at("check_gap").get<double>() < 1e-8);
  const json man = json::parse(read_file(out / "manifest.json"));
  CHECK(man.at("tool") == "faircdc");
  CHECK(man.at("version") == "0.1.0");
  CHECK(man.at("command") == "stat cdcov");
  CHECK(man.at("config").at("bandwidth").get<double>() == 0.42168460634274996);
  CHECK(man.at("config").at("silverman") == true);
  CHECK(man.at("outputs") == json::array({"result.json"}));
  CHECK(json::parse(r.out) == res);

  const CmdResult bad = run("stat cdcov --input " + (d / "t.csv").string() +
                            " --y y --z z --u u --silverman --bandwidth 0.3");
  CHECK(bad.code == 1);
  CHECK(bad.out.find("mutually exclusive") != std::string::npos);
}

TEST_CASE("train reruns reproduce every output byte for byte") {
  const fs::path d = fresh_dir("train_rerun");
  const std::string flags =
      " --synth --synth-n 300 --hidden 8 --epochs 2 --batch 64 --seed 7 --out-dir ";
  REQUIRE(run("train" + flags + (d / "a").string()).code == 0);
  REQUIRE(run("train" + flags + (d / "b").string()).code == 0);
  for (const char* name : {"history.jsonl", "report.json", "checkpoint.json"})
    CHECK(read_file(d / "a" / name) == read_file(d / "b" / name));

  const json rep = json::parse(read_file(d / "a" / "report.json"));
  CHECK(rep.contains("accuracy"));
  CHECK(rep.contains("delta_dp"));
  CHECK(rep.contains("delta_eo"));

  const json man = json::parse(read_file(d / "a" / "manifest.json"));
  CHECK(man.at("command") == "train");
  CHECK(man.at("seed").get<std::uint64_t>() == 7);
  CHECK(man.at("config").at("train").at("epochs").get<std::size_t>() == 2);
  CHECK(man.at("config").at("source").at("kind") == "synth");
}

TEST_CASE("train records a nondecreasing dual variable trace") {
  const fs::path d = fresh_dir("train_dual");
  const CmdResult r = run(
      "train --synth --synth-n 300 --hidden 8 --epochs 4 --batch 64 --penalty dc "
      "--lambda-init 2 --beta 0.5 --seed 5 --out-dir " +
      (d / "run").string());
  REQUIRE(r.code == 0);
  const std::vector<json> hist = parse_jsonl(read_file(d / "run" / "history.jsonl"));
  REQUIRE(hist.size() == 4);
  double prev = 2.0;
  for (const json& rec : hist) {
    const double lam = rec.at("lambda").get<double>();
    CHECK(lam >= prev);
    prev = lam;
    CHECK(rec.contains("train_loss"));
    CHECK(rec.contains("penalty_mean"));
    CHECK(rec.contains("val_accuracy"));
    CHECK(rec.contains("val_ddp"));
    CHECK(rec.contains("val_deo"));
  }
  CHECK(hist.front().at("epoch").get<int>() == 1);
  CHECK(hist.back().at("epoch").get<int>() == 4);
}

TEST_CASE("eval reuses the saved preprocessor on the training csv") {
  const fs::path d = fresh_dir("eval_pre");
  write_file(d / "d.csv", people_csv(120));
  write_file(d / "schema.json", kSchema);
  const std::string base = " --data " + (d / "d.csv").string() + " --schema " +
                           (d / "schema.json").string();
  REQUIRE(run("train" + base + " --hidden 8 --epochs 2 --batch 32 --seed 2 --out-dir " +
              (d / "run").string())
              .code == 0);
  CHECK(fs::exists(d / "run" / "preprocessor.json"));

  const CmdResult r = run("eval --model " + (d / "run" / "checkpoint.json").string() + base +
                          " --preprocessor " + (d / "run" / "preprocessor.json").string() +
                          " --out-dir " + (d / "ev").string());
  REQUIRE(r.code == 0);
  const json rep = json::parse(read_file(d / "ev" / "report.json"));
  CHECK(rep.at("n").get<std::size_t>() == 120);
  CHECK(rep.at("n_groups").get<std::size_t>() == 2);
  const json man = json::parse(read_file(d / "ev" / "manifest.json"));
  CHECK(man.at("config").at("unseen_categories").get<std::size_t>() == 0);
  CHECK(man.at("config").at("positive_class").get<int>() >= 0);
}

TEST_CASE("converge writes one csv row per trial and reruns identically") {
  const fs::path d = fresh_dir("converge");
  const std::string flags = "converge --stat dcov --n-grid 16,64 --trials 5 --seed 9 --out-dir ";
  const CmdResult r = run(flags + (d / "a").string());
  REQUIRE(r.code == 0);
  REQUIRE(run(flags + (d / "b").string()).code == 0);

  std::string stem;
  for (const auto& entry : fs::directory_iterator(d / "a")) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("converge_dcov_indep_seed9_", 0) == 0 && name.ends_with(".csv"))
      stem = name.substr(0, name.size() - 4);
  }
  REQUIRE(!stem.empty());
  const std::string csv = read_file(d / "a" / (stem + ".csv"));
  CHECK(count_lines(csv) == 1 + 2 * 5);
  CHECK(csv.rfind("n,trial,statistic,deviation\n", 0) == 0);
  CHECK(csv == read_file(d / "b" / (stem + ".csv")));
  CHECK(read_file(d / "a" / (stem + ".json")) == read_file(d / "b" / (stem + ".json")));

  const json summary = json::parse(r.out);
  REQUIRE(summary.size() == 2);
  CHECK(summary[0].at("n").get<std::size_t>() == 16);
  CHECK(summary[1].at("n").get<std::size_t>() == 64);
  CHECK(summary[1].at("mean").get<double>() < summary[0].at("mean").get<double>());
  CHECK(summary[1].at("median").get<double>() < summary[0].at("median").get<double>());
  CHECK(summary[0].at("target").get<double>() == 0.0);
}

TEST_CASE("tradeoff baseline cell matches a separate unpenalized training run") {
  const fs::path d = fresh_dir("tradeoff");
  const std::string base = " --synth --synth-n 300 --hidden 8 --epochs 2 --batch 64 --seed 3";
  const CmdResult r = run("tradeoff" + base +
                          " --beta 0.5 --lambdas 0,1 --kinds dc --num-seeds 1 --out-dir " +
                          (d / "sweep").string());
  REQUIRE(r.code == 0);

  std::string stem;
  for (const auto& entry : fs::directory_iterator(d / "sweep")) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("tradeoff_seed3_", 0) == 0 && name.ends_with("_points.csv"))
      stem = name.substr(0, name.size() - std::string("_points.csv").size());
  }
  REQUIRE(!stem.empty());
  const std::string points = read_file(d / "sweep" / (stem + "_points.csv"));
  const std::string cells = read_file(d / "sweep" / (stem + "_cells.csv"));
  CHECK(count_lines(points) == 1 + 2);
  CHECK(count_lines(cells) == 1 + 2);
  CHECK(points.rfind("lambda_init,kind,seed,accuracy,delta_dp,delta_eo\n", 0) == 0);
  CHECK(cells.rfind("lambda_init,kind,seeds,accuracy_mean,accuracy_std,delta_dp_mean,"
                    "delta_dp_std,delta_eo_mean,delta_eo_std\n",
                    0) == 0);

  std::istringstream in(points);
  std::string header, baseline;
  std::getline(in, header);
  std::getline(in, baseline);
  std::istringstream row(baseline);
  std::string cell;
  std::vector<std::string> parts;
  while (std::getline(row, cell, ',')) parts.push_back(cell);
  REQUIRE(parts.size() == 6);
  CHECK(parts[0] == "0.0");
  CHECK(parts[1] == "dc");
  CHECK(parts[2] == "3");

  REQUIRE(run("train" + base + " --penalty none --out-dir " + (d / "plain").string()).code == 0);
  const json rep = json::parse(read_file(d / "plain" / "report.json"));
  CHECK(std::stod(parts[3]) == rep.at("accuracy").get<double>());
  CHECK(std::stod(parts[4]) == rep.at("delta_dp").get<double>());
  CHECK(std::stod(parts[5]) == rep.at("delta_eo").get<double>());

  const json summary = json::parse(r.out);
  REQUIRE(summary.size() == 2);
  CHECK(summary[0].at("lambda_init").get<double>() == 0.0);
  CHECK(summary[1].at("lambda_init").get<double>() == 1.0);
  CHECK(summary[0].at("seeds").get<std::size_t>() == 1);
}

TEST_CASE("invalid settings fail with every problem reported") {
  const fs::path d = fresh_dir("invalid");
  const CmdResult r = run("train --synth --batch 1 --lr 0 --synth-bias 1.5 --out-dir " +
                          (d / "x").string());
  CHECK(r.code == 1);
  CHECK(r.out.find("batch: must be at least 2") != std::string::npos);
  CHECK(r.out.find("lr: must be positive") != std::string::npos);
  CHECK(r.out.find("--synth-bias: must be in [0, 1]") != std::string::npos);
  CHECK(!fs::exists(d / "x"));

  write_file(d / "c.json", "{\"epochs\": 2, \"typo\": 1}\n");
  const CmdResult bad = run("train --synth --config " + (d / "c.json").string() + " --out-dir " +
                            (d / "y").string());
  CHECK(bad.code == 1);
  CHECK(bad.out.find("unknown key \"typo\"") != std::string::npos);

  const CmdResult none = run("train --out-dir " + (d / "z").string());
  CHECK(none.code == 1);
  CHECK(none.out.find("either --synth or --data with --schema is required") != std::string::npos);
}
