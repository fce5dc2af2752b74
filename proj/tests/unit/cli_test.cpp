#include <doctest.h>
#include <json.hpp>

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include "cbal/experiment.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace std::chrono_literals;

extern char** environ;

namespace {

const fs::path kWork = fs::temp_directory_path() / "cbal-cli-test";

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + CBAL_CLI + std::string(" ") + args + " >" +
                          (kWork / "last.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

json manifest(const fs::path& p) { return json::parse(slurp(p)); }

std::string out(const std::string& name) { return (kWork / name).string(); }

struct Fresh {
  Fresh() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
};

std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE_FIXTURE(Fresh, "zero horizon writes an empty table and a manifest") {
  REQUIRE(run("simulate --horizon 0 --out " + out("o")) == 0);
  CHECK(slurp(kWork / "o/simulate.csv") == "t,x_T,x_M,v_T,v_M,dx,dx_dot,u\n");
  const auto m = manifest(kWork / "o/simulate.manifest.json");
  CHECK(m["command"] == "simulate");
  CHECK(m["parameters"]["horizon"] == 0);
  CHECK(m["parameters"]["beta"] == 20.306);
  CHECK(m["resolved"]["model"]["gamma"] == 50.0);
  CHECK(m["outputs"][0] == "simulate.csv");
}

TEST_CASE_FIXTURE(Fresh, "exit codes") {
  CHECK(run("simulate --gamma -1 --out " + out("o")) == 2);
  CHECK(run("simulate --tau 0.1005 --out " + out("o")) == 2);
  CHECK(run("simulate --no-such-flag") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("simulate --beta 0 --nu 0 --horizon 100 --out " + out("d")) == 3);
  CHECK(manifest(kWork / "d/simulate.manifest.json")["diverged"].size() == 1);
  CHECK(run("simulate --beta 0 --nu 0 --horizon 100 --allow-divergence --out " + out("d")) == 0);
  std::ofstream(kWork / "file") << "x";
  CHECK(run("simulate --horizon 1 --out " + out("file") + "/sub") == 4);
  CHECK(run("--help") == 0);
}

TEST_CASE_FIXTURE(Fresh, "config files merge under flags and above the environment") {
  std::ofstream(kWork / "c.json") << R"({"horizon": 2, "kind": "coupled", "simulate": {"downsample": 500}, "lyapunov": {"seeds": 4}})";
  REQUIRE(run("simulate --config " + out("c.json") + " --horizon 1 --out " + out("o")) == 0);
  auto m = manifest(kWork / "o/simulate.manifest.json");
  CHECK(m["parameters"]["kind"] == "coupled");
  CHECK(m["parameters"]["horizon"] == 1);
  CHECK(m["parameters"]["downsample"] == 500);
  CHECK(m["parameters"]["beta"] == 21.032);

  REQUIRE(run("simulate --horizon 0", "CBAL_OUTPUT_DIR=" + out("env")) == 0);
  CHECK(fs::exists(kWork / "env/simulate.manifest.json"));

  std::ofstream(kWork / "o.json") << R"({"out": ")" + out("from-config") + R"("})";
  REQUIRE(run("simulate --horizon 0 --config " + out("o.json"), "CBAL_OUTPUT_DIR=" + out("env2")) == 0);
  CHECK(fs::exists(kWork / "from-config/simulate.manifest.json"));
  CHECK_FALSE(fs::exists(kWork / "env2"));

  std::ofstream(kWork / "bad.json") << R"({"horizon": 2, "bogus": 1})";
  CHECK(run("simulate --config " + out("bad.json")) == 2);
  std::ofstream(kWork / "broken.json") << "{";
  CHECK(run("simulate --config " + out("broken.json")) == 2);
}

TEST_CASE_FIXTURE(Fresh, "a manifest reproduces its run bit for bit") {
  REQUIRE(run("rms-ensemble --n 3 --horizon 30 --seed 5 --format jsonl --out " + out("a")) == 0);
  REQUIRE(run("rms-ensemble --config " + out("a/rms-ensemble.manifest.json") + " --out " + out("b")) == 0);
  CHECK(slurp(kWork / "a/rms-ensemble.jsonl") == slurp(kWork / "b/rms-ensemble.jsonl"));
  const auto first = json::parse(slurp(kWork / "a/rms-ensemble.jsonl").substr(0, slurp(kWork / "a/rms-ensemble.jsonl").find('\n')));
  CHECK(first["seed"] == 5);
  auto ma = manifest(kWork / "a/rms-ensemble.manifest.json");
  auto mb = manifest(kWork / "b/rms-ensemble.manifest.json");
  ma["parameters"].erase("out");
  mb["parameters"].erase("out");
  CHECK(ma == mb);
}

TEST_CASE_FIXTURE(Fresh, "analysis subcommands write their tables") {
  CHECK(run("stcc --horizon 60 --out " + out("s")) == 0);
  CHECK(csv_rows(kWork / "s/stcc.csv").front() == std::vector<std::string>{"lag", "coefficient"});
  CHECK(csv_rows(kWork / "s/stcc.csv").size() == 102);
  CHECK(fs::exists(kWork / "s/stcc-peaks.csv"));
  CHECK(run("spectrum --horizon 400 --segment 4096 --out " + out("s")) == 0);
  CHECK(manifest(kWork / "s/spectrum.manifest.json")["result"].contains("slope_low"));
  CHECK(run("lyapunov --horizon 100 --out " + out("s")) == 0);
  CHECK(run("sweep --points 2 --seeds 1 --horizon 100 --out " + out("s")) == 0);
  CHECK(csv_rows(kWork / "s/sweep.csv").size() == 3);
  CHECK(run("velocity-ratio --n 2 --horizon 60 --min-count 10 --out " + out("s")) == 0);
  CHECK(run("peak-density --n 2 --horizon 30 --out " + out("s")) == 0);
  CHECK(run("lyapunov --kind nonlinear --out " + out("s")) == 2);
}

TEST_CASE_FIXTURE(Fresh, "analyze-trials reproduces the table averages") {
  REQUIRE(run("analyze-trials " CBAL_FIXTURE_DIR "/tables.csv --grouping none --out " + out("t")) == 0);
  const auto subjects = csv_rows(kWork / "t/trials-subjects.csv");
  REQUIRE(subjects.size() == 5);
  auto find = [&](const std::string& subject, const std::string& mode) {
    for (const auto& r : subjects)
      if (r[0] == subject && r[1] == mode) return r;
    return std::vector<std::string>{};
  };
  auto at = [](const std::vector<std::string>& r, std::size_t i) { return std::stod(r.at(i)); };
  CHECK(at(find("A", "single"), 4) == doctest::Approx(0.132).epsilon(1e-12));
  CHECK(at(find("B", "single"), 4) == doctest::Approx(0.136).epsilon(1e-12));
  CHECK(at(find("A", "single"), 5) == doctest::Approx(3.62).epsilon(1e-12));
  CHECK(at(find("B", "single"), 5) == doctest::Approx(5.34).epsilon(1e-12));
  CHECK(at(find("A", "coupled"), 4) == doctest::Approx(0.128).epsilon(1e-12));
  CHECK(at(find("B", "coupled"), 5) == doctest::Approx(2.50).epsilon(1e-12));
  const auto groups = csv_rows(kWork / "t/trials-groups.csv");
  REQUIRE(groups.size() == 2);
  CHECK(groups[1][0] == "all");
  CHECK(groups[1][1] == "20");
}

TEST_CASE_FIXTURE(Fresh, "analyze-trials lists unreadable files and carries on") {
  cbal::SessionConfig c;
  c.countdown = 0;
  std::vector<double> tip(800), base(800);
  for (std::size_t i = 0; i < tip.size(); ++i) {
    tip[i] = 0.3 * std::sin(0.05 * static_cast<double>(i));
    base[i] = 0.3 * std::sin(0.05 * (static_cast<double>(i) - 6));
  }
  const auto rec = cbal::record_from_positions(c, {"model"}, {tip, 0.02, "tip", 0}, {{base, 0.02, "base", 0}});
  cbal::persist(rec, kWork / "good.trial.jsonl");
  std::ofstream(kWork / "bad.trial.jsonl") << "{\"type\":\"header\"\n";
  REQUIRE(run("analyze-trials " + out("good.trial.jsonl") + " " + out("bad.trial.jsonl") + " " + out("missing.trial.jsonl") +
              " --out " + out("r")) == 0);
  const auto excluded = csv_rows(kWork / "r/trials-excluded.csv");
  CHECK(excluded.size() == 3);
  const auto trials = csv_rows(kWork / "r/trials-per-trial.csv");
  REQUIRE(trials.size() == 2);
  CHECK(trials[1][0] == "good.trial.jsonl");

  CHECK(run("analyze-trials " + out("bad.trial.jsonl") + " --out " + out("r2")) == 2);
  REQUIRE(run("analyze-trials " + kWork.string() + " --out " + out("r3")) == 0);
  CHECK(csv_rows(kWork / "r3/trials-per-trial.csv").size() == 2);
}

TEST_CASE_FIXTURE(Fresh, "SIGINT during a served session flushes an aborted record") {
  const auto log = kWork / "serve.log";
  posix_spawn_file_actions_t fa;
  posix_spawn_file_actions_init(&fa);
  posix_spawn_file_actions_addopen(&fa, 1, log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  posix_spawn_file_actions_adddup2(&fa, 1, 2);
  const std::string trials = out("trials");
  std::vector<std::string> args{CBAL_CLI, "serve", "--port", "0", "--session", "SIG", "--countdown", "1", "--out", trials};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  pid_t pid = 0;
  REQUIRE(posix_spawn(&pid, CBAL_CLI, &fa, nullptr, argv.data(), environ) == 0);
  posix_spawn_file_actions_destroy(&fa);

  std::string port;
  const std::regex re("port ([0-9]+)");
  for (int i = 0; i < 100 && port.empty(); ++i) {
    std::smatch m;
    const auto text = slurp(log);
    if (std::regex_search(text, m, re)) port = m[1];
    std::this_thread::sleep_for(50ms);
  }
  REQUIRE(!port.empty());
  CHECK(slurp(log).find("session SIG") != std::string::npos);

  std::thread client([&] { run("client --port " + port + " --session SIG --subject k"); });
  std::this_thread::sleep_for(2000ms);
  kill(pid, SIGINT);
  int status = 0;
  waitpid(pid, &status, 0);
  client.join();
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 0);

  const auto loaded = cbal::load(kWork / "trials/SIG-single.trial.jsonl");
  CHECK(loaded.warnings.empty());
  REQUIRE(loaded.record.cause.has_value());
  CHECK(*loaded.record.cause == cbal::TerminationCause::aborted_by_subject);
  CHECK(loaded.record.rows.size() > 10);
  CHECK(manifest(kWork / "trials/serve.manifest.json")["result"]["cause"] == "aborted-by-subject");
}
