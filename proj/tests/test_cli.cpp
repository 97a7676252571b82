// Drives the built taskaff binary through std::system.
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "support.hpp"
#include "taskaff/grouping.hpp"
#include "taskaff/io.hpp"

namespace fs = std::filesystem;

namespace {

int run_cli(const fs::path& cwd, const std::string& args) {
  const std::string cmd = "cd '" + cwd.string() + "' && '" TASKAFF_CLI_PATH "' " + args + " >cli.log 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) { return taskaff::io::read_text(p); }

// every file in `a` has a byte-identical twin in `b` and vice versa
bool same_tree(const fs::path& a, const fs::path& b) {
  std::size_t count = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    if (!fs::exists(b / rel) || slurp(e.path()) != slurp(b / rel)) return false;
    ++count;
  }
  std::size_t other = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) other += e.is_regular_file();
  return count == other && count > 0;
}

}  // namespace

TEST_CASE("generate twice with the same flags gives byte-identical directories") {
  const auto dir = testing::scratch("cli_determinism");
  REQUIRE(run_cli(dir, "generate --tasks 20 --groups 4 --seed 1 --out a") == 0);
  REQUIRE(run_cli(dir, "generate --tasks 20 --groups 4 --seed 1 --out b") == 0);
  CHECK(same_tree(dir / "a", dir / "b"));
  REQUIRE(run_cli(dir, "generate --tasks 20 --groups 4 --seed 2 --out c") == 0);
  CHECK_FALSE(slurp(dir / "a" / "labels.csv") == slurp(dir / "c" / "labels.csv"));
  // recorded separations honour a < b_sep
  std::istringstream meta(slurp(dir / "a" / "meta.json"));
  const auto j = nlohmann::json::parse(meta);
  CHECK(j.at("achieved_within").get<double>() < j.at("achieved_between").get<double>());
}

TEST_CASE("affinity runs are byte-identical across worker counts") {
  const auto dir = testing::scratch("cli_affinity_determinism");
  REQUIRE(run_cli(dir, "--out data generate --tasks 8 --groups 2 --dim 4 --nodes 80 --observed 60") == 0);
  REQUIRE(run_cli(dir, "--out a --workers 1 affinity --data data --alpha 3 --num-subsets 30") == 0);
  REQUIRE(run_cli(dir, "--out b --workers 4 affinity --data data --alpha 3 --num-subsets 30") == 0);
  for (const char* f : {"evaluations.csv", "theta.csv", "counts.csv", "convergence.csv", "subsets.json"})
    CHECK_MESSAGE(slurp(dir / "a" / f) == slurp(dir / "b" / f), f);
}

TEST_CASE("usage errors exit 64") {
  const auto dir = testing::scratch("cli_usage");
  CHECK(run_cli(dir, "generate --tasks 3") == 64);               // no --out
  CHECK(run_cli(dir, "--out x affinity") == 64);                 // no --data
  CHECK(run_cli(dir, "--out x") == 64);                          // no subcommand
  CHECK(run_cli(dir, "--out x generate --tasks three") == 64);   // bad value
  CHECK(slurp(dir / "cli.log").find("--help") != std::string::npos);
}

TEST_CASE("missing upstream artifacts exit 66 and name the path") {
  const auto dir = testing::scratch("cli_missing");
  CHECK(run_cli(dir, "--out c cluster --affinity nowhere") == 66);
  CHECK(slurp(dir / "cli.log").find("nowhere/theta.csv") != std::string::npos);
  CHECK(run_cli(dir, "--out a affinity --data nowhere") == 66);
  CHECK(run_cli(dir, "--out e evaluate --data nowhere --grouping g.json") == 66);
}

TEST_CASE("domain errors exit 2") {
  const auto dir = testing::scratch("cli_domain");
  // more groups than feature dimensions cannot form a simplex
  CHECK(run_cli(dir, "--out g generate --tasks 10 --groups 6 --dim 3") == 2);
  // unreachable separation
  CHECK(run_cli(dir, "--out g generate --tasks 10 --groups 2 --between 50 --bound 0.1") == 2);
}

TEST_CASE("an interrupted affinity run resumes to the clean result") {
  const auto dir = testing::scratch("cli_resume");
  REQUIRE(run_cli(dir, "--out data generate --tasks 10 --groups 2 --dim 4 --nodes 80 --observed 60") == 0);
  REQUIRE(run_cli(dir, "--out clean affinity --data data --alpha 4 --num-subsets 100") == 0);
  REQUIRE(run_cli(dir, "--out part affinity --data data --alpha 4 --num-subsets 100 --stop-after 40") == 0);
  CHECK_FALSE(fs::exists(dir / "part" / "theta.csv"));
  // tear the last line as a kill mid-write would
  {
    std::ofstream log(dir / "part" / "evaluations.csv", std::ios::app);
    log << "40,3,-0.12";
  }
  REQUIRE(run_cli(dir, "--out part affinity --data data --alpha 4 --num-subsets 100") == 0);
  CHECK(slurp(dir / "cli.log").find("resuming at subset 40") != std::string::npos);
  CHECK(same_tree(dir / "clean", dir / "part"));
}

TEST_CASE("config file values apply and flags override them") {
  const auto dir = testing::scratch("cli_config");
  taskaff::io::write_text(dir / "cfg.json", R"({"seed": 4, "generate": {"tasks": 6, "groups": 3, "dim": 4,
      "nodes": 60, "observed": 40}})");
  REQUIRE(run_cli(dir, "--config cfg.json --out a generate") == 0);
  REQUIRE(run_cli(dir, "--config cfg.json --out b generate --groups 2") == 0);
  std::istringstream a(slurp(dir / "a" / "meta.json")), b(slurp(dir / "b" / "meta.json"));
  const auto ja = nlohmann::json::parse(a), jb = nlohmann::json::parse(b);
  CHECK(ja["config"]["seed"] == 4);
  CHECK(ja["config"]["num_groups"] == 3);
  CHECK(jb["config"]["num_groups"] == 2);
  CHECK(jb["config"]["num_tasks"] == 6);
  std::istringstream m(slurp(dir / "b" / "manifest.json"));
  const auto manifest = nlohmann::json::parse(m);
  CHECK(manifest["config"]["generate"]["groups"] == "2");
  CHECK(manifest["outputs"].contains("labels.csv"));
  CHECK(run_cli(dir, "--config missing.json --out c generate") == 64);
}

TEST_CASE("budget 1 yields a single group holding every task") {
  const auto dir = testing::scratch("cli_budget");
  REQUIRE(run_cli(dir, "--out data generate --tasks 8 --groups 2 --dim 4 --nodes 80 --observed 60") == 0);
  REQUIRE(run_cli(dir, "--out aff affinity --data data --alpha 3 --num-subsets 40") == 0);
  REQUIRE(run_cli(dir, "--out cl cluster --affinity aff --budget 1") == 0);
  const auto g = taskaff::load_grouping(dir / "cl" / "grouping.json");
  REQUIRE(g.groups.size() == 1);
  CHECK(g.groups[0] == taskaff::TaskSubset{0, 1, 2, 3, 4, 5, 6, 7});
}

TEST_CASE("end-to-end planted pipeline recovers the groups") {
  const auto dir = testing::scratch("cli_pipeline");
  REQUIRE(run_cli(dir, "--out data --seed 3 generate --tasks 20 --groups 4 --noise 0.1") == 0);
  REQUIRE(run_cli(dir, "--out aff --seed 3 --workers 4 affinity --data data --alpha 5 --num-subsets 400") == 0);
  REQUIRE(run_cli(dir, "--out cl cluster --affinity aff --budget 4 --data data") == 0);
  std::istringstream rec(slurp(dir / "cl" / "recovery.json"));
  CHECK(nlohmann::json::parse(rec)["ari"] == doctest::Approx(1.0));
  REQUIRE(run_cli(dir, "--out ev evaluate --data data --grouping cl/grouping.json") == 0);
  std::istringstream ev(slurp(dir / "ev" / "evaluation.json"));
  const auto e = nlohmann::json::parse(ev);
  CHECK(e["objective"].get<double>() >= e["single_group_objective"].get<double>());
  REQUIRE(run_cli(dir, "--out nt predict-nt --data data --affinity aff --held-out 60") == 0);
  CHECK(fs::exists(dir / "nt" / "held_out_examples.csv"));
  // the training-row closed form matches a train-mask affinity run
  REQUIRE(run_cli(dir, "--out afft affinity --data data --alpha 5 --num-subsets 100 --mask train") == 0);
  REQUIRE(run_cli(dir, "--out vt verify-theory --data data --affinity afft") == 0);
  std::istringstream vt(slurp(dir / "vt" / "block_report.json"));
  CHECK(nlohmann::json::parse(vt)["closed_form_max_rel_diff"].get<double>() < 1e-8);
  // a planted dataset has no graph
  CHECK(run_cli(dir, "--out pp ppr-sim --data data --grouping cl/grouping.json") == 2);
}

TEST_CASE("graph datasets: split then ppr-sim") {
  const auto dir = testing::scratch("cli_graph");
  // two 12-node cliques joined by one edge, ids offset to exercise remapping
  std::string edges, cmty;
  for (int b = 0; b < 2; ++b) {
    for (int i = 0; i < 12; ++i)
      for (int j = i + 1; j < 12; ++j)
        edges += std::to_string(100 + 12 * b + i) + " " + std::to_string(100 + 12 * b + j) + "\n";
  }
  edges += "111 112\n";
  for (int b = 0; b < 2; ++b)
    for (int k = 0; k < 2; ++k) {
      for (int i = 0; i < 6; ++i) cmty += std::to_string(100 + 12 * b + 6 * k + i) + (i < 5 ? "\t" : "\n");
    }
  taskaff::io::write_text(dir / "edges.txt", edges);
  taskaff::io::write_text(dir / "cmty.txt", cmty);
  REQUIRE(run_cli(dir, "--out g split --edges edges.txt --communities cmty.txt --top-k 4") == 0);
  taskaff::io::write_text(dir / "grouping.json", R"({"groups": [[0, 1], [2, 3]], "target_group": [0, 0, 1, 1],
      "assignments": [], "budget": 2, "objective": null, "per_task_scores": []})");
  REQUIRE(run_cli(dir, "--out s ppr-sim --data g --grouping grouping.json") == 0);
  std::istringstream sim(slurp(dir / "s" / "similarity.json"));
  const auto j = nlohmann::json::parse(sim);
  CHECK(j["within_mean"].get<double>() > j["between_mean"].get<double>());
  CHECK(run_cli(dir, "--out g2 split --edges edges.txt --communities cmty.txt --top-k 9") == 2);
}

TEST_CASE("one subset with the coverage guard off fills exactly alpha^2 counts") {
  const auto dir = testing::scratch("cli_one_subset");
  REQUIRE(run_cli(dir, "--out data generate --tasks 8 --groups 2 --dim 4 --nodes 80 --observed 60") == 0);
  REQUIRE(run_cli(dir, "--out aff affinity --data data --alpha 3 --num-subsets 1 --min-coverage 0") == 0);
  const auto counts = taskaff::io::read_index_matrix_csv(dir / "aff" / "counts.csv");
  CHECK(counts.sum() == 9);
  CHECK(counts.maxCoeff() == 1);
}
