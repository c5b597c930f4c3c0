#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "prefmo/metrics.hpp"
#include "prefmo/runner.hpp"

using namespace prefmo;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("prefmo_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

PolicyConfig quick(const std::string& name) {
  PolicyConfig c;
  c.name = name;
  if (name == "dsts-m") c.delta = 0.5;
  c.inner = {2, 20, 32};
  c.mc_samples = 8;
  c.features = 200;
  return c;
}

ExperimentConfig quick_config(const std::string& problem, std::vector<PolicyConfig> policies, int iterations) {
  ExperimentConfig c;
  c.problem = problem;
  c.policies = std::move(policies);
  c.n_iterations = iterations;
  c.n_replications = 2;
  c.seed = 17;
  c.lambda = Eigen::VectorXd::Constant(get_problem(problem).m, 0.05);
  c.fit_restarts = 1;
  c.fit_max_iter = 10;
  return c;
}

}  // namespace

TEST_CASE("replication with no iterations holds only the initial data") {
  auto c = quick_config("dtlz2", {quick("dsts")}, 0);
  const auto trace = run_replication(c, c.policies.front(), 0, NoiseProfile{*c.lambda}, Eigen::Vector2d::Zero());
  CHECK(trace.records.size() == 8);
  CHECK(trace.fits.empty());
  for (const auto& r : trace.records) CHECK(r.iter == 0);
  CHECK(trace.hv_by_iteration().size() == 1);
  CHECK(trace.records.back().n_shown == 16);
}

TEST_CASE("hypervolumes in a trace can be recomputed from the shown designs") {
  auto c = quick_config("dtlz2", {quick("random")}, 5);
  const auto& p = get_problem("dtlz2");
  const auto trace = run_replication(c, c.policies.front(), 1, NoiseProfile{*c.lambda}, Eigen::Vector2d::Zero());
  std::istringstream lines(trace.to_jsonl());
  std::vector<ObjectiveVector> shown;
  std::size_t count = 0;
  for (std::string line; std::getline(lines, line); ++count) {
    const auto j = nlohmann::json::parse(line);
    for (const auto& d : j.at("query").at("designs")) shown.push_back(p.evaluate(design_from_json(d)));
    CHECK(j.at("hv").get<double>() == hypervolume_exact(shown, p.hv_reference));
    CHECK(j.at("n_shown") == shown.size());
    if (count > 0) CHECK(j.at("hv").get<double>() >= trace.records[count - 1].hv);
  }
  CHECK(count == trace.records.size());
}

TEST_CASE("experiments are byte-identical across runs") {
  auto c = quick_config("dtlz2", {quick("dsts"), quick("random"), quick("dsts-m"), quick("pbo-dts-if"), quick("qparego"),
                                  quick("qehvi")},
                        2);
  c.n_replications = 1;
  const auto dir_a = scratch_dir("det_a");
  c.output_dir = dir_a;
  const auto a = run_experiment(c);
  c.output_dir = scratch_dir("det_b");
  const auto b = run_experiment(c, 2);
  CHECK(a.all_succeeded());
  CHECK(b.all_succeeded());
  for (const auto& pol : c.policies) {
    const auto label = pol.name + "_q2";
    const auto fa = dir_a / label / "rep_0.jsonl";
    const auto fb = c.output_dir / label / "rep_0.jsonl";
    REQUIRE(fs::exists(fa));
    CHECK(slurp(fa) == slurp(fb));
    CHECK(slurp(fa).find("seconds") == std::string::npos);
  }
}

TEST_CASE("policies share the initial data of a replication") {
  auto c = quick_config("dtlz2", {quick("dsts"), quick("random")}, 1);
  const NoiseProfile noise{*c.lambda};
  const auto a = run_replication(c, c.policies[0], 0, noise, Eigen::Vector2d::Zero());
  const auto b = run_replication(c, c.policies[1], 0, noise, Eigen::Vector2d::Zero());
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(a.records[i].query.designs == b.records[i].query.designs);
    CHECK(a.records[i].response.winners == b.records[i].response.winners);
  }
}

TEST_CASE("mixed latent and observable objectives") {
  auto c = quick_config("vehicle_safety", {quick("dsts")}, 2);
  c.observable = {false, true, false};
  const auto obs = experiment_observation_noise(c);
  CHECK(obs.size() == 3);
  CHECK((obs.array() > 0.0).all());
  const auto trace = run_replication(c, c.policies.front(), 0, NoiseProfile{*c.lambda}, obs);
  CHECK(trace.fits.size() == 6);
  for (const auto& r : trace.records) {
    CHECK(r.response.winners[1] == 0);
    CHECK(r.response.winners[0] >= 1);
    CHECK(r.values[1].size() == 2);
    CHECK(r.values[0].empty());
  }
  for (const auto& f : trace.fits) CHECK(f.min_cov_eigenvalue >= -1e-8);
}

TEST_CASE("aggregation") {
  const auto rows = aggregate_hv({{1.0, 2.0}, {3.0, 4.0}, {2.0, 6.0}});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].mean == doctest::Approx(2.0));
  CHECK(rows[0].lo == doctest::Approx(2.0 - 1.96 / std::sqrt(3.0)));
  CHECK(rows[0].hi == doctest::Approx(2.0 + 1.96 / std::sqrt(3.0)));
  CHECK(rows[1].mean == doctest::Approx(4.0));
  CHECK(rows[1].hi - rows[1].mean == doctest::Approx(1.96 * 2.0 / std::sqrt(3.0)));
  CHECK_THROWS_AS(aggregate_hv({{1.0}, {1.0, 2.0}}), Error);
  CHECK(summary_csv(rows).rfind("iter,mean_hv,lo,hi\n", 0) == 0);
}

TEST_CASE("summaries rebuild from a run directory") {
  auto c = quick_config("dtlz2", {quick("random")}, 3);
  c.output_dir = scratch_dir("summary");
  const auto outcome = run_experiment(c);
  const auto rebuilt = summarize_directory(c.output_dir);
  REQUIRE(rebuilt.size() == 1);
  CHECK(rebuilt[0].effective_n == 2);
  REQUIRE(rebuilt[0].rows.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(rebuilt[0].rows[i].mean == doctest::Approx(outcome.policies[0].rows[i].mean));
  const auto snapshot = nlohmann::json::parse(slurp(c.output_dir / "config.json"));
  CHECK(snapshot["noise"]["lambda"].size() == 2);
  CHECK(fs::exists(c.output_dir / "random_q2" / "rep_1.timing.json"));
  CHECK_THROWS_AS(summarize_directory(c.output_dir / "missing"), Error);
}

TEST_CASE("experiment config") {
  const auto c = experiment_from_json(nlohmann::json::parse(R"({
    "problem": "dtlz1", "q": 3, "policies": ["dsts", {"name": "dsts-m", "q": 2}],
    "n_iterations": 5, "fit": {"refit_every": 4}, "scalarization": {"rho": 0.1}
  })"));
  CHECK(c.init_queries(6) == 14);
  REQUIRE(c.policies.size() == 2);
  CHECK(c.policies[0].q == 3);
  CHECK(c.policies[0].rho == 0.1);
  CHECK(c.policies[1].delta == 0.05);
  CHECK(c.refit_every == 4);
  CHECK(to_json(experiment_from_json(to_json(c))) == to_json(c));

  auto expect_config_error = [](const char* text) {
    try {
      experiment_from_json(nlohmann::json::parse(text));
      FAIL("expected a config error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::config);
    }
  };
  expect_config_error(R"({"policies": ["pbo-dts-if"], "observable": [true, false]})");
  expect_config_error(R"({"observable": [true]})");
  expect_config_error(R"({"n_replications": 0})");
  expect_config_error(R"({"policies": ["nope"]})");
  expect_config_error(R"({"noise": {"mistake_rate": 0.7}})");
  expect_config_error(R"({"n_iterations": "ten"})");

  const auto path = fs::temp_directory_path() / "prefmo_bad_config.json";
  std::ofstream(path) << "{not json";
  CHECK_THROWS_AS(load_experiment(path), Error);
}
