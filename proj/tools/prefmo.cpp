// Command-line front end: simulated experiments, calibration and the
// interactive session server.

#include <csignal>
#include <iostream>

#include "CLI11.hpp"
#include "prefmo/finite_bayes.hpp"
#include "prefmo/runner.hpp"
#include "prefmo/service.hpp"

namespace {

httplib::Server* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

int report(const prefmo::Error& e) {
  nlohmann::json body{{"code", prefmo::to_string(e.kind())}, {"message", e.what()}};
  if (!e.field().empty()) body["field"] = e.field();
  std::cerr << body.dump() << "\n";
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preferential multi-objective Bayesian optimization"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run a simulated experiment from a JSON config");
  std::string config_path;
  int workers = 1;
  std::string out_dir;
  run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--workers", workers, "Concurrent replications")->check(CLI::PositiveNumber);
  run->add_option("--out", out_dir, "Output directory (overrides the config)");

  auto* summarize = app.add_subcommand("summarize", "Rebuild summary CSVs from traces");
  std::string in_dir;
  summarize->add_option("--in", in_dir, "Experiment output directory")->required()->check(CLI::ExistingDirectory);

  auto* calibrate = app.add_subcommand("calibrate", "Calibrate simulated-DM noise for a problem");
  std::string problem;
  std::uint64_t seed = 0;
  double rate = 0.2, top = 0.01;
  calibrate->add_option("--problem", problem, "Problem name")->required();
  calibrate->add_option("--seed", seed, "Master seed");
  calibrate->add_option("--rate", rate, "Target mistake rate");
  calibrate->add_option("--top", top, "Top fraction of designs compared");

  auto* counter = app.add_subcommand("counterexample", "Exact qEI counterexample trace (JSON lines)");
  double s = 0.2, lambda = 1.0;
  int iterations = 500;
  counter->add_option("--s", s, "Prior mass s in (0, 1/3)");
  counter->add_option("--lambda", lambda, "Likelihood scale");
  counter->add_option("--iterations", iterations, "Number of queries");
  counter->add_option("--seed", seed, "Seed");

  auto* serve = app.add_subcommand("serve", "Serve interactive sessions over HTTP");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string session_dir = "sessions";
  std::string static_dir;
  serve->add_option("--host", host, "Bind address")->envname("PREFMO_HOST");
  serve->add_option("--port", port, "Port")->envname("PREFMO_PORT");
  serve->add_option("--sessions", session_dir, "Session persistence directory")->envname("PREFMO_SESSIONS");
  serve->add_option("--static", static_dir, "UI bundle directory")->envname("PREFMO_STATIC");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto config = prefmo::load_experiment(config_path);
      if (!out_dir.empty()) config.output_dir = out_dir;
      const auto outcome = prefmo::run_experiment(config, workers);
      for (const auto& p : outcome.policies) {
        const auto& last = p.rows.empty() ? prefmo::SummaryRow{} : p.rows.back();
        std::cout << p.policy << ": n=" << p.effective_n << " final mean hv=" << last.mean << " [" << last.lo << ", "
                  << last.hi << "]";
        if (!p.failures.empty()) std::cout << " failures=" << p.failures.size();
        std::cout << "\n";
      }
      return outcome.all_succeeded() ? 0 : 1;
    }
    if (*summarize) {
      for (const auto& p : prefmo::summarize_directory(in_dir))
        std::cout << p.policy << ": n=" << p.effective_n << " rows=" << p.rows.size() << "\n";
      return 0;
    }
    if (*calibrate) {
      const auto& prob = prefmo::get_problem(problem);
      const auto noise = prefmo::calibrate_profile(prob, rate, top, prefmo::derive_seed(seed, {prefmo::stream::calibration}));
      std::cout << nlohmann::json{{"problem", problem},
                                  {"seed", seed},
                                  {"lambda", std::vector<double>(noise.lambda.data(), noise.lambda.data() + noise.lambda.size())}}
                       .dump()
                << "\n";
      return 0;
    }
    if (*counter) {
      std::cout << prefmo::counterexample_jsonl(prefmo::run_counterexample(s, lambda, iterations, seed));
      return 0;
    }
    if (*serve) {
      prefmo::SessionManager sessions{std::filesystem::path(session_dir)};
      httplib::Server server;
      prefmo::register_routes(server, sessions,
                              static_dir.empty() ? std::nullopt : std::optional<std::filesystem::path>(static_dir));
      g_server = &server;
      std::signal(SIGINT, stop_server);
      std::signal(SIGTERM, stop_server);
      std::cerr << "listening on http://" << host << ":" << port << "\n";
      if (!server.listen(host, port)) {
        std::cerr << "cannot bind " << host << ":" << port << "\n";
        return 1;
      }
      return 0;
    }
  } catch (const prefmo::Error& e) {
    return report(e);
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"code", "internal"}, {"message", e.what()}}.dump() << "\n";
    return 2;
  }
  return 0;
}
