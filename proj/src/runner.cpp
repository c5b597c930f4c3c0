#include "prefmo/runner.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "prefmo/metrics.hpp"

namespace prefmo {
namespace fs = std::filesystem;
namespace {

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string policy_label(const PolicyConfig& p) { return p.name + "_q" + std::to_string(p.q); }

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::config, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double min_eigenvalue(const Eigen::MatrixXd& cov) {
  if (cov.rows() == 0) return 0.0;
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cov, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

nlohmann::json record_json(const TraceRecord& r) {
  nlohmann::json response;
  if (r.scalarized) {
    response = {{"winner", r.response.winners.at(0)}};
  } else {
    response = to_json(r.response);
  }
  auto values = nlohmann::json::array();
  for (const auto& v : r.values) values.push_back(v.empty() ? nlohmann::json(nullptr) : nlohmann::json(v));
  return {{"iter", r.iter},   {"hv", r.hv},       {"n_shown", r.n_shown},
          {"query", to_json(r.query)}, {"response", response}, {"values", values}};
}

}  // namespace

// ---- config ------------------------------------------------------------------

void ExperimentConfig::validate() const {
  const auto& problem_def = get_problem(problem);
  if (policies.empty()) throw Error(ErrorKind::config, "at least one policy is required", "policies");
  for (const auto& p : policies) {
    p.validate();
    if (p.name == "pbo-dts-if") {
      for (bool o : observable)
        if (o) throw Error(ErrorKind::config, "pbo-dts-if uses scalarized feedback only", "observable");
    }
  }
  if (q < 2) throw Error(ErrorKind::config, "q must be at least 2", "q");
  if (n_init_queries && *n_init_queries < 1)
    throw Error(ErrorKind::config, "n_init_queries must be positive", "n_init_queries");
  if (n_iterations < 0) throw Error(ErrorKind::config, "n_iterations must be non-negative", "n_iterations");
  if (n_replications < 1) throw Error(ErrorKind::config, "n_replications must be positive", "n_replications");
  if (!(mistake_rate > 0.0 && mistake_rate < 0.5))
    throw Error(ErrorKind::config, "mistake_rate must lie in (0, 0.5)", "noise.mistake_rate");
  if (!(top_fraction > 0.0 && top_fraction < 1.0))
    throw Error(ErrorKind::config, "top_fraction must lie in (0, 1)", "noise.top_fraction");
  if (!observable.empty() && static_cast<int>(observable.size()) != problem_def.m)
    throw Error(ErrorKind::config, "observable map length differs from m", "observable");
  if (lambda && lambda->size() != problem_def.m) throw Error(ErrorKind::config, "lambda length differs from m", "noise.lambda");
  if (observation_noise && observation_noise->size() != problem_def.m)
    throw Error(ErrorKind::config, "observation_noise length differs from m", "observation_noise");
  if (refit_every < 1) throw Error(ErrorKind::config, "refit_every must be positive", "fit.refit_every");
  if (fit_restarts < 1) throw Error(ErrorKind::config, "fit restarts must be positive", "fit.restarts");
}

nlohmann::json to_json(const ExperimentConfig& c) {
  auto policies = nlohmann::json::array();
  for (const auto& p : c.policies) policies.push_back(to_json(p));
  nlohmann::json j{{"problem", c.problem},
                   {"policies", policies},
                   {"q", c.q},
                   {"n_iterations", c.n_iterations},
                   {"n_replications", c.n_replications},
                   {"seed", c.seed},
                   {"noise", {{"mistake_rate", c.mistake_rate},
                              {"top_fraction", c.top_fraction},
                              {"design_samples", c.calibration.design_samples},
                              {"comparisons", c.calibration.comparisons},
                              {"bisection_steps", c.calibration.bisection_steps}}},
                   {"fit", {{"restarts", c.fit_restarts}, {"max_iter", c.fit_max_iter}, {"refit_every", c.refit_every}}},
                   {"output_dir", c.output_dir.string()}};
  if (c.n_init_queries) j["n_init_queries"] = *c.n_init_queries;
  if (c.lambda) j["noise"]["lambda"] = to_vector(*c.lambda);
  if (!c.observable.empty()) j["observable"] = c.observable;
  if (c.observation_noise) j["observation_noise"] = to_vector(*c.observation_noise);
  return j;
}

ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  try {
    ExperimentConfig c;
    c.problem = j.value("problem", c.problem);
    c.q = j.value("q", c.q);
    std::vector<nlohmann::json> raw;
    if (j.contains("policies")) {
      for (const auto& p : j["policies"]) raw.push_back(p);
    } else if (j.contains("policy")) {
      raw.push_back(j["policy"].is_string() ? nlohmann::json{{"name", j["policy"]}} : j["policy"]);
    }
    if (!raw.empty()) c.policies.clear();
    for (auto p : raw) {
      if (p.is_string()) p = nlohmann::json{{"name", p}};
      if (!p.contains("q")) p["q"] = c.q;
      if (!p.contains("rho") && j.contains("scalarization")) p["rho"] = j["scalarization"].value("rho", kDefaultRho);
      c.policies.push_back(policy_from_json(p));
    }
    if (raw.empty()) c.policies.front().q = c.q;
    if (j.contains("n_init_queries") && !j["n_init_queries"].is_null()) c.n_init_queries = j["n_init_queries"].get<int>();
    c.n_iterations = j.value("n_iterations", c.n_iterations);
    c.n_replications = j.value("n_replications", c.n_replications);
    c.seed = j.value("seed", c.seed);
    if (j.contains("noise")) {
      const auto& n = j["noise"];
      c.mistake_rate = n.value("mistake_rate", c.mistake_rate);
      c.top_fraction = n.value("top_fraction", c.top_fraction);
      c.calibration.design_samples = n.value("design_samples", c.calibration.design_samples);
      c.calibration.comparisons = n.value("comparisons", c.calibration.comparisons);
      c.calibration.bisection_steps = n.value("bisection_steps", c.calibration.bisection_steps);
      if (n.contains("lambda") && !n["lambda"].is_null()) c.lambda = from_vector(n["lambda"].get<std::vector<double>>());
    }
    if (j.contains("observable")) c.observable = j["observable"].get<std::vector<bool>>();
    if (j.contains("observation_noise") && !j["observation_noise"].is_null())
      c.observation_noise = from_vector(j["observation_noise"].get<std::vector<double>>());
    if (j.contains("fit")) {
      const auto& f = j["fit"];
      c.fit_restarts = f.value("restarts", c.fit_restarts);
      c.fit_max_iter = f.value("max_iter", c.fit_max_iter);
      c.refit_every = f.value("refit_every", c.refit_every);
    }
    c.output_dir = j.value("output_dir", c.output_dir.string());
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::config, std::string("malformed experiment config: ") + e.what());
  }
}

ExperimentConfig load_experiment(const fs::path& path) {
  try {
    return experiment_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::config, std::string("config is not valid JSON: ") + e.what());
  }
}

// ---- traces ------------------------------------------------------------------

std::vector<double> RunTrace::hv_by_iteration() const {
  std::vector<double> out;
  for (const auto& r : records) {
    if (r.iter >= static_cast<int>(out.size())) out.resize(static_cast<std::size_t>(r.iter) + 1, 0.0);
    out[static_cast<std::size_t>(r.iter)] = r.hv;
  }
  return out;
}

std::string RunTrace::to_jsonl() const {
  std::string out;
  for (const auto& r : records) out += record_json(r).dump() + "\n";
  return out;
}

std::uint64_t replication_seed(std::uint64_t master, int replication) {
  return derive_seed(master, {stream::replication, static_cast<std::uint64_t>(replication)});
}

NoiseProfile experiment_noise(const ExperimentConfig& config) {
  if (config.lambda) return NoiseProfile{*config.lambda};
  return calibrate_profile(get_problem(config.problem), config.mistake_rate, config.top_fraction,
                           derive_seed(config.seed, {stream::calibration}), config.calibration);
}

Eigen::VectorXd experiment_observation_noise(const ExperimentConfig& config) {
  if (config.observation_noise) return *config.observation_noise;
  const auto& problem = get_problem(config.problem);
  const auto designs = sample_uniform_designs(problem.space, 10000, derive_seed(config.seed, {stream::observation}));
  const auto values = evaluate_rows(problem.evaluate, problem.m, designs);
  return 0.01 * (values.colwise().maxCoeff() - values.colwise().minCoeff()).transpose();
}

RunTrace run_replication(const ExperimentConfig& config, const PolicyConfig& policy, int replication,
                         const NoiseProfile& noise, const Eigen::VectorXd& observation_noise) {
  using clock = std::chrono::steady_clock;
  const auto& problem = get_problem(config.problem);
  const int m = problem.m;
  const int q = policy.q;
  const bool scalarized = policy.name == "pbo-dts-if";
  const std::uint64_t seed = replication_seed(config.seed, replication);

  RunTrace trace;
  trace.policy = policy_label(policy);
  trace.replication = replication;
  trace.seed = seed;
  trace.lambda = noise.lambda;

  InteractionDataset data(q, m);
  for (int j = 0; j < m; ++j)
    if (j < static_cast<int>(config.observable.size()) && config.observable[static_cast<std::size_t>(j)])
      data.set_observable(j);
  InteractionDataset scalar_data(q, 1);
  std::vector<ObjectiveVector> front;
  int n_shown = 0;

  // Shows `query` to the simulated DM as interaction number `k`.
  auto interact = [&](const Query& query, int k, int iter, clock::time_point started) {
    TraceRecord rec;
    rec.iter = iter;
    rec.query = query;
    const auto ku = static_cast<std::uint64_t>(k);
    if (scalarized) {
      Rng theta_rng = make_rng(seed, {stream::theta, ku});
      const auto w = sample_weights(theta_rng, m);
      Rng rng = make_rng(seed, {stream::response, ku});
      rec.response.winners = {respond_scalarized(query, problem.evaluate, noise, w, rng)};
      rec.scalarized = true;
      scalar_data.append(query, rec.response);
    } else {
      Rng rng = make_rng(seed, {stream::response, ku});
      rec.response = respond(query, problem.evaluate, noise, rng, data.observable);
      rec.values.resize(static_cast<std::size_t>(m));
      Rng obs_rng = make_rng(seed, {stream::observation, ku});
      for (int j = 0; j < m; ++j) {
        if (!data.is_observable(j)) continue;
        for (const auto& x : query.designs) {
          const double y = problem.evaluate(x)[j] + observation_noise[j] * standard_normal(obs_rng);
          rec.values[static_cast<std::size_t>(j)].push_back(y);
          data.observe(j, x, y);
        }
      }
      data.append(query, rec.response);
    }
    for (const auto& x : query.designs) front.push_back(problem.evaluate(x));
    std::vector<ObjectiveVector> kept;
    for (auto i : non_dominated_filter(front)) kept.push_back(front[i]);
    front = std::move(kept);
    n_shown += query.size();
    rec.hv = hypervolume_exact(front, problem.hv_reference);
    rec.n_shown = n_shown;
    rec.seconds = std::chrono::duration<double>(clock::now() - started).count();
    trace.records.push_back(std::move(rec));
  };

  const int n_init = config.init_queries(problem.dim());
  for (int k = 0; k < n_init; ++k) {
    const auto started = clock::now();
    interact(random_next_query(problem.space, q, derive_seed(seed, {stream::init, static_cast<std::uint64_t>(k)})), k, 0,
             started);
  }

  const int n_models = scalarized ? 1 : m;
  std::vector<std::optional<KernelConfig>> warm_kernel(static_cast<std::size_t>(n_models));
  std::vector<std::optional<double>> warm_noise(static_cast<std::size_t>(n_models));
  for (int n = 1; n <= config.n_iterations; ++n) {
    const auto started = clock::now();
    const auto fit_seed = derive_seed(seed, {stream::fit, static_cast<std::uint64_t>(n)});
    const bool full_search = (n - 1) % config.refit_every == 0;
    std::vector<LatentPosterior> posteriors;
    if (policy.name != "random") {
      for (int j = 0; j < n_models; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        FitRecord fr;
        fr.iter = n;
        fr.objective = j;
        if (!scalarized && data.is_observable(j)) {
          RegressionFitOptions opts;
          opts.warm_kernel = warm_kernel[ju];
          opts.warm_noise = warm_noise[ju];
          if (!full_search && warm_noise[ju]) {
            opts.restarts = 1;
            opts.max_iter = 0;
          }
          const auto model = fit_regression(data.observations[ju], opts, derive_seed(fit_seed, {ju}));
          warm_kernel[ju] = model.kernel;
          warm_noise[ju] = model.noise_variance;
          fr.noise = model.noise_variance;
          fr.lengthscales = model.kernel.lengthscales;
          fr.log_marginal_likelihood = model.log_marginal_likelihood;
          fr.min_cov_eigenvalue = min_eigenvalue(model.latent_cov);
          posteriors.push_back(model.posterior());
        } else {
          PreferenceFitOptions opts;
          opts.restarts = config.fit_restarts;
          opts.max_iter = config.fit_max_iter;
          opts.warm_kernel = warm_kernel[ju];
          opts.warm_lambda = warm_noise[ju];
          opts.fixed_hyperparameters = !full_search && warm_noise[ju].has_value();
          const auto model =
              fit_preference(scalarized ? scalar_data : data, scalarized ? 0 : j, opts, derive_seed(fit_seed, {ju}));
          warm_kernel[ju] = model.kernel;
          warm_noise[ju] = model.noise_scale;
          fr.noise = model.noise_scale;
          fr.lengthscales = model.kernel.lengthscales;
          fr.log_marginal_likelihood = model.log_marginal_likelihood;
          fr.min_cov_eigenvalue = min_eigenvalue(model.laplace_cov);
          posteriors.push_back(model.posterior());
        }
        trace.fits.push_back(std::move(fr));
      }
    }
    std::vector<const Posterior*> models;
    for (const auto& p : posteriors) models.push_back(&p);
    const auto shown = data.records.empty() ? scalar_data.shown_designs() : data.shown_designs();
    const auto query = propose_query(policy, models, problem.space, shown,
                                     derive_seed(seed, {stream::policy, static_cast<std::uint64_t>(n)}));
    interact(query, n_init + n - 1, n, started);
  }
  return trace;
}

// ---- aggregation ---------------------------------------------------------------

std::vector<SummaryRow> aggregate_hv(const std::vector<std::vector<double>>& traces) {
  if (traces.empty()) return {};
  const auto len = traces.front().size();
  for (const auto& t : traces)
    if (t.size() != len) throw Error(ErrorKind::data, "traces have different lengths");
  const double n = static_cast<double>(traces.size());
  std::vector<SummaryRow> rows;
  for (std::size_t i = 0; i < len; ++i) {
    double mean = 0.0;
    for (const auto& t : traces) mean += t[i];
    mean /= n;
    double ss = 0.0;
    for (const auto& t : traces) ss += (t[i] - mean) * (t[i] - mean);
    const double se = traces.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    rows.push_back({static_cast<int>(i), mean, mean - 1.96 * se, mean + 1.96 * se});
  }
  return rows;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "iter,mean_hv,lo,hi\n";
  for (const auto& r : rows) out << r.iter << ',' << r.mean << ',' << r.lo << ',' << r.hi << '\n';
  return out.str();
}

bool ExperimentOutcome::all_succeeded() const {
  for (const auto& p : policies)
    if (!p.failures.empty()) return false;
  return true;
}

void write_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::config, "cannot write " + tmp.string());
    out << contents;
    if (!out) throw Error(ErrorKind::config, "failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

ExperimentOutcome run_experiment(const ExperimentConfig& config, int workers) {
  config.validate();
  ExperimentOutcome outcome;
  const auto noise = experiment_noise(config);
  const auto obs_noise = experiment_observation_noise(config);
  outcome.lambda = noise.lambda;

  auto snapshot = to_json(config);
  snapshot["noise"]["lambda"] = to_vector(noise.lambda);
  snapshot["observation_noise"] = to_vector(obs_noise);
  write_atomic(config.output_dir / "config.json", snapshot.dump(2) + "\n");

  struct Job {
    std::size_t policy;
    int replication;
  };
  std::vector<Job> jobs;
  for (std::size_t p = 0; p < config.policies.size(); ++p)
    for (int r = 0; r < config.n_replications; ++r) jobs.push_back({p, r});

  std::vector<std::vector<std::optional<std::vector<double>>>> hv(
      config.policies.size(), std::vector<std::optional<std::vector<double>>>(static_cast<std::size_t>(config.n_replications)));
  std::vector<std::vector<std::string>> failures(config.policies.size());
  std::mutex failure_mutex;
  std::atomic<std::size_t> next{0};

  auto worker = [&]() {
    for (std::size_t idx = next++; idx < jobs.size(); idx = next++) {
      const auto job = jobs[idx];
      const auto& policy = config.policies[job.policy];
      const auto dir = config.output_dir / policy_label(policy);
      const auto stem = "rep_" + std::to_string(job.replication);
      try {
        const auto trace = run_replication(config, policy, job.replication, noise, obs_noise);
        write_atomic(dir / (stem + ".jsonl"), trace.to_jsonl());
        auto fits = std::string();
        for (const auto& f : trace.fits)
          fits += nlohmann::json{{"iter", f.iter},
                                 {"objective", f.objective},
                                 {"noise", f.noise},
                                 {"lengthscales", to_vector(f.lengthscales)},
                                 {"log_marginal_likelihood", f.log_marginal_likelihood},
                                 {"min_cov_eigenvalue", f.min_cov_eigenvalue}}
                      .dump() +
                  "\n";
        write_atomic(dir / (stem + ".fits.jsonl"), fits);
        std::vector<double> seconds;
        for (const auto& r : trace.records) seconds.push_back(r.seconds);
        write_atomic(dir / (stem + ".timing.json"), nlohmann::json{{"seconds", seconds}}.dump() + "\n");
        hv[job.policy][static_cast<std::size_t>(job.replication)] = trace.hv_by_iteration();
      } catch (const std::exception& e) {
        const auto* err = dynamic_cast<const Error*>(&e);
        const nlohmann::json record{{"code", err ? to_string(err->kind()) : "internal"},
                                    {"message", e.what()},
                                    {"replication", job.replication}};
        try {
          write_atomic(dir / (stem + ".error.json"), record.dump() + "\n");
        } catch (...) {
        }
        std::lock_guard lock(failure_mutex);
        failures[job.policy].push_back(stem + ": " + e.what());
      }
    }
  };

  const int n_threads = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
  std::vector<std::thread> threads;
  for (int t = 1; t < n_threads; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  auto summary = nlohmann::json::object();
  for (std::size_t p = 0; p < config.policies.size(); ++p) {
    PolicyOutcome po;
    po.policy = policy_label(config.policies[p]);
    std::vector<std::vector<double>> ok;
    for (const auto& t : hv[p])
      if (t) ok.push_back(*t);
    po.effective_n = static_cast<int>(ok.size());
    po.rows = aggregate_hv(ok);
    po.failures = failures[p];
    std::sort(po.failures.begin(), po.failures.end());
    write_atomic(config.output_dir / po.policy / "summary.csv", summary_csv(po.rows));
    summary[po.policy] = {{"effective_n", po.effective_n}, {"failures", po.failures}};
    outcome.policies.push_back(std::move(po));
  }
  write_atomic(config.output_dir / "summary.json", summary.dump(2) + "\n");
  return outcome;
}

std::vector<PolicyOutcome> summarize_directory(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::config, "not a directory: " + dir.string());
  std::vector<fs::path> policy_dirs;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory()) policy_dirs.push_back(entry.path());
  std::sort(policy_dirs.begin(), policy_dirs.end());

  std::vector<PolicyOutcome> out;
  for (const auto& pdir : policy_dirs) {
    PolicyOutcome po;
    po.policy = pdir.filename().string();
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(pdir)) {
      const auto name = entry.path().filename().string();
      if (name.rfind("rep_", 0) != 0) continue;
      if (name.size() > 11 && name.ends_with(".error.json")) po.failures.push_back(name);
      const auto stem = entry.path().stem().string();
      if (entry.path().extension() == ".jsonl" && stem.find('.') == std::string::npos) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::sort(po.failures.begin(), po.failures.end());
    std::vector<std::vector<double>> traces;
    for (const auto& f : files) {
      std::istringstream lines(read_file(f));
      std::vector<double> hv;
      for (std::string line; std::getline(lines, line);) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        const auto iter = j.at("iter").get<std::size_t>();
        if (iter >= hv.size()) hv.resize(iter + 1, 0.0);
        hv[iter] = j.at("hv").get<double>();
      }
      traces.push_back(std::move(hv));
    }
    if (traces.empty() && po.failures.empty()) continue;
    po.effective_n = static_cast<int>(traces.size());
    po.rows = aggregate_hv(traces);
    write_atomic(pdir / "summary.csv", summary_csv(po.rows));
    out.push_back(std::move(po));
  }
  return out;
}

}  // namespace prefmo
