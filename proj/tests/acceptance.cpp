// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Long experiments write under --out; --reuse
// skips a run whose directory already holds a matching config snapshot.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "prefmo/dm_sim.hpp"
#include "prefmo/finite_bayes.hpp"
#include "prefmo/metrics.hpp"
#include "prefmo/runner.hpp"

using namespace prefmo;
namespace fs = std::filesystem;

namespace {

// Tolerances and gates.
constexpr double kMassTol = 1e-12;
constexpr int kSeeds = 30;
constexpr int kSeedsRequired = 27;
constexpr double kConsistencyHigh = 0.95;
constexpr double kConsistencyLow = 0.05;
constexpr double kFrequencyTol = 0.01;
constexpr double kTargetRate = 0.2;
constexpr double kRateTol = 0.01;
constexpr double kMcSigmas = 3.0;
constexpr double kHvPropertyTol = 1e-12;
constexpr double kGradientTol = 1e-4;
constexpr double kPsdFloor = -1e-10;
constexpr double kPriorVarianceTol = 0.15;
constexpr double kDtlzSeconds = 30 * 60;
constexpr double kQ4Seconds = 45 * 60;

struct Line {
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<Line> g_lines;

void emit(const std::string& name, bool pass, const std::string& detail) {
  g_lines.push_back({name, pass, detail});
  std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream ss;
  ss << std::setprecision(precision) << v;
  return ss.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// qEI counterexample --------------------------------------------------------

void check_counterexample(const fs::path& out) {
  const auto t0 = std::chrono::steady_clock::now();
  double worst_mass = 0.0;
  int wrong_choice = 0;
  nlohmann::json seeds = nlohmann::json::array();
  for (int seed = 0; seed < kSeeds; ++seed) {
    const auto trace = run_counterexample(0.2, 1.0, 500, static_cast<std::uint64_t>(seed));
    double seed_worst = 0.0;
    int seed_wrong = 0;
    for (const auto& step : trace.steps) {
      seed_worst = std::max(seed_worst, std::abs(step.mass_34 - 0.8));
      if (step.qei_choice != std::pair<int, int>{2, 3}) ++seed_wrong;
    }
    worst_mass = std::max(worst_mass, seed_worst);
    wrong_choice += seed_wrong;
    seeds.push_back({{"seed", seed},
                     {"truth", trace.truth},
                     {"max_mass_error", seed_worst},
                     {"off_choices", seed_wrong},
                     {"final_p", std::vector<double>(trace.steps.back().p.data(),
                                                     trace.steps.back().p.data() + trace.steps.back().p.size())}});
  }
  const double elapsed = seconds_since(t0);
  const nlohmann::json report{{"s", 0.2}, {"lambda", 1.0}, {"iterations", 500}, {"seeds", seeds},
                              {"max_mass_error", worst_mass}, {"off_choices", wrong_choice}, {"seconds", elapsed}};
  write_atomic(out / "counterexample_report.json", report.dump(2));
  const auto summary = nlohmann::json::parse(slurp(out / "counterexample_report.json"));
  const bool pass = summary["max_mass_error"].get<double>() <= kMassTol && summary["off_choices"] == 0 && elapsed < 5.0;
  emit("qei-counterexample", pass,
       "max |p3+p4-0.8| = " + fmt(worst_mass) + ", steps not choosing (3,4) = " + std::to_string(wrong_choice) +
           ", " + fmt(elapsed, 3) + " s");
}

// Finite consistency --------------------------------------------------------

void check_multi_consistency() {
  const auto space = multi_objective_consistency_instance();
  const auto membership = space.pareto_membership();
  const auto t0 = std::chrono::steady_clock::now();
  int good = 0;
  ConsistencyOptions opts;
  opts.policy = FinitePolicy::dsts_m;
  opts.delta = 0.05;
  for (int seed = 0; seed < kSeeds; ++seed) {
    const int truth = seed % space.size();
    const auto trace = consistency_experiment(space, opts, truth, 3000, static_cast<std::uint64_t>(seed));
    const Eigen::VectorXd last = trace.probability.bottomRows(1).transpose();
    bool ok = true;
    for (int i = 0; i < space.n_designs(); ++i)
      ok = ok && (membership[static_cast<std::size_t>(truth)][static_cast<std::size_t>(i)] ? last[i] > kConsistencyHigh
                                                                                          : last[i] < kConsistencyLow);
    good += ok ? 1 : 0;
  }
  const double elapsed = seconds_since(t0);
  emit("pareto-consistency", good >= kSeedsRequired && elapsed < 120.0,
       std::to_string(good) + "/30 seeds separate optimal designs, " + fmt(elapsed, 3) + " s");
}

void check_single_consistency() {
  const auto space = single_objective_consistency_instance();
  const auto t0 = std::chrono::steady_clock::now();
  int good = 0;
  ConsistencyOptions opts;
  opts.policy = FinitePolicy::dts;
  for (int seed = 0; seed < kSeeds; ++seed) {
    const int truth = seed % space.size();
    Eigen::Index best = 0;
    space.tables[static_cast<std::size_t>(truth)].col(0).maxCoeff(&best);
    const auto trace = consistency_experiment(space, opts, truth, 2000, static_cast<std::uint64_t>(seed));
    good += trace.probability(trace.probability.rows() - 1, best) > kConsistencyHigh ? 1 : 0;
  }
  const double elapsed = seconds_since(t0);
  emit("argmax-consistency", good >= kSeedsRequired && elapsed < 60.0,
       std::to_string(good) + "/30 seeds put > 0.95 on the argmax, " + fmt(elapsed, 3) + " s");
}

// DTLZ2 experiment ----------------------------------------------------------

PolicyConfig policy(const std::string& name, int q) {
  PolicyConfig p;
  p.name = name;
  p.q = q;
  if (name == "dsts-m") p.delta = 0.05;
  return p;
}

struct Dtlz2Run {
  std::map<std::string, PolicyOutcome> outcome;
  std::map<std::string, double> seconds;
  fs::path dir;
};

Dtlz2Run run_dtlz2(const fs::path& out, bool reuse) {
  ExperimentConfig c;
  c.problem = "dtlz2";
  c.policies = {policy("dsts", 2), policy("random", 2), policy("qehvi", 2), policy("dsts-m", 2), policy("dsts", 4)};
  c.n_iterations = 40;
  c.n_replications = 10;
  c.seed = 2024;
  c.output_dir = out / "dtlz2";

  bool fresh = true;
  if (reuse && fs::exists(c.output_dir / "config.json")) {
    auto snapshot = nlohmann::json::parse(slurp(c.output_dir / "config.json"));
    auto expected = to_json(c);
    for (auto* j : {&snapshot, &expected}) {
      j->erase("output_dir");
      j->erase("observation_noise");
      (*j)["noise"].erase("lambda");
    }
    fresh = snapshot != expected;
  }
  if (fresh) {
    fs::remove_all(c.output_dir);
    run_experiment(c);
  } else {
    std::cout << "reusing " << c.output_dir.string() << std::endl;
  }

  Dtlz2Run run;
  run.dir = c.output_dir;
  for (auto& p : summarize_directory(c.output_dir)) run.outcome[p.policy] = p;
  for (const auto& [label, p] : run.outcome) {
    double total = 0.0;
    for (const auto& entry : fs::directory_iterator(c.output_dir / label)) {
      const auto name = entry.path().filename().string();
      if (name.size() < 12 || name.substr(name.size() - 12) != ".timing.json") continue;
      const auto timing = nlohmann::json::parse(slurp(entry.path()));
      for (double s : timing.at("seconds")) total += s;
    }
    run.seconds[label] = total;
  }
  return run;
}

std::string band(const SummaryRow& r) { return fmt(r.mean) + " [" + fmt(r.lo) + ", " + fmt(r.hi) + "]"; }

void check_dtlz2(const Dtlz2Run& run) {
  auto final_row = [&](const std::string& label) -> const SummaryRow* {
    const auto it = run.outcome.find(label);
    if (it == run.outcome.end() || it->second.rows.empty() || it->second.effective_n != 10) return nullptr;
    return &it->second.rows.back();
  };
  const auto* dsts = final_row("dsts_q2");
  const auto* random = final_row("random_q2");
  const auto* qehvi = final_row("qehvi_q2");
  const auto* dsts_m = final_row("dsts-m_q2");
  const auto* dsts4 = final_row("dsts_q4");
  auto secs = [&](const std::string& label) {
    const auto it = run.seconds.find(label);
    return it == run.seconds.end() ? 0.0 : it->second;
  };

  if (dsts && random && qehvi) {
    const double t = secs("dsts_q2") + secs("random_q2") + secs("qehvi_q2");
    const bool pass = dsts->lo > random->hi && dsts->mean >= qehvi->mean && t < kDtlzSeconds;
    emit("dtlz2-ordering", pass,
         "final HV dsts " + band(*dsts) + ", random " + band(*random) + ", qehvi " + band(*qehvi) + ", " +
             fmt(t / 60.0, 3) + " min");
  } else {
    emit("dtlz2-ordering", false, "missing or incomplete replications");
  }

  if (dsts && dsts_m) {
    const double t = secs("dsts-m_q2");
    emit("dsts-m-matches-dsts", dsts_m->mean >= dsts->lo && dsts_m->mean <= dsts->hi && t < kDtlzSeconds,
         "dsts-m " + fmt(dsts_m->mean) + " vs dsts band [" + fmt(dsts->lo) + ", " + fmt(dsts->hi) + "], " +
             fmt(t / 60.0, 3) + " min");
  } else {
    emit("dsts-m-matches-dsts", false, "missing or incomplete replications");
  }

  if (dsts && dsts4) {
    const double se = (dsts->hi - dsts->mean) / 1.96;
    const double t = secs("dsts_q4");
    emit("q4-improves-q2", dsts4->mean >= dsts->mean - se && t < kQ4Seconds,
         "q=4 " + fmt(dsts4->mean) + " vs q=2 " + fmt(dsts->mean) + " - SE " + fmt(se) + ", " + fmt(t / 60.0, 3) +
             " min");
  } else {
    emit("q4-improves-q2", false, "missing or incomplete replications");
  }
}

// Simulated decision-maker --------------------------------------------------

void check_gumbel_softmax() {
  Rng setup = make_rng(2024, {1});
  double worst = 0.0;
  for (int s = 0; s < 5; ++s) {
    const int q = 2 + s % 4;
    const double lambda = 0.05 + 2.0 * uniform01(setup);
    std::vector<double> values(static_cast<std::size_t>(q));
    Query query;
    for (int i = 0; i < q; ++i) {
      values[static_cast<std::size_t>(i)] = standard_normal(setup);
      query.designs.push_back(Design::Constant(1, i));
    }
    const ObjectiveFn f = [&values](const Design& x) {
      return Eigen::VectorXd::Constant(1, values[static_cast<std::size_t>(x[0])]);
    };
    const NoiseProfile noise{Eigen::VectorXd::Constant(1, lambda)};
    Rng rng = make_rng(2024, {2, static_cast<std::uint64_t>(s)});
    std::vector<double> freq(static_cast<std::size_t>(q), 0.0);
    const int draws = 100000;
    for (int k = 0; k < draws; ++k) freq[static_cast<std::size_t>(respond(query, f, noise, rng).winners[0] - 1)] += 1.0;
    double z = 0.0;
    const double top = *std::max_element(values.begin(), values.end());
    for (double v : values) z += std::exp((v - top) / lambda);
    for (int i = 0; i < q; ++i) {
      const double p = std::exp((values[static_cast<std::size_t>(i)] - top) / lambda) / z;
      worst = std::max(worst, std::abs(freq[static_cast<std::size_t>(i)] / draws - p));
    }
  }
  emit("gumbel-softmax", worst <= kFrequencyTol, "max |frequency - softmax| = " + fmt(worst) + " over 5 settings");
}

void check_calibration() {
  constexpr std::uint64_t kSeed = 2024, kFresh = 777;
  constexpr double kTop = 0.01;
  std::vector<std::string> bad, widened;
  double worst = 0.0;
  int objectives = 0;
  for (const auto& name : problem_names()) {
    const auto& problem = get_problem(name);
    const auto profile = calibrate_profile(problem, kTargetRate, kTop, kSeed);
    for (int j = 0; j < problem.m; ++j, ++objectives) {
      const auto label = name + "[" + std::to_string(j) + "]";
      const auto jj = static_cast<std::uint64_t>(j);
      const double lambda = profile.lambda[j];
      auto fresh_rate = [&](double fraction) {
        const auto values = top_objective_values(problem, j, fraction, CalibrationOptions{}.design_samples,
                                                 derive_seed(kFresh, {0, jj}));
        Rng rng = make_rng(kFresh, {1, jj});
        return simulate_mistake_rate(values, lambda, 100000, rng);
      };
      try {
        const double rate = fresh_rate(kTop);
        worst = std::max(worst, std::abs(rate - kTargetRate));
        if (std::abs(rate - kTargetRate) > kRateTol) bad.push_back(label + " rate " + fmt(rate));
      } catch (const Error&) {
        const double fraction = comparable_top_fraction(problem, j, kTop, derive_seed(kSeed, {jj}));
        const double rate = fresh_rate(fraction);
        bad.push_back(label + " constant over the top 1%");
        widened.push_back(label + " over top " + fmt(fraction) + ": rate " + fmt(rate));
      }
    }
  }
  std::string detail = std::to_string(objectives) + " objectives, max |rate - 0.2| = " + fmt(worst);
  for (const auto& b : bad) detail += "; " + b;
  for (const auto& w : widened) detail += "; " + w;
  emit("noise-calibration", bad.empty(), detail);
}

// Hypervolume ---------------------------------------------------------------

std::vector<ObjectiveVector> random_front(Rng& rng, int m, int n) {
  std::vector<ObjectiveVector> pts;
  for (int i = 0; i < n; ++i) {
    ObjectiveVector p(m);
    for (int j = 0; j < m; ++j) p[j] = std::abs(standard_normal(rng)) + 1e-3;
    pts.push_back(p / p.norm());
  }
  return pts;
}

void check_hypervolume() {
  Rng rng = make_rng(2024, {3});
  int mc_fail = 0;
  double worst_z = 0.0;
  for (int m = 2; m <= 4; ++m) {
    for (int f = 0; f < 20; ++f) {
      const auto pts = random_front(rng, m, 5 + f % 10);
      const ObjectiveVector ref = ObjectiveVector::Zero(m);
      const double exact = hypervolume_exact(pts, ref);
      const auto seed = derive_seed(2024, {4, static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(f)});
      const auto mc = hypervolume_mc(pts, ref, 10000000, seed);
      const double z = std::abs(mc.estimate - exact) / mc.standard_error;
      worst_z = std::max(worst_z, z);
      mc_fail += z > kMcSigmas ? 1 : 0;
    }
  }

  int prop_fail = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int m = 2 + trial % 3;
    std::vector<ObjectiveVector> pts;
    for (int i = 0; i < 1 + trial % 15; ++i) {
      ObjectiveVector p(m);
      for (int j = 0; j < m; ++j) p[j] = uniform01(rng);
      pts.push_back(p);
    }
    const ObjectiveVector ref = ObjectiveVector::Zero(m);
    const double hv = hypervolume_exact(pts, ref);
    ObjectiveVector extra(m);
    for (int j = 0; j < m; ++j) extra[j] = uniform01(rng);
    auto more = pts;
    more.push_back(extra);
    if (hypervolume_exact(more, ref) < hv - kHvPropertyTol) ++prop_fail;
    auto dominated = pts;
    ObjectiveVector below = pts[static_cast<std::size_t>(trial) % pts.size()];
    for (int j = 0; j < m; ++j) below[j] *= uniform01(rng);
    dominated.push_back(below);
    if (std::abs(hypervolume_exact(dominated, ref) - hv) > kHvPropertyTol * std::max(1.0, hv)) ++prop_fail;
  }
  emit("hypervolume", mc_fail == 0 && prop_fail == 0,
       "60 fronts, max |exact - mc| / SE = " + fmt(worst_z, 3) + "; property failures " + std::to_string(prop_fail) +
           "/2000 checks");
}

// Surrogate numerics --------------------------------------------------------

void check_surrogate(const fs::path& dtlz2_dir) {
  const auto& problem = get_problem("dtlz2");
  const ObjectiveFn f = [&problem](const Design& x) { return problem.evaluate(x); };
  double worst_grad = 0.0;
  for (int model = 0; model < 5; ++model) {
    Rng rng = make_rng(2024, {5, static_cast<std::uint64_t>(model)});
    InteractionDataset data(2, problem.m);
    const NoiseProfile noise{Eigen::VectorXd::Constant(problem.m, 0.05)};
    for (int k = 0; k < 15 + 5 * model; ++k) {
      Query query{{problem.space.sample(rng), problem.space.sample(rng)}};
      data.append(query, respond(query, f, noise, rng));
    }
    const auto post = fit_preference(data, model % problem.m, {}, static_cast<std::uint64_t>(model)).posterior();
    const auto sample = post.sample_path(rng);
    for (int t = 0; t < 10; ++t) {
      const Design x = problem.space.sample(rng);
      Eigen::VectorXd g;
      sample.evaluate(x, &g);
      for (Eigen::Index k = 0; k < x.size(); ++k) {
        Design a = x, b = x;
        a[k] += 1e-5;
        b[k] -= 1e-5;
        const double fd = (sample.evaluate(a) - sample.evaluate(b)) / 2e-5;
        worst_grad = std::max(worst_grad, std::abs(g[k] - fd) / std::max(1.0, std::abs(fd)));
      }
    }
  }

  double min_eig = std::numeric_limits<double>::infinity();
  long fits = 0;
  for (const auto& entry : fs::recursive_directory_iterator(dtlz2_dir)) {
    const auto name = entry.path().filename().string();
    if (name.size() < 11 || name.substr(name.size() - 11) != ".fits.jsonl") continue;
    std::ifstream in(entry.path());
    for (std::string line; std::getline(in, line); ++fits)
      min_eig = std::min(min_eig, nlohmann::json::parse(line).at("min_cov_eigenvalue").get<double>());
  }

  const double signal = 1.0;
  const LatentPosterior prior(KernelConfig::isotropic(3, 0.2, signal), 0.0);
  Rng rng = make_rng(2024, {6});
  double worst_var = 0.0;
  for (int p = 0; p < 5; ++p) {
    const Design x = problem.space.sample(rng);
    double s = 0.0, s2 = 0.0;
    const int draws = 2000;
    for (int i = 0; i < draws; ++i) {
      const double v = prior.sample_path(rng).evaluate(x);
      s += v;
      s2 += v * v;
    }
    const double var = s2 / draws - (s / draws) * (s / draws);
    worst_var = std::max(worst_var, std::abs(var / signal - 1.0));
  }

  const bool pass = worst_grad <= kGradientTol && fits > 0 && min_eig >= kPsdFloor && worst_var <= kPriorVarianceTol;
  emit("surrogate-numerics", pass,
       "max gradient error " + fmt(worst_grad) + " (50 points); min covariance eigenvalue " + fmt(min_eig) + " over " +
           std::to_string(fits) + " fits; max prior variance deviation " + fmt(worst_var));
}

// Determinism ---------------------------------------------------------------

void check_determinism(const fs::path& out) {
  ExperimentConfig c;
  c.problem = "dtlz2";
  c.policies = {policy("dsts", 2), policy("random", 2), policy("dsts-m", 2), policy("pbo-dts-if", 2),
                policy("qparego", 2), policy("qehvi", 2)};
  c.n_iterations = 3;
  c.n_replications = 1;
  c.seed = 99;
  const auto a = out / "determinism_a", b = out / "determinism_b";
  fs::remove_all(a);
  fs::remove_all(b);
  c.output_dir = a;
  run_experiment(c);
  c.output_dir = b;
  run_experiment(c);
  int same = 0;
  std::vector<std::string> differ;
  for (const auto& p : c.policies) {
    const auto label = p.name + "_q2";
    const auto fa = a / label / "rep_0.jsonl", fb = b / label / "rep_0.jsonl";
    if (fs::exists(fa) && slurp(fa) == slurp(fb) && !slurp(fa).empty())
      ++same;
    else
      differ.push_back(label);
  }
  std::string detail = std::to_string(same) + "/6 policies byte-identical";
  for (const auto& d : differ) detail += "; differs: " + d;
  emit("determinism", differ.empty(), detail);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string out = "acceptance_runs";
  bool reuse = false;
  std::vector<std::string> only;
  app.add_option("--out", out, "Directory for experiment outputs");
  app.add_flag("--reuse", reuse, "Reuse a finished DTLZ2 run with a matching config");
  app.add_option("--only", only, "Run only the named checks");
  CLI11_PARSE(app, argc, argv);

  const fs::path dir(out);
  fs::create_directories(dir);
  const std::set<std::string> selected(only.begin(), only.end());
  auto want = [&](const std::string& name) { return selected.empty() || selected.count(name) > 0; };

  try {
    if (want("counterexample")) check_counterexample(dir);
    if (want("pareto")) check_multi_consistency();
    if (want("argmax")) check_single_consistency();
    std::optional<Dtlz2Run> dtlz2;
    if (want("dtlz2") || want("surrogate")) dtlz2 = run_dtlz2(dir, reuse);
    if (want("dtlz2")) check_dtlz2(*dtlz2);
    if (want("gumbel")) check_gumbel_softmax();
    if (want("calibration")) check_calibration();
    if (want("hypervolume")) check_hypervolume();
    if (want("surrogate")) check_surrogate(dtlz2->dir);
    if (want("determinism")) check_determinism(dir);
  } catch (const std::exception& e) {
    emit("acceptance-harness", false, e.what());
  }

  const auto failed = std::count_if(g_lines.begin(), g_lines.end(), [](const Line& l) { return !l.pass; });
  std::cout << g_lines.size() - static_cast<std::size_t>(failed) << "/" << g_lines.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
