#include "prefmo/session.hpp"

#include <algorithm>
#include <condition_variable>
#include <fstream>
#include <random>
#include <sstream>

#include "prefmo/runner.hpp"

namespace prefmo {
namespace fs = std::filesystem;

struct SessionManager::Session {
  std::string id;
  SessionConfig config;
  InteractionDataset data;
  SessionStatus status = SessionStatus::idle;
  std::optional<Query> pending;
  std::string error;
  std::vector<LatentPosterior> models;
  mutable std::mutex mutex;
  mutable std::condition_variable changed;
  std::thread worker;
};

namespace {

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

SessionStatus status_from_string(const std::string& s) {
  if (s == "awaiting-response") return SessionStatus::awaiting_response;
  if (s == "computing") return SessionStatus::computing;
  return SessionStatus::idle;
}

std::vector<std::string> default_labels(const std::string& prefix, int n) {
  std::vector<std::string> out;
  for (int i = 1; i <= n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

}  // namespace

// ---- config ----------------------------------------------------------------------

void SessionConfig::validate() const {
  if (dim() < 1) throw Error(ErrorKind::config, "at least one design coordinate is required", "design_labels");
  if (m() < 1) throw Error(ErrorKind::config, "at least one objective is required", "objective_labels");
  if (lower.size() != dim() || upper.size() != dim())
    throw Error(ErrorKind::config, "bounds must have one entry per design coordinate", "bounds");
  for (int k = 0; k < dim(); ++k)
    if (!(lower[k] < upper[k])) throw Error(ErrorKind::config, "lower bound must be below upper bound", "bounds");
  if (policy.q < 2) throw Error(ErrorKind::config, "q must be at least 2", "q");
  if (policy.name == "pbo-dts-if")
    throw Error(ErrorKind::config, "sessions collect per-objective feedback; pbo-dts-if is not available", "policy");
  policy.validate();
  if (init_queries() < 1) throw Error(ErrorKind::config, "n_init_queries must be positive", "n_init_queries");
  if (fit_restarts < 1) throw Error(ErrorKind::config, "fit restarts must be positive", "fit.restarts");
}

nlohmann::json to_json(const SessionConfig& c) {
  nlohmann::json j{{"design_labels", c.design_labels},
                   {"objective_labels", c.objective_labels},
                   {"bounds", {{"lower", to_vector(c.lower)}, {"upper", to_vector(c.upper)}}},
                   {"policy", to_json(c.policy)},
                   {"q", c.policy.q},
                   {"seed", c.seed},
                   {"fit", {{"restarts", c.fit_restarts}, {"max_iter", c.fit_max_iter}}}};
  if (c.n_init_queries) j["n_init_queries"] = *c.n_init_queries;
  return j;
}

SessionConfig session_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::config, "session config must be a JSON object");
  SessionConfig c;
  try {
    if (j.contains("design_labels")) {
      c.design_labels = j["design_labels"].get<std::vector<std::string>>();
    } else if (j.contains("dim")) {
      c.design_labels = default_labels("x", j["dim"].get<int>());
    }
    if (j.contains("objective_labels")) {
      c.objective_labels = j["objective_labels"].get<std::vector<std::string>>();
    } else if (j.contains("m")) {
      c.objective_labels = default_labels("objective ", j["m"].get<int>());
    }
    if (j.contains("m") && j["m"].get<int>() != c.m())
      throw Error(ErrorKind::config, "m differs from the number of objective labels", "m");
    c.lower = Eigen::VectorXd::Zero(c.dim());
    c.upper = Eigen::VectorXd::Ones(c.dim());
    if (j.contains("bounds")) {
      const auto lo = j["bounds"].at("lower").get<std::vector<double>>();
      const auto hi = j["bounds"].at("upper").get<std::vector<double>>();
      c.lower = Eigen::Map<const Eigen::VectorXd>(lo.data(), static_cast<Eigen::Index>(lo.size()));
      c.upper = Eigen::Map<const Eigen::VectorXd>(hi.data(), static_cast<Eigen::Index>(hi.size()));
    }
    nlohmann::json policy = j.value("policy", nlohmann::json{{"name", "dsts"}});
    if (policy.is_string()) policy = nlohmann::json{{"name", policy}};
    if (j.contains("q")) policy["q"] = j["q"];
    c.policy = policy_from_json(policy);
    if (j.contains("n_init_queries")) c.n_init_queries = j["n_init_queries"].get<int>();
    c.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("fit")) {
      c.fit_restarts = j["fit"].value("restarts", c.fit_restarts);
      c.fit_max_iter = j["fit"].value("max_iter", c.fit_max_iter);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::config, std::string("malformed session config: ") + e.what());
  }
  c.validate();
  return c;
}

const char* to_string(SessionStatus status) {
  switch (status) {
    case SessionStatus::awaiting_response:
      return "awaiting-response";
    case SessionStatus::computing:
      return "computing";
    case SessionStatus::idle:
      return "idle";
  }
  return "idle";
}

// ---- pure session steps ----------------------------------------------------------

std::vector<LatentPosterior> fit_session_models(const SessionConfig& config, const InteractionDataset& data) {
  std::vector<LatentPosterior> models;
  if (data.records.empty()) return models;
  const auto k = static_cast<std::uint64_t>(data.records.size());
  for (int j = 0; j < config.m(); ++j) {
    PreferenceFitOptions opts;
    opts.restarts = config.fit_restarts;
    opts.max_iter = config.fit_max_iter;
    models.push_back(
        fit_preference(data, j, opts, derive_seed(config.seed, {stream::fit, k, static_cast<std::uint64_t>(j)}))
            .posterior());
  }
  return models;
}

Query next_session_query(const SessionConfig& config, const InteractionDataset& data,
                         const std::vector<LatentPosterior>& models) {
  const auto k = static_cast<std::uint64_t>(data.records.size());
  const auto space = config.space();
  if (static_cast<int>(k) < config.init_queries())
    return random_next_query(space, config.q(), derive_seed(config.seed, {stream::init, k}));
  std::vector<const Posterior*> ptrs;
  for (const auto& m : models) ptrs.push_back(&m);
  return propose_query(config.policy, ptrs, space, data.shown_designs(), derive_seed(config.seed, {stream::policy, k}));
}

nlohmann::json front_summary(const InteractionDataset& data, const std::vector<LatentPosterior>& models) {
  nlohmann::json out{{"designs", nlohmann::json::array()},
                     {"means", nlohmann::json::array()},
                     {"non_dominated", nlohmann::json::array()},
                     {"front_indices", nlohmann::json::array()}};
  if (data.records.empty() || models.empty()) return out;
  std::vector<Design> designs;
  for (const auto& x : data.shown_designs())
    if (std::none_of(designs.begin(), designs.end(), [&](const Design& d) { return same_design(d, x); }))
      designs.push_back(x);
  std::vector<const Posterior*> ptrs;
  for (const auto& m : models) ptrs.push_back(&m);
  const auto means = posterior_mean_vectors(ptrs, designs);
  std::vector<bool> flags(designs.size(), false);
  for (auto i : non_dominated_filter(means)) {
    flags[i] = true;
    out["front_indices"].push_back(i);
  }
  for (std::size_t i = 0; i < designs.size(); ++i) {
    out["designs"].push_back(to_json(designs[i]));
    out["means"].push_back(to_vector(means[i]));
    out["non_dominated"].push_back(static_cast<bool>(flags[i]));
  }
  return out;
}

// ---- manager ---------------------------------------------------------------------

SessionManager::SessionManager(std::optional<fs::path> persist_dir) : persist_dir_(std::move(persist_dir)) {
  if (persist_dir_) {
    fs::create_directories(*persist_dir_);
    load_all();
  }
}

SessionManager::~SessionManager() {
  std::vector<std::shared_ptr<Session>> all;
  {
    std::lock_guard lock(mutex_);
    for (auto& [id, s] : sessions_) all.push_back(s);
  }
  for (auto& s : all)
    if (s->worker.joinable()) s->worker.join();
}

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorKind::not_found, "no session with id '" + id + "'", "id");
  return it->second;
}

std::vector<std::string> SessionManager::ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

std::string SessionManager::create(const SessionConfig& config) {
  config.validate();
  auto session = std::make_shared<Session>();
  {
    std::lock_guard lock(mutex_);
    std::random_device rd;
    const std::uint64_t salt = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    std::ostringstream id;
    id << std::hex << mix64(salt ^ mix64(++counter_));
    session->id = id.str();
  }
  session->config = config;
  session->data = InteractionDataset(config.q(), config.m());
  session->pending = next_session_query(config, session->data, {});
  session->status = SessionStatus::awaiting_response;
  persist(*session);
  std::lock_guard lock(mutex_);
  sessions_[session->id] = session;
  return session->id;
}

nlohmann::json SessionManager::query(const std::string& id) const {
  const auto s = find(id);
  std::lock_guard lock(s->mutex);
  nlohmann::json out{{"id", s->id},
                     {"status", to_string(s->status)},
                     {"query_index", s->data.records.size()},
                     {"design_labels", s->config.design_labels},
                     {"objective_labels", s->config.objective_labels},
                     {"query", nullptr}};
  if (s->status == SessionStatus::awaiting_response && s->pending) out["query"] = to_json(*s->pending);
  return out;
}

nlohmann::json SessionManager::submit(const std::string& id, const Response& response, std::optional<int> query_index) {
  const auto s = find(id);
  {
    std::lock_guard lock(s->mutex);
    if (s->status != SessionStatus::awaiting_response || !s->pending)
      throw Error(ErrorKind::conflict, "session has no pending query", "winners");
    if (query_index && *query_index != static_cast<int>(s->data.records.size()))
      throw Error(ErrorKind::conflict, "response refers to an earlier query", "query_index");
    if (static_cast<int>(response.winners.size()) != s->config.m())
      throw Error(ErrorKind::data, "expected one winner per objective", "winners");
    for (int w : response.winners)
      if (w < 1 || w > s->config.q())
        throw Error(ErrorKind::index, "winner indices must lie in 1.." + std::to_string(s->config.q()), "winners");
    s->data.append(*s->pending, response);
    s->pending.reset();
    s->status = SessionStatus::computing;
    s->error.clear();
    persist(*s);
  }
  launch(s);
  return {{"accepted", true}, {"status", to_string(SessionStatus::computing)}};
}

nlohmann::json SessionManager::retry(const std::string& id) {
  const auto s = find(id);
  {
    std::lock_guard lock(s->mutex);
    if (s->status != SessionStatus::idle) throw Error(ErrorKind::conflict, "session is not idle");
    s->status = SessionStatus::computing;
    s->error.clear();
    persist(*s);
  }
  launch(s);
  return {{"accepted", true}, {"status", to_string(SessionStatus::computing)}};
}

void SessionManager::launch(const std::shared_ptr<Session>& s) {
  if (s->worker.joinable()) s->worker.join();
  s->worker = std::thread([this, s]() {
    SessionConfig config;
    InteractionDataset data;
    {
      std::lock_guard lock(s->mutex);
      config = s->config;
      data = s->data;
    }
    try {
      auto models = fit_session_models(config, data);
      auto next = next_session_query(config, data, models);
      std::lock_guard lock(s->mutex);
      s->models = std::move(models);
      s->status = SessionStatus::idle;
      persist(*s);
      s->pending = std::move(next);
      s->status = SessionStatus::awaiting_response;
      persist(*s);
    } catch (const std::exception& e) {
      std::lock_guard lock(s->mutex);
      s->status = SessionStatus::idle;
      s->error = e.what();
      persist(*s);
    }
    s->changed.notify_all();
  });
}

void SessionManager::wait(const std::string& id) const {
  const auto s = find(id);
  std::unique_lock lock(s->mutex);
  s->changed.wait(lock, [&] { return s->status != SessionStatus::computing; });
}

nlohmann::json SessionManager::front(const std::string& id) const {
  const auto s = find(id);
  std::lock_guard lock(s->mutex);
  auto out = front_summary(s->data, s->models);
  out["status"] = to_string(s->status);
  out["n_records"] = s->data.records.size();
  return out;
}

nlohmann::json SessionManager::state(const std::string& id) const {
  const auto s = find(id);
  std::lock_guard lock(s->mutex);
  nlohmann::json out{{"id", s->id},
                     {"status", to_string(s->status)},
                     {"config", to_json(s->config)},
                     {"dataset", to_json(s->data)},
                     {"n_records", s->data.records.size()},
                     {"pending_query", s->pending ? to_json(*s->pending) : nlohmann::json(nullptr)}};
  if (!s->error.empty()) out["error"] = s->error;
  return out;
}

void SessionManager::persist(const Session& s) const {
  if (!persist_dir_) return;
  auto models = nlohmann::json::array();
  for (const auto& m : s.models) models.push_back(to_json(m));
  const nlohmann::json snapshot{{"id", s.id},
                                {"config", to_json(s.config)},
                                {"dataset", to_json(s.data)},
                                {"status", to_string(s.status)},
                                {"pending_query", s.pending ? to_json(*s.pending) : nlohmann::json(nullptr)},
                                {"error", s.error},
                                {"models", models}};
  write_atomic(*persist_dir_ / (s.id + ".json"), snapshot.dump() + "\n");
}

void SessionManager::load_all() {
  std::vector<std::shared_ptr<Session>> resume;
  for (const auto& entry : fs::directory_iterator(*persist_dir_)) {
    if (entry.path().extension() != ".json") continue;
    std::ifstream in(entry.path());
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) continue;
    auto s = std::make_shared<Session>();
    s->id = j.at("id").get<std::string>();
    s->config = session_config_from_json(j.at("config"));
    s->data = dataset_from_json(j.at("dataset"));
    s->status = status_from_string(j.at("status").get<std::string>());
    if (!j.at("pending_query").is_null()) s->pending = query_from_json(j.at("pending_query"));
    s->error = j.value("error", "");
    for (const auto& m : j.value("models", nlohmann::json::array())) s->models.push_back(posterior_from_json(m));
    // A snapshot taken between "idle" and "awaiting" or mid-refit is resumed.
    if (s->status == SessionStatus::computing || (s->status == SessionStatus::idle && s->error.empty())) {
      s->status = SessionStatus::computing;
      s->pending.reset();
      resume.push_back(s);
    }
    sessions_[s->id] = s;
  }
  for (auto& s : resume) launch(s);
}

}  // namespace prefmo
