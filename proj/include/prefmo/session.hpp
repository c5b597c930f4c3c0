#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "prefmo/policies.hpp"
#include "prefmo/surrogate.hpp"

namespace prefmo {

struct SessionConfig {
  std::vector<std::string> design_labels;
  std::vector<std::string> objective_labels;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  PolicyConfig policy;
  std::optional<int> n_init_queries;
  std::uint64_t seed = 0;
  int fit_restarts = 3;
  int fit_max_iter = 30;

  int dim() const { return static_cast<int>(design_labels.size()); }
  int m() const { return static_cast<int>(objective_labels.size()); }
  int q() const { return policy.q; }
  int init_queries() const { return n_init_queries.value_or(2 * (dim() + 1)); }
  DesignSpace space() const { return DesignSpace::box(lower, upper); }
  void validate() const;
};

nlohmann::json to_json(const SessionConfig& config);
/// Parses and validates; errors carry the offending field.
SessionConfig session_config_from_json(const nlohmann::json& j);

enum class SessionStatus { awaiting_response, computing, idle };
const char* to_string(SessionStatus status);

/// Fits one model per objective on `data` with seeds derived from the
/// session seed and the record count.
std::vector<LatentPosterior> fit_session_models(const SessionConfig& config, const InteractionDataset& data);

/// The query a session serves after `data`; a pure function of its inputs,
/// so a persisted dataset can be replayed offline.
Query next_session_query(const SessionConfig& config, const InteractionDataset& data,
                         const std::vector<LatentPosterior>& models);

/// Distinct shown designs, their posterior-mean vectors and non-dominated
/// flags.
nlohmann::json front_summary(const InteractionDataset& data, const std::vector<LatentPosterior>& models);

/// Owns live sessions. Each session has one writer at a time; refits and
/// policy steps run on a background thread per session.
class SessionManager {
 public:
  /// Sessions are persisted to, and restored from, `persist_dir` if given.
  explicit SessionManager(std::optional<std::filesystem::path> persist_dir = std::nullopt);
  ~SessionManager();
  SessionManager(const SessionManager&) = delete;
  SessionManager& operator=(const SessionManager&) = delete;

  std::string create(const SessionConfig& config);
  nlohmann::json query(const std::string& id) const;
  /// Accepts winners for the pending query. When `query_index` is given it
  /// must match the number of records so far.
  nlohmann::json submit(const std::string& id, const Response& response, std::optional<int> query_index = {});
  nlohmann::json front(const std::string& id) const;
  nlohmann::json state(const std::string& id) const;
  /// Restarts computation of a session left idle by a failure.
  nlohmann::json retry(const std::string& id);
  /// Blocks until the session is no longer computing.
  void wait(const std::string& id) const;
  std::vector<std::string> ids() const;

 private:
  struct Session;
  std::shared_ptr<Session> find(const std::string& id) const;
  void launch(const std::shared_ptr<Session>& session);
  void persist(const Session& session) const;
  void load_all();

  std::optional<std::filesystem::path> persist_dir_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t counter_ = 0;
};

}  // namespace prefmo
