#include "prefmo/core.hpp"

#include <cmath>
#include <string>

namespace prefmo {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::empty_set: return "empty_set";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::domain: return "domain";
    case ErrorKind::config: return "config";
    case ErrorKind::index: return "index";
    case ErrorKind::data: return "data";
    case ErrorKind::fit: return "fit";
    case ErrorKind::calibration: return "calibration";
    case ErrorKind::optimizer: return "optimizer";
    case ErrorKind::policy: return "policy";
    case ErrorKind::inconsistent_evidence: return "inconsistent_evidence";
    case ErrorKind::not_found: return "not_found";
    case ErrorKind::conflict: return "conflict";
  }
  return "unknown";
}

bool same_design(const Design& a, const Design& b, double tol) {
  if (a.size() != b.size()) return false;
  return (a - b).cwiseAbs().maxCoeff() <= tol;
}

DesignSpace DesignSpace::box(Eigen::VectorXd lower, Eigen::VectorXd upper) {
  if (lower.size() < 1 || lower.size() != upper.size())
    throw Error(ErrorKind::dimension, "box bounds must be non-empty and of equal length");
  for (Eigen::Index i = 0; i < lower.size(); ++i)
    if (!(lower[i] < upper[i])) throw Error(ErrorKind::config, "box requires lower < upper per coordinate");
  DesignSpace s;
  s.kind_ = Kind::continuous_box;
  s.lower_ = std::move(lower);
  s.upper_ = std::move(upper);
  return s;
}

DesignSpace DesignSpace::unit_box(int dim) {
  if (dim < 1) throw Error(ErrorKind::dimension, "design dimension must be >= 1");
  return box(Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim));
}

DesignSpace DesignSpace::finite(std::vector<Design> points) {
  if (points.empty()) throw Error(ErrorKind::empty_set, "finite design space needs at least one point");
  const auto d = points.front().size();
  if (d < 1) throw Error(ErrorKind::dimension, "design dimension must be >= 1");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != d) throw Error(ErrorKind::dimension, "finite design points differ in dimension");
    for (std::size_t k = 0; k < i; ++k)
      if (same_design(points[i], points[k], 0.0))
        throw Error(ErrorKind::config, "finite design space contains duplicate points");
  }
  DesignSpace s;
  s.kind_ = Kind::finite;
  s.lower_ = points.front();
  s.upper_ = points.front();
  for (const auto& p : points) {
    s.lower_ = s.lower_.cwiseMin(p);
    s.upper_ = s.upper_.cwiseMax(p);
  }
  s.points_ = std::move(points);
  return s;
}

bool DesignSpace::contains(const Design& x, double tol) const {
  if (x.size() != lower_.size()) return false;
  if (is_finite()) {
    for (const auto& p : points_)
      if (same_design(p, x, tol)) return true;
    return false;
  }
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (!(x[i] >= lower_[i] - tol && x[i] <= upper_[i] + tol)) return false;
  return true;
}

Design DesignSpace::clamp(const Design& x) const { return x.cwiseMax(lower_).cwiseMin(upper_); }

Design DesignSpace::sample(Rng& rng) const {
  if (is_finite()) {
    const auto n = points_.size();
    auto idx = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
    return points_[std::min(idx, n - 1)];
  }
  Design x(dim());
  for (int i = 0; i < dim(); ++i) x[i] = lower_[i] + (upper_[i] - lower_[i]) * uniform01(rng);
  return x;
}

void InteractionDataset::append(Query query, Response response) {
  if (query.size() < 2) throw Error(ErrorKind::data, "a query needs at least two designs");
  if (query.size() != q) throw Error(ErrorKind::data, "query size differs from dataset q");
  if (static_cast<int>(response.winners.size()) != m)
    throw Error(ErrorKind::data, "response length differs from dataset m");
  for (int j = 0; j < m; ++j) {
    const int w = response.winners[j];
    if (is_observable(j)) {
      if (w != 0) throw Error(ErrorKind::data, "observable objective carries a winner index");
    } else if (w < 1 || w > q) {
      throw Error(ErrorKind::index, "winner index out of range [1, q]");
    }
  }
  records.push_back({std::move(query), std::move(response)});
}

void InteractionDataset::observe(int objective, Design design, double value) {
  if (objective < 0 || objective >= m) throw Error(ErrorKind::index, "objective index out of range");
  if (!is_observable(objective)) throw Error(ErrorKind::data, "objective is latent; it has no direct measurements");
  if (!std::isfinite(value)) throw Error(ErrorKind::data, "observation must be finite");
  observations[objective].push_back({std::move(design), value});
}

void InteractionDataset::set_observable(int objective, bool flag) {
  if (objective < 0 || objective >= m) throw Error(ErrorKind::index, "objective index out of range");
  observable[objective] = flag;
}

bool InteractionDataset::is_observable(int objective) const {
  return objective >= 0 && objective < static_cast<int>(observable.size()) && observable[objective];
}

std::vector<Design> InteractionDataset::shown_designs() const {
  std::vector<Design> out;
  for (const auto& r : records)
    for (const auto& x : r.query.designs) out.push_back(x);
  return out;
}

bool pareto_dominates(const ObjectiveVector& a, const ObjectiveVector& b) {
  if (a.size() != b.size()) throw Error(ErrorKind::dimension, "objective vectors differ in length");
  bool strict = false;
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    if (a[j] < b[j]) return false;
    if (a[j] > b[j]) strict = true;
  }
  return strict;
}

std::vector<std::size_t> non_dominated_filter(std::span<const ObjectiveVector> points) {
  if (points.empty()) throw Error(ErrorKind::empty_set, "non-dominated filter of an empty set");
  const auto m = points.front().size();
  for (const auto& p : points)
    if (p.size() != m) throw Error(ErrorKind::dimension, "objective vectors differ in length");

  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < points.size(); ++i) {
    bool dominated = false;
    for (std::size_t k = 0; k < points.size() && !dominated; ++k)
      dominated = k != i && pareto_dominates(points[k], points[i]);
    if (!dominated) kept.push_back(i);
  }
  return kept;
}

std::vector<Design> pareto_set_finite(const DesignSpace& space, const ObjectiveFn& f) {
  if (!space.is_finite()) throw Error(ErrorKind::unsupported, "exact Pareto set requires a finite space");
  std::vector<ObjectiveVector> values;
  values.reserve(space.points().size());
  for (const auto& x : space.points()) values.push_back(f(x));
  std::vector<Design> out;
  for (auto i : non_dominated_filter(values)) out.push_back(space.points()[i]);
  return out;
}

nlohmann::json to_json(const Design& x) {
  return {{"coords", std::vector<double>(x.data(), x.data() + x.size())}};
}

Design design_from_json(const nlohmann::json& j) {
  const auto coords = j.at("coords").get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(coords.data(), static_cast<Eigen::Index>(coords.size()));
}

nlohmann::json to_json(const Query& query) {
  auto designs = nlohmann::json::array();
  for (const auto& x : query.designs) designs.push_back(to_json(x));
  return {{"designs", designs}};
}

Query query_from_json(const nlohmann::json& j) {
  Query q;
  for (const auto& d : j.at("designs")) q.designs.push_back(design_from_json(d));
  return q;
}

nlohmann::json to_json(const Response& response) {
  auto winners = nlohmann::json::array();
  for (int w : response.winners) winners.push_back(w == 0 ? nlohmann::json(nullptr) : nlohmann::json(w));
  return {{"winners", winners}};
}

Response response_from_json(const nlohmann::json& j) {
  Response r;
  for (const auto& w : j.at("winners")) r.winners.push_back(w.is_null() ? 0 : w.get<int>());
  return r;
}

nlohmann::json to_json(const InteractionDataset& data) {
  auto records = nlohmann::json::array();
  for (const auto& r : data.records)
    records.push_back({{"query", to_json(r.query)}, {"response", to_json(r.response)}});
  auto observations = nlohmann::json::array();
  for (const auto& per_objective : data.observations) {
    auto list = nlohmann::json::array();
    for (const auto& o : per_objective) list.push_back({{"design", to_json(o.design)}, {"value", o.value}});
    observations.push_back(list);
  }
  std::vector<bool> observable(data.observable.begin(), data.observable.end());
  return {{"q", data.q},
          {"m", data.m},
          {"observable", observable},
          {"records", records},
          {"observations", observations}};
}

InteractionDataset dataset_from_json(const nlohmann::json& j) {
  InteractionDataset data(j.at("q").get<int>(), j.at("m").get<int>());
  if (j.contains("observable")) {
    const auto flags = j.at("observable").get<std::vector<bool>>();
    for (std::size_t k = 0; k < flags.size() && k < data.observable.size(); ++k)
      data.set_observable(static_cast<int>(k), flags[k]);
  }
  if (j.contains("observations")) {
    const auto& obs = j.at("observations");
    for (std::size_t k = 0; k < obs.size() && k < data.observations.size(); ++k)
      for (const auto& o : obs[k])
        data.observe(static_cast<int>(k), design_from_json(o.at("design")), o.at("value").get<double>());
  }
  for (const auto& r : j.at("records"))
    data.append(query_from_json(r.at("query")), response_from_json(r.at("response")));
  return data;
}

}  // namespace prefmo
