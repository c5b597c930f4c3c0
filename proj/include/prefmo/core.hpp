#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "prefmo/error.hpp"
#include "prefmo/rng.hpp"

namespace prefmo {

/// A point in design space, normalized coordinates.
using Design = Eigen::VectorXd;
/// Objective values, larger is better for every entry.
using ObjectiveVector = Eigen::VectorXd;
/// Maps a design to its m objective values.
using ObjectiveFn = std::function<ObjectiveVector(const Design&)>;

/// Coordinate-wise equality within `tol`.
bool same_design(const Design& a, const Design& b, double tol = 1e-12);

class DesignSpace {
 public:
  enum class Kind { continuous_box, finite };

  static DesignSpace box(Eigen::VectorXd lower, Eigen::VectorXd upper);
  static DesignSpace unit_box(int dim);
  static DesignSpace finite(std::vector<Design> points);

  Kind kind() const { return kind_; }
  bool is_finite() const { return kind_ == Kind::finite; }
  int dim() const { return static_cast<int>(lower_.size()); }
  const Eigen::VectorXd& lower() const { return lower_; }
  const Eigen::VectorXd& upper() const { return upper_; }
  const std::vector<Design>& points() const { return points_; }

  bool contains(const Design& x, double tol = 1e-12) const;
  Design clamp(const Design& x) const;
  /// Uniform over the box, or uniform over the listed points.
  Design sample(Rng& rng) const;

 private:
  Kind kind_ = Kind::continuous_box;
  Eigen::VectorXd lower_, upper_;
  std::vector<Design> points_;
};

struct Query {
  std::vector<Design> designs;

  int size() const { return static_cast<int>(designs.size()); }
};

/// Per-objective winner, 1-based. An entry of 0 marks an objective that is
/// observed directly instead of through preference feedback.
struct Response {
  std::vector<int> winners;
};

struct Observation {
  Design design;
  double value = 0.0;
};

struct InteractionRecord {
  Query query;
  Response response;
};

/// Ordered interaction history. Objectives flagged in `observable` are
/// measured directly; their measurements live in `observations[j]`.
struct InteractionDataset {
  int q = 0;
  int m = 0;
  std::vector<InteractionRecord> records;
  std::vector<std::vector<Observation>> observations;
  std::vector<bool> observable;

  InteractionDataset() = default;
  InteractionDataset(int q_, int m_)
      : q(q_), m(m_), observations(static_cast<std::size_t>(m_)), observable(static_cast<std::size_t>(m_), false) {}

  void set_observable(int objective, bool flag = true);

  /// Appends after validating shape and winner range.
  void append(Query query, Response response);
  void observe(int objective, Design design, double value);
  bool is_observable(int objective) const;
  /// Every design shown so far in query order, repeats included.
  std::vector<Design> shown_designs() const;
};

/// a_j >= b_j for all j with at least one strict inequality.
bool pareto_dominates(const ObjectiveVector& a, const ObjectiveVector& b);

/// Indices of points not dominated by any other point. Duplicates of a
/// non-dominated value are all kept.
std::vector<std::size_t> non_dominated_filter(std::span<const ObjectiveVector> points);

/// Exact Pareto set of a finite design space.
std::vector<Design> pareto_set_finite(const DesignSpace& space, const ObjectiveFn& f);

// Canonical JSON forms. Winner indices stay 1-based on the wire.
nlohmann::json to_json(const Design& x);
Design design_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Query& query);
Query query_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Response& response);
Response response_from_json(const nlohmann::json& j);
nlohmann::json to_json(const InteractionDataset& data);
InteractionDataset dataset_from_json(const nlohmann::json& j);

}  // namespace prefmo
