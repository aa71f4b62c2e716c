#pragma once

#include <cstddef>
#include <deque>
#include <vector>

#include <Eigen/Dense>

#include "webtopic/error.hpp"

namespace webtopic {

inline constexpr int kNoise = -1;

/// Density-based clustering under Euclidean distance; rows are points.
///
/// A point is core when at least `min_pts` points (itself included) lie within
/// distance `eps`. Clusters are the connected components of core points plus
/// the border points they reach; a border point reachable from several
/// clusters joins the first one discovered. Cluster ids are assigned in order
/// of the lowest-index core point. Everything else is labeled kNoise.
inline std::vector<int> dbscan(const Eigen::MatrixXd& points, double eps, int min_pts) {
  if (!(eps > 0.0)) throw InputError("dbscan eps must be > 0");
  if (min_pts < 1) throw InputError("dbscan min_pts must be >= 1");
  const auto n = static_cast<std::size_t>(points.rows());
  std::vector<int> labels(n, kNoise);
  if (n == 0) return labels;

  const double eps2 = eps * eps;
  std::vector<std::vector<std::size_t>> neighbors(n);
  for (std::size_t i = 0; i < n; ++i) {
    neighbors[i].push_back(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d2 = (points.row(static_cast<Eigen::Index>(i)) -
                         points.row(static_cast<Eigen::Index>(j)))
                            .squaredNorm();
      if (d2 <= eps2) {
        neighbors[i].push_back(j);
        neighbors[j].push_back(i);
      }
    }
  }
  std::vector<bool> core(n);
  for (std::size_t i = 0; i < n; ++i) {
    core[i] = neighbors[i].size() >= static_cast<std::size_t>(min_pts);
  }

  int next_id = 0;
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (!core[seed] || labels[seed] != kNoise) continue;
    const int id = next_id++;
    labels[seed] = id;
    std::deque<std::size_t> frontier{seed};
    while (!frontier.empty()) {
      const std::size_t p = frontier.front();
      frontier.pop_front();
      for (std::size_t q : neighbors[p]) {
        if (labels[q] != kNoise) continue;
        labels[q] = id;
        if (core[q]) frontier.push_back(q);
      }
    }
  }
  return labels;
}

}  // namespace webtopic
