#include "clustering.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace hdlcnn {

double euclidean_distance(const std::vector<double>& a,
                          const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(
        "feature vectors differ in length: " + std::to_string(a.size()) +
        " vs " + std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

double euclidean_distance(const Tensor& features, int col_a, int col_b) {
  if (features.rank() != 2) {
    throw std::invalid_argument("feature matrix must be rank 2, got " +
                                features.shape_string());
  }
  const int n = features.dim(0);
  const int p = features.dim(1);
  if (col_a < 0 || col_a >= p || col_b < 0 || col_b >= p) {
    throw std::invalid_argument("feature column out of range for " +
                                features.shape_string());
  }
  const double* data = features.data();
  double acc = 0.0;
  for (int row = 0; row < n; ++row) {
    const double d = data[static_cast<std::size_t>(row) * p + col_a] -
                     data[static_cast<std::size_t>(row) * p + col_b];
    acc += d * d;
  }
  return std::sqrt(acc);
}

double ward_update(double d_ti, double d_tj, double d_ij, int size_t_,
                   int size_i, int size_j) {
  if (size_t_ <= 0 || size_i <= 0 || size_j <= 0) {
    throw std::invalid_argument("cluster sizes must be positive");
  }
  const double total = size_t_ + size_i + size_j;
  const double radicand = ((size_t_ + size_i) * d_ti * d_ti +
                           (size_t_ + size_j) * d_tj * d_tj -
                           size_t_ * d_ij * d_ij) /
                          total;
  // Mathematically non-negative; clamp away tiny negative roundoff.
  return std::sqrt(std::max(radicand, 0.0));
}

Dendrogram ward_linkage(const Tensor& features) {
  if (features.rank() != 2) {
    throw std::invalid_argument("feature matrix must be rank 2, got " +
                                features.shape_string());
  }
  const int n = features.dim(0);
  const int p = features.dim(1);
  if (n < 2) {
    throw std::invalid_argument("feature columns need at least 2 rows, got " +
                                std::to_string(n));
  }
  if (p < 2) {
    throw std::invalid_argument("clustering needs at least 2 features, got " +
                                std::to_string(p));
  }

  // Active clusters live in slots; merged slots are removed. Slot order is
  // incidental -- selection and the update rule depend only on ids/values.
  std::vector<int> ids(static_cast<std::size_t>(p));
  std::vector<int> sizes(static_cast<std::size_t>(p), 1);
  for (int i = 0; i < p; ++i) ids[static_cast<std::size_t>(i)] = i;

  std::vector<std::vector<double>> dist(static_cast<std::size_t>(p),
                                        std::vector<double>(static_cast<std::size_t>(p), 0.0));
  for (int i = 0; i < p; ++i) {
    for (int j = i + 1; j < p; ++j) {
      const double d = euclidean_distance(features, i, j);
      dist[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = d;
      dist[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = d;
    }
  }

  Dendrogram result;
  result.n_leaves = p;
  int next_id = p;

  while (ids.size() > 1) {
    // Globally closest pair; ties resolve to the smallest (min id, max id).
    std::size_t best_i = 0, best_j = 1;
    double best_d = dist[0][1];
    int best_lo = std::min(ids[0], ids[1]);
    int best_hi = std::max(ids[0], ids[1]);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (std::size_t j = i + 1; j < ids.size(); ++j) {
        const double d = dist[i][j];
        const int lo = std::min(ids[i], ids[j]);
        const int hi = std::max(ids[i], ids[j]);
        if (d < best_d || (d == best_d && (lo < best_lo ||
                                           (lo == best_lo && hi < best_hi)))) {
          best_d = d;
          best_i = i;
          best_j = j;
          best_lo = lo;
          best_hi = hi;
        }
      }
    }

    const int merged_size = sizes[best_i] + sizes[best_j];
    result.steps.push_back({best_lo, best_hi, best_d, merged_size});

    std::vector<double> new_row;
    new_row.reserve(ids.size() - 2);
    for (std::size_t t = 0; t < ids.size(); ++t) {
      if (t == best_i || t == best_j) continue;
      new_row.push_back(ward_update(dist[t][best_i], dist[t][best_j], best_d,
                                    sizes[t], sizes[best_i], sizes[best_j]));
    }

    // Drop the merged slots (larger index first), shrink the matrix, then
    // append the new cluster's row and column.
    const std::size_t hi_slot = std::max(best_i, best_j);
    const std::size_t lo_slot = std::min(best_i, best_j);
    for (std::size_t victim : {hi_slot, lo_slot}) {
      ids.erase(ids.begin() + static_cast<std::ptrdiff_t>(victim));
      sizes.erase(sizes.begin() + static_cast<std::ptrdiff_t>(victim));
      dist.erase(dist.begin() + static_cast<std::ptrdiff_t>(victim));
      for (auto& row : dist) {
        row.erase(row.begin() + static_cast<std::ptrdiff_t>(victim));
      }
    }

    ids.push_back(next_id++);
    sizes.push_back(merged_size);
    for (std::size_t t = 0; t < dist.size(); ++t) {
      dist[t].push_back(new_row[t]);
    }
    dist.emplace_back(new_row);
    dist.back().push_back(0.0);
  }

  return result;
}

std::vector<std::vector<int>> cut_to_k(const Dendrogram& dendrogram, int k) {
  const int p = dendrogram.n_leaves;
  if (static_cast<int>(dendrogram.steps.size()) != p - 1) {
    throw std::invalid_argument("dendrogram with " + std::to_string(p) +
                                " leaves must have " + std::to_string(p - 1) +
                                " steps, got " +
                                std::to_string(dendrogram.steps.size()));
  }
  if (k < 1 || k > p) {
    throw std::invalid_argument("cut level k=" + std::to_string(k) +
                                " out of range for " + std::to_string(p) +
                                " leaves");
  }

  std::map<int, std::vector<int>> clusters;
  for (int i = 0; i < p; ++i) clusters[i] = {i};

  const int steps_to_apply = p - k;
  for (int s = 0; s < steps_to_apply; ++s) {
    const MergeStep& step = dendrogram.steps[static_cast<std::size_t>(s)];
    auto a = clusters.find(step.id_a);
    auto b = clusters.find(step.id_b);
    if (a == clusters.end() || b == clusters.end()) {
      throw std::invalid_argument("dendrogram step " + std::to_string(s) +
                                  " references an inactive cluster id");
    }
    std::vector<int> merged = std::move(a->second);
    merged.insert(merged.end(), b->second.begin(), b->second.end());
    clusters.erase(a);
    clusters.erase(step.id_b);
    clusters[p + s] = std::move(merged);
  }

  std::vector<std::vector<int>> result;
  result.reserve(clusters.size());
  for (auto& [id, members] : clusters) {
    std::sort(members.begin(), members.end());
    result.push_back(std::move(members));
  }
  std::sort(result.begin(), result.end(),
            [](const std::vector<int>& a, const std::vector<int>& b) {
              return a.front() < b.front();
            });
  return result;
}

FeatureOrdering reorder_features(const std::vector<std::vector<int>>& clusters) {
  if (clusters.size() != 2) {
    throw std::invalid_argument("feature reordering expects exactly 2 clusters, got " +
                                std::to_string(clusters.size()));
  }
  std::size_t total = clusters[0].size() + clusters[1].size();
  std::vector<bool> seen(total, false);
  for (const auto& cluster : clusters) {
    if (cluster.empty()) {
      throw std::invalid_argument("clusters must be non-empty");
    }
    for (int id : cluster) {
      if (id < 0 || static_cast<std::size_t>(id) >= total || seen[static_cast<std::size_t>(id)]) {
        throw std::invalid_argument(
            "clusters must partition feature ids 0.." + std::to_string(total - 1));
      }
      seen[static_cast<std::size_t>(id)] = true;
    }
  }

  const bool zero_first =
      std::find(clusters[0].begin(), clusters[0].end(), 0) != clusters[0].end();
  const std::vector<int>& first = zero_first ? clusters[0] : clusters[1];
  const std::vector<int>& second = zero_first ? clusters[1] : clusters[0];

  FeatureOrdering ordering;
  ordering.permutation.reserve(total);
  ordering.permutation.insert(ordering.permutation.end(), first.begin(), first.end());
  ordering.permutation.insert(ordering.permutation.end(), second.begin(), second.end());
  std::sort(ordering.permutation.begin(), ordering.permutation.begin() +
                                              static_cast<std::ptrdiff_t>(first.size()));
  std::sort(ordering.permutation.begin() + static_cast<std::ptrdiff_t>(first.size()),
            ordering.permutation.end());
  ordering.boundary = static_cast<int>(first.size());
  return ordering;
}

}  // namespace hdlcnn
