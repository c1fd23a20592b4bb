#pragma once

#include <vector>

#include "tensor.hpp"

namespace hdlcnn {

// Agglomerative Ward clustering over feature columns. Input is a rank-2
// matrix [n, p]: n observations (rows), p feature columns. Leaves carry ids
// 0..p-1; the cluster created by merge step s gets id p+s.

struct MergeStep {
  int id_a = 0;  // smaller cluster id of the merged pair
  int id_b = 0;  // larger cluster id
  double distance = 0.0;
  int size = 0;  // leaf count of the new cluster
};

struct Dendrogram {
  int n_leaves = 0;
  std::vector<MergeStep> steps;  // exactly n_leaves - 1 entries
};

// Ordering handed to the model: a permutation of 0..p-1 followed by the split
// boundary (first `boundary` entries form the first input segment).
struct FeatureOrdering {
  std::vector<int> permutation;
  int boundary = 0;
};

double euclidean_distance(const std::vector<double>& a,
                          const std::vector<double>& b);
double euclidean_distance(const Tensor& features, int col_a, int col_b);

// Ward distance of cluster t to the merger of clusters i and j, from the
// current pairwise distances and cluster sizes:
//   d*(t, ij) = sqrt( ((|t|+|i|) d(t,i)^2 + (|t|+|j|) d(t,j)^2
//                     - |t| d(i,j)^2) / (|t|+|i|+|j|) )
double ward_update(double d_ti, double d_tj, double d_ij, int size_t_,
                   int size_i, int size_j);

// Repeatedly merges the globally closest pair; exact distance ties resolve
// to the lexicographically smallest (min id, max id) pair. Ward merge
// distances are monotone non-decreasing.
Dendrogram ward_linkage(const Tensor& features);

// Undo the last k-1 merges: the k clusters present after n_leaves - k steps.
// Members sorted ascending; clusters ordered by their smallest member.
std::vector<std::vector<int>> cut_to_k(const Dendrogram& dendrogram, int k);

// Builds the model-facing ordering from a 2-cluster cut: the cluster holding
// original feature 0 comes first, each cluster internally sorted by id.
FeatureOrdering reorder_features(const std::vector<std::vector<int>>& clusters);

}  // namespace hdlcnn
