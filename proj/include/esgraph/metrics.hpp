#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "esgraph/tensor.hpp"

namespace esgraph::metrics {

// One evaluated item: candidate ids ranked by confidence descending with ties
// broken by ascending id, plus the set of ids counted as correct.
struct RankedItem {
  std::vector<int> gt;
  std::vector<std::pair<double, int>> ranked;  // (confidence, id)
};

// Sorts in place by (confidence desc, id asc).
void sort_candidates(std::vector<std::pair<double, int>>& cs);

// Fraction of items with a ground-truth id among the k most confident
// candidates.
double recall_at_k(const std::vector<RankedItem>& items, int k);

// One retrieval query for cross-sequence matching. gt empty means the node is
// truly unique (no counterpart in the other sequence).
struct MatchQuery {
  int query_id = 0;
  std::vector<std::pair<double, int>> ranked;
  std::vector<int> gt;
};

// Correct when a true match appears among the top-k candidates scoring above
// the threshold; queries whose candidates all fall below the threshold are
// predicted unique and count as correct iff truly unique.
double matching_recall_at_k(const std::vector<MatchQuery>& queries, int k,
                            double threshold);

// Binary accuracy of the unique / not-unique decision (top-1 score vs
// threshold) over all queries.
double uniqueness_accuracy(const std::vector<MatchQuery>& queries, double threshold);

// Mean reciprocal rank of the first correct match within the top k; queries
// without any ground-truth match are excluded. Rank cutoffs ignore the
// confidence threshold.
double mrr_at_k(const std::vector<MatchQuery>& queries, int k);

// Mean average precision at k over queries with ground truth; equals MRR@k
// exactly whenever each query has a single ground-truth match.
double map_at_k(const std::vector<MatchQuery>& queries, int k);

struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<std::int64_t> counts;  // row: ground truth, column: prediction

  std::int64_t& at(int gt, int pred) {
    return counts[static_cast<std::size_t>(gt * num_classes + pred)];
  }
  std::int64_t at(int gt, int pred) const {
    return counts[static_cast<std::size_t>(gt * num_classes + pred)];
  }
  std::int64_t total() const;
  std::vector<double> normalized() const;  // rows sum to 1 where populated
  std::string to_csv(bool normalized_rows = false) const;
};

ConfusionMatrix confusion(const std::vector<int>& predictions,
                          const std::vector<int>& labels, int num_classes);

// Mean over classes that appear (in labels or predictions) of
// TP / (TP + FP + FN).
double class_iou(const std::vector<int>& predictions, const std::vector<int>& labels,
                 int num_classes);

// --- builders for scene-graph evaluation ---

// One item per row of probs; candidates are all classes.
std::vector<RankedItem> class_items(const Tensor& probs, const std::vector<int>& labels);

// One item per edge; ground truth is the edge's predicate label set.
std::vector<RankedItem> predicate_items(const Tensor& edge_probs,
                                        const std::vector<std::vector<int>>& label_sets);

// One item per edge; candidates enumerate the top-3 classes per slot of
// (subject class, predicate, object class) scored by the probability product
// and encoded as ((cs * P) + p) * C + co.
std::vector<RankedItem> triplet_items(const Tensor& node_probs, const Tensor& edge_probs,
                                      const std::vector<int>& edge_src,
                                      const std::vector<int>& edge_dst,
                                      const std::vector<int>& node_labels,
                                      const std::vector<std::vector<int>>& label_sets);

}  // namespace esgraph::metrics
