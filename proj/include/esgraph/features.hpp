#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "esgraph/autodiff.hpp"
#include "esgraph/geometry.hpp"
#include "esgraph/params.hpp"
#include "esgraph/scene.hpp"
#include "esgraph/tensor.hpp"

namespace esgraph::feat {

// paper-faithful: statistics in world axes, edge features carry the centroid
// difference vector (11 raw dims). Translation-invariant only.
// strict-invariant: statistics in the segment's PCA frame and the centroid
// difference replaced by its norm (9 raw dims). Invariant under any rigid
// motion, which is the premise of the equivariance suite.
enum class FeatureMode { kPaperFaithful, kStrictInvariant };

FeatureMode mode_from_string(const std::string& s);
const char* to_string(FeatureMode m);

constexpr double kLnClamp = 1e-6;  // meters; floor before logarithms

struct SegmentProperties {
  Vec3 centroid{};     // world frame
  Vec3 stddev{};       // stats frame
  Vec3 bbox_size{};    // stats frame, clamped at kLnClamp
  double max_length = 0.0;  // diagonal of the clamped box
  double volume = 0.0;      // clamped product of extents
  // World coordinates of the two box corners at maximal pairwise distance
  // (lexicographic tie-break); these are the model's coordinate channels.
  Vec3 corner_lo{}, corner_hi{};
  Mat3 axes = identity3();  // world-from-stats rotation
  FeatureMode frame = FeatureMode::kPaperFaithful;
};

// Requires >= 2 distinct points and spread above the clamp on some axis.
SegmentProperties compute_segment_properties(std::span<const Vec3> points,
                                             FeatureMode mode);

// (k,3) encoder input: points centered on the centroid, expressed in the
// stats frame.
Tensor centered_points(std::span<const Vec3> points, const SegmentProperties& props);

struct NeighborGraph {
  std::vector<int> src, dst;  // directed pairs, both directions present
};

// Proximity between two segments. World mode: Euclidean norm of per-axis
// positive gaps between the world AABBs. Strict mode: bounding-sphere gap
// |centroid difference| - (l_a + l_b)/2, which is rigid-motion invariant.
double segment_gap(const SegmentProperties& a, const SegmentProperties& b);

NeighborGraph build_neighbor_graph(const std::vector<SegmentProperties>& props);

// [stddev, ln bbox_size, ln volume, ln max_length] -> 8 scalars.
std::array<double, 8> node_aux_features(const SegmentProperties& p);

int edge_raw_dim(FeatureMode mode);
std::vector<double> edge_raw_features(const SegmentProperties& a,
                                      const SegmentProperties& b, FeatureMode mode);

// Shared per-point MLP (two hidden layers) followed by channel-wise max
// pooling per segment; exactly permutation invariant.
struct PointEncoderParams {
  diff::Parameter* w0 = nullptr;
  diff::Parameter* b0 = nullptr;
  diff::Parameter* w1 = nullptr;
  diff::Parameter* b1 = nullptr;
  diff::Parameter* w2 = nullptr;
  diff::Parameter* b2 = nullptr;

  static PointEncoderParams create(diff::ParamStore& store, const std::string& prefix,
                                   int hidden0, int hidden1, int out_dim);
  static PointEncoderParams bind(diff::ParamStore& store, const std::string& prefix);
};

diff::Var encode_points(diff::Tape& tape, diff::Var points,
                        const std::vector<int>& segment_of_row,
                        std::size_t num_segments, const PointEncoderParams& enc);

// Model-ready view of one segmented scene or sequence view.
struct GraphInput {
  int num_nodes = 0;
  std::vector<int> node_ids;  // original object ids, in node order
  Tensor points;              // (total_points, 3)
  std::vector<int> point_segment;
  Tensor node_aux;            // (n, 8)
  Tensor corners0, corners1;  // (n, 3) world coordinates
  std::vector<int> edge_src, edge_dst;
  Tensor edge_raw;  // (m, edge_raw_dim)
  std::vector<int> node_labels;
  std::vector<int> edge_primary;
  std::vector<std::vector<int>> edge_label_sets;  // ascending predicate ids

  bool has_labels() const { return !node_labels.empty(); }
};

// Segment properties, neighbor graph, and raw features for the given
// objects. Labels, when requested, come from the geometric relation rules
// applied to the objects' scene-frame boxes.
GraphInput build_graph_input(const std::vector<scene::SceneObject>& objects,
                             FeatureMode mode, bool with_labels);

}  // namespace esgraph::feat
