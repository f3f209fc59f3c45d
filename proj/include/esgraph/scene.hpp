#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "esgraph/geometry.hpp"
#include "esgraph/random.hpp"

namespace esgraph::scene {

// Fixed 8-predicate inventory. Directional predicates are defined in the room
// frame: +x is right, +y is behind, +z is up, all read subject-relative-to-
// object from the centroid offset.
enum Predicate : int {
  kLeftOf = 0,
  kRightOf,
  kFrontOf,
  kBehindOf,
  kAbove,
  kBelow,
  kCloseBy,
  kSameAs,
  kNumPredicates
};

const char* predicate_name(int id);

constexpr double kNeighborThreshold = 0.5;  // meters, bbox gap
constexpr double kRuleMargin = 0.1;         // meters, directional dead zone

struct Obb {
  Vec3 center{};
  Vec3 half_extents{};
  double yaw = 0.0;
};

struct PointXYZRGB {
  Vec3 pos{};
  std::array<double, 3> rgb{};
};

struct SceneObject {
  int id = 0;
  int class_id = 0;
  // Objects stamped from the same template instance share a group; they carry
  // identical half extents and ground a same-as relation.
  int template_group = 0;
  Obb obb;
  std::vector<PointXYZRGB> points;
};

struct GtEdge {
  int src = 0;
  int dst = 0;
  int predicate = 0;
};

// Multi-label ground truth: one entry per (ordered pair, predicate).
struct GroundTruthGraph {
  std::vector<std::pair<int, int>> nodes;  // (object id, class id)
  std::vector<GtEdge> edges;
};

struct Scene {
  int scene_id = 0;
  std::vector<SceneObject> objects;
  GroundTruthGraph gt;
};

struct SceneGenConfig {
  int num_classes = 20;
  int min_objects = 4;
  int max_objects = 9;
  Vec3 room = {6.0, 6.0, 3.0};
  int points_per_object = 128;
  double duplicate_prob = 0.25;
  double placement_gap = 0.02;
  int max_retries = 200;
};

// World-frame AABB of a yaw-rotated box.
void world_aabb(const Obb& obb, Vec3& lo, Vec3& hi);

// Euclidean norm of per-axis positive gaps between world AABBs.
double aabb_gap(const Obb& a, const Obb& b);

// Every predicate that holds for the ordered pair (subject a, object b):
// one directional predicate per axis with |offset| > margin, close-by iff the
// AABB gap is below the neighbor threshold, same-as iff the template groups
// match. Mutually exclusive per axis by construction.
std::vector<int> relation_predicates(const SceneObject& a, const SceneObject& b);

// Single training label for the pair: same-as wins, then the directional
// predicate of the axis with the largest offset, then close-by.
int primary_predicate(const SceneObject& a, const SceneObject& b);

// Edges for ordered pairs whose AABB gap is below the neighbor threshold.
GroundTruthGraph derive_gt_graph(const std::vector<SceneObject>& objects);

// Deterministic synthetic scene. Object geometry per class comes from a fixed
// template table (independent of the seed), instances add a uniform scale
// jitter and a yaw.
Scene generate_scene(const SceneGenConfig& config, int scene_id, std::uint64_t seed);

struct ViewSpec {
  int view_id = 0;
  Mat3 rotation = identity3();
  Vec3 translation{};
  double sigma_noise = 0.0;
  double subsample = 1.0;
  std::vector<int> visible_ids;  // empty means every object is visible
};

struct SequenceView {
  int scene_id = 0;
  int view_id = 0;
  Mat3 rotation = identity3();
  Vec3 translation{};
  double sigma_noise = 0.0;
  double subsample = 1.0;
  std::vector<int> visible_ids;
  // Points are transformed (R p + T + noise); obb stays in the scene frame
  // and carries the semantic geometry the labels were derived from.
  std::vector<SceneObject> objects;
  GroundTruthGraph gt;  // scene graph restricted to visible objects
};

SequenceView make_view(const Scene& scene, const ViewSpec& spec, std::uint64_t seed);

struct Correspondence {
  int view_a = 0, node_a = 0;
  int view_b = 0, node_b = 0;
};

// Identity pairing on objects visible in both views of one scene.
std::vector<Correspondence> identity_correspondences(const SequenceView& a,
                                                     const SequenceView& b);

}  // namespace esgraph::scene
