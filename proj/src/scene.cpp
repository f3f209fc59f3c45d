#include "esgraph/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "esgraph/error.hpp"

namespace esgraph::scene {

const char* predicate_name(int id) {
  switch (id) {
    case kLeftOf: return "left-of";
    case kRightOf: return "right-of";
    case kFrontOf: return "front-of";
    case kBehindOf: return "behind-of";
    case kAbove: return "above";
    case kBelow: return "below";
    case kCloseBy: return "close-by";
    case kSameAs: return "same-as";
  }
  return "?";
}

void world_aabb(const Obb& obb, Vec3& lo, Vec3& hi) {
  const Mat3 r = yaw_rotation(obb.yaw);
  Vec3 half{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) half[i] += std::abs(r[i * 3 + j]) * obb.half_extents[j];
  lo = sub(obb.center, half);
  hi = add(obb.center, half);
}

double aabb_gap(const Obb& a, const Obb& b) {
  Vec3 alo, ahi, blo, bhi;
  world_aabb(a, alo, ahi);
  world_aabb(b, blo, bhi);
  double s = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double g = std::max({0.0, blo[i] - ahi[i], alo[i] - bhi[i]});
    s += g * g;
  }
  return std::sqrt(s);
}

std::vector<int> relation_predicates(const SceneObject& a, const SceneObject& b) {
  std::vector<int> out;
  const Vec3 d = sub(a.obb.center, b.obb.center);
  if (d[0] < -kRuleMargin) out.push_back(kLeftOf);
  if (d[0] > kRuleMargin) out.push_back(kRightOf);
  if (d[1] < -kRuleMargin) out.push_back(kFrontOf);
  if (d[1] > kRuleMargin) out.push_back(kBehindOf);
  if (d[2] > kRuleMargin) out.push_back(kAbove);
  if (d[2] < -kRuleMargin) out.push_back(kBelow);
  if (aabb_gap(a.obb, b.obb) < kNeighborThreshold) out.push_back(kCloseBy);
  if (a.template_group == b.template_group) out.push_back(kSameAs);
  return out;
}

int primary_predicate(const SceneObject& a, const SceneObject& b) {
  if (a.template_group == b.template_group) return kSameAs;
  const Vec3 d = sub(a.obb.center, b.obb.center);
  int best_axis = -1;
  double best = kRuleMargin;
  for (int axis = 0; axis < 3; ++axis) {
    if (std::abs(d[axis]) > best) {
      best = std::abs(d[axis]);
      best_axis = axis;
    }
  }
  switch (best_axis) {
    case 0: return d[0] < 0 ? kLeftOf : kRightOf;
    case 1: return d[1] < 0 ? kFrontOf : kBehindOf;
    case 2: return d[2] > 0 ? kAbove : kBelow;
  }
  return kCloseBy;
}

GroundTruthGraph derive_gt_graph(const std::vector<SceneObject>& objects) {
  if (objects.size() < 2)
    fail(ErrorCategory::kDomain, "derive_gt_graph: need at least 2 objects");
  GroundTruthGraph gt;
  for (const SceneObject& o : objects) gt.nodes.emplace_back(o.id, o.class_id);
  for (std::size_t i = 0; i < objects.size(); ++i) {
    for (std::size_t j = 0; j < objects.size(); ++j) {
      if (i == j) continue;
      if (aabb_gap(objects[i].obb, objects[j].obb) >= kNeighborThreshold) continue;
      for (int p : relation_predicates(objects[i], objects[j]))
        gt.edges.push_back({objects[i].id, objects[j].id, p});
    }
  }
  return gt;
}

namespace {

struct Template {
  Vec3 half_extents;
  std::array<double, 3> rgb;
};

// Class geometry is a pure function of the class id so the class <-> shape
// association holds across scenes and seeds. Axis extents are built with a
// minimum ratio of 1.25 between sorted components, which keeps the covariance
// spectrum well separated for the canonical-frame computation; templates that
// land too close to an earlier class are re-rolled so classes stay tellable
// apart.
Template class_template(int class_id) {
  static std::vector<Template> cache;
  while (static_cast<int>(cache.size()) <= class_id) {
    const int id = static_cast<int>(cache.size());
    RandomSource rng(splitmix64(0xC1A55E5ULL + static_cast<std::uint64_t>(id)));
    Template t{};
    for (int attempt = 0; attempt < 64; ++attempt) {
      const double h2 = 0.06 + 0.22 * rng.uniform01();
      const double h1 = h2 * (1.25 + 0.55 * rng.uniform01());
      const double h0 = h1 * (1.25 + 0.55 * rng.uniform01());
      static const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                      {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
      const int* perm = perms[id % 6];
      const double sorted[3] = {h0, h1, h2};
      for (int a = 0; a < 3; ++a) t.half_extents[perm[a]] = sorted[a];
      bool distinct = true;
      for (const Template& prev : cache) {
        double rel = 0.0;
        for (int a = 0; a < 3; ++a)
          rel = std::max(rel, std::abs(t.half_extents[a] - prev.half_extents[a]) /
                                  std::max(t.half_extents[a], prev.half_extents[a]));
        if (rel < 0.08) distinct = false;
      }
      if (distinct) break;
    }
    for (int c = 0; c < 3; ++c) t.rgb[c] = 0.15 + 0.7 * rng.uniform01();
    cache.push_back(t);
  }
  return cache[static_cast<std::size_t>(class_id)];
}

void sample_points(SceneObject& obj, int count, RandomSource& rng,
                   const std::array<double, 3>& base_rgb) {
  const Mat3 r = yaw_rotation(obj.obb.yaw);
  obj.points.resize(static_cast<std::size_t>(count));
  for (auto& pt : obj.points) {
    Vec3 local;
    for (int a = 0; a < 3; ++a)
      local[a] = rng.uniform(-obj.obb.half_extents[a], obj.obb.half_extents[a]);
    pt.pos = add(matvec(r, local), obj.obb.center);
    for (int c = 0; c < 3; ++c)
      pt.rgb[c] = std::clamp(base_rgb[c] + rng.uniform(-0.05, 0.05), 0.0, 1.0);
  }
}

}  // namespace

Scene generate_scene(const SceneGenConfig& config, int scene_id, std::uint64_t seed) {
  if (config.max_objects < 2 || config.min_objects < 2 ||
      config.min_objects > config.max_objects)
    fail(ErrorCategory::kDomain, "generate_scene: need at least 2 objects");
  if (config.room[0] <= 0 || config.room[1] <= 0 || config.room[2] <= 0)
    fail(ErrorCategory::kDomain, "generate_scene: room extents must be positive");
  if (config.points_per_object < 8)
    fail(ErrorCategory::kDomain, "generate_scene: need >= 8 points per object");

  RandomSource rng =
      RandomSource(seed).fork("scenegen").fork(static_cast<std::uint64_t>(scene_id));
  Scene scene;
  scene.scene_id = scene_id;
  const int n = rng.uniform_int(config.min_objects, config.max_objects);

  for (int i = 0; i < n; ++i) {
    SceneObject obj;
    obj.id = i;
    std::array<double, 3> rgb{};
    const bool duplicate = i > 0 && rng.bernoulli(config.duplicate_prob);
    int dup_source = -1;
    if (duplicate) {
      dup_source = rng.uniform_int(0, i - 1);
      const SceneObject& src = scene.objects[static_cast<std::size_t>(dup_source)];
      obj.class_id = src.class_id;
      obj.template_group = src.template_group;
      obj.obb.half_extents = src.obb.half_extents;
      rgb = class_template(obj.class_id).rgb;
    } else {
      obj.class_id = static_cast<int>(rng.below(static_cast<std::uint64_t>(config.num_classes)));
      obj.template_group = i;
      const Template t = class_template(obj.class_id);
      const double jitter = rng.uniform(0.94, 1.06);  // uniform: ratios survive
      obj.obb.half_extents = scaled(t.half_extents, jitter);
      rgb = t.rgb;
    }

    bool placed = false;
    for (int attempt = 0; attempt < config.max_retries && !placed; ++attempt) {
      // Duplicates keep the source yaw so twins agree in every frame.
      if (duplicate)
        obj.obb.yaw = scene.objects[static_cast<std::size_t>(dup_source)].obb.yaw;
      else
        obj.obb.yaw = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
      Vec3 lo, hi;
      {
        Obb probe = obj.obb;
        probe.center = {0, 0, 0};
        world_aabb(probe, lo, hi);
      }
      if (duplicate) {
        // Offset along one horizontal axis by the summed AABB extents plus a
        // sub-threshold gap, so the twin lands next to its source without
        // overlap and usually stays neighbor-eligible.
        const SceneObject& src = scene.objects[static_cast<std::size_t>(dup_source)];
        Vec3 lo_s, hi_s;
        world_aabb(src.obb, lo_s, hi_s);
        Vec3 lo_d, hi_d;
        {
          Obb probe = obj.obb;
          probe.center = {0, 0, 0};
          world_aabb(probe, lo_d, hi_d);
        }
        const int axis = rng.bernoulli(0.5) ? 0 : 1;
        const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
        const double support = (hi_s[axis] - src.obb.center[axis]) + hi_d[axis];
        const double dist = support + rng.uniform(0.04, 0.4);
        obj.obb.center = src.obb.center;
        obj.obb.center[axis] += sign * dist;
        obj.obb.center[1 - axis] += rng.uniform(-0.1, 0.1);
      } else {
        for (int a = 0; a < 3; ++a) {
          const double margin = hi[a] + 0.05;
          if (config.room[a] <= 2 * margin) {
            obj.obb.center[a] = config.room[a] / 2.0;
          } else {
            obj.obb.center[a] = rng.uniform(margin, config.room[a] - margin);
          }
        }
      }
      bool in_room = true;
      for (int a = 0; a < 3; ++a)
        in_room = in_room && obj.obb.center[a] + lo[a] >= -1e-9 &&
                  obj.obb.center[a] + hi[a] <= config.room[a] + 1e-9;
      if (!in_room) continue;
      bool clear = true;
      for (const SceneObject& other : scene.objects)
        if (aabb_gap(obj.obb, other.obb) < config.placement_gap) clear = false;
      if (clear) placed = true;
    }
    if (!placed && duplicate) {
      // Twin placement can be crowded out; retry as an independently placed
      // object with the same template (a far twin simply grounds no same-as
      // edge).
      for (int attempt = 0; attempt < config.max_retries && !placed; ++attempt) {
        Vec3 lo, hi;
        {
          Obb probe = obj.obb;
          probe.center = {0, 0, 0};
          world_aabb(probe, lo, hi);
        }
        for (int a = 0; a < 3; ++a) {
          const double margin = hi[a] + 0.05;
          obj.obb.center[a] = config.room[a] <= 2 * margin
                                  ? config.room[a] / 2.0
                                  : rng.uniform(margin, config.room[a] - margin);
        }
        bool clear = true;
        for (const SceneObject& other : scene.objects)
          if (aabb_gap(obj.obb, other.obb) < config.placement_gap) clear = false;
        placed = clear;
      }
    }
    if (!placed)
      fail(ErrorCategory::kDomain, "generate_scene: placement unsatisfiable for object " +
                                       std::to_string(i));
    sample_points(obj, config.points_per_object, rng, rgb);
    scene.objects.push_back(std::move(obj));
  }

  scene.gt = derive_gt_graph(scene.objects);
  return scene;
}

SequenceView make_view(const Scene& scene, const ViewSpec& spec, std::uint64_t seed) {
  if (!is_rotation(spec.rotation, 1e-9))
    fail(ErrorCategory::kDomain, "make_view: transform is not a proper rotation");
  if (!(spec.subsample > 0.0 && spec.subsample <= 1.0))
    fail(ErrorCategory::kDomain, "make_view: subsample ratio must be in (0,1]");
  if (spec.sigma_noise < 0.0)
    fail(ErrorCategory::kDomain, "make_view: negative noise");

  std::vector<int> visible = spec.visible_ids;
  if (visible.empty())
    for (const SceneObject& o : scene.objects) visible.push_back(o.id);
  std::sort(visible.begin(), visible.end());

  SequenceView view;
  view.scene_id = scene.scene_id;
  view.view_id = spec.view_id;
  view.rotation = spec.rotation;
  view.translation = spec.translation;
  view.sigma_noise = spec.sigma_noise;
  view.subsample = spec.subsample;
  view.visible_ids = visible;

  RandomSource rng =
      RandomSource(seed).fork("view").fork(static_cast<std::uint64_t>(spec.view_id));
  for (const SceneObject& src : scene.objects) {
    if (!std::binary_search(visible.begin(), visible.end(), src.id)) continue;
    SceneObject obj = src;
    obj.points.clear();

    std::vector<std::size_t> order(src.points.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t keep = std::max<std::size_t>(
        8, static_cast<std::size_t>(
               std::ceil(spec.subsample * static_cast<double>(src.points.size()))));
    if (keep < src.points.size()) {
      rng.shuffle(order);
      order.resize(keep);
      std::sort(order.begin(), order.end());
    }
    for (std::size_t k : order) {
      PointXYZRGB pt = src.points[k];
      pt.pos = add(matvec(spec.rotation, pt.pos), spec.translation);
      if (spec.sigma_noise > 0.0)
        for (int a = 0; a < 3; ++a) pt.pos[a] += rng.normal(0.0, spec.sigma_noise);
      obj.points.push_back(pt);
    }
    view.objects.push_back(std::move(obj));
  }
  if (view.objects.empty())
    fail(ErrorCategory::kDomain, "make_view: visibility mask removed every object");

  for (const SceneObject& o : view.objects) view.gt.nodes.emplace_back(o.id, o.class_id);
  for (const GtEdge& e : scene.gt.edges) {
    const bool src_ok = std::binary_search(visible.begin(), visible.end(), e.src);
    const bool dst_ok = std::binary_search(visible.begin(), visible.end(), e.dst);
    if (src_ok && dst_ok) view.gt.edges.push_back(e);
  }
  return view;
}

std::vector<Correspondence> identity_correspondences(const SequenceView& a,
                                                     const SequenceView& b) {
  std::vector<Correspondence> out;
  for (const SceneObject& oa : a.objects)
    for (const SceneObject& ob : b.objects)
      if (oa.id == ob.id) out.push_back({a.view_id, oa.id, b.view_id, ob.id});
  return out;
}

}  // namespace esgraph::scene
