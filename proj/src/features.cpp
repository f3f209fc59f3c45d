#include "esgraph/features.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "esgraph/error.hpp"

namespace esgraph::feat {

FeatureMode mode_from_string(const std::string& s) {
  if (s == "paper-faithful") return FeatureMode::kPaperFaithful;
  if (s == "strict-invariant") return FeatureMode::kStrictInvariant;
  fail(ErrorCategory::kConfig, "unknown feature mode: " + s);
}

const char* to_string(FeatureMode m) {
  return m == FeatureMode::kPaperFaithful ? "paper-faithful" : "strict-invariant";
}

namespace {

// Descending eigenpairs of the point covariance with per-axis signs fixed by
// the third central moment (flip until the skew is nonnegative). The moment
// is a rotation-invariant function of the points, so the same cloud yields
// the same canonical frame in any world pose.
Mat3 canonical_axes(const std::vector<Vec3>& centered) {
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const Vec3& y : centered) {
    const Eigen::Vector3d v(y[0], y[1], y[2]);
    cov += v * v.transpose();
  }
  cov /= static_cast<double>(centered.size());

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
  if (solver.info() != Eigen::Success)
    fail(ErrorCategory::kDomain, "segment_properties: eigensolver did not converge");

  std::array<int, 3> order = {2, 1, 0};  // Eigen returns ascending eigenvalues
  // Exact eigenvalue ties break by lexicographic eigenvector comparison.
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const double ea = solver.eigenvalues()(a), eb = solver.eigenvalues()(b);
    if (ea != eb) return ea > eb;
    for (int r = 0; r < 3; ++r) {
      const double va = solver.eigenvectors()(r, a), vb = solver.eigenvectors()(r, b);
      if (va != vb) return va < vb;
    }
    return false;
  });

  Mat3 axes{};
  for (int col = 0; col < 3; ++col) {
    Eigen::Vector3d v = solver.eigenvectors().col(order[static_cast<std::size_t>(col)]);
    double skew = 0.0;
    for (const Vec3& y : centered) {
      const double proj = v(0) * y[0] + v(1) * y[1] + v(2) * y[2];
      skew += proj * proj * proj;
    }
    if (skew < 0.0) v = -v;
    for (int r = 0; r < 3; ++r) axes[static_cast<std::size_t>(r * 3 + col)] = v(r);
  }
  return axes;
}

}  // namespace

SegmentProperties compute_segment_properties(std::span<const Vec3> points,
                                             FeatureMode mode) {
  if (points.size() < 2)
    fail(ErrorCategory::kDomain, "segment_properties: need at least 2 points");
  bool distinct = false;
  for (std::size_t i = 1; i < points.size() && !distinct; ++i)
    distinct = points[i] != points[0];
  if (!distinct)
    fail(ErrorCategory::kDomain, "segment_properties: degenerate segment (all points equal)");

  SegmentProperties props;
  props.frame = mode;

  Vec3 c{};
  for (const Vec3& p : points) c = add(c, p);
  props.centroid = scaled(c, 1.0 / static_cast<double>(points.size()));

  std::vector<Vec3> centered;
  centered.reserve(points.size());
  for (const Vec3& p : points) centered.push_back(sub(p, props.centroid));

  if (mode == FeatureMode::kStrictInvariant) props.axes = canonical_axes(centered);

  // Stats frame coordinates: y = axes^T (p - centroid).
  const Mat3 world_from_stats = props.axes;
  const Mat3 stats_from_world = transpose3(world_from_stats);
  Vec3 lo = {1e300, 1e300, 1e300}, hi = {-1e300, -1e300, -1e300};
  Vec3 sq{};
  for (Vec3& y : centered) {
    y = matvec(stats_from_world, y);
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], y[a]);
      hi[a] = std::max(hi[a], y[a]);
      sq[a] += y[a] * y[a];
    }
  }
  for (int a = 0; a < 3; ++a)
    props.stddev[a] = std::sqrt(sq[a] / static_cast<double>(points.size()));

  bool any_spread = false;
  for (int a = 0; a < 3; ++a) {
    const double raw = hi[a] - lo[a];
    if (raw > kLnClamp) any_spread = true;
    props.bbox_size[a] = std::max(raw, kLnClamp);
  }
  if (!any_spread)
    fail(ErrorCategory::kDomain, "segment_properties: zero spread on every axis");

  props.volume = std::max(props.bbox_size[0] * props.bbox_size[1] * props.bbox_size[2],
                          kLnClamp);
  props.max_length = std::max(norm(props.bbox_size), kLnClamp);

  // The two furthest corners of the (unclamped) stats-frame box. All four
  // main diagonals tie exactly, so the lexicographically smallest pair wins;
  // for an axis box that is (lo, hi).
  std::array<Vec3, 8> corners;
  for (int k = 0; k < 8; ++k)
    corners[static_cast<std::size_t>(k)] = {k & 1 ? hi[0] : lo[0], k & 2 ? hi[1] : lo[1],
                                            k & 4 ? hi[2] : lo[2]};
  double best_d = -1.0;
  Vec3 best_a{}, best_b{};
  for (int i = 0; i < 8; ++i) {
    for (int j = i + 1; j < 8; ++j) {
      Vec3 a = corners[static_cast<std::size_t>(i)];
      Vec3 b = corners[static_cast<std::size_t>(j)];
      if (b < a) std::swap(a, b);
      const double d = norm(sub(a, b));
      if (d > best_d || (d == best_d && (a < best_a || (a == best_a && b < best_b)))) {
        best_d = d;
        best_a = a;
        best_b = b;
      }
    }
  }
  props.corner_lo = add(matvec(world_from_stats, best_a), props.centroid);
  props.corner_hi = add(matvec(world_from_stats, best_b), props.centroid);
  return props;
}

Tensor centered_points(std::span<const Vec3> points, const SegmentProperties& props) {
  const Mat3 stats_from_world = transpose3(props.axes);
  Tensor out({points.size(), 3});
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3 y = matvec(stats_from_world, sub(points[i], props.centroid));
    for (int a = 0; a < 3; ++a) out.at(i, static_cast<std::size_t>(a)) = y[a];
  }
  return out;
}

double segment_gap(const SegmentProperties& a, const SegmentProperties& b) {
  if (a.frame != b.frame)
    fail(ErrorCategory::kDomain, "segment_gap: mixed feature modes");
  if (a.frame == FeatureMode::kStrictInvariant) {
    return norm(sub(a.centroid, b.centroid)) - 0.5 * (a.max_length + b.max_length);
  }
  double s = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double g =
        std::max({0.0, b.corner_lo[i] - a.corner_hi[i], a.corner_lo[i] - b.corner_hi[i]});
    s += g * g;
  }
  return std::sqrt(s);
}

NeighborGraph build_neighbor_graph(const std::vector<SegmentProperties>& props) {
  if (props.empty())
    fail(ErrorCategory::kDomain, "build_neighbor_graph: need at least 1 segment");
  NeighborGraph g;
  for (std::size_t i = 0; i < props.size(); ++i) {
    for (std::size_t j = i + 1; j < props.size(); ++j) {
      if (segment_gap(props[i], props[j]) < scene::kNeighborThreshold) {
        g.src.push_back(static_cast<int>(i));
        g.dst.push_back(static_cast<int>(j));
        g.src.push_back(static_cast<int>(j));
        g.dst.push_back(static_cast<int>(i));
      }
    }
  }
  return g;
}

std::array<double, 8> node_aux_features(const SegmentProperties& p) {
  return {p.stddev[0],
          p.stddev[1],
          p.stddev[2],
          std::log(p.bbox_size[0]),
          std::log(p.bbox_size[1]),
          std::log(p.bbox_size[2]),
          std::log(p.volume),
          std::log(p.max_length)};
}

int edge_raw_dim(FeatureMode mode) {
  return mode == FeatureMode::kPaperFaithful ? 11 : 9;
}

std::vector<double> edge_raw_features(const SegmentProperties& a,
                                      const SegmentProperties& b, FeatureMode mode) {
  std::vector<double> r;
  r.reserve(static_cast<std::size_t>(edge_raw_dim(mode)));
  if (mode == FeatureMode::kPaperFaithful) {
    for (int i = 0; i < 3; ++i) r.push_back(a.centroid[i] - b.centroid[i]);
  } else {
    r.push_back(norm(sub(a.centroid, b.centroid)));
  }
  for (int i = 0; i < 3; ++i) r.push_back(a.stddev[i] - b.stddev[i]);
  for (int i = 0; i < 3; ++i) r.push_back(a.bbox_size[i] - b.bbox_size[i]);
  // log-ratio as a difference of logs: exactly antisymmetric under swap
  r.push_back(std::log(a.max_length) - std::log(b.max_length));
  r.push_back(std::log(a.volume) - std::log(b.volume));
  return r;
}

PointEncoderParams PointEncoderParams::create(diff::ParamStore& store,
                                              const std::string& prefix, int hidden0,
                                              int hidden1, int out_dim) {
  PointEncoderParams e;
  e.w0 = &store.create(prefix + ".l0.w", {3, static_cast<std::size_t>(hidden0)});
  e.b0 = &store.create(prefix + ".l0.b", {static_cast<std::size_t>(hidden0)});
  e.w1 = &store.create(prefix + ".l1.w",
                       {static_cast<std::size_t>(hidden0), static_cast<std::size_t>(hidden1)});
  e.b1 = &store.create(prefix + ".l1.b", {static_cast<std::size_t>(hidden1)});
  e.w2 = &store.create(prefix + ".l2.w",
                       {static_cast<std::size_t>(hidden1), static_cast<std::size_t>(out_dim)});
  e.b2 = &store.create(prefix + ".l2.b", {static_cast<std::size_t>(out_dim)});
  return e;
}

PointEncoderParams PointEncoderParams::bind(diff::ParamStore& store,
                                            const std::string& prefix) {
  PointEncoderParams e;
  e.w0 = &store.at(prefix + ".l0.w");
  e.b0 = &store.at(prefix + ".l0.b");
  e.w1 = &store.at(prefix + ".l1.w");
  e.b1 = &store.at(prefix + ".l1.b");
  e.w2 = &store.at(prefix + ".l2.w");
  e.b2 = &store.at(prefix + ".l2.b");
  return e;
}

diff::Var encode_points(diff::Tape& tape, diff::Var points,
                        const std::vector<int>& segment_of_row,
                        std::size_t num_segments, const PointEncoderParams& enc) {
  diff::Var h = tape.relu(tape.affine(points, tape.param(*enc.w0), tape.param(*enc.b0)));
  h = tape.relu(tape.affine(h, tape.param(*enc.w1), tape.param(*enc.b1)));
  h = tape.affine(h, tape.param(*enc.w2), tape.param(*enc.b2));
  return tape.segment_max(h, segment_of_row, num_segments);
}

GraphInput build_graph_input(const std::vector<scene::SceneObject>& objects,
                             FeatureMode mode, bool with_labels) {
  if (objects.empty()) fail(ErrorCategory::kDomain, "build_graph_input: empty scene");

  GraphInput g;
  g.num_nodes = static_cast<int>(objects.size());

  std::vector<SegmentProperties> props;
  std::vector<std::vector<Vec3>> clouds;
  props.reserve(objects.size());
  for (const scene::SceneObject& o : objects) {
    std::vector<Vec3> pts;
    pts.reserve(o.points.size());
    for (const scene::PointXYZRGB& p : o.points) pts.push_back(p.pos);
    props.push_back(compute_segment_properties(pts, mode));
    clouds.push_back(std::move(pts));
    g.node_ids.push_back(o.id);
  }

  std::size_t total = 0;
  for (const auto& c : clouds) total += c.size();
  g.points = Tensor({total, 3});
  std::size_t row = 0;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    Tensor local = centered_points(clouds[i], props[i]);
    for (std::size_t k = 0; k < clouds[i].size(); ++k, ++row) {
      for (std::size_t a = 0; a < 3; ++a) g.points.at(row, a) = local.at(k, a);
      g.point_segment.push_back(static_cast<int>(i));
    }
  }

  g.node_aux = Tensor({objects.size(), 8});
  g.corners0 = Tensor({objects.size(), 3});
  g.corners1 = Tensor({objects.size(), 3});
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto aux = node_aux_features(props[i]);
    for (std::size_t a = 0; a < 8; ++a) g.node_aux.at(i, a) = aux[a];
    for (std::size_t a = 0; a < 3; ++a) {
      g.corners0.at(i, a) = props[i].corner_lo[a];
      g.corners1.at(i, a) = props[i].corner_hi[a];
    }
  }

  const NeighborGraph ng = build_neighbor_graph(props);
  g.edge_src = ng.src;
  g.edge_dst = ng.dst;
  const std::size_t m = ng.src.size();
  const std::size_t rdim = static_cast<std::size_t>(edge_raw_dim(mode));
  g.edge_raw = Tensor({m, rdim});
  for (std::size_t e = 0; e < m; ++e) {
    const auto r = edge_raw_features(props[static_cast<std::size_t>(ng.src[e])],
                                     props[static_cast<std::size_t>(ng.dst[e])], mode);
    for (std::size_t a = 0; a < rdim; ++a) g.edge_raw.at(e, a) = r[a];
  }

  if (with_labels) {
    for (const scene::SceneObject& o : objects) g.node_labels.push_back(o.class_id);
    for (std::size_t e = 0; e < m; ++e) {
      const scene::SceneObject& a = objects[static_cast<std::size_t>(ng.src[e])];
      const scene::SceneObject& b = objects[static_cast<std::size_t>(ng.dst[e])];
      std::vector<int> set = scene::relation_predicates(a, b);
      if (set.empty()) set.push_back(scene::kCloseBy);
      std::sort(set.begin(), set.end());
      g.edge_primary.push_back(scene::primary_predicate(a, b));
      g.edge_label_sets.push_back(std::move(set));
    }
  }
  return g;
}

}  // namespace esgraph::feat
