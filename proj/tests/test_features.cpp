#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "esgraph/error.hpp"
#include "esgraph/features.hpp"
#include "esgraph/scene.hpp"

using namespace esgraph;
using namespace esgraph::feat;

namespace {

std::vector<Vec3> random_cloud(RandomSource& rng, std::size_t n, Vec3 center,
                               Vec3 half) {
  std::vector<Vec3> pts(n);
  for (auto& p : pts)
    for (int a = 0; a < 3; ++a)
      p[a] = center[a] + rng.uniform(-half[a], half[a]);
  return pts;
}

// Straight-loop recomputation of world-frame segment properties.
struct PropsOracle {
  Vec3 centroid{}, stddev{}, bbox{};
  double volume = 0, max_length = 0;
  Vec3 lo{}, hi{};
};

PropsOracle props_oracle(const std::vector<Vec3>& pts) {
  PropsOracle o;
  for (const Vec3& p : pts)
    for (int a = 0; a < 3; ++a) o.centroid[a] += p[a];
  for (int a = 0; a < 3; ++a) o.centroid[a] /= static_cast<double>(pts.size());
  o.lo = {1e300, 1e300, 1e300};
  o.hi = {-1e300, -1e300, -1e300};
  for (const Vec3& p : pts)
    for (int a = 0; a < 3; ++a) {
      o.stddev[a] += (p[a] - o.centroid[a]) * (p[a] - o.centroid[a]);
      o.lo[a] = std::min(o.lo[a], p[a]);
      o.hi[a] = std::max(o.hi[a], p[a]);
    }
  for (int a = 0; a < 3; ++a) {
    o.stddev[a] = std::sqrt(o.stddev[a] / static_cast<double>(pts.size()));
    o.bbox[a] = std::max(o.hi[a] - o.lo[a], 1e-6);
  }
  o.volume = std::max(o.bbox[0] * o.bbox[1] * o.bbox[2], 1e-6);
  o.max_length = std::sqrt(o.bbox[0] * o.bbox[0] + o.bbox[1] * o.bbox[1] +
                           o.bbox[2] * o.bbox[2]);
  return o;
}

}  // namespace

TEST_CASE("segment properties: unit cube corners") {
  std::vector<Vec3> pts;
  for (int k = 0; k < 8; ++k)
    pts.push_back({k & 1 ? 1.0 : 0.0, k & 2 ? 1.0 : 0.0, k & 4 ? 1.0 : 0.0});
  const SegmentProperties p =
      compute_segment_properties(pts, FeatureMode::kPaperFaithful);
  for (int a = 0; a < 3; ++a) {
    CHECK(p.centroid[a] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p.bbox_size[a] == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(p.volume == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.max_length == doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));
  // lex tie-break picks the (0,0,0)-(1,1,1) diagonal
  for (int a = 0; a < 3; ++a) {
    CHECK(p.corner_lo[a] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(p.corner_hi[a] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("segment properties: coplanar clamp and degenerate errors") {
  std::vector<Vec3> flat = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}};
  const SegmentProperties p =
      compute_segment_properties(flat, FeatureMode::kPaperFaithful);
  CHECK(p.bbox_size[2] == 1e-6);
  CHECK(std::isfinite(std::log(p.bbox_size[2])));
  for (double v : node_aux_features(p)) CHECK(std::isfinite(v));

  std::vector<Vec3> one = {{0, 0, 0}};
  CHECK_THROWS_AS(compute_segment_properties(one, FeatureMode::kPaperFaithful), Error);
  std::vector<Vec3> same = {{1, 2, 3}, {1, 2, 3}, {1, 2, 3}};
  CHECK_THROWS_AS(compute_segment_properties(same, FeatureMode::kPaperFaithful), Error);
}

TEST_CASE("segment properties: 100 random points match the straight-loop oracle") {
  RandomSource rng(7);
  const auto pts = random_cloud(rng, 100, {1.0, -2.0, 0.5}, {0.8, 0.4, 0.2});
  const SegmentProperties p =
      compute_segment_properties(pts, FeatureMode::kPaperFaithful);
  const PropsOracle o = props_oracle(pts);
  for (int a = 0; a < 3; ++a) {
    CHECK(std::abs(p.centroid[a] - o.centroid[a]) < 1e-12);
    CHECK(std::abs(p.stddev[a] - o.stddev[a]) < 1e-12);
    CHECK(std::abs(p.bbox_size[a] - o.bbox[a]) < 1e-12);
    CHECK(std::abs(p.corner_lo[a] - o.lo[a]) < 1e-12);
    CHECK(std::abs(p.corner_hi[a] - o.hi[a]) < 1e-12);
  }
  CHECK(std::abs(p.volume - o.volume) < 1e-12);
  CHECK(std::abs(p.max_length - o.max_length) < 1e-12);
}

TEST_CASE("segment properties: canonical frame is rigid-motion invariant") {
  RandomSource rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const auto pts = random_cloud(rng, 96, {0.0, 0.0, 0.0},
                                  {0.5 + 0.3 * rng.uniform01(), 0.3, 0.15});
    const SegmentProperties p =
        compute_segment_properties(pts, FeatureMode::kStrictInvariant);

    const Mat3 q = random_rotation(rng);
    const Vec3 g = {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    std::vector<Vec3> moved(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) moved[i] = add(matvec(q, pts[i]), g);
    const SegmentProperties pm =
        compute_segment_properties(moved, FeatureMode::kStrictInvariant);

    for (int a = 0; a < 3; ++a) {
      CHECK(std::abs(p.stddev[a] - pm.stddev[a]) < 1e-9);
      CHECK(std::abs(p.bbox_size[a] - pm.bbox_size[a]) < 1e-9);
    }
    CHECK(std::abs(p.volume - pm.volume) < 1e-9);
    CHECK(std::abs(p.max_length - pm.max_length) < 1e-9);
    // corners transform with the motion
    const Vec3 lo_expect = add(matvec(q, p.corner_lo), g);
    const Vec3 hi_expect = add(matvec(q, p.corner_hi), g);
    for (int a = 0; a < 3; ++a) {
      CHECK(std::abs(pm.corner_lo[a] - lo_expect[a]) < 1e-9);
      CHECK(std::abs(pm.corner_hi[a] - hi_expect[a]) < 1e-9);
    }
    // encoder input is identical in the canonical frame
    const Tensor c0 = centered_points(pts, p);
    const Tensor c1 = centered_points(moved, pm);
    for (std::size_t i = 0; i < c0.size(); ++i) CHECK(std::abs(c0[i] - c1[i]) < 1e-9);
  }
}

TEST_CASE("segment properties: translation moves x, leaves h parts") {
  RandomSource rng(12);
  const auto pts = random_cloud(rng, 64, {0.2, 0.1, 0.4}, {0.5, 0.25, 0.12});
  const Vec3 t = {2.0, -1.0, 0.5};
  std::vector<Vec3> moved(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) moved[i] = add(pts[i], t);
  for (FeatureMode mode :
       {FeatureMode::kPaperFaithful, FeatureMode::kStrictInvariant}) {
    const SegmentProperties a = compute_segment_properties(pts, mode);
    const SegmentProperties b = compute_segment_properties(moved, mode);
    const auto fa = node_aux_features(a);
    const auto fb = node_aux_features(b);
    for (std::size_t k = 0; k < fa.size(); ++k) CHECK(std::abs(fa[k] - fb[k]) < 1e-9);
    for (int x = 0; x < 3; ++x) {
      CHECK(std::abs(b.corner_lo[x] - (a.corner_lo[x] + t[x])) < 1e-9);
      CHECK(std::abs(b.corner_hi[x] - (a.corner_hi[x] + t[x])) < 1e-9);
    }
  }
}

TEST_CASE("neighbor graph: threshold rules") {
  auto props_of_cube = [](Vec3 center) {
    std::vector<Vec3> pts;
    for (int k = 0; k < 8; ++k)
      pts.push_back({center[0] + (k & 1 ? 0.5 : -0.5), center[1] + (k & 2 ? 0.5 : -0.5),
                     center[2] + (k & 4 ? 0.5 : -0.5)});
    return compute_segment_properties(pts, FeatureMode::kPaperFaithful);
  };
  {
    std::vector<SegmentProperties> ps = {props_of_cube({0, 0, 0}),
                                         props_of_cube({1.3, 0, 0})};
    const NeighborGraph g = build_neighbor_graph(ps);  // gap 0.3
    REQUIRE(g.src.size() == 2);
    CHECK(g.src[0] == 0);
    CHECK(g.dst[0] == 1);
    CHECK(g.src[1] == 1);
    CHECK(g.dst[1] == 0);
  }
  {
    std::vector<SegmentProperties> ps = {props_of_cube({0, 0, 0}),
                                         props_of_cube({1.6, 0, 0})};
    CHECK(build_neighbor_graph(ps).src.empty());  // gap 0.6
  }
  {
    std::vector<SegmentProperties> ps = {props_of_cube({0, 0, 0}),
                                         props_of_cube({0.4, 0.2, 0.0})};
    CHECK(build_neighbor_graph(ps).src.size() == 2);  // overlapping -> gap 0
  }
  {
    std::vector<SegmentProperties> one = {props_of_cube({0, 0, 0})};
    CHECK(build_neighbor_graph(one).src.empty());
  }
}

TEST_CASE("edge raw features: identity, antisymmetry, oracle") {
  RandomSource rng(44);
  const auto pa = random_cloud(rng, 80, {0, 0, 0}, {0.6, 0.3, 0.15});
  const auto pb = random_cloud(rng, 70, {1.2, 0.5, 0.2}, {0.4, 0.25, 0.1});
  const SegmentProperties a = compute_segment_properties(pa, FeatureMode::kPaperFaithful);
  const SegmentProperties b = compute_segment_properties(pb, FeatureMode::kPaperFaithful);

  const auto raa = edge_raw_features(a, a, FeatureMode::kPaperFaithful);
  for (double v : raa) CHECK(v == 0.0);

  const auto rab = edge_raw_features(a, b, FeatureMode::kPaperFaithful);
  const auto rba = edge_raw_features(b, a, FeatureMode::kPaperFaithful);
  REQUIRE(rab.size() == 11);
  for (std::size_t i = 0; i < rab.size(); ++i) CHECK(rab[i] == -rba[i]);

  // independent recomputation
  CHECK(std::abs(rab[0] - (a.centroid[0] - b.centroid[0])) < 1e-12);
  CHECK(std::abs(rab[3] - (a.stddev[0] - b.stddev[0])) < 1e-12);
  CHECK(std::abs(rab[6] - (a.bbox_size[0] - b.bbox_size[0])) < 1e-12);
  CHECK(std::abs(rab[9] - std::log(a.max_length / b.max_length)) < 1e-12);
  CHECK(std::abs(rab[10] - std::log(a.volume / b.volume)) < 1e-12);

  REQUIRE(edge_raw_features(a, b, FeatureMode::kStrictInvariant).size() == 9);
}

TEST_CASE("point encoder: permutation invariance and constant input") {
  RandomSource rng(5);
  diff::ParamStore store;
  const auto enc = PointEncoderParams::create(store, "enc", 16, 24, 32);
  diff::init_params(store, 1);

  Tensor pts({20, 3});
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = rng.normal();
  std::vector<int> seg(20, 0);

  diff::Tape t;
  const Tensor out = encode_points(t, t.constant(pts), seg, 1, enc).value();

  std::vector<std::size_t> perm(20);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  Tensor shuffled({20, 3});
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t a = 0; a < 3; ++a) shuffled.at(i, a) = pts.at(perm[i], a);
  diff::Tape t2;
  const Tensor out2 = encode_points(t2, t2.constant(shuffled), seg, 1, enc).value();
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK(std::abs(out[i] - out2[i]) < 1e-12);

  // all points at the centroid: encoder of the zero point
  Tensor zeros({5, 3});
  diff::Tape t3;
  const Tensor outz =
      encode_points(t3, t3.constant(zeros), {0, 0, 0, 0, 0}, 1, enc).value();
  diff::Tape t4;
  const Tensor single = encode_points(t4, t4.constant(Tensor({1, 3})), {0}, 1, enc).value();
  for (std::size_t i = 0; i < outz.size(); ++i) CHECK(outz[i] == single[i]);
}

TEST_CASE("point encoder: two-pass straight-loop oracle") {
  RandomSource rng(6);
  diff::ParamStore store;
  const auto enc = PointEncoderParams::create(store, "enc", 8, 12, 16);
  diff::init_params(store, 2);

  Tensor pts({30, 3});
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = rng.normal();
  std::vector<int> seg;
  for (int i = 0; i < 30; ++i) seg.push_back(i < 12 ? 0 : (i < 20 ? 1 : 2));

  diff::Tape t;
  const Tensor got = encode_points(t, t.constant(pts), seg, 3, enc).value();

  // oracle: per-point mlp then explicit max loop
  auto run_row = [&](std::size_t r) {
    std::vector<double> h(3);
    for (int a = 0; a < 3; ++a) h[static_cast<std::size_t>(a)] = pts.at(r, static_cast<std::size_t>(a));
    auto lin = [&](const std::vector<double>& x, const Tensor& w, const Tensor& b) {
      std::vector<double> y(w.cols(), 0.0);
      for (std::size_t j = 0; j < w.cols(); ++j) {
        for (std::size_t k = 0; k < x.size(); ++k) y[j] += x[k] * w.at(k, j);
        y[j] += b[j];
      }
      return y;
    };
    auto rl = [](std::vector<double> v) {
      for (double& x : v) x = std::max(0.0, x);
      return v;
    };
    h = rl(lin(h, enc.w0->value, enc.b0->value));
    h = rl(lin(h, enc.w1->value, enc.b1->value));
    return lin(h, enc.w2->value, enc.b2->value);
  };
  std::vector<std::vector<double>> expect(3, std::vector<double>(16, -1e300));
  for (std::size_t r = 0; r < 30; ++r) {
    const auto h = run_row(r);
    auto& e = expect[static_cast<std::size_t>(seg[r])];
    for (std::size_t c = 0; c < 16; ++c) e[c] = std::max(e[c], h[c]);
  }
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t c = 0; c < 16; ++c)
      CHECK(std::abs(got.at(s, c) - expect[s][c]) < 1e-12);
}

TEST_CASE("graph input: structure, labels, and modes") {
  scene::SceneGenConfig cfg;
  cfg.min_objects = 5;
  cfg.max_objects = 8;
  const scene::Scene s = scene::generate_scene(cfg, 0, 77);

  for (FeatureMode mode :
       {FeatureMode::kPaperFaithful, FeatureMode::kStrictInvariant}) {
    const GraphInput g = build_graph_input(s.objects, mode, true);
    CHECK(g.num_nodes == static_cast<int>(s.objects.size()));
    CHECK(g.node_aux.rows() == s.objects.size());
    CHECK(g.edge_raw.cols() == static_cast<std::size_t>(edge_raw_dim(mode)));
    CHECK(g.edge_src.size() == g.edge_dst.size());
    CHECK(g.node_labels.size() == s.objects.size());
    CHECK(g.edge_primary.size() == g.edge_src.size());
    // symmetric directed pairs at initialization
    std::set<std::pair<int, int>> pairs;
    for (std::size_t e = 0; e < g.edge_src.size(); ++e) {
      CHECK(g.edge_src[e] != g.edge_dst[e]);
      pairs.insert({g.edge_src[e], g.edge_dst[e]});
    }
    for (const auto& [i, j] : pairs) CHECK(pairs.count({j, i}) == 1);
    // every label set contains the primary label
    for (std::size_t e = 0; e < g.edge_primary.size(); ++e) {
      const auto& set = g.edge_label_sets[e];
      CHECK(std::find(set.begin(), set.end(), g.edge_primary[e]) != set.end());
      CHECK(std::is_sorted(set.begin(), set.end()));
    }
  }
}
