#include "esgraph/scene_io.hpp"

#include "esgraph/error.hpp"
#include "esgraph/io_util.hpp"

namespace esgraph::scene {

using nlohmann::json;

namespace {

void check_version(const json& j, const std::string& origin) {
  const int v = field_int(j, "format_version", origin);
  if (v != kSceneFormatVersion)
    fail(ErrorCategory::kFormat,
         origin + ": unsupported format_version " + std::to_string(v));
}

json vec3_to_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

Vec3 vec3_from_json(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3)
    fail(ErrorCategory::kFormat, "expected 3-vector at " + path);
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number()) fail(ErrorCategory::kFormat, "expected number at " + path);
    v[static_cast<std::size_t>(i)] = j[i].get<double>();
  }
  return v;
}

json objects_to_json(const std::vector<SceneObject>& objects) {
  json arr = json::array();
  for (const SceneObject& o : objects) {
    json pts = json::array();
    for (const PointXYZRGB& p : o.points)
      pts.push_back(json::array(
          {p.pos[0], p.pos[1], p.pos[2], p.rgb[0], p.rgb[1], p.rgb[2]}));
    arr.push_back({{"id", o.id},
                   {"class_id", o.class_id},
                   {"template_group", o.template_group},
                   {"obb",
                    {{"center", vec3_to_json(o.obb.center)},
                     {"half_extents", vec3_to_json(o.obb.half_extents)},
                     {"yaw", o.obb.yaw}}},
                   {"points", std::move(pts)}});
  }
  return arr;
}

std::vector<SceneObject> objects_from_json(const json& j, const std::string& origin) {
  const json& arr = require_field(j, "objects", origin);
  if (!arr.is_array()) fail(ErrorCategory::kFormat, "expected array at " + origin + ".objects");
  std::vector<SceneObject> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string path = origin + ".objects[" + std::to_string(i) + "]";
    const json& oj = arr[i];
    SceneObject o;
    o.id = field_int(oj, "id", path);
    o.class_id = field_int(oj, "class_id", path);
    o.template_group = field_int(oj, "template_group", path);
    const json& bb = require_field(oj, "obb", path);
    o.obb.center = vec3_from_json(require_field(bb, "center", path + ".obb"), path + ".obb.center");
    o.obb.half_extents =
        vec3_from_json(require_field(bb, "half_extents", path + ".obb"), path + ".obb.half_extents");
    o.obb.yaw = field_double(bb, "yaw", path + ".obb");
    const json& pts = require_field(oj, "points", path);
    if (!pts.is_array() || pts.empty())
      fail(ErrorCategory::kFormat, "expected non-empty array at " + path + ".points");
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const json& pj = pts[k];
      if (!pj.is_array() || pj.size() != 6)
        fail(ErrorCategory::kFormat,
             "expected [x,y,z,r,g,b] at " + path + ".points[" + std::to_string(k) + "]");
      PointXYZRGB p;
      for (int a = 0; a < 3; ++a) p.pos[static_cast<std::size_t>(a)] = pj[a].get<double>();
      for (int a = 0; a < 3; ++a)
        p.rgb[static_cast<std::size_t>(a)] = pj[3 + a].get<double>();
      o.points.push_back(p);
    }
    out.push_back(std::move(o));
  }
  return out;
}

json gt_edges_to_json(const GroundTruthGraph& gt) {
  json arr = json::array();
  for (const GtEdge& e : gt.edges)
    arr.push_back({{"src", e.src}, {"dst", e.dst}, {"predicate_id", e.predicate}});
  return arr;
}

GroundTruthGraph gt_from_json(const json& j, const std::vector<SceneObject>& objects,
                              const std::string& origin) {
  GroundTruthGraph gt;
  for (const SceneObject& o : objects) gt.nodes.emplace_back(o.id, o.class_id);
  const json& arr = require_field(j, "gt_edges", origin);
  if (!arr.is_array()) fail(ErrorCategory::kFormat, "expected array at " + origin + ".gt_edges");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string path = origin + ".gt_edges[" + std::to_string(i) + "]";
    GtEdge e;
    e.src = field_int(arr[i], "src", path);
    e.dst = field_int(arr[i], "dst", path);
    e.predicate = field_int(arr[i], "predicate_id", path);
    if (e.predicate < 0 || e.predicate >= kNumPredicates)
      fail(ErrorCategory::kFormat, "predicate_id out of range at " + path);
    gt.edges.push_back(e);
  }
  return gt;
}

}  // namespace

json to_json(const Scene& s) {
  return {{"format_version", kSceneFormatVersion},
          {"scene_id", s.scene_id},
          {"objects", objects_to_json(s.objects)},
          {"gt_edges", gt_edges_to_json(s.gt)}};
}

Scene scene_from_json(const json& j) {
  const std::string origin = "scene";
  check_version(j, origin);
  Scene s;
  s.scene_id = field_int(j, "scene_id", origin);
  s.objects = objects_from_json(j, origin);
  s.gt = gt_from_json(j, s.objects, origin);
  return s;
}

void save_scene(const Scene& s, const std::string& path) {
  save_json_file(path, to_json(s));
}

Scene load_scene(const std::string& path) { return scene_from_json(load_json_file(path)); }

json to_json(const SequenceView& v) {
  json r = json::array();
  for (double x : v.rotation) r.push_back(x);
  return {{"format_version", kSceneFormatVersion},
          {"scene_id", v.scene_id},
          {"view_id", v.view_id},
          {"transform", {{"R", std::move(r)}, {"T", vec3_to_json(v.translation)}}},
          {"sigma_noise", v.sigma_noise},
          {"subsample", v.subsample},
          {"visibility", v.visible_ids},
          {"objects", objects_to_json(v.objects)},
          {"gt_edges", gt_edges_to_json(v.gt)}};
}

SequenceView view_from_json(const json& j) {
  const std::string origin = "view";
  check_version(j, origin);
  SequenceView v;
  v.scene_id = field_int(j, "scene_id", origin);
  v.view_id = field_int(j, "view_id", origin);
  const json& tf = require_field(j, "transform", origin);
  const json& r = require_field(tf, "R", origin + ".transform");
  if (!r.is_array() || r.size() != 9)
    fail(ErrorCategory::kFormat, "expected 9 values at " + origin + ".transform.R");
  for (int i = 0; i < 9; ++i) v.rotation[static_cast<std::size_t>(i)] = r[i].get<double>();
  v.translation =
      vec3_from_json(require_field(tf, "T", origin + ".transform"), origin + ".transform.T");
  v.sigma_noise = field_double(j, "sigma_noise", origin);
  v.subsample = field_double(j, "subsample", origin);
  const json& vis = require_field(j, "visibility", origin);
  if (!vis.is_array()) fail(ErrorCategory::kFormat, "expected array at " + origin + ".visibility");
  for (const json& x : vis) v.visible_ids.push_back(x.get<int>());
  v.objects = objects_from_json(j, origin);
  v.gt = gt_from_json(j, v.objects, origin);
  return v;
}

void save_view(const SequenceView& v, const std::string& path) {
  save_json_file(path, to_json(v));
}

SequenceView load_view(const std::string& path) {
  return view_from_json(load_json_file(path));
}

void save_correspondences(const std::vector<Correspondence>& cs, const std::string& path) {
  json arr = json::array();
  for (const Correspondence& c : cs)
    arr.push_back({{"view_a", c.view_a},
                   {"node_a", c.node_a},
                   {"view_b", c.view_b},
                   {"node_b", c.node_b}});
  save_json_file(path, {{"format_version", kSceneFormatVersion}, {"pairs", std::move(arr)}});
}

std::vector<Correspondence> load_correspondences(const std::string& path) {
  const json j = load_json_file(path);
  check_version(j, "correspondences");
  const json& arr = require_field(j, "pairs", "correspondences");
  std::vector<Correspondence> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string p = "correspondences.pairs[" + std::to_string(i) + "]";
    Correspondence c;
    c.view_a = field_int(arr[i], "view_a", p);
    c.node_a = field_int(arr[i], "node_a", p);
    c.view_b = field_int(arr[i], "view_b", p);
    c.node_b = field_int(arr[i], "node_b", p);
    out.push_back(c);
  }
  return out;
}

}  // namespace esgraph::scene
