#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "esgraph/scene.hpp"

namespace esgraph::scene {

inline constexpr int kSceneFormatVersion = 1;

nlohmann::json to_json(const Scene& s);
Scene scene_from_json(const nlohmann::json& j);
void save_scene(const Scene& s, const std::string& path);
Scene load_scene(const std::string& path);

nlohmann::json to_json(const SequenceView& v);
SequenceView view_from_json(const nlohmann::json& j);
void save_view(const SequenceView& v, const std::string& path);
SequenceView load_view(const std::string& path);

void save_correspondences(const std::vector<Correspondence>& cs, const std::string& path);
std::vector<Correspondence> load_correspondences(const std::string& path);

}  // namespace esgraph::scene
