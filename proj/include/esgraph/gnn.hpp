#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "esgraph/autodiff.hpp"
#include "esgraph/features.hpp"
#include "esgraph/params.hpp"

namespace esgraph::gnn {

struct ModelConfig {
  int node_dim = 256;  // invariant feature width; point latent is node_dim - 8
  int edge_dim = 256;  // must equal node_dim
  int hidden_dim = 256;
  int num_layers = 1;  // main layers; each one is attention conv + equivariant conv
  int num_heads = 8;
  double dropout = 0.3;
  feat::FeatureMode mode = feat::FeatureMode::kPaperFaithful;
  int num_node_classes = 20;
  int num_edge_classes = scene::kNumPredicates;
  int point_hidden0 = 64;
  int point_hidden1 = 128;
  bool fan_only = false;  // ablation: attention conv sublayers only

  int point_latent() const { return node_dim - 8; }
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

enum class LambdaMode { kStatic, kDynamic };

struct ForwardResult {
  diff::Var node_feats, edge_feats;  // final invariant features; edge_feats
                                     // is invalid when the graph has no edges
  diff::Var x0, x1;                  // final coordinate channels (n,3) each
  diff::Var node_logits, edge_logits;
  diff::Var node_probs, edge_probs;
};

// Frozen per-sequence outputs for the matching stage.
struct Encoded {
  std::vector<int> node_ids;
  Tensor node_feats;  // (n, d)
  Tensor edge_feats;  // (m, d)
  std::vector<int> edge_src, edge_dst;
  Tensor node_probs;  // (n, C_node)
  Tensor edge_probs;  // (m, C_edge)
};

class SceneGraphModel {
 public:
  explicit SceneGraphModel(ModelConfig config);

  // Glorot init; coordinate-gate output weights are damped by 1e-3 so early
  // training cannot blow up the coordinate channels.
  void init(std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  diff::ParamStore& params() { return params_; }
  const diff::ParamStore& params() const { return params_; }
  std::size_t param_count() const { return params_.total_size(); }

  ForwardResult forward(diff::Tape& tape, const feat::GraphInput& input, bool train);

  // lambda_node * CE(nodes) + lambda_edge * CE(edges); static mode uses
  // (0.1, 1.0), dynamic mode (1, |V|/|E|). Requires labels.
  diff::Var joint_loss(diff::Tape& tape, const ForwardResult& fwd,
                       const feat::GraphInput& input, LambdaMode mode,
                       double lambda_node = 0.1, double lambda_edge = 1.0);

  Encoded encode(const feat::GraphInput& input);

 private:
  diff::Var mlp2(diff::Tape& tape, diff::Var in, const std::string& prefix,
                 bool with_dropout, bool train);

  struct State {
    diff::Var h, e, x0, x1;
  };
  State fan_layer(diff::Tape& tape, int layer, State s, const feat::GraphInput& g,
                  bool train);
  State equivariant_layer(diff::Tape& tape, int layer, State s,
                          const feat::GraphInput& g, bool train);

  ModelConfig config_;
  diff::ParamStore params_;
};

}  // namespace esgraph::gnn
