#include "esgraph/gnn.hpp"

#include <cmath>

#include "esgraph/error.hpp"

namespace esgraph::gnn {

using diff::Tape;
using diff::Var;
using nlohmann::json;

void ModelConfig::validate() const {
  if (node_dim <= 8) fail(ErrorCategory::kConfig, "node_dim must exceed 8");
  if (edge_dim != node_dim)
    fail(ErrorCategory::kConfig, "edge_dim must equal node_dim");
  if (node_dim % num_heads != 0)
    fail(ErrorCategory::kConfig, "node_dim must be divisible by num_heads");
  if (dropout < 0.0 || dropout > 0.5)
    fail(ErrorCategory::kConfig, "dropout must be in [0, 0.5]");
  if (num_layers < 1) fail(ErrorCategory::kConfig, "num_layers must be >= 1");
  if (hidden_dim < 1 || point_hidden0 < 1 || point_hidden1 < 1)
    fail(ErrorCategory::kConfig, "hidden dims must be positive");
  if (num_node_classes < 2 || num_edge_classes < 2)
    fail(ErrorCategory::kConfig, "need at least 2 classes");
}

json ModelConfig::to_json() const {
  return {{"node_feature_dim", node_dim},
          {"edge_feature_dim", edge_dim},
          {"gnn",
           {{"hidden_dim", hidden_dim},
            {"num_layers", num_layers},
            {"num_heads", num_heads},
            {"drop_out", dropout}}},
          {"mode", feat::to_string(mode)},
          {"num_node_classes", num_node_classes},
          {"num_edge_classes", num_edge_classes},
          {"point_hidden", {point_hidden0, point_hidden1}},
          {"fan_only", fan_only}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  c.node_dim = j.at("node_feature_dim").get<int>();
  c.edge_dim = j.at("edge_feature_dim").get<int>();
  const json& g = j.at("gnn");
  c.hidden_dim = g.at("hidden_dim").get<int>();
  c.num_layers = g.at("num_layers").get<int>();
  c.num_heads = g.at("num_heads").get<int>();
  c.dropout = g.at("drop_out").get<double>();
  c.mode = feat::mode_from_string(j.at("mode").get<std::string>());
  c.num_node_classes = j.at("num_node_classes").get<int>();
  c.num_edge_classes = j.at("num_edge_classes").get<int>();
  c.point_hidden0 = j.at("point_hidden")[0].get<int>();
  c.point_hidden1 = j.at("point_hidden")[1].get<int>();
  c.fan_only = j.at("fan_only").get<bool>();
  c.validate();
  return c;
}

namespace {

void create_mlp2(diff::ParamStore& store, const std::string& prefix, int in_dim,
                 int hidden, int out_dim) {
  store.create(prefix + ".l0.w",
               {static_cast<std::size_t>(in_dim), static_cast<std::size_t>(hidden)});
  store.create(prefix + ".l0.b", {static_cast<std::size_t>(hidden)});
  store.create(prefix + ".l1.w",
               {static_cast<std::size_t>(hidden), static_cast<std::size_t>(out_dim)});
  store.create(prefix + ".l1.b", {static_cast<std::size_t>(out_dim)});
}

}  // namespace

SceneGraphModel::SceneGraphModel(ModelConfig config) : config_(config) {
  config_.validate();
  const int d = config_.node_dim;
  const int hid = config_.hidden_dim;

  feat::PointEncoderParams::create(params_, "enc", config_.point_hidden0,
                                   config_.point_hidden1, config_.point_latent());
  create_mlp2(params_, "edge_init", feat::edge_raw_dim(config_.mode), hid, d);
  for (int k = 0; k < config_.num_layers; ++k) {
    const std::string base = "gnn.layer" + std::to_string(k);
    create_mlp2(params_, base + ".fan.att", 2 * d, hid, d);
    params_.create(base + ".fan.val.w",
                   {static_cast<std::size_t>(d), static_cast<std::size_t>(d)});
    params_.create(base + ".fan.val.b", {static_cast<std::size_t>(d)});
    create_mlp2(params_, base + ".fan.node", 2 * d, hid, d);
    create_mlp2(params_, base + ".fan.edge", 3 * d, hid, d);
    create_mlp2(params_, base + ".eq.edge", 3 * d + 1, hid, d);
    create_mlp2(params_, base + ".eq.node", 2 * d, hid, d);
    create_mlp2(params_, base + ".eq.coord", d, hid, 2);
  }
  create_mlp2(params_, "head.node", d, hid, config_.num_node_classes);
  create_mlp2(params_, "head.edge", d, hid, config_.num_edge_classes);
}

void SceneGraphModel::init(std::uint64_t seed) {
  diff::init_params(params_, seed);
  for (int k = 0; k < config_.num_layers; ++k) {
    diff::Parameter& w =
        params_.at("gnn.layer" + std::to_string(k) + ".eq.coord.l1.w");
    for (std::size_t i = 0; i < w.value.size(); ++i) w.value[i] *= 1e-3;
  }
}

Var SceneGraphModel::mlp2(Tape& tape, Var in, const std::string& prefix,
                          bool with_dropout, bool train) {
  Var h = tape.relu(tape.affine(in, tape.param(params_.at(prefix + ".l0.w")),
                                tape.param(params_.at(prefix + ".l0.b"))));
  if (with_dropout) h = tape.dropout(h, config_.dropout, train);
  return tape.affine(h, tape.param(params_.at(prefix + ".l1.w")),
                     tape.param(params_.at(prefix + ".l1.b")));
}

SceneGraphModel::State SceneGraphModel::fan_layer(Tape& tape, int layer, State s,
                                                  const feat::GraphInput& g,
                                                  bool train) {
  const std::string base = "gnn.layer" + std::to_string(layer) + ".fan";
  const std::size_t n = static_cast<std::size_t>(g.num_nodes);
  const std::size_t m = g.edge_src.size();
  const std::size_t d = static_cast<std::size_t>(config_.node_dim);

  Var agg;
  Var e_new;
  if (m > 0) {
    Var hs = tape.gather_rows(s.h, g.edge_src);
    Var ht = tape.gather_rows(s.h, g.edge_dst);
    // Feature-wise attention: per head, softmax over the head's feature
    // block of an MLP of [v_i, e_ij], gating a value projection of v_j.
    Var att = mlp2(tape, tape.concat_cols({hs, s.e}), base + ".att", false, train);
    const std::size_t heads = static_cast<std::size_t>(config_.num_heads);
    Var alpha = tape.reshape(
        tape.softmax_rows(tape.reshape(att, {m * heads, d / heads})), {m, d});
    Var val = tape.affine(ht, tape.param(params_.at(base + ".val.w")),
                          tape.param(params_.at(base + ".val.b")));
    // max over each node's messages; nodes without edges get the zero vector
    agg = tape.segment_max(tape.mul(alpha, val), g.edge_src, n);
    e_new = mlp2(tape, tape.concat_cols({hs, s.e, ht}), base + ".edge", true, train);
  } else {
    agg = tape.constant(Tensor({n, d}));
  }
  Var h_new = mlp2(tape, tape.concat_cols({s.h, agg}), base + ".node", true, train);
  return State{h_new, m > 0 ? e_new : s.e, s.x0, s.x1};
}

SceneGraphModel::State SceneGraphModel::equivariant_layer(Tape& tape, int layer,
                                                          State s,
                                                          const feat::GraphInput& g,
                                                          bool train) {
  const std::string base = "gnn.layer" + std::to_string(layer) + ".eq";
  const std::size_t n = static_cast<std::size_t>(g.num_nodes);
  const std::size_t m = g.edge_src.size();

  if (m == 0) {
    Var agg = tape.constant(Tensor({n, static_cast<std::size_t>(config_.edge_dim)}));
    Var h_new =
        tape.add(s.h, mlp2(tape, tape.concat_cols({s.h, agg}), base + ".node", true, train));
    return State{h_new, s.e, s.x0, s.x1};
  }

  Var hs = tape.gather_rows(s.h, g.edge_src);
  Var ht = tape.gather_rows(s.h, g.edge_dst);
  Var x0s = tape.gather_rows(s.x0, g.edge_src);
  Var x0t = tape.gather_rows(s.x0, g.edge_dst);
  Var x1s = tape.gather_rows(s.x1, g.edge_src);
  Var x1t = tape.gather_rows(s.x1, g.edge_dst);

  // ||x_i - x_j||^2 summed over both coordinate channels: invariant input
  Var dist = tape.add(tape.sq_dist_rows(x0s, x0t), tape.sq_dist_rows(x1s, x1t));
  Var e_new =
      mlp2(tape, tape.concat_cols({hs, ht, dist, s.e}), base + ".edge", true, train);

  // residual h update from the incoming edge sum (input-level edge features)
  Var agg = tape.segment_sum(s.e, g.edge_src, n);
  Var h_new =
      tape.add(s.h, mlp2(tape, tape.concat_cols({s.h, agg}), base + ".node", true, train));

  // coordinate update: per channel, mean over neighbors of gated differences
  Var gates = mlp2(tape, s.e, base + ".coord", false, train);  // (m, 2)
  Tensor inv_deg({n, 1});
  for (int src : g.edge_src) inv_deg.at(static_cast<std::size_t>(src), 0) += 1.0;
  for (std::size_t i = 0; i < n; ++i)
    if (inv_deg.at(i, 0) > 0.0) inv_deg.at(i, 0) = 1.0 / inv_deg.at(i, 0);
  Var inv_deg_v = tape.constant(std::move(inv_deg));

  auto update_channel = [&](Var x, Var xs, Var xt, std::size_t channel) {
    Var diff_x = tape.sub(xs, xt);
    Var gated = tape.row_scale(diff_x, tape.slice_cols(gates, channel, 1));
    Var summed = tape.segment_sum(gated, g.edge_src, n);
    return tape.add(x, tape.row_scale(summed, inv_deg_v));
  };
  Var x0_new = update_channel(s.x0, x0s, x0t, 0);
  Var x1_new = update_channel(s.x1, x1s, x1t, 1);
  return State{h_new, e_new, x0_new, x1_new};
}

ForwardResult SceneGraphModel::forward(Tape& tape, const feat::GraphInput& g,
                                       bool train) {
  if (g.num_nodes == 0) fail(ErrorCategory::kDomain, "forward: empty graph");
  if (feat::edge_raw_dim(config_.mode) != static_cast<int>(g.edge_raw.cols()) &&
      !g.edge_src.empty())
    fail(ErrorCategory::kDomain, "forward: edge features do not match the model's mode");

  const std::size_t n = static_cast<std::size_t>(g.num_nodes);
  const std::size_t m = g.edge_src.size();

  Var latent = feat::encode_points(tape, tape.constant(g.points), g.point_segment, n,
                                   feat::PointEncoderParams::bind(params_, "enc"));
  State s;
  s.h = tape.concat_cols({latent, tape.constant(g.node_aux)});
  s.x0 = tape.constant(g.corners0);
  s.x1 = tape.constant(g.corners1);
  if (m > 0) s.e = mlp2(tape, tape.constant(g.edge_raw), "edge_init", true, train);

  for (int k = 0; k < config_.num_layers; ++k) {
    s = fan_layer(tape, k, s, g, train);
    if (!config_.fan_only) s = equivariant_layer(tape, k, s, g, train);
  }

  ForwardResult out;
  out.node_feats = s.h;
  out.edge_feats = s.e;
  out.x0 = s.x0;
  out.x1 = s.x1;
  out.node_logits = mlp2(tape, s.h, "head.node", false, train);
  out.node_probs = tape.softmax_rows(out.node_logits);
  if (m > 0) {
    out.edge_logits = mlp2(tape, s.e, "head.edge", false, train);
    out.edge_probs = tape.softmax_rows(out.edge_logits);
  }
  return out;
}

Var SceneGraphModel::joint_loss(Tape& tape, const ForwardResult& fwd,
                                const feat::GraphInput& g, LambdaMode mode,
                                double lambda_node, double lambda_edge) {
  if (!g.has_labels()) fail(ErrorCategory::kDomain, "joint_loss: input carries no labels");
  const std::size_t m = g.edge_src.size();
  if (mode == LambdaMode::kDynamic) {
    lambda_node = 1.0;
    lambda_edge = m > 0 ? static_cast<double>(g.num_nodes) / static_cast<double>(m) : 0.0;
  }
  Var loss = tape.scale(tape.cross_entropy_mean(fwd.node_logits, g.node_labels),
                        lambda_node);
  if (m > 0) {
    Var pred = tape.scale(tape.cross_entropy_mean(fwd.edge_logits, g.edge_primary),
                          lambda_edge);
    loss = tape.add(loss, pred);
  }
  return loss;
}

Encoded SceneGraphModel::encode(const feat::GraphInput& g) {
  Tape tape;
  ForwardResult fwd = forward(tape, g, /*train=*/false);
  Encoded out;
  out.node_ids = g.node_ids;
  out.node_feats = fwd.node_feats.value();
  out.edge_src = g.edge_src;
  out.edge_dst = g.edge_dst;
  out.node_probs = fwd.node_probs.value();
  if (!g.edge_src.empty()) {
    out.edge_feats = fwd.edge_feats.value();
    out.edge_probs = fwd.edge_probs.value();
  }
  return out;
}

}  // namespace esgraph::gnn
