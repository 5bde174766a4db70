#include "occ/occnet.hpp"

#include <cmath>

#include "occ/errors.hpp"

namespace occ {

NetworkConfig NetworkConfig::wide() {
  NetworkConfig c;
  c.input_size = 300;
  c.blocks = {{256, 64}, {128, 128}, {16, 256}, {16, 256}, {128, 128}, {256, 64}, {300, 64}};
  c.classifier_hidden = {128, 128};
  return c;
}

NetworkConfig NetworkConfig::desk() { return desk(300); }

NetworkConfig NetworkConfig::desk(std::size_t input_size) {
  NetworkConfig c;
  c.input_size = input_size;
  c.blocks = {{256, 8}, {128, 16}, {16, 32}, {16, 32}, {128, 16}, {256, 8}, {input_size, 8}};
  c.classifier_hidden = {64, 64};
  return c;
}

void NetworkConfig::validate() const { plan_network(*this); }

void to_json(nlohmann::json& j, const NetworkConfig& c) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : c.blocks) blocks.push_back({b.points, b.depth});
  j = {{"input_size", c.input_size},
       {"blocks", blocks},
       {"classifier_hidden", c.classifier_hidden},
       {"width_scale", c.width_scale}};
}

void from_json(const nlohmann::json& j, NetworkConfig& c) {
  NetworkConfig d = NetworkConfig::desk();
  c.input_size = j.value("input_size", d.input_size);
  c.blocks.clear();
  if (j.contains("blocks")) {
    for (const auto& b : j.at("blocks")) c.blocks.push_back({b.at(0).get<std::size_t>(), b.at(1).get<int>()});
  } else {
    c.blocks = NetworkConfig::desk(c.input_size).blocks;
  }
  c.classifier_hidden = j.value("classifier_hidden", d.classifier_hidden);
  c.width_scale = j.value("width_scale", d.width_scale);
}

NetworkPlan plan_network(const NetworkConfig& cfg) {
  if (cfg.input_size < 1) fail(ErrorKind::Config, "input_size must be positive");
  if (cfg.blocks.empty()) fail(ErrorKind::Config, "network needs at least one block");
  if (!(cfg.width_scale > 0.0)) fail(ErrorKind::Config, "width_scale must be positive");
  for (int h : cfg.classifier_hidden)
    if (h < 1) fail(ErrorKind::Config, "classifier widths must be positive");

  NetworkPlan plan;
  plan.set_sizes = {cfg.input_size};
  plan.set_parent = {-1};
  std::vector<int> stack = {0};
  std::vector<int> recorded = {1};  // feature width remembered per set for skips
  int channels = 1;
  for (std::size_t b = 0; b < cfg.blocks.size(); ++b) {
    const auto& spec = cfg.blocks[b];
    if (spec.depth < 1 || spec.points < 1) fail(ErrorKind::Config, "block " + std::to_string(b) + " has an empty size");
    BlockPlan bp;
    bp.source_set = stack.back();
    bp.in_channels = channels;
    bp.out_channels = spec.depth;
    const std::size_t current = plan.set_sizes[bp.source_set];
    bp.sigma2 = cfg.width_scale / static_cast<double>(current);
    bp.source_points = current;
    bp.point_path = b + 1 < cfg.blocks.size();
    if (spec.points < current) {
      bp.kind = BlockKind::Pool;
      bp.target_set = static_cast<int>(plan.set_sizes.size());
      plan.set_sizes.push_back(spec.points);
      plan.set_parent.push_back(bp.source_set);
      recorded.push_back(spec.depth);
      stack.push_back(bp.target_set);
      channels = spec.depth;
    } else if (spec.points == current) {
      bp.kind = BlockKind::Same;
      bp.target_set = bp.source_set;
      channels = spec.depth;
    } else {
      if (stack.size() < 2 || plan.set_sizes[stack[stack.size() - 2]] != spec.points)
        fail(ErrorKind::Config, "block " + std::to_string(b) + " expands to " + std::to_string(spec.points) +
                                    " points, which does not mirror an earlier pooling step");
      stack.pop_back();
      bp.kind = BlockKind::Expand;
      bp.target_set = stack.back();
      bp.skip_channels = recorded[bp.target_set];
      channels = spec.depth + bp.skip_channels;
    }
    plan.query_width += spec.depth;
    plan.blocks.push_back(bp);
  }
  if (stack.size() != 1 || cfg.blocks.back().points != cfg.input_size)
    fail(ErrorKind::Config, "the stream must return to the input point count");
  return plan;
}

std::vector<Matrix*> NetworkParams::tensors() {
  std::vector<Matrix*> out;
  for (auto& b : blocks) {
    out.push_back(&b.weights);
    out.push_back(&b.bias);
  }
  for (std::size_t i = 0; i < dense_weights.size(); ++i) {
    out.push_back(&dense_weights[i]);
    out.push_back(&dense_biases[i]);
  }
  return out;
}

std::vector<const Matrix*> NetworkParams::tensors() const {
  std::vector<const Matrix*> out;
  for (auto* m : const_cast<NetworkParams*>(this)->tensors()) out.push_back(m);
  return out;
}

std::size_t NetworkParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto* m : tensors()) n += static_cast<std::size_t>(m->size());
  return n;
}

NetworkParams make_params(const NetworkConfig& cfg) {
  const auto plan = plan_network(cfg);
  NetworkParams p;
  for (const auto& b : plan.blocks) p.blocks.push_back(pcnn::LayerParams::zeros(b.in_channels, b.out_channels, b.sigma2));
  int width = plan.query_width;
  std::vector<int> widths = cfg.classifier_hidden;
  widths.push_back(2);
  for (int w : widths) {
    p.dense_weights.push_back(Matrix::Zero(width, w));
    p.dense_biases.push_back(Matrix::Zero(1, w));
    width = w;
  }
  return p;
}

CloudStructure build_structure(const NetworkPlan& plan, std::span<const Vec3> cloud) {
  if (cloud.size() != plan.set_sizes[0])
    fail(ErrorKind::DimensionMismatch, "cloud has " + std::to_string(cloud.size()) + " points, network expects " +
                                           std::to_string(plan.set_sizes[0]));
  CloudStructure s;
  s.sets.resize(plan.set_sizes.size());
  s.retained.resize(plan.set_sizes.size());
  s.sets[0].assign(cloud.begin(), cloud.end());
  for (std::size_t k = 1; k < plan.set_sizes.size(); ++k) {
    const auto& parent = s.sets[plan.set_parent[k]];
    s.retained[k] = pcnn::fps_from(parent, plan.set_sizes[k], pcnn::canonical_start(parent));
    for (auto i : s.retained[k]) s.sets[k].push_back(parent[i]);
  }
  return s;
}

double block_input_gain(const BlockPlan& block) {
  // A surface of area A sampled with I points has density I / A, and the
  // Gaussians of width sigma2 = c / I around any point then hold a total mass of
  // 2 pi c / A; taking A = 2 as the reference area keeps blocks near unit gain.
  const double c = block.sigma2 * static_cast<double>(block.source_points);
  return 1.0 / (pcnn::gaussian_conv_constant(block.sigma2) * M_PI * c);
}

namespace {

std::vector<ad::NodeId> add_parameters(ad::Tape& tape, const NetworkParams& params) {
  std::vector<ad::NodeId> ids;
  for (const auto* m : params.tensors()) ids.push_back(tape.parameter(*m));
  return ids;
}

ad::NodeId block_conv(ad::Tape& tape, const BlockPlan& b, std::size_t index, const std::vector<ad::NodeId>& param_nodes,
                      const CloudStructure& s, ad::NodeId input, std::span<const Vec3> targets) {
  return ad::conv(tape, s.sets[b.source_set], input, param_nodes[2 * index], param_nodes[2 * index + 1], targets,
                  b.sigma2, std::sqrt(b.sigma2), block_input_gain(b));
}

// Returns the input feature node of every block.
std::vector<ad::NodeId> point_path(ad::Tape& tape, const NetworkPlan& plan, const CloudStructure& s,
                                   const std::vector<ad::NodeId>& param_nodes) {
  std::vector<ad::NodeId> recorded(plan.set_sizes.size(), -1);
  ad::NodeId current = tape.constant(Matrix::Ones(static_cast<Eigen::Index>(s.sets[0].size()), 1));
  recorded[0] = current;
  std::vector<ad::NodeId> inputs;
  for (std::size_t i = 0; i < plan.blocks.size(); ++i) {
    const auto& b = plan.blocks[i];
    inputs.push_back(current);
    if (!b.point_path) continue;
    switch (b.kind) {
      case BlockKind::Pool: {
        const auto y = ad::relu(tape, block_conv(tape, b, i, param_nodes, s, current, s.sets[b.source_set]));
        current = ad::max_pool(tape, s.sets[b.source_set], y, s.retained[b.target_set]);
        recorded[b.target_set] = current;
        break;
      }
      case BlockKind::Same:
        current = ad::relu(tape, block_conv(tape, b, i, param_nodes, s, current, s.sets[b.source_set]));
        break;
      case BlockKind::Expand: {
        const auto y = ad::relu(tape, block_conv(tape, b, i, param_nodes, s, current, s.sets[b.target_set]));
        current = ad::concat_cols(tape, {y, recorded[b.target_set]});
        break;
      }
    }
  }
  return inputs;
}

ad::NodeId query_path(ad::Tape& tape, const NetworkPlan& plan, const CloudStructure& s,
                      const std::vector<ad::NodeId>& param_nodes, const std::vector<ad::NodeId>& inputs,
                      std::span<const Vec3> queries) {
  std::vector<ad::NodeId> side;
  for (std::size_t i = 0; i < plan.blocks.size(); ++i)
    side.push_back(block_conv(tape, plan.blocks[i], i, param_nodes, s, inputs[i], queries));
  ad::NodeId x = ad::concat_cols(tape, side);
  const std::size_t first = 2 * plan.blocks.size();
  const std::size_t layers = (param_nodes.size() - first) / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    x = ad::linear(tape, x, param_nodes[first + 2 * l], param_nodes[first + 2 * l + 1]);
    if (l + 1 < layers) x = ad::relu(tape, x);
  }
  return x;
}

void check_params(const NetworkPlan& plan, const NetworkParams& params) {
  if (params.blocks.size() != plan.blocks.size())
    fail(ErrorKind::DimensionMismatch, "parameter block count does not match the network layout");
  for (std::size_t i = 0; i < plan.blocks.size(); ++i) {
    const auto& lp = params.blocks[i];
    lp.validate();
    if (lp.in_channels != plan.blocks[i].in_channels || lp.out_channels != plan.blocks[i].out_channels)
      fail(ErrorKind::DimensionMismatch, "block " + std::to_string(i) + " parameters do not match the layout");
  }
  if (params.dense_weights.empty() || params.dense_weights.size() != params.dense_biases.size() ||
      params.dense_weights.front().rows() != plan.query_width || params.dense_weights.back().cols() != 2)
    fail(ErrorKind::DimensionMismatch, "classifier parameters do not match the layout");
}

}  // namespace

TapeForward forward(ad::Tape& tape, const NetworkPlan& plan, const NetworkParams& params,
                    const CloudStructure& structure, std::span<const Vec3> queries) {
  check_params(plan, params);
  if (queries.empty()) fail(ErrorKind::DimensionMismatch, "no query points");
  TapeForward out;
  out.parameters = add_parameters(tape, params);
  const auto inputs = point_path(tape, plan, structure, out.parameters);
  out.logits = query_path(tape, plan, structure, out.parameters, inputs, queries);
  return out;
}

Encoder::Encoder(const NetworkConfig& cfg, const NetworkParams& params, std::span<const Vec3> cloud)
    : plan_(plan_network(cfg)), params_(params) {
  check_params(plan_, params_);
  structure_ = build_structure(plan_, cloud);
  param_nodes_ = add_parameters(tape_, params_);
  block_inputs_ = point_path(tape_, plan_, structure_, param_nodes_);
}

Matrix Encoder::probabilities(std::span<const Vec3> queries) {
  if (queries.empty()) fail(ErrorKind::DimensionMismatch, "no query points");
  const std::size_t mark = tape_.size();
  const auto logits = query_path(tape_, plan_, structure_, param_nodes_, block_inputs_, queries);
  Matrix p = ad::softmax(tape_.value(logits));
  tape_.truncate(mark);
  return p;
}

std::vector<double> Encoder::interior(std::span<const Vec3> queries) {
  const Matrix p = probabilities(queries);
  return {p.col(1).begin(), p.col(1).end()};
}

Matrix forward_probabilities(const NetworkConfig& cfg, const NetworkParams& params, std::span<const Vec3> cloud,
                             std::span<const Vec3> queries) {
  Encoder enc(cfg, params, cloud);
  return enc.probabilities(queries);
}

double loss(const Matrix& probs, std::span<const std::uint8_t> labels) {
  if (probs.cols() != 2 || static_cast<std::size_t>(probs.rows()) != labels.size() || labels.empty())
    fail(ErrorKind::DimensionMismatch, "probabilities and labels do not agree");
  double total = 0.0;
  for (Eigen::Index r = 0; r < probs.rows(); ++r) total -= std::log(probs(r, labels[r] ? 1 : 0));
  return total / static_cast<double>(labels.size());
}

std::vector<std::uint8_t> threshold_occupancy(const Matrix& probs, double threshold) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index r = 0; r < probs.rows(); ++r) out[r] = probs(r, 1) >= threshold ? 1 : 0;
  return out;
}

std::vector<std::uint8_t> predict_occupancy(const NetworkConfig& cfg, const NetworkParams& params,
                                            std::span<const Vec3> cloud, std::span<const Vec3> queries,
                                            double threshold) {
  return threshold_occupancy(forward_probabilities(cfg, params, cloud, queries), threshold);
}

}  // namespace occ
