#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "occ/pcnn.hpp"
#include "occ/tape.hpp"

namespace occ {

/// One block of the U-shaped stream: the point count it leaves the stream at
/// and its output feature depth. Fewer points than the current set pools (FPS
/// subset), the same count convolves in place, more points expands onto the
/// earlier set of that size and concatenates that set's recorded features.
struct BlockSpec {
  std::size_t points = 0;
  int depth = 0;
};

struct NetworkConfig {
  std::size_t input_size = 300;
  std::vector<BlockSpec> blocks;
  std::vector<int> classifier_hidden;
  double width_scale = 1.0;  // sigma^2 = width_scale / (points in the block's source set)

  /// 300 -> 256 -> 128 -> 16 -> 16 -> 128 -> 256 -> 300 with depths 64/128/256.
  static NetworkConfig wide();
  /// Same topology with narrow features for CPU training.
  static NetworkConfig desk();
  /// desk() reading `input_size` points; the pooled sets keep their sizes.
  static NetworkConfig desk(std::size_t input_size);

  void validate() const;
};

void to_json(nlohmann::json& j, const NetworkConfig& c);
void from_json(const nlohmann::json& j, NetworkConfig& c);

enum class BlockKind { Pool, Same, Expand };

struct BlockPlan {
  BlockKind kind = BlockKind::Same;
  int source_set = 0;  // point set holding the block input
  int target_set = 0;  // point set receiving the point-path output
  int in_channels = 0;
  int out_channels = 0;
  int skip_channels = 0;  // concatenated after an expansion
  double sigma2 = 0.0;
  std::size_t source_points = 0;
  bool point_path = true;  // false when nothing consumes it
};

struct NetworkPlan {
  std::vector<std::size_t> set_sizes;
  std::vector<int> set_parent;  // set a pooled set was drawn from; -1 for the input
  std::vector<BlockPlan> blocks;
  int query_width = 0;  // sum of block depths
};

/// Resolves the stream layout; throws Config if the expansions do not mirror
/// the pooling steps or the stream does not end at the input size.
NetworkPlan plan_network(const NetworkConfig& cfg);

struct NetworkParams {
  std::vector<pcnn::LayerParams> blocks;
  std::vector<Matrix> dense_weights;  // classifier, last maps to 2 logits
  std::vector<Matrix> dense_biases;

  /// Every learnable array in a fixed order: block weights and biases, then
  /// classifier weights and biases layer by layer.
  std::vector<Matrix*> tensors();
  std::vector<const Matrix*> tensors() const;
  std::size_t parameter_count() const;
};

/// Zero-valued parameters shaped for `cfg`.
NetworkParams make_params(const NetworkConfig& cfg);

/// Point sets of one cloud: set 0 is the input, pooled sets are FPS subsets of
/// their parent started at the parent's canonical point.
struct CloudStructure {
  std::vector<std::vector<Vec3>> sets;
  std::vector<std::vector<std::size_t>> retained;  // per set, indices into the parent
};

CloudStructure build_structure(const NetworkPlan& plan, std::span<const Vec3> cloud);

/// Fixed scale on each block's input features. It cancels C(sigma2) and the
/// expected kernel mass over the source points, so activations neither
/// vanish (C ~ 1e-3) nor grow geometrically through the stack.
double block_input_gain(const BlockPlan& block);

struct TapeForward {
  ad::NodeId logits = -1;              // L x 2, column 1 = interior
  std::vector<ad::NodeId> parameters;  // same order as NetworkParams::tensors()
};

/// Records the whole network on `tape`.
TapeForward forward(ad::Tape& tape, const NetworkPlan& plan, const NetworkParams& params,
                    const CloudStructure& structure, std::span<const Vec3> queries);

/// Point path evaluated once per cloud; queries can then be answered in batches.
class Encoder {
 public:
  Encoder(const NetworkConfig& cfg, const NetworkParams& params, std::span<const Vec3> cloud);

  /// L x 2 class probabilities, column 1 = interior.
  Matrix probabilities(std::span<const Vec3> queries);
  /// Interior probability per query.
  std::vector<double> interior(std::span<const Vec3> queries);

 private:
  NetworkPlan plan_;
  const NetworkParams& params_;
  CloudStructure structure_;
  ad::Tape tape_{false};
  std::vector<ad::NodeId> param_nodes_;
  std::vector<ad::NodeId> block_inputs_;
};

Matrix forward_probabilities(const NetworkConfig& cfg, const NetworkParams& params, std::span<const Vec3> cloud,
                             std::span<const Vec3> queries);

/// Mean of -ln p(true class). Throws DimensionMismatch on length mismatch.
double loss(const Matrix& probs, std::span<const std::uint8_t> labels);

/// interior iff P(interior) >= threshold, so exact ties go inside.
std::vector<std::uint8_t> threshold_occupancy(const Matrix& probs, double threshold = 0.5);

std::vector<std::uint8_t> predict_occupancy(const NetworkConfig& cfg, const NetworkParams& params,
                                            std::span<const Vec3> cloud, std::span<const Vec3> queries,
                                            double threshold = 0.5);

}  // namespace occ
