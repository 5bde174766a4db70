#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "occ/pcnn.hpp"

namespace occ::ad {

using NodeId = int;

/// Reverse-mode recorder over matrix values. Nodes are appended in evaluation
/// order, so a reverse sweep visits every consumer before its inputs.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& grad)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  NodeId constant(Matrix value);
  /// Borrows `value`; it must outlive the tape. Gradients collect on the node.
  NodeId parameter(const Matrix& value);
  /// Appends a derived node. `backward` is kept only if some parent needs a gradient.
  NodeId record(Matrix value, std::initializer_list<NodeId> parents, Backward backward);
  NodeId record(Matrix value, const std::vector<NodeId>& parents, Backward backward);

  const Matrix& value(NodeId id) const;
  bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }

  /// Adds `g` into the gradient of `id` if it takes part in differentiation.
  void accumulate(NodeId id, const Matrix& g);

  /// Sweeps from a 1x1 root seeded with `seed`. Runs at most once per tape.
  void backward(NodeId root, double seed = 1.0);

  /// Gradient of `id` after backward; zeros when nothing reached it.
  Matrix grad(NodeId id) const;

  std::size_t size() const { return nodes_.size(); }
  /// Drops every node from `mark` onward. Only valid before backward.
  void truncate(std::size_t mark);

 private:
  struct Node {
    Matrix owned;
    const Matrix* borrowed = nullptr;
    Matrix grad;
    Backward backward;
    bool requires_grad = false;
  };

  bool grad_enabled_;
  bool swept_ = false;
  std::vector<Node> nodes_;
};

/// out = b + C(sigma2) * M(gain * F) * W, the tape form of
/// pcnn::extend_conv_restrict with the source features scaled by `gain`.
NodeId conv(Tape& tape, std::span<const Vec3> source_points, NodeId features, NodeId weights, NodeId bias,
            std::span<const Vec3> targets, double sigma2, double spacing, double gain = 1.0,
            pcnn::ConvMode mode = pcnn::ConvMode::Truncated);

NodeId relu(Tape& tape, NodeId x);

/// Channel-wise max over nearest-retained cells; gradient goes to the argmax rows.
NodeId max_pool(Tape& tape, std::span<const Vec3> points, NodeId features, std::span<const std::size_t> retained);

NodeId concat_cols(Tape& tape, const std::vector<NodeId>& parts);

/// x * W + b with b broadcast over rows.
NodeId linear(Tape& tape, NodeId x, NodeId weights, NodeId bias);

NodeId sum(Tape& tape, NodeId x);

/// Mean over rows of -log softmax(logits)[label]; logits have two columns and
/// label 1 selects column 1.
NodeId softmax_cross_entropy(Tape& tape, NodeId logits, std::span<const std::uint8_t> labels);

/// Row-wise softmax without recording.
Matrix softmax(const Matrix& logits);

}  // namespace occ::ad
