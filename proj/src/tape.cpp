#include "occ/tape.hpp"

#include <cmath>
#include <memory>

#include "occ/errors.hpp"

namespace occ::ad {

NodeId Tape::constant(Matrix value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::parameter(const Matrix& value) {
  Node n;
  n.borrowed = &value;
  n.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::record(Matrix value, std::initializer_list<NodeId> parents, Backward backward) {
  return record(std::move(value), std::vector<NodeId>(parents), std::move(backward));
}

NodeId Tape::record(Matrix value, const std::vector<NodeId>& parents, Backward backward) {
  Node n;
  n.owned = std::move(value);
  if (grad_enabled_) {
    for (NodeId p : parents) n.requires_grad = n.requires_grad || nodes_.at(p).requires_grad;
    if (n.requires_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

const Matrix& Tape::value(NodeId id) const {
  const Node& n = nodes_.at(id);
  return n.borrowed ? *n.borrowed : n.owned;
}

void Tape::accumulate(NodeId id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

void Tape::backward(NodeId root, double seed) {
  if (!grad_enabled_) fail(ErrorKind::TapeIncomplete, "tape was recorded without gradients");
  if (swept_) fail(ErrorKind::TapeIncomplete, "tape has already been swept");
  if (root < 0 || static_cast<std::size_t>(root) >= nodes_.size())
    fail(ErrorKind::TapeIncomplete, "root is not on this tape");
  const Matrix& v = value(root);
  if (v.rows() != 1 || v.cols() != 1) fail(ErrorKind::TapeIncomplete, "backward needs a scalar root");
  swept_ = true;
  accumulate(root, Matrix::Constant(1, 1, seed));
  for (NodeId i = root; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.backward && n.grad.size() != 0) {
      const Matrix g = std::move(n.grad);
      n.backward(*this, g);
      n.grad = g;
      n.backward = nullptr;
    }
  }
}

Matrix Tape::grad(NodeId id) const {
  const Node& n = nodes_.at(id);
  if (n.grad.size() != 0) return n.grad;
  const Matrix& v = value(id);
  return Matrix::Zero(v.rows(), v.cols());
}

void Tape::truncate(std::size_t mark) {
  if (swept_) fail(ErrorKind::TapeIncomplete, "cannot truncate a swept tape");
  if (mark < nodes_.size()) nodes_.resize(mark);
}

NodeId conv(Tape& tape, std::span<const Vec3> source_points, NodeId features, NodeId weights, NodeId bias,
            std::span<const Vec3> targets, double sigma2, double spacing, double gain, pcnn::ConvMode mode) {
  const Matrix& f = tape.value(features);
  const Matrix& w = tape.value(weights);
  const Matrix& b = tape.value(bias);
  const int channels = static_cast<int>(f.cols());
  if (static_cast<std::size_t>(f.rows()) != source_points.size() || w.rows() != pcnn::kKernelSize * channels ||
      b.rows() != 1 || b.cols() != w.cols())
    fail(ErrorKind::DimensionMismatch, "convolution operands do not agree");

  auto src = std::make_shared<std::vector<Vec3>>(source_points.begin(), source_points.end());
  auto tgt = std::make_shared<std::vector<Vec3>>(targets.begin(), targets.end());
  auto nbrs = std::make_shared<pcnn::NeighborLists>(pcnn::find_neighbors(*src, *tgt, sigma2, spacing, mode));
  auto moments = std::make_shared<Matrix>(pcnn::lattice_moments(*src, gain * f, *tgt, *nbrs, sigma2, spacing, mode));
  const double c = pcnn::gaussian_conv_constant(sigma2);
  Matrix out = c * ((*moments) * w);
  out.rowwise() += b.row(0);

  return tape.record(std::move(out), {features, weights, bias},
                     [=](Tape& t, const Matrix& g) {
                       if (t.requires_grad(weights)) t.accumulate(weights, c * (moments->transpose() * g));
                       if (t.requires_grad(bias)) t.accumulate(bias, g.colwise().sum());
                       if (t.requires_grad(features)) {
                         const Matrix dm = c * (g * t.value(weights).transpose());
                         t.accumulate(features, gain * pcnn::lattice_moments_adjoint(*src, channels, *tgt, *nbrs, dm,
                                                                                     sigma2, spacing, mode));
                       }
                     });
}

NodeId relu(Tape& tape, NodeId x) {
  Matrix out = tape.value(x).cwiseMax(0.0);
  return tape.record(std::move(out), {x}, [x](Tape& t, const Matrix& g) {
    t.accumulate(x, (t.value(x).array() > 0.0).select(g, 0.0));
  });
}

NodeId max_pool(Tape& tape, std::span<const Vec3> points, NodeId features, std::span<const std::size_t> retained) {
  pcnn::FeatureSet fs{{points.begin(), points.end()}, tape.value(features)};
  auto pooled = pcnn::max_pool(fs, retained);
  const auto rows = fs.features.rows();
  const auto channels = fs.features.cols();
  auto argmax = std::make_shared<std::vector<int>>(std::move(pooled.argmax));
  return tape.record(std::move(pooled.pooled.features), {features}, [=](Tape& t, const Matrix& g) {
    Matrix df = Matrix::Zero(rows, channels);
    for (Eigen::Index s = 0; s < g.rows(); ++s)
      for (Eigen::Index c = 0; c < channels; ++c) {
        const int src = (*argmax)[s * channels + c];
        if (src >= 0) df(src, c) += g(s, c);
      }
    t.accumulate(features, df);
  });
}

NodeId concat_cols(Tape& tape, const std::vector<NodeId>& parts) {
  if (parts.empty()) fail(ErrorKind::DimensionMismatch, "nothing to concatenate");
  const auto rows = tape.value(parts[0]).rows();
  Eigen::Index cols = 0;
  for (NodeId p : parts) {
    if (tape.value(p).rows() != rows) fail(ErrorKind::DimensionMismatch, "concatenated blocks differ in rows");
    cols += tape.value(p).cols();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> starts;
  Eigen::Index at = 0;
  for (NodeId p : parts) {
    starts.push_back(at);
    out.middleCols(at, tape.value(p).cols()) = tape.value(p);
    at += tape.value(p).cols();
  }
  return tape.record(std::move(out), parts, [parts, starts](Tape& t, const Matrix& g) {
    for (std::size_t i = 0; i < parts.size(); ++i)
      if (t.requires_grad(parts[i])) t.accumulate(parts[i], g.middleCols(starts[i], t.value(parts[i]).cols()));
  });
}

NodeId linear(Tape& tape, NodeId x, NodeId weights, NodeId bias) {
  const Matrix& xv = tape.value(x);
  const Matrix& w = tape.value(weights);
  const Matrix& b = tape.value(bias);
  if (xv.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols())
    fail(ErrorKind::DimensionMismatch, "linear layer operands do not agree");
  Matrix out = xv * w;
  out.rowwise() += b.row(0);
  return tape.record(std::move(out), {x, weights, bias}, [=](Tape& t, const Matrix& g) {
    if (t.requires_grad(weights)) t.accumulate(weights, t.value(x).transpose() * g);
    if (t.requires_grad(bias)) t.accumulate(bias, g.colwise().sum());
    if (t.requires_grad(x)) t.accumulate(x, g * t.value(weights).transpose());
  });
}

NodeId sum(Tape& tape, NodeId x) {
  Matrix out = Matrix::Constant(1, 1, tape.value(x).sum());
  return tape.record(std::move(out), {x}, [x](Tape& t, const Matrix& g) {
    const Matrix& v = t.value(x);
    t.accumulate(x, Matrix::Constant(v.rows(), v.cols(), g(0, 0)));
  });
}

Matrix softmax(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    const auto e = (logits.row(r).array() - m).exp();
    p.row(r) = e / e.sum();
  }
  return p;
}

NodeId softmax_cross_entropy(Tape& tape, NodeId logits, std::span<const std::uint8_t> labels) {
  const Matrix& z = tape.value(logits);
  if (z.cols() != 2 || static_cast<std::size_t>(z.rows()) != labels.size() || labels.empty())
    fail(ErrorKind::DimensionMismatch, "logits and labels do not agree");
  double total = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double m = z.row(r).maxCoeff();
    const double lse = m + std::log((z.row(r).array() - m).exp().sum());
    total += lse - z(r, labels[r] ? 1 : 0);
  }
  const double n = static_cast<double>(z.rows());
  auto lab = std::make_shared<std::vector<std::uint8_t>>(labels.begin(), labels.end());
  return tape.record(Matrix::Constant(1, 1, total / n), {logits}, [=](Tape& t, const Matrix& g) {
    Matrix d = softmax(t.value(logits));
    for (Eigen::Index r = 0; r < d.rows(); ++r) d(r, (*lab)[r] ? 1 : 0) -= 1.0;
    t.accumulate(logits, (g(0, 0) / n) * d);
  });
}

}  // namespace occ::ad
