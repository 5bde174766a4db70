#include "occ/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "occ/errors.hpp"

namespace occ {

namespace {

constexpr std::uint64_t kInitStream = 11;
constexpr std::uint64_t kShuffleStream = 12;
constexpr std::uint64_t kQueryStream = 13;

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) fail(ErrorKind::Config, "batch_size must be at least 1");
  if (queries_per_cloud < 1) fail(ErrorKind::Config, "queries_per_cloud must be at least 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) fail(ErrorKind::Config, "learning_rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail(ErrorKind::Config, "Adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) fail(ErrorKind::Config, "epsilon must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"batch_size", c.batch_size},
       {"queries_per_cloud", c.queries_per_cloud},
       {"learning_rate", c.learning_rate},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"epsilon", c.epsilon},
       {"epochs", c.epochs},
       {"max_steps", c.max_steps},
       {"cosine_schedule", c.cosine_schedule},
       {"seed", c.seed},
       {"validate_every", c.validate_every},
       {"validation_queries", c.validation_queries},
       {"record_wall_time", c.record_wall_time}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const TrainConfig d;
  c.batch_size = j.value("batch_size", d.batch_size);
  c.queries_per_cloud = j.value("queries_per_cloud", d.queries_per_cloud);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.epsilon = j.value("epsilon", d.epsilon);
  c.epochs = j.value("epochs", d.epochs);
  c.max_steps = j.value("max_steps", d.max_steps);
  c.cosine_schedule = j.value("cosine_schedule", d.cosine_schedule);
  c.seed = j.value("seed", d.seed);
  c.validate_every = j.value("validate_every", d.validate_every);
  c.validation_queries = j.value("validation_queries", d.validation_queries);
  c.record_wall_time = j.value("record_wall_time", d.record_wall_time);
}

NetworkParams init_params(const NetworkConfig& cfg, std::uint64_t seed) {
  NetworkParams p = make_params(cfg);
  Rng rng = derived_rng(seed, kInitStream, 0);
  const auto fill = [&](Matrix& m, double sd) {
    std::normal_distribution<double> n(0.0, sd);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  };
  for (auto& b : p.blocks) fill(b.weights, 1.0 / std::sqrt(27.0 * b.in_channels));
  for (auto& w : p.dense_weights) fill(w, std::sqrt(2.0 / static_cast<double>(w.rows())));
  return p;
}

AdamState AdamState::zeros_like(const NetworkParams& params) {
  AdamState s;
  for (const auto* m : params.tensors()) {
    s.m.push_back(Matrix::Zero(m->rows(), m->cols()));
    s.v.push_back(Matrix::Zero(m->rows(), m->cols()));
  }
  return s;
}

namespace {

std::vector<std::size_t> strided_subset(std::size_t n, std::size_t k) {
  std::vector<std::size_t> idx;
  if (k == 0 || k >= n) {
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
  }
  for (std::size_t i = 0; i < k; ++i) idx.push_back(i * n / k);
  return idx;
}

}  // namespace

ClassifierScore evaluate_classifier(const NetworkConfig& cfg, const NetworkParams& params,
                                    const std::vector<TrainingSample>& corpus, std::size_t max_queries) {
  if (corpus.empty()) fail(ErrorKind::DimensionMismatch, "empty corpus");
  ClassifierScore score;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::size_t inside = 0;
  for (const auto& s : corpus) {
    const auto idx = strided_subset(s.queries.size(), max_queries);
    std::vector<Vec3> q;
    std::vector<std::uint8_t> labels;
    for (auto i : idx) {
      q.push_back(s.queries[i]);
      labels.push_back(s.labels[i]);
    }
    Encoder enc(cfg, params, s.cloud.points);
    const Matrix p = enc.probabilities(q);
    loss_sum += loss(p, labels) * static_cast<double>(q.size());
    const auto pred = threshold_occupancy(p);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      correct += pred[i] == labels[i];
      inside += labels[i];
    }
    score.queries += q.size();
  }
  const double n = static_cast<double>(score.queries);
  score.loss = loss_sum / n;
  score.accuracy = static_cast<double>(correct) / n;
  score.inside_fraction = static_cast<double>(inside) / n;
  return score;
}

Trainer::Trainer(const NetworkConfig& net, const TrainConfig& train, std::uint64_t corpus_seed) {
  train.validate();
  state_.net = net;
  state_.train = train;
  plan_ = plan_network(net);
  state_.params = init_params(net, train.seed);
  state_.adam = AdamState::zeros_like(state_.params);
  state_.corpus_seed = corpus_seed;
  state_.config_hash = config_hash(net, train);
}

Trainer::Trainer(Checkpoint resume) : state_(std::move(resume)) {
  state_.train.validate();
  plan_ = plan_network(state_.net);
  if (state_.config_hash != config_hash(state_.net, state_.train))
    fail(ErrorKind::Config, "checkpoint config hash does not match its configs");
}

std::size_t Trainer::steps_per_epoch(std::size_t corpus_size) const {
  return (corpus_size + state_.train.batch_size - 1) / state_.train.batch_size;
}

std::size_t Trainer::total_steps(std::size_t corpus_size) const {
  std::size_t total = steps_per_epoch(corpus_size) * state_.train.epochs;
  if (state_.train.max_steps > 0) total = std::min(total, state_.train.max_steps);
  return total;
}

std::vector<std::size_t> Trainer::batch_indices(std::size_t corpus_size, std::uint64_t step) const {
  const std::size_t per_epoch = steps_per_epoch(corpus_size);
  const std::uint64_t epoch = step / per_epoch;
  const std::size_t slot = step % per_epoch;
  std::vector<std::size_t> order(corpus_size);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = derived_rng(state_.train.seed, kShuffleStream, epoch);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t begin = slot * state_.train.batch_size;
  const std::size_t end = std::min(corpus_size, begin + state_.train.batch_size);
  return {order.begin() + begin, order.begin() + end};
}

Trainer::Batch Trainer::compute(const std::vector<TrainingSample>& corpus, std::span<const std::size_t> batch,
                                std::uint64_t step, bool with_grad) const {
  if (structures_.size() != corpus.size()) structures_.assign(corpus.size(), std::nullopt);
  Rng rng = derived_rng(state_.train.seed, kQueryStream, step);
  Batch out;
  const double weight = 1.0 / static_cast<double>(batch.size());
  for (std::size_t c : batch) {
    const auto& sample = corpus[c];
    if (!structures_[c]) structures_[c] = build_structure(plan_, sample.cloud.points);
    // Partial Fisher-Yates over the stored queries.
    std::vector<std::size_t> idx(sample.queries.size());
    std::iota(idx.begin(), idx.end(), 0);
    const std::size_t k = std::min(state_.train.queries_per_cloud, idx.size());
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    std::vector<Vec3> q(k);
    std::vector<std::uint8_t> labels(k);
    for (std::size_t i = 0; i < k; ++i) {
      q[i] = sample.queries[idx[i]];
      labels[i] = sample.labels[idx[i]];
    }
    ad::Tape tape(with_grad);
    const auto fwd = forward(tape, plan_, state_.params, *structures_[c], q);
    const auto l = ad::softmax_cross_entropy(tape, fwd.logits, labels);
    out.loss += weight * tape.value(l)(0, 0);
    if (!with_grad) continue;
    tape.backward(l, weight);
    if (out.grads.empty())
      for (auto id : fwd.parameters) out.grads.push_back(tape.grad(id));
    else
      for (std::size_t i = 0; i < fwd.parameters.size(); ++i) out.grads[i] += tape.grad(fwd.parameters[i]);
  }
  return out;
}

double Trainer::batch_loss(const std::vector<TrainingSample>& corpus, std::span<const std::size_t> batch,
                           std::uint64_t step) const {
  return compute(corpus, batch, step, false).loss;
}

void Trainer::apply(const std::vector<Matrix>& grads, double lr) {
  auto tensors = state_.params.tensors();
  auto& adam = state_.adam;
  const auto& c = state_.train;
  adam.t += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(adam.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(adam.t));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    adam.m[i] = c.beta1 * adam.m[i] + (1.0 - c.beta1) * grads[i];
    adam.v[i] = c.beta2 * adam.v[i] + (1.0 - c.beta2) * grads[i].cwiseProduct(grads[i]);
    if (lr == 0.0) continue;
    const auto step = (adam.m[i].array() / bc1) / ((adam.v[i].array() / bc2).sqrt() + c.epsilon);
    tensors[i]->array() -= lr * step;
  }
}

void Trainer::run(const std::vector<TrainingSample>& corpus, const std::vector<TrainingSample>* validation,
                  const LogSink& log, std::optional<std::size_t> stop_step) {
  if (corpus.empty()) fail(ErrorKind::DimensionMismatch, "empty training corpus");
  const auto& c = state_.train;
  const std::size_t total = total_steps(corpus.size());
  const std::size_t stop = std::min(total, stop_step.value_or(total));
  const std::size_t per_epoch = steps_per_epoch(corpus.size());
  const auto start = std::chrono::steady_clock::now();
  const auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

  const auto run_validation = [&] {
    if (!validation || validation->empty()) return;
    const auto s = evaluate_classifier(state_.net, state_.params, *validation, c.validation_queries);
    nlohmann::json line = {{"step", state_.step}, {"val_loss", s.loss}, {"val_accuracy", s.accuracy}};
    if (c.record_wall_time) line["wall_time"] = elapsed();
    if (log) log(line);
  };

  while (state_.step < stop) {
    const std::uint64_t step = state_.step;
    double lr = c.learning_rate;
    if (c.cosine_schedule) lr *= 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) / static_cast<double>(total)));
    const auto batch = batch_indices(corpus.size(), step);
    const Batch b = compute(corpus, batch, step, true);
    bool finite = std::isfinite(b.loss);
    for (const auto& g : b.grads) finite = finite && g.allFinite();
    if (!finite) {
      if (!diagnostic_path_.empty()) save_checkpoint(diagnostic_path_, state_);
      fail(ErrorKind::NonFiniteLoss, "non-finite loss or gradient at step " + std::to_string(step) +
                                         (diagnostic_path_.empty() ? "" : "; state saved to " + diagnostic_path_.string()));
    }
    apply(b.grads, lr);
    state_.step = step + 1;
    state_.epoch = state_.step / per_epoch;
    losses_.push_back(b.loss);
    nlohmann::json line = {{"step", step}, {"epoch", step / per_epoch}, {"loss", b.loss}, {"lr", lr}};
    if (c.record_wall_time) line["wall_time"] = elapsed();
    if (log) log(line);
    if (c.validate_every > 0 && state_.step % c.validate_every == 0 && state_.step < total) run_validation();
  }
  if (state_.step == total) run_validation();
}

Checkpoint Trainer::checkpoint() const { return state_; }

NetworkParams train(const std::vector<TrainingSample>& corpus, const std::vector<TrainingSample>* validation,
                    const NetworkConfig& net, const TrainConfig& cfg, const LogSink& log) {
  Trainer t(net, cfg, 0);
  t.run(corpus, validation, log);
  return t.params();
}

}  // namespace occ
