#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "occ/occnet.hpp"
#include "occ/shapegen.hpp"

namespace occ {

struct TrainConfig {
  std::size_t batch_size = 8;
  std::size_t queries_per_cloud = 512;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t epochs = 1;
  std::size_t max_steps = 0;  // 0: run all epochs
  bool cosine_schedule = false;
  std::uint64_t seed = 0;
  std::size_t validate_every = 0;        // steps between validation passes; 0: only at the end
  std::size_t validation_queries = 1024;  // per held-out cloud; 0: all
  bool record_wall_time = true;          // off for byte-comparable logs

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Gaussian kernel magnitudes with sd 1/sqrt(27 * fan_in), He-scaled
/// classifier weights, zero biases.
NetworkParams init_params(const NetworkConfig& cfg, std::uint64_t seed);

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::uint64_t t = 0;

  static AdamState zeros_like(const NetworkParams& params);
};

struct Checkpoint {
  NetworkConfig net;
  TrainConfig train;
  NetworkParams params;
  AdamState adam;
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  std::uint64_t corpus_seed = 0;
  std::string config_hash;  // of the net and train configs
};

std::string config_hash(const NetworkConfig& net, const TrainConfig& train);

/// "OCRN", u32 version, u64 header length, JSON header, then u64-counted
/// little-endian f64 arrays: parameters, Adam first moments, second moments.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
/// Throws Parse naming the section that failed to decode.
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct ClassifierScore {
  double loss = 0.0;
  double accuracy = 0.0;
  double inside_fraction = 0.0;  // share of interior labels among scored queries
  std::size_t queries = 0;
};

/// Mean cross-entropy and accuracy at threshold 0.5 over every cloud. With
/// max_queries > 0 each cloud is scored on an evenly strided query subset.
ClassifierScore evaluate_classifier(const NetworkConfig& cfg, const NetworkParams& params,
                                    const std::vector<TrainingSample>& corpus, std::size_t max_queries = 0);

using LogSink = std::function<void(const nlohmann::json&)>;

class Trainer {
 public:
  Trainer(const NetworkConfig& net, const TrainConfig& train, std::uint64_t corpus_seed);
  explicit Trainer(Checkpoint resume);

  std::size_t steps_per_epoch(std::size_t corpus_size) const;
  std::size_t total_steps(std::size_t corpus_size) const;

  /// Runs until `stop_step` (capped at the configured total). Each step depends
  /// only on (seed, step), so a resumed run continues exactly.
  void run(const std::vector<TrainingSample>& corpus, const std::vector<TrainingSample>* validation,
           const LogSink& log, std::optional<std::size_t> stop_step = std::nullopt);

  /// Mean loss of one step without updating; exposed for tests.
  double batch_loss(const std::vector<TrainingSample>& corpus, std::span<const std::size_t> batch,
                    std::uint64_t step) const;

  Checkpoint checkpoint() const;
  const NetworkParams& params() const { return state_.params; }
  std::uint64_t step() const { return state_.step; }
  const std::vector<double>& losses() const { return losses_; }

  /// Where a diagnostic checkpoint goes if the loss becomes non-finite.
  void set_diagnostic_path(std::filesystem::path p) { diagnostic_path_ = std::move(p); }

 private:
  struct Batch {
    double loss = 0.0;
    std::vector<Matrix> grads;
  };

  std::vector<std::size_t> batch_indices(std::size_t corpus_size, std::uint64_t step) const;
  Batch compute(const std::vector<TrainingSample>& corpus, std::span<const std::size_t> batch, std::uint64_t step,
                bool with_grad) const;
  void apply(const std::vector<Matrix>& grads, double lr);

  Checkpoint state_;
  NetworkPlan plan_;
  std::vector<double> losses_;
  std::filesystem::path diagnostic_path_;
  mutable std::vector<std::optional<CloudStructure>> structures_;
};

/// Fresh training run over the full schedule.
NetworkParams train(const std::vector<TrainingSample>& corpus, const std::vector<TrainingSample>* validation,
                    const NetworkConfig& net, const TrainConfig& cfg, const LogSink& log = {});

}  // namespace occ
