#pragma once

// Mixed InD/OOD training with the WOOD loss, and model checkpoints.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "wood/data.hpp"
#include "wood/geometry.hpp"
#include "wood/loss.hpp"
#include "wood/model.hpp"

namespace wood {

struct TrainConfig {
  double beta = 0.1;
  std::size_t b_ind = 50;
  std::size_t b_ood = 10;
  std::size_t epochs = 50;
  double lr = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 7;
  std::vector<std::size_t> hidden = {128, 64};
  ScoreConfig score{};

  void validate() const;
};

/// Row indices into the InD and OOD training sets.
struct MixedBatch {
  std::vector<std::size_t> ind;
  std::vector<std::size_t> ood;
};

/// One epoch of batches: InD rows shuffled without replacement (last batch
/// may be short), b_ood OOD rows drawn uniformly with replacement per batch.
std::vector<MixedBatch> make_batches(std::size_t n_ind, std::size_t n_ood, const TrainConfig& cfg,
                                     std::mt19937_64& rng);

struct StepResult {
  LossValue loss;  ///< before the update
  BoundDiagnostics bounds;
};

/// SGD with momentum over the WOOD loss. Owns the model while training.
class Trainer {
 public:
  Trainer(MlpModel model, TrainConfig cfg);

  /// One update from the batch-mean gradient. `ood_x` may have zero rows.
  StepResult train_step(const Matrix& ind_x, std::span<const std::size_t> ind_labels,
                        const Matrix& ood_x, std::size_t batch_id = 0);

  const MlpModel& model() const { return model_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  MlpModel model_;
  TrainConfig cfg_;
  std::vector<double> velocity_;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double ce_term = 0.0;
  double ood_term = 0.0;
  double total = 0.0;
  double alpha_m = 0.0;
  double m = 1.0;
  double wall_ms = 0.0;
};

/// Affine input transform x' = (x - offset) * scale; empty vectors mean
/// identity.
struct Normalization {
  std::string description = "identity";
  std::vector<double> offset;
  std::vector<double> scale;

  Matrix apply(const Matrix& x) const;

  /// Per-column mean/standard deviation of `x`; constant columns keep scale 1.
  static Normalization standardize(const Matrix& x);
};

struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::uint32_t format_version = kFormatVersion;
  std::vector<std::size_t> layer_dims;
  std::vector<double> parameters;
  Normalization normalization;
  std::size_t num_classes = 0;
  TrainConfig train_config;
  std::uint64_t rng_digest = 0;

  MlpModel model() const;
};

struct FitResult {
  Checkpoint checkpoint;
  std::vector<EpochMetrics> log;
};

/// Runs cfg.epochs epochs over the InD set mixed with OOD samples. Pass an
/// empty OOD set (or b_ood = 0) for plain cross-entropy training.
FitResult fit(const InDDataset& ind, const OodDataset& ood, const TrainConfig& cfg,
              const Normalization& normalization = {});

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

/// epoch,ce_term,ood_term,total,alpha_M,m,wall_ms. With `timing` off the
/// wall_ms column is written as 0 so the file is reproducible.
void write_metrics_csv(const std::filesystem::path& path, std::span<const EpochMetrics> log,
                       bool timing = true);
std::string format_metrics_csv(std::span<const EpochMetrics> log, bool timing = true);

/// Softmax outputs for every row of `x` (already normalized).
Matrix predict_probs(const MlpModel& model, const Matrix& x, std::size_t chunk = 1024);

}  // namespace wood
