#pragma once

// Losses, Adam, the epoch loop with validation-based model selection, and a
// hyperparameter grid over TCNet widths, heads and learning rates.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tcnet/data.hpp"
#include "tcnet/inference.hpp"
#include "tcnet/model.hpp"

namespace tcnet {

// −mean log p[label] over the batch; probabilities [B×C].
Tensor ce_loss(const Tensor& probabilities,
               const std::vector<std::size_t>& labels,
               std::size_t* clamped = nullptr);
// Mean over live entries of −[y log σ(u) + (1−y) log(1−σ(u))].
Tensor independent_ce_loss(const Tensor& utilities, const Mask& live,
                           const Mask& chosen);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 term added to the gradient
};

class Adam {
 public:
  Adam(std::vector<NamedParameter> params, AdamConfig config = {});

  // Throws TrainingDiverged on a non-finite gradient.
  void step(double lr);
  void zero_grad();
  std::size_t steps() const { return t_; }

 private:
  std::vector<NamedParameter> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

// initial · decay^floor(epoch / every), epochs counted from 0.
double scheduled_learning_rate(double initial, std::size_t epoch,
                               double decay = 0.95, std::size_t every = 10);

enum class Objective {
  kChoice,       // sequential CE; multi data expanded to sequential samples
  kIndependent,  // per-item binary CE on multi data (threshold prediction)
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double lr_decay = 0.95;
  std::size_t lr_decay_every = 10;
  std::size_t epochs = 100;
  std::size_t batch_size = 256;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  Objective objective = Objective::kChoice;
  bool append_stop = false;      // multi → sequential with a stop item
  bool drop_assortment = false;  // train on (i, C) with S := C
  bool desk_scale = false;       // halve epochs above the sample threshold
  std::size_t desk_scale_threshold = 50000;
  bool verbose = false;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_validation_loss = 0.0;
  std::optional<double> test_loss;
  std::size_t train_samples = 0;  // per epoch, after expansion
  std::size_t log_clamps = 0;
  double wall_seconds = 0.0;

  // Without timing the output is identical across reruns.
  std::string to_json(bool with_timing = true) const;
};

struct TrainResult {
  std::unique_ptr<ChoiceModel> model;  // parameters of the best epoch
  TrainReport report;
};

// Feature width a model needs for this data under this config.
std::size_t training_input_dim(const ChoiceDataset& ds, const TrainConfig& cfg);

// Mean loss of `model` on `ds` under the objective (no gradients).
double dataset_loss(const ChoiceModel& model, const ChoiceDataset& ds,
                    Objective objective, std::size_t batch_size = 256,
                    std::size_t* clamped = nullptr);

// Trains a copy of `initial`. Multi data under kChoice is re-expanded every
// epoch for training and expanded once for validation and test. Throws
// TrainingDiverged on a non-finite loss.
TrainResult train(const ChoiceModel& initial, const DatasetSplits& splits,
                  const TrainConfig& cfg);

// Prepared evaluation set: the fixed expansion used for val/test.
ChoiceDataset prepare_eval_data(const ChoiceDataset& ds, const TrainConfig& cfg,
                                std::uint64_t seed);

struct GridSpec {
  std::vector<std::size_t> hidden_dims{32, 128, 256};
  std::vector<std::size_t> heads{4, 8, 16, 32};
  std::vector<double> learning_rates{1e-3, 5e-4, 1e-4};
  std::vector<double> thresholds{0.1, 0.3, 0.5, 0.7, 0.9};

  void validate() const;
};

struct GridCell {
  std::size_t hidden_dim = 0;
  std::size_t heads = 0;
  double learning_rate = 0.0;
  bool diverged = false;
  double objective = 0.0;  // validation CE, or validation F1 loss
  std::optional<double> threshold;
  TrainReport report;
};

struct GridResult {
  std::vector<GridCell> cells;
  std::size_t best = 0;
  TCNetConfig best_config;
  std::unique_ptr<ChoiceModel> model;
};

// Cells whose head count does not divide the width are skipped. Cells run
// in parallel. Selection: validation CE, or for kIndependent on multi data
// the validation F1 loss at the best threshold of the grid.
GridResult grid_search(const TCNetConfig& base, const GridSpec& grid,
                       const DatasetSplits& splits, const TrainConfig& cfg);

}  // namespace tcnet
