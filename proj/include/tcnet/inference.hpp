#pragma once

// Prediction for single, sequential and multi-choice tasks, evaluation
// metrics and attention export.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tcnet/data.hpp"
#include "tcnet/model.hpp"

namespace tcnet {

// Floor applied to probabilities before taking logs.
inline constexpr double kLogFloor = 1e-12;

// P(i | S, S) for i in S (sorted order).
std::vector<double> predict_single(const ChoiceModel& model,
                                   const ItemCatalog& catalog,
                                   const ItemSet& assortment,
                                   const std::vector<double>& context = {});
// P(i | C, S) for i in C (sorted order). Throws unless C ⊆ S, C ≠ ∅.
std::vector<double> predict_sequential(const ChoiceModel& model,
                                       const ItemCatalog& catalog,
                                       const ItemSet& candidates,
                                       const ItemSet& assortment,
                                       const std::vector<double>& context = {});

enum class GenerationMethod { kGreedy, kSample };
std::string to_string(GenerationMethod m);

struct StopRule {
  enum class Kind { kFixedSize, kStopItem } kind = Kind::kFixedSize;
  std::size_t size = 1;

  static StopRule fixed_size(std::size_t k) { return {Kind::kFixedSize, k}; }
  static StopRule stop_item() { return {Kind::kStopItem, 0}; }
};

struct GenerationStep {
  std::size_t item;
  double probability;
};

struct MultiPrediction {
  ItemSet basket;
  std::vector<GenerationStep> trace;
  std::string method;  // greedy | sample | threshold
};

// Probabilities over C (sorted) given (C, S).
using SequentialPredictor =
    std::function<std::vector<double>(const ItemSet& candidates,
                                      const ItemSet& assortment)>;

// Choose from C = S (plus the stop item under the stop rule), remove the
// pick, repeat. Greedy ties go to the lowest item index. `stop_item` is
// required for StopRule::kStopItem and is never part of the basket.
MultiPrediction generate_basket(const SequentialPredictor& predictor,
                                const ItemSet& assortment,
                                GenerationMethod method, StopRule rule,
                                std::optional<std::size_t> stop_item,
                                std::mt19937_64& rng);
MultiPrediction generate_basket(const ChoiceModel& model,
                                const ItemCatalog& catalog,
                                const ItemSet& assortment,
                                GenerationMethod method, StopRule rule,
                                std::mt19937_64& rng,
                                const std::vector<double>& context = {});

double sigmoid(double u);
// {i ∈ S : sigmoid(u_i) > μ}; utilities aligned with S. μ must lie in (0,1).
ItemSet predict_threshold(std::span<const double> utilities,
                          const ItemSet& assortment, double mu);
// Thresholded baskets for every observation of a multi dataset.
std::vector<ItemSet> predict_threshold(const ChoiceModel& model,
                                       const ChoiceDataset& ds, double mu,
                                       std::size_t batch_size = 256);

// 1 − mean 2|B̂∩B|/(|B̂|+|B|); an empty-vs-empty sample counts as a match.
double f1_loss(const std::vector<ItemSet>& predicted,
               const std::vector<ItemSet>& truth);
double f1_sample_loss(const ItemSet& predicted, const ItemSet& truth);
// F1 loss of predicting all of S (minus the stop item) for every basket.
double all_of_assortment_f1_loss(const ChoiceDataset& multi);

struct ThresholdChoice {
  double mu = 0.5;
  double f1_loss = 1.0;
};
// First μ in the grid with the lowest F1 loss on `ds`.
ThresholdChoice tune_threshold(const ChoiceModel& model, const ChoiceDataset& ds,
                               const std::vector<double>& grid);

enum class MultiMethod { kThreshold, kGreedyStop };

struct EvalOptions {
  MultiMethod multi_method = MultiMethod::kThreshold;
  double threshold = 0.5;
  std::size_t batch_size = 256;
};

struct MetricReport {
  ChoiceKind task = ChoiceKind::kSequential;
  std::string metric;  // "ce" or "f1_loss"
  double value = 0.0;
  std::vector<double> per_sample;
  std::size_t log_clamps = 0;

  std::string to_json() const;
};

// CE for single / sequential datasets, F1 loss for multi datasets.
// Throws ValidationError when `task` differs from the dataset kind.
MetricReport evaluate(const ChoiceModel& model, const ChoiceDataset& ds,
                      ChoiceKind task, const EvalOptions& options = {});

// Writes one CSV (and optionally one SVG) per attention matrix for the
// observation (C, S). Both axes list S in catalog order; rows of items
// outside C are zero. Returns the written paths.
std::vector<std::filesystem::path> export_attention(
    const ChoiceModel& model, const ItemCatalog& catalog,
    const ItemSet& candidates, const ItemSet& assortment,
    const std::filesystem::path& out_dir, bool svg = true,
    const std::vector<double>& context = {});

// Square S×S matrix for one record, laid out as export_attention writes it.
std::vector<double> attention_matrix_on_assortment(const AttentionRecord& rec,
                                                   const ItemSet& assortment);

}  // namespace tcnet
