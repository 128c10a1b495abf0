#pragma once

// Choice datasets: the item catalog, single / sequential / multi
// observations, CSV ingestion, splitting, reductions to the sequential form,
// synthetic generators and padded mini-batches.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tcnet/tensor.hpp"

namespace tcnet {

using ItemSet = std::vector<std::size_t>;  // sorted, distinct item indices

class ItemCatalog {
 public:
  ItemCatalog() = default;
  // One-hot features (n×n identity).
  explicit ItemCatalog(std::vector<std::string> names);
  ItemCatalog(std::vector<std::string> names, std::size_t feature_dim,
              std::vector<double> features);

  std::size_t size() const { return names_.size(); }
  std::size_t feature_dim() const { return feature_dim_; }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(std::size_t item) const { return names_.at(item); }
  std::span<const double> features(std::size_t item) const;
  bool one_hot() const { return one_hot_; }
  std::optional<std::size_t> index_of(const std::string& name) const;

  std::optional<std::size_t> no_purchase_index() const { return no_purchase_; }
  void set_no_purchase_index(std::optional<std::size_t> index);
  std::optional<std::size_t> stop_index() const { return stop_; }

  // Copy with a dedicated stop row appended. One-hot catalogs grow to
  // (n+1)×(n+1); featured catalogs gain an indicator column.
  ItemCatalog with_stop_item(const std::string& name = "<stop>") const;
  // Marks an existing row as the stop item.
  void set_stop_index(std::optional<std::size_t> index);

 private:
  std::vector<std::string> names_;
  std::size_t feature_dim_ = 0;
  std::vector<double> features_;
  bool one_hot_ = false;
  std::optional<std::size_t> no_purchase_;
  std::optional<std::size_t> stop_;
};

enum class ChoiceKind { kSingle, kSequential, kMulti };

std::string to_string(ChoiceKind kind);
ChoiceKind parse_choice_kind(const std::string& text);

struct ChoiceObservation {
  ChoiceKind kind = ChoiceKind::kSingle;
  ItemSet assortment;
  ItemSet candidates;  // Sequential only
  std::size_t choice = 0;  // Single / Sequential
  ItemSet basket;  // Multi only
  std::vector<double> context;  // optional per-observation features

  static ChoiceObservation single(std::size_t choice, ItemSet assortment);
  static ChoiceObservation sequential(std::size_t choice, ItemSet candidates,
                                      ItemSet assortment);
  static ChoiceObservation multi(ItemSet basket, ItemSet assortment);

  // The set the next choice is made from: C for sequential, S otherwise.
  const ItemSet& choice_set() const;
};

// Throws ValidationError describing the broken invariant.
void validate(const ChoiceObservation& obs, std::size_t catalog_size);

class ChoiceDataset {
 public:
  ChoiceDataset() = default;
  ChoiceDataset(ItemCatalog catalog, ChoiceKind kind,
                std::vector<ChoiceObservation> observations);

  const ItemCatalog& catalog() const { return catalog_; }
  ChoiceKind kind() const { return kind_; }
  const std::vector<ChoiceObservation>& observations() const { return obs_; }
  std::size_t size() const { return obs_.size(); }
  bool empty() const { return obs_.empty(); }
  const ChoiceObservation& operator[](std::size_t i) const { return obs_[i]; }
  std::size_t context_dim() const { return context_dim_; }
  // Width of one padded feature row: item features ⊕ context.
  std::size_t input_dim() const {
    return catalog_.feature_dim() + context_dim_;
  }

  ChoiceDataset subset(const std::vector<std::size_t>& indices) const;
  double mean_basket_size() const;

 private:
  ItemCatalog catalog_;
  ChoiceKind kind_ = ChoiceKind::kSingle;
  std::vector<ChoiceObservation> obs_;
  std::size_t context_dim_ = 0;
};

// ---------------------------------------------------------------- CSV

struct CsvSchema {
  // Optional `name,f_0,...` file giving item order and item features.
  std::optional<std::filesystem::path> items_path;
  std::optional<std::string> no_purchase_item;
  std::optional<std::string> stop_item;
  char set_separator = ';';
};

ChoiceDataset load_csv(const std::filesystem::path& path,
                       const CsvSchema& schema = {});
void write_csv(const ChoiceDataset& ds, const std::filesystem::path& path);
void write_items_csv(const ItemCatalog& catalog,
                     const std::filesystem::path& path);

// Public Bakery transaction format: one line per receipt,
// `receipt_id, item, item, ...` with integer item ids. The optional goods
// file (`Id,Flavor,Food,Price,Type`) provides names. Every basket is offered
// the full catalog as its assortment.
ChoiceDataset import_bakery(const std::filesystem::path& receipts,
                            const std::optional<std::filesystem::path>& goods =
                                std::nullopt);

// ------------------------------------------------------ split/reductions

struct DatasetSplits {
  ChoiceDataset train;
  ChoiceDataset validation;
  ChoiceDataset test;
};

struct SplitRatios {
  double train = 0.6;
  double validation = 0.2;
  double test = 0.2;
};

DatasetSplits split(const ChoiceDataset& ds, SplitRatios ratios,
                    std::uint64_t seed);

ChoiceDataset single_to_sequential(const ChoiceDataset& ds);

// One sequential sample per basket item, drawn in a uniformly random order.
// With append_stop the catalog's stop item joins every assortment and
// candidate set and a final stop-choice sample closes each basket.
ChoiceDataset multi_to_sequential(const ChoiceDataset& ds,
                                  std::mt19937_64& rng, bool append_stop);

// Restricted to S := C (the assortment-blind variant).
ChoiceDataset drop_assortment(const ChoiceDataset& sequential);

// ------------------------------------------------------------ synthetic

enum class BoostKind {
  kCandidate,  // A boosted while A' is a candidate
  kChosen,     // A boosted once A' has been chosen (A' ∈ S∖C)
};

struct BoostedSyntheticSpec {
  std::size_t n_samples = 24000;
  BoostKind boost_kind = BoostKind::kCandidate;
  double boost_value = 100.0;
  std::uint64_t seed = 0;
};

// Item order of the boosted catalog.
enum BoostedItem : std::size_t { kItemA = 0, kItemAPrime = 1, kItemB = 2, kItemL = 3 };

ItemCatalog boosted_catalog();
// Utility of `item` under the boosted model given membership bitmasks
// (bit i = item i) of the candidate set and the assortment.
double boosted_utility(std::size_t item, unsigned candidates,
                       unsigned assortment, BoostKind kind, double boost);
ChoiceDataset generate_boosted_synthetic(const BoostedSyntheticSpec& spec);

// Multi-choice variant. Assortments are nonempty subsets of {A, A', B}, each
// item kept with probability 1/2. A basket is grown by sequential choice from
// the remaining assortment plus the stop item L until L is drawn, using base
// utilities u_A, u_A', u_B, u_L, with A raised to `boost_value` once A' is in
// the basket. Empty baskets are redrawn.
struct BoostedMultiSpec {
  std::size_t n_samples = 24000;
  double utility_a = 0.0;
  double utility_a_prime = 2.0;
  double utility_b = -3.0;
  double utility_stop = 0.0;
  double boost_value = 100.0;
  std::uint64_t seed = 0;
};

ChoiceDataset generate_boosted_multi(const BoostedMultiSpec& spec);

// ------------------------------------------------------------- batches

struct PaddedBatch {
  std::size_t size = 0;
  std::size_t feature_dim = 0;
  Tensor assortment;  // [B×S_max×d]
  Tensor candidates;  // [B×C_max×d]
  Mask assortment_mask;  // [B×S_max]
  Mask candidate_mask;   // [B×C_max]
  std::vector<std::size_t> labels;  // candidate position of the choice
  Mask label_mask;  // [B×C_max], basket membership (multi batches)
  std::vector<ItemSet> assortment_items;
  std::vector<ItemSet> candidate_items;
};

// Sequential / single observations → C and S inputs with choice labels.
// Multi observations → C = S with basket label masks.
PaddedBatch make_batch(const ChoiceDataset& ds,
                       std::span<const std::size_t> indices);
PaddedBatch make_batch(const ItemCatalog& catalog,
                       std::span<const ChoiceObservation> observations,
                       std::size_t context_dim);

// Shuffled mini-batches produced lazily, one epoch per stream.
class BatchStream {
 public:
  BatchStream(const ChoiceDataset& ds, std::size_t batch_size,
              std::mt19937_64& rng, bool shuffle = true);

  std::optional<PaddedBatch> next();
  std::size_t batch_count() const;

 private:
  const ChoiceDataset* ds_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace tcnet
