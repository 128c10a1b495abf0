#pragma once

// Exact small-n ground truth: tabular sequential choice models, basket
// probabilities by permutation sums, subset Möbius inversion of utility
// tables, and the hand-built network that reproduces any tabular model.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <vector>

#include "tcnet/model.hpp"

namespace tcnet {

// Sets are bitmasks over items 0..n-1.
using SetMask = std::uint32_t;

inline constexpr std::size_t kMaxTabularItems = 6;

class TabularSequentialModel {
 public:
  explicit TabularSequentialModel(std::size_t n);
  // Utilities i.i.d. uniform on [lo, hi] for every valid (i, C, S).
  static TabularSequentialModel random(std::size_t n, std::mt19937_64& rng,
                                       double lo = -2.0, double hi = 2.0);

  std::size_t n() const { return n_; }
  SetMask full_set() const { return static_cast<SetMask>((1u << n_) - 1); }
  static bool valid(std::size_t i, SetMask c, SetMask s) {
    return (c >> i & 1u) && (c & ~s) == 0;
  }

  double utility(std::size_t i, SetMask c, SetMask s) const;
  void set_utility(std::size_t i, SetMask c, SetMask s, double u);

  // Text format: a `n <n>` line, then one `i C S u` line per valid triple,
  // with C and S written as bitmask integers.
  void save(const std::filesystem::path& path) const;
  static TabularSequentialModel load(const std::filesystem::path& path);

 private:
  std::size_t index(std::size_t i, SetMask c, SetMask s) const;

  std::size_t n_;
  std::vector<double> table_;
};

// P(i | C, S); 0 when i ∉ C. Throws ValidationError unless C ⊆ S, C ≠ ∅.
double tabular_probability(const TabularSequentialModel& model, std::size_t i,
                           SetMask c, SetMask s);

// Probability that sequential choice from S, starting at C = S, draws the
// items of B first (in any order): Σ over orders σ of Π_j P(σ_j | C_j, S).
double exact_basket_probability(const TabularSequentialModel& model,
                                SetMask basket, SetMask s);

// Entropy of P(· | C, S).
double tabular_entropy(const TabularSequentialModel& model, SetMask c,
                       SetMask s);

// ------------------------------------------------------ Möbius inversion

// Single-choice utilities of one item i: row[S] = u_i^S for S ∋ i.
// Entries with i ∉ S are ignored.
using UtilityRow = std::vector<double>;
// Interaction terms v_i^{S'} indexed by S' ⊆ N∖{i}; entries with i ∈ S' are 0.
using InteractionRow = std::vector<double>;

// Throws ValidationError on a non-finite (missing) table entry.
InteractionRow batsell_decompose(std::size_t n, std::size_t i,
                                 const UtilityRow& u);
// u_i^S = Σ_{S' ⊆ S∖{i}} v_i^{S'}
double reconstruct_utility(std::size_t n, std::size_t i,
                           const InteractionRow& v, SetMask s);

// --------------------------------------------------- constructive network

// One-hot inputs, d = d_v = n, one layer, one head, no embedding, no layer
// norm, no score scaling. Encoders realize x_i + Σ_C x_j + Σ_S x_j; the
// decoder is a sum of piecewise-linear bumps, one per valid triple.
std::unique_ptr<TCNet> build_constructive_tcnet(
    const TabularSequentialModel& model);

// Per-position value of the candidates-encoder output for triple (i, C, S).
std::vector<double> constructive_encoding(std::size_t n, std::size_t i,
                                          SetMask c, SetMask s);

struct RepresentationReport {
  double max_abs_error = 0.0;
  std::size_t triples = 0;
};

// Compares the network on every valid (i, C, S) with the table, single
// choice (C = S) included.
RepresentationReport verify_representation(const ChoiceModel& net,
                                           const TabularSequentialModel& model);

// One observation per (C, S) pair with C ⊆ S, C ≠ ∅.
ChoiceDataset tabular_enumeration(std::size_t n);

}  // namespace tcnet
