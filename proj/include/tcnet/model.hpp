#pragma once

// The Transformer choice network and two feature-based baselines, all behind
// one ChoiceModel interface that maps a PaddedBatch to per-candidate
// utilities and choice probabilities.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tcnet/data.hpp"
#include "tcnet/tensor.hpp"

namespace tcnet {

enum class Activation { kSoftmax, kOnePlusRelu };

std::string to_string(Activation a);
Activation parse_activation(const std::string& text);

enum class Sublayer {
  kAssortmentAttention,
  kAssortmentFfn,
  kCandidateAttention,
  kCrossAttention,
  kCandidateFfn,
};
inline constexpr std::size_t kSublayerCount = 5;

struct SublayerOverride {
  std::optional<bool> residual;
  std::optional<bool> layer_norm;
  std::optional<Activation> activation;  // attention sublayers only
};

struct TCNetConfig {
  std::size_t input_dim = 0;   // d
  std::size_t hidden_dim = 32;  // d_v
  std::size_t n_layers = 1;     // L
  std::size_t n_heads = 1;      // h
  double dropout_rate = 0.0;
  std::optional<bool> use_embedding;  // unset: on iff d != d_v
  bool use_layer_norm = true;
  bool use_residual = true;
  Activation attention_activation = Activation::kSoftmax;
  bool scale_scores = true;  // divide scores by sqrt(d_v / h)
  double layer_norm_eps = 1e-5;
  std::vector<std::size_t> decoder_hidden;  // ReLU layers before d→1
  std::uint64_t seed = 0;
  std::array<SublayerOverride, kSublayerCount> overrides{};

  bool embedding() const {
    return use_embedding.value_or(input_dim != hidden_dim);
  }
  bool residual(Sublayer s) const;
  bool layer_norm(Sublayer s) const;
  Activation activation(Sublayer s) const;
  std::size_t head_dim() const { return hidden_dim / n_heads; }

  // Throws ValidationError.
  void validate() const;
};

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

struct ForwardOptions {
  bool training = false;               // enables dropout
  std::mt19937_64* rng = nullptr;      // dropout source when training
  bool capture_attention = false;
};

enum class AttentionKind { kAssortmentSelf, kCandidatesSelf, kCross };
std::string to_string(AttentionKind kind);

// Normalized scores of one head for a whole batch: [B×queries×keys].
struct AttentionCapture {
  std::size_t layer = 0;
  std::size_t head = 0;
  AttentionKind kind = AttentionKind::kAssortmentSelf;
  Tensor weights;
};

struct ForwardResult {
  Tensor utilities;      // [B×C_max]
  Tensor probabilities;  // [B×C_max], 0 at padded positions
  std::vector<AttentionCapture> attention;
  Tensor assortment_latent;  // [B×S_max×d_v] (TCNet only)
  Tensor candidate_latent;   // [B×C_max×d_v] (TCNet only)
};

class ChoiceModel {
 public:
  virtual ~ChoiceModel() = default;
  virtual std::string type_name() const = 0;
  virtual std::size_t input_dim() const = 0;
  virtual ForwardResult forward(const PaddedBatch& batch,
                                const ForwardOptions& options = {}) const = 0;
  // Trainable leaves in a stable order.
  virtual std::vector<NamedParameter> parameters() const = 0;
  // Deep copy of the parameter values.
  virtual std::unique_ptr<ChoiceModel> clone() const = 0;

  std::size_t parameter_count() const;
};

// Xavier/Glorot uniform on ±sqrt(6 / (fan_in + fan_out)), shape fan_in×fan_out.
Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out,
                      std::mt19937_64& rng);

// --------------------------------------------------------------- TCNet

struct LinearParams {
  Tensor w;  // [in×out]
  Tensor b;  // [out]
};

struct FfnParams {
  LinearParams first;
  LinearParams second;
};

struct NormParams {
  Tensor gain;
  Tensor bias;
};

struct AttentionParams {
  Tensor wq, wk, wv;  // [d_v×d_v], heads own consecutive column slices
};

struct AssortmentLayerParams {
  AttentionParams attention;
  std::optional<NormParams> attention_norm;
  FfnParams ffn;
  std::optional<NormParams> ffn_norm;
};

struct CandidateLayerParams {
  AttentionParams self_attention;
  std::optional<NormParams> self_norm;
  AttentionParams cross_attention;
  std::optional<NormParams> cross_norm;
  FfnParams ffn;
  std::optional<NormParams> ffn_norm;
};

struct TCNetParams {
  std::optional<FfnParams> assortment_embedding;
  std::optional<FfnParams> candidate_embedding;
  std::vector<AssortmentLayerParams> assortment_layers;
  std::vector<CandidateLayerParams> candidate_layers;
  std::vector<LinearParams> decoder;  // last layer maps to width 1
};

class TCNet : public ChoiceModel {
 public:
  // Xavier-initialized weights from config.seed.
  explicit TCNet(TCNetConfig config);
  TCNet(TCNetConfig config, TCNetParams params);

  std::string type_name() const override { return "tcnet"; }
  std::size_t input_dim() const override { return config_.input_dim; }
  const TCNetConfig& config() const { return config_; }
  TCNetParams& params() { return params_; }
  const TCNetParams& params() const { return params_; }

  ForwardResult forward(const PaddedBatch& batch,
                        const ForwardOptions& options = {}) const override;
  std::vector<NamedParameter> parameters() const override;
  std::unique_ptr<ChoiceModel> clone() const override;

 private:
  TCNetConfig config_;
  TCNetParams params_;
};

// Closed form for the default layout (embedding on, layer norm on, linear
// decoder with bias):
//   P = 2·d·d_v + (2 + 13L)·d_v² + (5 + 14L)·d_v + 1
std::size_t tcnet_parameter_formula(std::size_t d, std::size_t d_v,
                                    std::size_t n_layers);

// Building blocks, exposed for tests.
// q [B×m×d_v], k and v [B×m'×d_v]; key_mask [B×m'].
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 const Mask& key_mask, Activation activation, bool scale,
                 Tensor* weights_out = nullptr);
Tensor ffn(const Tensor& x, const FfnParams& p);

// --------------------------------------------------------- baselines

// u_i = βᵀx_i.
class LinearMnl : public ChoiceModel {
 public:
  LinearMnl(std::size_t input_dim, std::uint64_t seed);

  std::string type_name() const override { return "mnl"; }
  std::size_t input_dim() const override { return beta_.dim(0); }
  ForwardResult forward(const PaddedBatch& batch,
                        const ForwardOptions& options = {}) const override;
  std::vector<NamedParameter> parameters() const override;
  std::unique_ptr<ChoiceModel> clone() const override;

  Tensor& beta() { return beta_; }

 private:
  Tensor beta_;  // [d×1]
};

// u_i = MLP(x_i): item utilities that ignore S and C.
class DeepMnl : public ChoiceModel {
 public:
  DeepMnl(std::size_t input_dim, std::vector<std::size_t> hidden,
          std::uint64_t seed);

  std::string type_name() const override { return "deep-mnl"; }
  std::size_t input_dim() const override { return layers_.front().w.dim(0); }
  const std::vector<std::size_t>& hidden() const { return hidden_; }
  ForwardResult forward(const PaddedBatch& batch,
                        const ForwardOptions& options = {}) const override;
  std::vector<NamedParameter> parameters() const override;
  std::unique_ptr<ChoiceModel> clone() const override;

 private:
  std::vector<std::size_t> hidden_;
  std::vector<LinearParams> layers_;
};

// ------------------------------------------------------ attention records

struct AttentionRecord {
  std::size_t layer = 0;
  std::size_t head = 0;
  AttentionKind kind = AttentionKind::kAssortmentSelf;
  std::vector<std::size_t> row_items;
  std::vector<std::size_t> column_items;
  std::vector<double> scores;  // rows × columns, row-major

  double at(std::size_t r, std::size_t c) const {
    return scores[r * column_items.size() + c];
  }
};

// Unpadded per-observation records for batch row `row`.
std::vector<AttentionRecord> attention_records(const ForwardResult& result,
                                               const PaddedBatch& batch,
                                               std::size_t row);

// ------------------------------------------------------------ checkpoints

void save_checkpoint(const ChoiceModel& model,
                     const std::filesystem::path& path);
std::unique_ptr<ChoiceModel> load_checkpoint(const std::filesystem::path& path);

}  // namespace tcnet
