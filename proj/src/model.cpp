#include "tcnet/model.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include "json.hpp"
#include "tcnet/errors.hpp"

namespace tcnet {

using nlohmann::json;

std::string to_string(Activation a) {
  return a == Activation::kSoftmax ? "softmax" : "one_plus_relu";
}

Activation parse_activation(const std::string& text) {
  if (text == "softmax") return Activation::kSoftmax;
  if (text == "one_plus_relu") return Activation::kOnePlusRelu;
  throw ValidationError("unknown attention activation '" + text + "'");
}

std::string to_string(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::kAssortmentSelf:
      return "assortment_self";
    case AttentionKind::kCandidatesSelf:
      return "candidates_self";
    case AttentionKind::kCross:
      return "cross";
  }
  return "?";
}

bool TCNetConfig::residual(Sublayer s) const {
  return overrides[static_cast<std::size_t>(s)].residual.value_or(use_residual);
}

bool TCNetConfig::layer_norm(Sublayer s) const {
  return overrides[static_cast<std::size_t>(s)].layer_norm.value_or(
      use_layer_norm);
}

Activation TCNetConfig::activation(Sublayer s) const {
  return overrides[static_cast<std::size_t>(s)].activation.value_or(
      attention_activation);
}

void TCNetConfig::validate() const {
  if (input_dim == 0) throw ValidationError("input_dim must be positive");
  if (hidden_dim == 0) throw ValidationError("hidden_dim must be positive");
  if (n_layers == 0) throw ValidationError("n_layers must be at least 1");
  if (n_heads == 0 || hidden_dim % n_heads != 0) {
    throw ValidationError("hidden_dim " + std::to_string(hidden_dim) +
                          " is not divisible by n_heads " +
                          std::to_string(n_heads));
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ValidationError("dropout_rate must lie in [0, 1)");
  }
  if (!embedding() && input_dim != hidden_dim) {
    throw ValidationError("without the embedding layer input_dim must equal "
                          "hidden_dim");
  }
  for (auto w : decoder_hidden) {
    if (w == 0) throw ValidationError("decoder hidden widths must be positive");
  }
}

std::size_t ChoiceModel::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += p.tensor.size();
  return total;
}

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out,
                      std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> v(fan_in * fan_out);
  for (double& x : v) x = u(rng);
  return Tensor::from({fan_in, fan_out}, std::move(v), true);
}

namespace {

LinearParams init_linear(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  return {xavier_uniform(in, out, rng), Tensor::zeros({out}, true)};
}

FfnParams init_ffn(std::size_t in, std::size_t width, std::mt19937_64& rng) {
  auto first = init_linear(in, width, rng);
  auto second = init_linear(width, width, rng);
  return {std::move(first), std::move(second)};
}

NormParams init_norm(std::size_t width) {
  return {Tensor::full({width}, 1.0, true), Tensor::zeros({width}, true)};
}

AttentionParams init_attention(std::size_t width, std::mt19937_64& rng) {
  AttentionParams p;
  p.wq = xavier_uniform(width, width, rng);
  p.wk = xavier_uniform(width, width, rng);
  p.wv = xavier_uniform(width, width, rng);
  return p;
}

std::optional<NormParams> maybe_norm(bool on, std::size_t width) {
  if (!on) return std::nullopt;
  return init_norm(width);
}

Tensor linear(const Tensor& x, const LinearParams& p) {
  return add_row(matmul(x, p.w), p.b);
}

// Sublayer output → dropout → optional residual → optional layer norm.
Tensor finish_sublayer(const Tensor& input, Tensor out, bool residual,
                       const std::optional<NormParams>& norm,
                       const TCNetConfig& cfg, const ForwardOptions& opt) {
  if (cfg.dropout_rate > 0.0 && opt.training) {
    if (!opt.rng) throw ValidationError("dropout in training needs an rng");
    out = dropout(out, cfg.dropout_rate, true, *opt.rng);
  }
  if (residual) out = add(input, out);
  if (norm) out = layer_norm(out, norm->gain, norm->bias, cfg.layer_norm_eps);
  return out;
}

Tensor multi_head(const Tensor& queries_from, const Tensor& keys_from,
                  const Mask& key_mask, const AttentionParams& p,
                  const TCNetConfig& cfg, Activation activation,
                  std::size_t layer, AttentionKind kind,
                  const ForwardOptions& opt, ForwardResult& result) {
  const Tensor q = matmul(queries_from, p.wq);
  const Tensor k = matmul(keys_from, p.wk);
  const Tensor v = matmul(keys_from, p.wv);
  const std::size_t dh = cfg.head_dim();
  std::vector<Tensor> heads;
  heads.reserve(cfg.n_heads);
  for (std::size_t h = 0; h < cfg.n_heads; ++h) {
    Tensor weights;
    heads.push_back(attention(slice_last(q, h * dh, dh), slice_last(k, h * dh, dh),
                              slice_last(v, h * dh, dh), key_mask, activation,
                              cfg.scale_scores,
                              opt.capture_attention ? &weights : nullptr));
    if (opt.capture_attention) {
      result.attention.push_back({layer, h, kind, weights.detach()});
    }
  }
  return cfg.n_heads == 1 ? heads.front() : concat_last(heads);
}

}  // namespace

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 const Mask& key_mask, Activation activation, bool scale,
                 Tensor* weights_out) {
  if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3 ||
      q.dim(2) != k.dim(2) || k.dim(1) != v.dim(1) || q.dim(0) != k.dim(0) ||
      k.dim(0) != v.dim(0)) {
    throw DimensionError("attention: incompatible Q " + shape_string(q.shape()) +
                         ", K " + shape_string(k.shape()) + ", V " +
                         shape_string(v.shape()));
  }
  if (key_mask.shape() != Shape{k.dim(0), k.dim(1)}) {
    throw DimensionError("attention: key mask " +
                         shape_string(key_mask.shape()) + " for keys " +
                         shape_string(k.shape()));
  }
  Tensor scores = batched_matmul(q, k, Transpose::kSecond);
  if (scale) scores = tcnet::scale(scores, 1.0 / std::sqrt(static_cast<double>(q.dim(2))));
  const Mask mask = key_mask.expand_rows(q.dim(1));
  Tensor weights = activation == Activation::kSoftmax
                       ? masked_softmax(scores, mask)
                       : apply_mask(one_plus_relu(scores), mask);
  if (weights_out) *weights_out = weights;
  return batched_matmul(weights, v);
}

Tensor ffn(const Tensor& x, const FfnParams& p) {
  return linear(relu(linear(x, p.first)), p.second);
}

// --------------------------------------------------------------- TCNet

TCNet::TCNet(TCNetConfig config) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  const std::size_t d = config_.input_dim, dv = config_.hidden_dim;
  if (config_.embedding()) {
    params_.assortment_embedding = init_ffn(d, dv, rng);
    params_.candidate_embedding = init_ffn(d, dv, rng);
  }
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    AssortmentLayerParams a;
    a.attention = init_attention(dv, rng);
    a.attention_norm =
        maybe_norm(config_.layer_norm(Sublayer::kAssortmentAttention), dv);
    a.ffn = init_ffn(dv, dv, rng);
    a.ffn_norm = maybe_norm(config_.layer_norm(Sublayer::kAssortmentFfn), dv);
    params_.assortment_layers.push_back(std::move(a));
  }
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    CandidateLayerParams c;
    c.self_attention = init_attention(dv, rng);
    c.self_norm = maybe_norm(config_.layer_norm(Sublayer::kCandidateAttention), dv);
    c.cross_attention = init_attention(dv, rng);
    c.cross_norm = maybe_norm(config_.layer_norm(Sublayer::kCrossAttention), dv);
    c.ffn = init_ffn(dv, dv, rng);
    c.ffn_norm = maybe_norm(config_.layer_norm(Sublayer::kCandidateFfn), dv);
    params_.candidate_layers.push_back(std::move(c));
  }
  std::size_t width = dv;
  for (auto h : config_.decoder_hidden) {
    params_.decoder.push_back(init_linear(width, h, rng));
    width = h;
  }
  params_.decoder.push_back(init_linear(width, 1, rng));
}

TCNet::TCNet(TCNetConfig config, TCNetParams params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  TCNet reference(config_);
  const auto want = reference.parameters();
  const auto have = parameters();
  if (want.size() != have.size()) {
    throw ValidationError("parameter inventory does not match the config");
  }
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (want[i].name != have[i].name ||
        want[i].tensor.shape() != have[i].tensor.shape()) {
      throw ValidationError("parameter " + have[i].name + " has shape " +
                            shape_string(have[i].tensor.shape()) +
                            ", expected " + want[i].name + " " +
                            shape_string(want[i].tensor.shape()));
    }
  }
}

ForwardResult TCNet::forward(const PaddedBatch& batch,
                             const ForwardOptions& opt) const {
  if (batch.feature_dim != config_.input_dim) {
    throw DimensionError("batch feature width " +
                         std::to_string(batch.feature_dim) +
                         " does not match model input_dim " +
                         std::to_string(config_.input_dim));
  }
  const auto& cfg = config_;
  ForwardResult result;

  Tensor xs = batch.assortment;
  Tensor xc = batch.candidates;
  if (params_.assortment_embedding) {
    xs = ffn(xs, *params_.assortment_embedding);
    xc = ffn(xc, *params_.candidate_embedding);
  }

  for (std::size_t l = 0; l < params_.assortment_layers.size(); ++l) {
    const auto& p = params_.assortment_layers[l];
    Tensor att = multi_head(xs, xs, batch.assortment_mask, p.attention, cfg,
                            cfg.activation(Sublayer::kAssortmentAttention), l,
                            AttentionKind::kAssortmentSelf, opt, result);
    xs = finish_sublayer(xs, att, cfg.residual(Sublayer::kAssortmentAttention),
                         p.attention_norm, cfg, opt);
    xs = finish_sublayer(xs, ffn(xs, p.ffn),
                         cfg.residual(Sublayer::kAssortmentFfn), p.ffn_norm,
                         cfg, opt);
  }

  for (std::size_t l = 0; l < params_.candidate_layers.size(); ++l) {
    const auto& p = params_.candidate_layers[l];
    Tensor self = multi_head(xc, xc, batch.candidate_mask, p.self_attention,
                             cfg, cfg.activation(Sublayer::kCandidateAttention),
                             l, AttentionKind::kCandidatesSelf, opt, result);
    xc = finish_sublayer(xc, self, cfg.residual(Sublayer::kCandidateAttention),
                         p.self_norm, cfg, opt);
    Tensor cross = multi_head(xc, xs, batch.assortment_mask, p.cross_attention,
                              cfg, cfg.activation(Sublayer::kCrossAttention), l,
                              AttentionKind::kCross, opt, result);
    xc = finish_sublayer(xc, cross, cfg.residual(Sublayer::kCrossAttention),
                         p.cross_norm, cfg, opt);
    xc = finish_sublayer(xc, ffn(xc, p.ffn),
                         cfg.residual(Sublayer::kCandidateFfn), p.ffn_norm, cfg,
                         opt);
  }

  Tensor u = xc;
  for (std::size_t i = 0; i < params_.decoder.size(); ++i) {
    u = linear(u, params_.decoder[i]);
    if (i + 1 < params_.decoder.size()) u = relu(u);
  }
  result.utilities = reshape(u, {batch.size, batch.candidates.dim(1)});
  result.probabilities = masked_softmax(result.utilities, batch.candidate_mask);
  result.assortment_latent = xs;
  result.candidate_latent = xc;
  return result;
}

std::vector<NamedParameter> TCNet::parameters() const {
  std::vector<NamedParameter> out;
  auto add_linear = [&](const std::string& prefix, const LinearParams& p) {
    out.push_back({prefix + ".w", p.w});
    out.push_back({prefix + ".b", p.b});
  };
  auto add_ffn = [&](const std::string& prefix, const FfnParams& p) {
    add_linear(prefix + ".first", p.first);
    add_linear(prefix + ".second", p.second);
  };
  auto add_norm = [&](const std::string& prefix,
                      const std::optional<NormParams>& p) {
    if (!p) return;
    out.push_back({prefix + ".gain", p->gain});
    out.push_back({prefix + ".bias", p->bias});
  };
  auto add_attention = [&](const std::string& prefix, const AttentionParams& p) {
    out.push_back({prefix + ".wq", p.wq});
    out.push_back({prefix + ".wk", p.wk});
    out.push_back({prefix + ".wv", p.wv});
  };
  if (params_.assortment_embedding) {
    add_ffn("assortment.embedding", *params_.assortment_embedding);
    add_ffn("candidates.embedding", *params_.candidate_embedding);
  }
  for (std::size_t l = 0; l < params_.assortment_layers.size(); ++l) {
    const auto& p = params_.assortment_layers[l];
    const std::string pre = "assortment.layer" + std::to_string(l);
    add_attention(pre + ".attention", p.attention);
    add_norm(pre + ".attention_norm", p.attention_norm);
    add_ffn(pre + ".ffn", p.ffn);
    add_norm(pre + ".ffn_norm", p.ffn_norm);
  }
  for (std::size_t l = 0; l < params_.candidate_layers.size(); ++l) {
    const auto& p = params_.candidate_layers[l];
    const std::string pre = "candidates.layer" + std::to_string(l);
    add_attention(pre + ".self", p.self_attention);
    add_norm(pre + ".self_norm", p.self_norm);
    add_attention(pre + ".cross", p.cross_attention);
    add_norm(pre + ".cross_norm", p.cross_norm);
    add_ffn(pre + ".ffn", p.ffn);
    add_norm(pre + ".ffn_norm", p.ffn_norm);
  }
  for (std::size_t i = 0; i < params_.decoder.size(); ++i) {
    add_linear("decoder." + std::to_string(i), params_.decoder[i]);
  }
  return out;
}

namespace {

void copy_values(const std::vector<NamedParameter>& from,
                 const std::vector<NamedParameter>& to) {
  for (std::size_t i = 0; i < from.size(); ++i) {
    auto src = from[i].tensor.data();
    Tensor target = to[i].tensor;
    auto dst = target.mutable_data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

}  // namespace

std::unique_ptr<ChoiceModel> TCNet::clone() const {
  auto copy = std::make_unique<TCNet>(config_);
  copy_values(parameters(), copy->parameters());
  return copy;
}

std::size_t tcnet_parameter_formula(std::size_t d, std::size_t dv,
                                    std::size_t L) {
  return 2 * d * dv + (2 + 13 * L) * dv * dv + (5 + 14 * L) * dv + 1;
}

// ------------------------------------------------------------ baselines

LinearMnl::LinearMnl(std::size_t input_dim, std::uint64_t seed) {
  if (input_dim == 0) throw ValidationError("input_dim must be positive");
  std::mt19937_64 rng(seed);
  beta_ = xavier_uniform(input_dim, 1, rng);
}

namespace {

ForwardResult utilities_result(const Tensor& per_item,
                               const PaddedBatch& batch) {
  ForwardResult r;
  r.utilities = reshape(per_item, {batch.size, batch.candidates.dim(1)});
  r.probabilities = masked_softmax(r.utilities, batch.candidate_mask);
  return r;
}

void check_width(const PaddedBatch& batch, std::size_t d) {
  if (batch.feature_dim != d) {
    throw DimensionError("batch feature width " +
                         std::to_string(batch.feature_dim) +
                         " does not match model input_dim " +
                         std::to_string(d));
  }
}

}  // namespace

ForwardResult LinearMnl::forward(const PaddedBatch& batch,
                                 const ForwardOptions&) const {
  check_width(batch, input_dim());
  return utilities_result(matmul(batch.candidates, beta_), batch);
}

std::vector<NamedParameter> LinearMnl::parameters() const {
  return {{"beta", beta_}};
}

std::unique_ptr<ChoiceModel> LinearMnl::clone() const {
  auto copy = std::make_unique<LinearMnl>(input_dim(), 0);
  copy_values(parameters(), copy->parameters());
  return copy;
}

DeepMnl::DeepMnl(std::size_t input_dim, std::vector<std::size_t> hidden,
                 std::uint64_t seed)
    : hidden_(std::move(hidden)) {
  if (input_dim == 0) throw ValidationError("input_dim must be positive");
  std::mt19937_64 rng(seed);
  std::size_t width = input_dim;
  for (auto h : hidden_) {
    if (h == 0) throw ValidationError("hidden widths must be positive");
    layers_.push_back(init_linear(width, h, rng));
    width = h;
  }
  layers_.push_back(init_linear(width, 1, rng));
}

ForwardResult DeepMnl::forward(const PaddedBatch& batch,
                               const ForwardOptions&) const {
  check_width(batch, input_dim());
  Tensor u = batch.candidates;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    u = linear(u, layers_[i]);
    if (i + 1 < layers_.size()) u = relu(u);
  }
  return utilities_result(u, batch);
}

std::vector<NamedParameter> DeepMnl::parameters() const {
  std::vector<NamedParameter> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    out.push_back({"layer" + std::to_string(i) + ".w", layers_[i].w});
    out.push_back({"layer" + std::to_string(i) + ".b", layers_[i].b});
  }
  return out;
}

std::unique_ptr<ChoiceModel> DeepMnl::clone() const {
  auto copy = std::make_unique<DeepMnl>(input_dim(), hidden_, 0);
  copy_values(parameters(), copy->parameters());
  return copy;
}

// ------------------------------------------------------ attention records

std::vector<AttentionRecord> attention_records(const ForwardResult& result,
                                               const PaddedBatch& batch,
                                               std::size_t row) {
  if (row >= batch.size) throw ValidationError("batch row out of range");
  std::vector<AttentionRecord> out;
  for (const auto& cap : result.attention) {
    AttentionRecord rec;
    rec.layer = cap.layer;
    rec.head = cap.head;
    rec.kind = cap.kind;
    rec.row_items = cap.kind == AttentionKind::kAssortmentSelf
                        ? batch.assortment_items[row]
                        : batch.candidate_items[row];
    rec.column_items = cap.kind == AttentionKind::kCandidatesSelf
                           ? batch.candidate_items[row]
                           : batch.assortment_items[row];
    const std::size_t q = cap.weights.dim(1), k = cap.weights.dim(2);
    for (std::size_t r = 0; r < rec.row_items.size(); ++r) {
      for (std::size_t c = 0; c < rec.column_items.size(); ++c) {
        rec.scores.push_back(cap.weights[(row * q + r) * k + c]);
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

// ------------------------------------------------------------ checkpoints

namespace {

json config_to_json(const TCNetConfig& c) {
  json j;
  j["input_dim"] = c.input_dim;
  j["hidden_dim"] = c.hidden_dim;
  j["n_layers"] = c.n_layers;
  j["n_heads"] = c.n_heads;
  j["dropout_rate"] = c.dropout_rate;
  j["use_embedding"] = c.embedding();
  j["use_layer_norm"] = c.use_layer_norm;
  j["use_residual"] = c.use_residual;
  j["attention_activation"] = to_string(c.attention_activation);
  j["scale_scores"] = c.scale_scores;
  j["layer_norm_eps"] = c.layer_norm_eps;
  j["decoder_hidden"] = c.decoder_hidden;
  j["seed"] = c.seed;
  json ov = json::array();
  for (const auto& o : c.overrides) {
    json e = json::object();
    if (o.residual) e["residual"] = *o.residual;
    if (o.layer_norm) e["layer_norm"] = *o.layer_norm;
    if (o.activation) e["activation"] = to_string(*o.activation);
    ov.push_back(e);
  }
  j["overrides"] = ov;
  return j;
}

TCNetConfig config_from_json(const json& j) {
  TCNetConfig c;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.use_embedding = j.at("use_embedding").get<bool>();
  c.use_layer_norm = j.at("use_layer_norm").get<bool>();
  c.use_residual = j.at("use_residual").get<bool>();
  c.attention_activation =
      parse_activation(j.at("attention_activation").get<std::string>());
  c.scale_scores = j.at("scale_scores").get<bool>();
  c.layer_norm_eps = j.at("layer_norm_eps").get<double>();
  c.decoder_hidden = j.at("decoder_hidden").get<std::vector<std::size_t>>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto& ov = j.at("overrides");
  if (ov.size() != kSublayerCount) throw ValidationError("bad overrides");
  for (std::size_t i = 0; i < kSublayerCount; ++i) {
    if (ov[i].contains("residual")) c.overrides[i].residual = ov[i]["residual"].get<bool>();
    if (ov[i].contains("layer_norm")) c.overrides[i].layer_norm = ov[i]["layer_norm"].get<bool>();
    if (ov[i].contains("activation")) {
      c.overrides[i].activation =
          parse_activation(ov[i]["activation"].get<std::string>());
    }
  }
  return c;
}

constexpr int kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const ChoiceModel& model,
                     const std::filesystem::path& path) {
  json j;
  j["format"] = "tcnet-checkpoint";
  j["version"] = kCheckpointVersion;
  j["model"] = model.type_name();
  if (auto* t = dynamic_cast<const TCNet*>(&model)) {
    j["config"] = config_to_json(t->config());
  } else if (auto* m = dynamic_cast<const DeepMnl*>(&model)) {
    j["config"] = {{"input_dim", m->input_dim()}, {"hidden", m->hidden()}};
  } else {
    j["config"] = {{"input_dim", model.input_dim()}};
  }
  json params = json::object();
  for (const auto& p : model.parameters()) {
    params[p.name] = {{"shape", p.tensor.shape()},
                      {"data", std::vector<double>(p.tensor.data().begin(),
                                                   p.tensor.data().end())}};
  }
  j["parameters"] = params;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << j.dump() << '\n';
  if (!out) throw ValidationError("failed writing " + path.string());
}

std::unique_ptr<ChoiceModel> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("corrupt checkpoint " + path.string() + ": " + e.what());
  }
  try {
    if (j.at("format") != "tcnet-checkpoint" ||
        j.at("version").get<int>() != kCheckpointVersion) {
      throw ValidationError("unsupported checkpoint format in " + path.string());
    }
    const auto type = j.at("model").get<std::string>();
    const auto& cfg = j.at("config");
    std::unique_ptr<ChoiceModel> model;
    if (type == "tcnet") {
      model = std::make_unique<TCNet>(config_from_json(cfg));
    } else if (type == "mnl") {
      model = std::make_unique<LinearMnl>(cfg.at("input_dim").get<std::size_t>(), 0);
    } else if (type == "deep-mnl") {
      model = std::make_unique<DeepMnl>(
          cfg.at("input_dim").get<std::size_t>(),
          cfg.at("hidden").get<std::vector<std::size_t>>(), 0);
    } else {
      throw ValidationError("unknown model type '" + type + "'");
    }
    const auto& params = j.at("parameters");
    for (auto p : model->parameters()) {
      if (!params.contains(p.name)) {
        throw ValidationError("checkpoint lacks parameter " + p.name);
      }
      const auto& entry = params[p.name];
      if (entry.at("shape").get<Shape>() != p.tensor.shape()) {
        throw ValidationError("checkpoint parameter " + p.name +
                              " has the wrong shape");
      }
      const auto data = entry.at("data").get<std::vector<double>>();
      auto dst = p.tensor.mutable_data();
      if (data.size() != dst.size()) {
        throw ValidationError("checkpoint parameter " + p.name +
                              " has the wrong size");
      }
      std::copy(data.begin(), data.end(), dst.begin());
    }
    if (params.size() != model->parameters().size()) {
      throw ValidationError("checkpoint has parameters the model does not");
    }
    return model;
  } catch (const json::exception& e) {
    throw ValidationError("malformed checkpoint " + path.string() + ": " +
                          e.what());
  }
}

}  // namespace tcnet
