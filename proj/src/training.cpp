#include "tcnet/training.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>

#include "json.hpp"
#include "tcnet/errors.hpp"
#include "tcnet/inference.hpp"

namespace tcnet {

Tensor ce_loss(const Tensor& probabilities,
               const std::vector<std::size_t>& labels, std::size_t* clamped) {
  if (probabilities.rank() != 2 || labels.size() != probabilities.dim(0)) {
    throw DimensionError("ce_loss needs [B×C] probabilities and B labels");
  }
  const std::size_t width = probabilities.dim(1);
  std::vector<std::size_t> flat(labels.size());
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] >= width) throw DimensionError("label outside candidate row");
    flat[r] = r * width + labels[r];
  }
  Tensor logp = clamped_log(gather(probabilities, flat), kLogFloor, clamped);
  return scale(sum(logp), -1.0 / static_cast<double>(labels.size()));
}

Tensor independent_ce_loss(const Tensor& utilities, const Mask& live,
                           const Mask& chosen) {
  if (live.shape() != utilities.shape() || chosen.shape() != utilities.shape()) {
    throw DimensionError("independent_ce_loss: mask shapes differ from utilities");
  }
  std::vector<std::size_t> flat;
  std::vector<double> y;
  for (std::size_t i = 0; i < utilities.size(); ++i) {
    if (!live.live(i)) continue;
    flat.push_back(i);
    y.push_back(chosen.live(i) ? 1.0 : 0.0);
  }
  if (flat.empty()) throw ValidationError("independent_ce_loss over no items");
  // softplus(u) − y·u = −[y log σ(u) + (1−y) log(1−σ(u))]
  Tensor u = gather(utilities, flat);
  Tensor target = Tensor::from({y.size()}, y);
  Tensor per_item = add(softplus(u), scale(mul(u, target), -1.0));
  return scale(sum(per_item), 1.0 / static_cast<double>(flat.size()));
}

// ----------------------------------------------------------------- Adam

Adam::Adam(std::vector<NamedParameter> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.size(), 0.0);
    v_.emplace_back(p.tensor.size(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Adam::step(double lr) {
  for (const auto& p : params_) {
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) {
        throw TrainingDiverged("non-finite gradient in parameter " + p.name +
                               " at step " + std::to_string(t_ + 1));
      }
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto w = params_[k].tensor.mutable_data();
    auto g = params_[k].tensor.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] + config_.weight_decay * w[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
  }
}

double scheduled_learning_rate(double initial, std::size_t epoch, double decay,
                               std::size_t every) {
  if (every == 0) throw ValidationError("lr decay period must be positive");
  return initial * std::pow(decay, static_cast<double>(epoch / every));
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ValidationError("epochs must be at least 1");
  if (batch_size == 0) throw ValidationError("batch size must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning rate must be a nonnegative number");
  }
  if (!(lr_decay > 0.0)) throw ValidationError("lr decay must be positive");
  if (lr_decay_every == 0) throw ValidationError("lr decay period must be positive");
  if (weight_decay < 0.0) throw ValidationError("weight decay must be nonnegative");
}

std::string TrainReport::to_json(bool with_timing) const {
  nlohmann::json j;
  j["best_epoch"] = best_epoch;
  j["best_validation_loss"] = best_validation_loss;
  j["test_loss"] = test_loss ? nlohmann::json(*test_loss) : nlohmann::json(nullptr);
  j["train_samples"] = train_samples;
  j["log_clamps"] = log_clamps;
  if (with_timing) j["wall_seconds"] = wall_seconds;
  auto& e = j["epochs"] = nlohmann::json::array();
  for (const auto& r : epochs) {
    e.push_back({{"epoch", r.epoch},
                 {"learning_rate", r.learning_rate},
                 {"train_loss", r.train_loss},
                 {"validation_loss", r.validation_loss}});
  }
  return j.dump(2);
}

// ------------------------------------------------------------ training

namespace {

bool expands(const ChoiceDataset& ds, const TrainConfig& cfg) {
  return ds.kind() == ChoiceKind::kMulti && cfg.objective == Objective::kChoice;
}

ChoiceDataset static_prepare(const ChoiceDataset& ds, const TrainConfig& cfg) {
  if (cfg.objective == Objective::kIndependent && ds.kind() != ChoiceKind::kMulti) {
    throw ValidationError("the independent objective needs multi-choice data");
  }
  if (cfg.drop_assortment) {
    if (ds.kind() == ChoiceKind::kSequential) return drop_assortment(ds);
    if (ds.kind() == ChoiceKind::kMulti && cfg.objective == Objective::kChoice) {
      return ds;  // applied after expansion
    }
  }
  return ds;
}

ChoiceDataset expand(const ChoiceDataset& ds, const TrainConfig& cfg,
                     std::mt19937_64& rng) {
  auto seq = multi_to_sequential(ds, rng, cfg.append_stop);
  return cfg.drop_assortment ? drop_assortment(seq) : seq;
}

Tensor batch_loss(const ForwardResult& r, const PaddedBatch& b,
                  Objective objective, std::size_t* clamped) {
  if (objective == Objective::kIndependent) {
    return independent_ce_loss(r.utilities, b.candidate_mask, b.label_mask);
  }
  return ce_loss(r.probabilities, b.labels, clamped);
}

}  // namespace

ChoiceDataset prepare_eval_data(const ChoiceDataset& ds, const TrainConfig& cfg,
                                std::uint64_t seed) {
  auto prepared = static_prepare(ds, cfg);
  if (!expands(prepared, cfg)) return prepared;
  std::mt19937_64 rng(seed);
  return expand(prepared, cfg, rng);
}

std::size_t training_input_dim(const ChoiceDataset& ds, const TrainConfig& cfg) {
  std::size_t d = ds.input_dim();
  if (expands(ds, cfg) && cfg.append_stop && !ds.catalog().stop_index()) {
    d = ds.catalog().with_stop_item().feature_dim() + ds.context_dim();
  }
  return d;
}

double dataset_loss(const ChoiceModel& model, const ChoiceDataset& ds,
                    Objective objective, std::size_t batch_size,
                    std::size_t* clamped) {
  if (ds.empty()) throw ValidationError("loss over an empty dataset");
  NoGradGuard guard;
  std::mt19937_64 unused(0);
  BatchStream stream(ds, batch_size, unused, false);
  double total = 0.0;
  std::size_t count = 0;
  while (auto b = stream.next()) {
    const auto r = model.forward(*b);
    const double l = batch_loss(r, *b, objective, clamped).item();
    // The independent loss averages over items; weight batches accordingly.
    std::size_t w = b->size;
    if (objective == Objective::kIndependent) {
      w = 0;
      for (auto x : b->candidate_mask.bytes()) w += x;
    }
    total += l * static_cast<double>(w);
    count += w;
  }
  return total / static_cast<double>(count);
}

TrainResult train(const ChoiceModel& initial, const DatasetSplits& splits,
                  const TrainConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  if (splits.train.empty() || splits.validation.empty()) {
    throw ValidationError("training needs nonempty train and validation splits");
  }
  std::mt19937_64 rng(cfg.seed);
  const ChoiceDataset train_base = static_prepare(splits.train, cfg);
  const ChoiceDataset validation = prepare_eval_data(splits.validation, cfg, cfg.seed + 1);
  const bool per_epoch = expands(train_base, cfg);

  ChoiceDataset train_ds = per_epoch ? expand(train_base, cfg, rng) : train_base;
  if (train_ds.input_dim() != initial.input_dim()) {
    throw ValidationError("model input_dim " + std::to_string(initial.input_dim()) +
                          " does not match data width " +
                          std::to_string(train_ds.input_dim()));
  }

  std::size_t epochs = cfg.epochs;
  if (cfg.desk_scale && train_ds.size() > cfg.desk_scale_threshold) {
    epochs = std::max<std::size_t>(1, epochs / 2);
  }

  TrainResult result;
  auto& report = result.report;
  report.train_samples = train_ds.size();
  auto model = initial.clone();
  Adam adam(model->parameters(), {0.9, 0.999, 1e-8, cfg.weight_decay});
  double best = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    if (per_epoch && epoch > 0) train_ds = expand(train_base, cfg, rng);
    const double lr = scheduled_learning_rate(cfg.learning_rate, epoch,
                                              cfg.lr_decay, cfg.lr_decay_every);
    BatchStream stream(train_ds, cfg.batch_size, rng);
    double total = 0.0;
    std::size_t seen = 0;
    try {
      while (auto b = stream.next()) {
        ForwardOptions opt;
        opt.training = true;
        opt.rng = &rng;
        const auto r = model->forward(*b, opt);
        Tensor loss = batch_loss(r, *b, cfg.objective, &report.log_clamps);
        adam.zero_grad();
        backward(loss);
        adam.step(lr);
        total += loss.item() * static_cast<double>(b->size);
        seen += b->size;
      }
    } catch (const NumericError& e) {
      throw TrainingDiverged("epoch " + std::to_string(epoch) + ": " + e.what());
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = lr;
    rec.train_loss = total / static_cast<double>(seen);
    try {
      rec.validation_loss = dataset_loss(*model, validation, cfg.objective,
                                         cfg.batch_size);
    } catch (const NumericError& e) {
      throw TrainingDiverged("validation at epoch " + std::to_string(epoch) +
                             ": " + e.what());
    }
    if (!std::isfinite(rec.validation_loss)) {
      throw TrainingDiverged("validation loss is not finite at epoch " +
                             std::to_string(epoch));
    }
    if (rec.validation_loss < best) {
      best = rec.validation_loss;
      report.best_epoch = epoch;
      result.model = model->clone();
    }
    if (cfg.verbose) {
      std::cerr << "epoch " << epoch << " lr " << lr << " train "
                << rec.train_loss << " val " << rec.validation_loss << '\n';
    }
    report.epochs.push_back(rec);
  }
  report.best_validation_loss = best;
  if (!splits.test.empty()) {
    const auto test = prepare_eval_data(splits.test, cfg, cfg.seed + 2);
    report.test_loss = dataset_loss(*result.model, test, cfg.objective,
                                    cfg.batch_size);
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return result;
}

void GridSpec::validate() const {
  if (hidden_dims.empty() || heads.empty() || learning_rates.empty() ||
      thresholds.empty()) {
    throw ValidationError("every grid must be nonempty");
  }
  for (double t : thresholds) {
    if (!(t > 0.0 && t < 1.0)) throw ValidationError("thresholds must lie in (0,1)");
  }
}

GridResult grid_search(const TCNetConfig& base, const GridSpec& grid,
                       const DatasetSplits& splits, const TrainConfig& cfg) {
  grid.validate();
  cfg.validate();
  struct Plan {
    std::size_t dv, h;
    double lr;
  };
  std::vector<Plan> plans;
  for (auto dv : grid.hidden_dims)
    for (auto h : grid.heads)
      if (h > 0 && dv % h == 0)
        for (double lr : grid.learning_rates) plans.push_back({dv, h, lr});
  if (plans.empty()) throw ValidationError("no grid cell has heads dividing the width");

  const bool thresholded = cfg.objective == Objective::kIndependent;
  const std::size_t input_dim = training_input_dim(splits.train, cfg);
  std::vector<GridCell> cells(plans.size());
  std::vector<std::unique_ptr<ChoiceModel>> models(plans.size());
  std::vector<std::string> errors(plans.size());

#pragma omp parallel for schedule(dynamic)
  for (std::size_t k = 0; k < plans.size(); ++k) {
    auto& cell = cells[k];
    cell.hidden_dim = plans[k].dv;
    cell.heads = plans[k].h;
    cell.learning_rate = plans[k].lr;
    try {
      TCNetConfig mc = base;
      mc.input_dim = input_dim;
      mc.hidden_dim = plans[k].dv;
      mc.n_heads = plans[k].h;
      TCNet net(mc);
      TrainConfig tc = cfg;
      tc.learning_rate = plans[k].lr;
      auto res = train(net, splits, tc);
      cell.report = res.report;
      cell.objective = res.report.best_validation_loss;
      if (thresholded) {
        auto t = tune_threshold(*res.model, splits.validation, grid.thresholds);
        cell.threshold = t.mu;
        cell.objective = t.f1_loss;
      }
      models[k] = std::move(res.model);
    } catch (const TrainingDiverged& e) {
      cell.diverged = true;
      errors[k] = e.what();
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  }
  for (std::size_t k = 0; k < plans.size(); ++k) {
    if (!errors[k].empty() && !cells[k].diverged) throw ValidationError(errors[k]);
  }

  GridResult out;
  bool found = false;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (cells[k].diverged) continue;
    if (!found || cells[k].objective < cells[out.best].objective) {
      out.best = k;
      found = true;
    }
  }
  if (!found) throw TrainingDiverged("every grid cell diverged");
  out.best_config = base;
  out.best_config.input_dim = input_dim;
  out.best_config.hidden_dim = cells[out.best].hidden_dim;
  out.best_config.n_heads = cells[out.best].heads;
  out.model = std::move(models[out.best]);
  out.cells = std::move(cells);
  return out;
}

}  // namespace tcnet
