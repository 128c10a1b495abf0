// tcnet command-line entry point.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tcnet/data.hpp"
#include "tcnet/errors.hpp"
#include "tcnet/inference.hpp"
#include "tcnet/model.hpp"
#include "tcnet/theory.hpp"
#include "tcnet/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tcnet;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct MissingFile : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw MissingFile(what + " path is required");
  if (!fs::is_regular_file(path)) throw MissingFile(what + " not found: " + path);
}

fs::path output_root() {
  const char* env = std::getenv("TCNET_OUTPUT_ROOT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

std::string default_run_id() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << "run-" << std::put_time(&tm, "%Y%m%d-%H%M%S");
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text << '\n';
  if (!out) throw ValidationError("failed writing " + path.string());
}

ItemSet parse_items(const std::string& text, const ItemCatalog& catalog) {
  ItemSet out;
  std::stringstream ss(text);
  std::string name;
  while (std::getline(ss, name, ',')) {
    const auto b = name.find_first_not_of(' ');
    const auto e = name.find_last_not_of(' ');
    if (b == std::string::npos) continue;
    name = name.substr(b, e - b + 1);
    auto idx = catalog.index_of(name);
    if (!idx) throw ValidationError("unknown item: " + name);
    out.push_back(*idx);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

json item_names(const ItemSet& s, const ItemCatalog& catalog) {
  json a = json::array();
  for (auto i : s) a.push_back(catalog.name(i));
  return a;
}

std::vector<double> parse_context(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string v;
  while (std::getline(ss, v, ',')) out.push_back(std::stod(v));
  return out;
}

// ------------------------------------------------------------- data opts

struct DataOptions {
  std::string data;
  std::string items;
  std::string no_purchase;
  std::string stop_item;

  void add(CLI::App* cmd, bool required = true) {
    auto* o = cmd->add_option("--data", data, "Choice data CSV");
    if (required) o->required();
    cmd->add_option("--items", items, "Item file (name,f_0,...) fixing order and features");
    cmd->add_option("--no-purchase", no_purchase, "Name of the no-purchase item");
    cmd->add_option("--stop-item", stop_item, "Name of the stop item");
  }
  ChoiceDataset load() const {
    require_file(data, "data file");
    CsvSchema schema;
    if (!items.empty()) {
      require_file(items, "item file");
      schema.items_path = items;
    }
    if (!no_purchase.empty()) schema.no_purchase_item = no_purchase;
    if (!stop_item.empty()) schema.stop_item = stop_item;
    return load_csv(data, schema);
  }
};

// Catalog matching the model's input width: multi data trained with a stop
// item gains one feature column.
ItemCatalog catalog_for(const ChoiceModel& model, const ChoiceDataset& ds) {
  ItemCatalog cat = ds.catalog();
  if (model.input_dim() == ds.input_dim()) return cat;
  if (!cat.stop_index()) {
    auto with = cat.with_stop_item();
    if (model.input_dim() == with.feature_dim() + ds.context_dim()) return with;
  }
  throw ValidationError("checkpoint input_dim " + std::to_string(model.input_dim()) +
                        " does not match data width " + std::to_string(ds.input_dim()));
}

ChoiceDataset with_catalog(const ChoiceDataset& ds, const ItemCatalog& cat) {
  if (cat.size() == ds.catalog().size()) return ds;
  return ChoiceDataset(cat, ds.kind(), ds.observations());
}

// ------------------------------------------------------------------ train

struct TrainOptions {
  DataOptions data;
  std::string task = "sequential";
  std::string model = "tcnet";
  std::size_t hidden = 32, heads = 4, layers = 1;
  std::string activation = "softmax";
  std::string embedding = "auto";
  bool no_layer_norm = false, no_residual = false, no_scale = false;
  double dropout = 0.0;
  std::vector<std::size_t> decoder_hidden;
  std::vector<std::size_t> deep_hidden{32};
  std::size_t epochs = 100, batch = 256, lr_every = 10;
  double lr = 1e-3, lr_decay = 0.95, weight_decay = 0.0;
  std::string objective = "choice";
  bool append_stop = false, drop_assortment = false, desk_scale = false;
  std::vector<double> split{0.6, 0.2, 0.2};
  bool grid = false;
  std::vector<std::size_t> grid_hidden{32, 128, 256};
  std::vector<std::size_t> grid_heads{4, 8, 16, 32};
  std::vector<double> grid_lr{1e-3, 5e-4, 1e-4};
  std::vector<double> thresholds{0.1, 0.3, 0.5, 0.7, 0.9};
  std::size_t repeats = 1;
  std::string run_id;
  std::string out;
  bool verbose = false;
};

TCNetConfig tcnet_config(const TrainOptions& o, std::size_t input_dim,
                         std::uint64_t seed) {
  TCNetConfig c;
  c.input_dim = input_dim;
  c.hidden_dim = o.hidden;
  c.n_heads = o.heads;
  c.n_layers = o.layers;
  c.attention_activation = parse_activation(o.activation);
  if (o.embedding == "on") c.use_embedding = true;
  else if (o.embedding == "off") c.use_embedding = false;
  c.use_layer_norm = !o.no_layer_norm;
  c.use_residual = !o.no_residual;
  c.scale_scores = !o.no_scale;
  c.dropout_rate = o.dropout;
  c.decoder_hidden = o.decoder_hidden;
  c.seed = seed;
  return c;
}

TrainConfig train_config(const TrainOptions& o, std::uint64_t seed) {
  TrainConfig t;
  t.learning_rate = o.lr;
  t.lr_decay = o.lr_decay;
  t.lr_decay_every = o.lr_every;
  t.epochs = o.epochs;
  t.batch_size = o.batch;
  t.weight_decay = o.weight_decay;
  t.seed = seed;
  if (o.objective == "independent") t.objective = Objective::kIndependent;
  else if (o.objective != "choice") throw ValidationError("unknown objective: " + o.objective);
  t.append_stop = o.append_stop;
  t.drop_assortment = o.drop_assortment;
  t.desk_scale = o.desk_scale;
  t.verbose = o.verbose;
  t.validate();
  return t;
}

struct RepeatOutcome {
  std::unique_ptr<ChoiceModel> model;
  TrainReport report;
  json metrics;
  json selection;
};

// Held-out metrics on the test split under the training objective.
json test_metrics(const ChoiceModel& model, const DatasetSplits& splits,
                  const TrainConfig& cfg, const TrainReport& report,
                  std::optional<double> threshold) {
  json m;
  if (report.test_loss) m["test_loss"] = *report.test_loss;
  if (splits.test.empty() || splits.test.kind() != ChoiceKind::kMulti) return m;
  EvalOptions eo;
  if (cfg.objective == Objective::kIndependent) {
    eo.multi_method = MultiMethod::kThreshold;
    eo.threshold = threshold.value_or(0.5);
    m["method"] = "threshold";
    m["threshold"] = eo.threshold;
  } else if (cfg.append_stop) {
    eo.multi_method = MultiMethod::kGreedyStop;
    m["method"] = "greedy_stop";
  } else {
    return m;
  }
  m["test_f1_loss"] = evaluate(model, splits.test, ChoiceKind::kMulti, eo).value;
  m["all_of_assortment_f1_loss"] = all_of_assortment_f1_loss(splits.test);
  return m;
}

RepeatOutcome run_once(const TrainOptions& o, const ChoiceDataset& ds,
                       std::uint64_t seed) {
  const auto splits = split(ds, {o.split[0], o.split[1], o.split[2]}, seed);
  const auto cfg = train_config(o, seed);
  const std::size_t d = training_input_dim(splits.train, cfg);
  RepeatOutcome out;
  std::optional<double> threshold;
  if (o.grid) {
    if (o.model != "tcnet") throw ValidationError("--grid applies to the tcnet model");
    GridSpec g;
    g.hidden_dims = o.grid_hidden;
    g.heads = o.grid_heads;
    g.learning_rates = o.grid_lr;
    g.thresholds = o.thresholds;
    auto r = grid_search(tcnet_config(o, d, seed), g, splits, cfg);
    const auto& best = r.cells[r.best];
    out.report = best.report;
    threshold = best.threshold;
    json cells = json::array();
    for (const auto& c : r.cells) {
      json j{{"hidden_dim", c.hidden_dim}, {"heads", c.heads},
             {"learning_rate", c.learning_rate}, {"diverged", c.diverged},
             {"objective", c.objective}};
      if (c.threshold) j["threshold"] = *c.threshold;
      cells.push_back(j);
    }
    out.selection = {{"best", r.best}, {"cells", cells}};
    out.model = std::move(r.model);
  } else {
    std::unique_ptr<ChoiceModel> initial;
    if (o.model == "tcnet") initial = std::make_unique<TCNet>(tcnet_config(o, d, seed));
    else if (o.model == "mnl") initial = std::make_unique<LinearMnl>(d, seed);
    else if (o.model == "deep-mnl") initial = std::make_unique<DeepMnl>(d, o.deep_hidden, seed);
    else throw ValidationError("unknown model: " + o.model);
    auto r = train(*initial, splits, cfg);
    out.report = r.report;
    out.model = std::move(r.model);
    if (cfg.objective == Objective::kIndependent) {
      auto t = tune_threshold(*out.model, splits.validation, o.thresholds);
      threshold = t.mu;
      out.selection = {{"threshold", t.mu}, {"validation_f1_loss", t.f1_loss}};
    }
  }
  out.metrics = test_metrics(*out.model, splits, cfg, out.report, threshold);
  return out;
}

json mean_std(const std::vector<double>& v) {
  double mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return {{"mean", mean}, {"std", sd}, {"values", v}};
}

int cmd_train(const TrainOptions& o, std::uint64_t seed, const std::string& snapshot) {
  if (o.split.size() != 3) throw ValidationError("--split needs three ratios");
  const auto ds = o.data.load();
  const auto task = parse_choice_kind(o.task);
  if (ds.kind() != task) {
    throw ValidationError("--task " + o.task + " but the data holds " +
                          to_string(ds.kind()) + " observations");
  }
  if (o.repeats == 0) throw ValidationError("--repeats must be at least 1");
  const fs::path dir = o.out.empty() ? output_root() / (o.run_id.empty() ? default_run_id() : o.run_id)
                                     : fs::path(o.out);
  fs::create_directories(dir);
  write_text(dir / "config.ini", snapshot);

  json summary{{"task", o.task}, {"model", o.model}, {"repeats", o.repeats}};
  std::map<std::string, std::vector<double>> collected;
  json timing = json::object();
  std::size_t best_repeat = 0;
  double best_val = 0.0;
  for (std::size_t k = 0; k < o.repeats; ++k) {
    const std::uint64_t s = seed + k;
    auto r = run_once(o, ds, s);
    const fs::path rdir = o.repeats == 1 ? dir : dir / ("repeat" + std::to_string(k));
    fs::create_directories(rdir);
    save_checkpoint(*r.model, rdir / "best.ckpt");
    write_text(rdir / "report.json", r.report.to_json(false));
    json m = r.metrics;
    m["seed"] = s;
    m["best_validation_loss"] = r.report.best_validation_loss;
    m["best_epoch"] = r.report.best_epoch;
    if (!r.selection.is_null()) m["selection"] = r.selection;
    write_text(rdir / "metrics.json", m.dump(2));
    timing["repeat" + std::to_string(k)] = r.report.wall_seconds;
    for (const char* key : {"test_loss", "test_f1_loss", "best_validation_loss"})
      if (m.contains(key)) collected[key].push_back(m[key].get<double>());
    if (k == 0 || r.report.best_validation_loss < best_val) {
      best_val = r.report.best_validation_loss;
      best_repeat = k;
      if (o.repeats > 1) save_checkpoint(*r.model, dir / "best.ckpt");
    }
    std::cerr << "repeat " << k << " seed " << s << ": " << m.dump() << '\n';
  }
  for (const auto& [key, v] : collected) summary[key] = mean_std(v);
  summary["best_repeat"] = best_repeat;
  write_text(dir / "summary.json", summary.dump(2));
  write_text(dir / "timing.json", timing.dump(2));
  std::cout << summary.dump(2) << '\n' << "run directory: " << dir.string() << '\n';
  return 0;
}

// ------------------------------------------------------------------- eval

struct EvalCmd {
  std::string checkpoint;
  DataOptions data;
  std::string task = "sequential";
  std::string method = "threshold";
  double threshold = 0.5;
  std::string out;
};

int cmd_eval(const EvalCmd& o) {
  require_file(o.checkpoint, "checkpoint");
  auto model = load_checkpoint(o.checkpoint);
  auto ds = o.data.load();
  ds = with_catalog(ds, catalog_for(*model, ds));
  EvalOptions eo;
  eo.threshold = o.threshold;
  if (o.method == "greedy-stop") eo.multi_method = MultiMethod::kGreedyStop;
  else if (o.method != "threshold") throw ValidationError("unknown method: " + o.method);
  const auto rep = evaluate(*model, ds, parse_choice_kind(o.task), eo);
  const auto text = rep.to_json();
  if (!o.out.empty()) write_text(o.out, text);
  json brief{{"task", to_string(rep.task)}, {"metric", rep.metric},
             {"value", rep.value}, {"samples", rep.per_sample.size()},
             {"log_clamps", rep.log_clamps}};
  std::cout << brief.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------- predict

struct PredictCmd {
  std::string checkpoint;
  DataOptions data;
  std::string task = "sequential";
  std::string assortment, candidates, context;
  std::string method = "greedy";
  std::size_t size = 0;
  double threshold = 0.5;
};

int cmd_predict(const PredictCmd& o, std::uint64_t seed) {
  require_file(o.checkpoint, "checkpoint");
  auto model = load_checkpoint(o.checkpoint);
  const auto ds = o.data.load();
  const auto cat = catalog_for(*model, ds);
  const auto s = parse_items(o.assortment, cat);
  const auto ctx = parse_context(o.context);
  const auto task = parse_choice_kind(o.task);
  json out{{"task", o.task}, {"assortment", item_names(s, cat)}};
  if (task == ChoiceKind::kSingle || task == ChoiceKind::kSequential) {
    const auto c = task == ChoiceKind::kSingle || o.candidates.empty()
                       ? s
                       : parse_items(o.candidates, cat);
    const auto p = predict_sequential(*model, cat, c, s, ctx);
    json probs = json::object();
    for (std::size_t k = 0; k < c.size(); ++k) probs[cat.name(c[k])] = p[k];
    out["candidates"] = item_names(c, cat);
    out["probabilities"] = probs;
  } else if (o.method == "threshold") {
    NoGradGuard guard;
    std::vector<ChoiceObservation> one{ChoiceObservation::multi({}, s)};
    one[0].context = ctx;
    const auto b = make_batch(cat, one, ctx.size());
    const auto r = model->forward(b);
    out["method"] = "threshold";
    out["threshold"] = o.threshold;
    out["basket"] = item_names(predict_threshold(r.utilities.data(), s, o.threshold), cat);
  } else {
    GenerationMethod m;
    if (o.method == "greedy") m = GenerationMethod::kGreedy;
    else if (o.method == "sample") m = GenerationMethod::kSample;
    else throw ValidationError("unknown method: " + o.method);
    const auto rule = o.size > 0 ? StopRule::fixed_size(o.size) : StopRule::stop_item();
    if (o.size == 0 && !cat.stop_index()) {
      throw ValidationError("give --size, or use a model trained with a stop item");
    }
    std::mt19937_64 rng(seed);
    const auto r = generate_basket(*model, cat, s, m, rule, rng, ctx);
    out["method"] = r.method;
    out["basket"] = item_names(r.basket, cat);
    json trace = json::array();
    for (const auto& st : r.trace)
      trace.push_back({{"item", cat.name(st.item)}, {"probability", st.probability}});
    out["trace"] = trace;
  }
  std::cout << out.dump(2) << '\n';
  return 0;
}

// -------------------------------------------------------------- attention

struct AttentionCmd {
  std::string checkpoint;
  DataOptions data;
  std::string assortment, candidates, context;
  std::string out = "attention";
  bool no_svg = false;
};

int cmd_attention(const AttentionCmd& o) {
  require_file(o.checkpoint, "checkpoint");
  auto model = load_checkpoint(o.checkpoint);
  const auto ds = o.data.load();
  const auto cat = catalog_for(*model, ds);
  const auto s = parse_items(o.assortment, cat);
  const auto c = o.candidates.empty() ? s : parse_items(o.candidates, cat);
  const auto files = export_attention(*model, cat, c, s, o.out, !o.no_svg,
                                      parse_context(o.context));
  for (const auto& f : files) std::cout << f.string() << '\n';
  return 0;
}

// ----------------------------------------------------------- theory-check

struct TheoryCmd {
  std::string tabular;
  std::size_t random_n = 0;
  std::size_t seeds = 20;
  double tolerance = 1e-6;
  std::string save_model;
};

int cmd_theory(const TheoryCmd& o, std::uint64_t seed) {
  std::vector<TabularSequentialModel> models;
  if (!o.tabular.empty()) {
    require_file(o.tabular, "tabular model");
    models.push_back(TabularSequentialModel::load(o.tabular));
  } else if (o.random_n > 0) {
    for (std::size_t k = 0; k < o.seeds; ++k) {
      std::mt19937_64 rng(seed + k);
      models.push_back(TabularSequentialModel::random(o.random_n, rng));
    }
  } else {
    throw ValidationError("give --tabular <file> or --random <n>");
  }
  double worst = 0.0;
  std::size_t triples = 0;
  for (std::size_t k = 0; k < models.size(); ++k) {
    auto net = build_constructive_tcnet(models[k]);
    const auto r = verify_representation(*net, models[k]);
    worst = std::max(worst, r.max_abs_error);
    triples += r.triples;
    if (!o.save_model.empty() && k == 0) save_checkpoint(*net, o.save_model);
  }
  json out{{"models", models.size()}, {"triples", triples},
           {"max_abs_error", worst}, {"tolerance", o.tolerance},
           {"pass", worst < o.tolerance}};
  std::cout << out.dump(2) << '\n';
  return worst < o.tolerance ? 0 : kExitFailure;
}

// ---------------------------------------------------------- gen-synthetic

struct SyntheticCmd {
  std::string kind = "candidate";
  std::size_t samples = 24000;
  double boost = 100.0;
  std::string out;
  std::string items_out;
};

int cmd_synthetic(const SyntheticCmd& o, std::uint64_t seed) {
  ChoiceDataset ds;
  if (o.kind == "multi") {
    BoostedMultiSpec spec;
    spec.n_samples = o.samples;
    spec.boost_value = o.boost;
    spec.seed = seed;
    ds = generate_boosted_multi(spec);
  } else {
    BoostedSyntheticSpec spec;
    spec.n_samples = o.samples;
    spec.boost_value = o.boost;
    spec.seed = seed;
    if (o.kind == "chosen") spec.boost_kind = BoostKind::kChosen;
    else if (o.kind != "candidate") throw ValidationError("unknown kind: " + o.kind);
    ds = generate_boosted_synthetic(spec);
  }
  write_csv(ds, o.out);
  if (!o.items_out.empty()) write_items_csv(ds.catalog(), o.items_out);
  std::cout << "wrote " << ds.size() << ' ' << to_string(ds.kind())
            << " observations to " << o.out << '\n';
  return 0;
}

// ---------------------------------------------------------------- convert

struct ConvertBakery {
  std::string receipts, goods, out, items_out;
};

struct ConvertSequential {
  DataOptions data;
  std::string out, items_out;
  bool append_stop = false;
};

int cmd_convert_bakery(const ConvertBakery& o) {
  require_file(o.receipts, "receipt file");
  std::optional<fs::path> goods;
  if (!o.goods.empty()) {
    require_file(o.goods, "goods file");
    goods = o.goods;
  }
  const auto ds = import_bakery(o.receipts, goods);
  write_csv(ds, o.out);
  if (!o.items_out.empty()) write_items_csv(ds.catalog(), o.items_out);
  std::cout << "wrote " << ds.size() << " baskets over " << ds.catalog().size()
            << " items to " << o.out << '\n';
  return 0;
}

int cmd_convert_sequential(const ConvertSequential& o, std::uint64_t seed) {
  const auto ds = o.data.load();
  ChoiceDataset seq;
  if (ds.kind() == ChoiceKind::kMulti) {
    std::mt19937_64 rng(seed);
    seq = multi_to_sequential(ds, rng, o.append_stop);
  } else if (ds.kind() == ChoiceKind::kSingle) {
    seq = single_to_sequential(ds);
  } else {
    seq = ds;
  }
  write_csv(seq, o.out);
  if (!o.items_out.empty()) write_items_csv(seq.catalog(), o.items_out);
  std::cout << "wrote " << seq.size() << " sequential observations to " << o.out << '\n';
  return 0;
}

// Resolved global and train options, loadable again through --config.
std::string train_snapshot(const CLI::App& app) {
  std::stringstream all(app.config_to_str(true, false));
  std::string line, out;
  while (std::getline(all, line)) {
    const bool ours = line.rfind("seed=", 0) == 0 || line.rfind("train.", 0) == 0;
    const bool empty = line.size() >= 3 && line.compare(line.size() - 3, 3, "=\"\"") == 0;
    if (ours && !empty) out += line + '\n';
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transformer choice network: training, evaluation and exact checks"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from an INI/TOML file");
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Seed for splits, initialization, shuffling and sampling")
      ->capture_default_str();

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write runs/<run_id>/best.ckpt");
  tr.data.add(train_cmd);
  train_cmd->add_option("--task", tr.task, "single | sequential | multi")->capture_default_str();
  train_cmd->add_option("--model", tr.model, "tcnet | mnl | deep-mnl")->capture_default_str();
  train_cmd->add_option("--hidden", tr.hidden, "TCNet width d_v")->capture_default_str();
  train_cmd->add_option("--heads", tr.heads, "Attention heads")->capture_default_str();
  train_cmd->add_option("--layers", tr.layers, "Encoder layers")->capture_default_str();
  train_cmd->add_option("--activation", tr.activation, "softmax | one_plus_relu")->capture_default_str();
  train_cmd->add_option("--embedding", tr.embedding, "auto | on | off")->capture_default_str();
  train_cmd->add_flag("--no-layer-norm", tr.no_layer_norm, "Disable layer norm");
  train_cmd->add_flag("--no-residual", tr.no_residual, "Disable residual connections");
  train_cmd->add_flag("--no-scale", tr.no_scale, "Disable score scaling");
  train_cmd->add_option("--dropout", tr.dropout, "Dropout rate")->capture_default_str();
  train_cmd->add_option("--decoder-hidden", tr.decoder_hidden, "TCNet decoder ReLU widths");
  train_cmd->add_option("--deep-hidden", tr.deep_hidden, "deep-mnl hidden widths")->capture_default_str();
  train_cmd->add_option("--epochs", tr.epochs, "Epochs")->capture_default_str();
  train_cmd->add_option("--batch-size", tr.batch, "Mini-batch size")->capture_default_str();
  train_cmd->add_option("--lr", tr.lr, "Initial learning rate")->capture_default_str();
  train_cmd->add_option("--lr-decay", tr.lr_decay, "Decay factor")->capture_default_str();
  train_cmd->add_option("--lr-decay-every", tr.lr_every, "Epochs per decay step")->capture_default_str();
  train_cmd->add_option("--weight-decay", tr.weight_decay, "L2 coefficient")->capture_default_str();
  train_cmd->add_option("--objective", tr.objective, "choice | independent")->capture_default_str();
  train_cmd->add_flag("--append-stop", tr.append_stop, "Add a stop item when expanding baskets");
  train_cmd->add_flag("--drop-assortment", tr.drop_assortment, "Train on (i, C) with S := C");
  train_cmd->add_flag("--desk-scale", tr.desk_scale, "Halve epochs above 50k training samples");
  train_cmd->add_option("--split", tr.split, "Train/validation/test ratios")->expected(3)->capture_default_str();
  train_cmd->add_flag("--grid", tr.grid, "Grid search over widths, heads and learning rates");
  train_cmd->add_option("--grid-hidden", tr.grid_hidden, "Grid widths")->capture_default_str();
  train_cmd->add_option("--grid-heads", tr.grid_heads, "Grid head counts")->capture_default_str();
  train_cmd->add_option("--grid-lr", tr.grid_lr, "Grid learning rates")->capture_default_str();
  train_cmd->add_option("--thresholds", tr.thresholds, "Threshold grid for the independent objective")->capture_default_str();
  train_cmd->add_option("--repeats", tr.repeats, "Runs with seeds seed, seed+1, ...")->capture_default_str();
  train_cmd->add_option("--run-id", tr.run_id, "Run directory name under $TCNET_OUTPUT_ROOT (default runs)");
  train_cmd->add_option("--out", tr.out, "Explicit run directory");
  train_cmd->add_flag("--verbose", tr.verbose, "Per-epoch log on stderr");

  EvalCmd ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  ev.data.add(eval_cmd);
  eval_cmd->add_option("--task", ev.task, "single | sequential | multi")->capture_default_str();
  eval_cmd->add_option("--method", ev.method, "Multi task: threshold | greedy-stop")->capture_default_str();
  eval_cmd->add_option("--threshold", ev.threshold, "Threshold μ")->capture_default_str();
  eval_cmd->add_option("--out", ev.out, "Write the full report (per-sample values) here");

  PredictCmd pr;
  auto* predict_cmd = app.add_subcommand("predict", "Choice probabilities or a generated basket");
  predict_cmd->add_option("--checkpoint", pr.checkpoint, "Checkpoint file")->required();
  pr.data.add(predict_cmd);
  predict_cmd->add_option("--task", pr.task, "single | sequential | multi")->capture_default_str();
  predict_cmd->add_option("--assortment", pr.assortment, "Comma-separated item names")->required();
  predict_cmd->add_option("--candidates", pr.candidates, "Comma-separated item names (default: assortment)");
  predict_cmd->add_option("--context", pr.context, "Comma-separated context features");
  predict_cmd->add_option("--method", pr.method, "Multi task: greedy | sample | threshold")->capture_default_str();
  predict_cmd->add_option("--size", pr.size, "Fixed basket size (0: stop item)")->capture_default_str();
  predict_cmd->add_option("--threshold", pr.threshold, "Threshold μ")->capture_default_str();

  AttentionCmd at;
  auto* attention_cmd = app.add_subcommand("attention", "Export attention matrices as CSV and SVG");
  attention_cmd->add_option("--checkpoint", at.checkpoint, "TCNet checkpoint")->required();
  at.data.add(attention_cmd);
  attention_cmd->add_option("--assortment", at.assortment, "Comma-separated item names")->required();
  attention_cmd->add_option("--candidates", at.candidates, "Comma-separated item names (default: assortment)");
  attention_cmd->add_option("--context", at.context, "Comma-separated context features");
  attention_cmd->add_option("--out", at.out, "Output directory")->capture_default_str();
  attention_cmd->add_flag("--no-svg", at.no_svg, "CSV only");

  TheoryCmd th;
  auto* theory_cmd = app.add_subcommand("theory-check", "Build the constructive net for tabular models and report its error");
  theory_cmd->add_option("--tabular", th.tabular, "Tabular model file (`n <n>`, then `i C S u` lines)");
  theory_cmd->add_option("--random", th.random_n, "Check random tables over this many items instead");
  theory_cmd->add_option("--seeds", th.seeds, "Number of random tables")->capture_default_str();
  theory_cmd->add_option("--tolerance", th.tolerance, "Pass threshold on the max abs error")->capture_default_str();
  theory_cmd->add_option("--save-model", th.save_model, "Write the (first) constructive net as a checkpoint");

  SyntheticCmd sy;
  auto* syn_cmd = app.add_subcommand("gen-synthetic", "Generate boosted-utility data over {A, A', B, L}");
  syn_cmd->add_option("--kind", sy.kind, "candidate | chosen | multi")->capture_default_str();
  syn_cmd->add_option("--samples", sy.samples, "Observations")->capture_default_str();
  syn_cmd->add_option("--boost", sy.boost, "Boosted utility of A")->capture_default_str();
  syn_cmd->add_option("--out", sy.out, "Output CSV")->required();
  syn_cmd->add_option("--items-out", sy.items_out, "Also write the item file");

  auto* convert_cmd = app.add_subcommand("convert", "Convert data between formats");
  convert_cmd->require_subcommand(1);
  ConvertBakery cb;
  auto* bakery_cmd = convert_cmd->add_subcommand("bakery", "Bakery receipts to the choice CSV schema");
  bakery_cmd->add_option("--receipts", cb.receipts, "Receipt file (`id, item, item, ...`)")->required();
  bakery_cmd->add_option("--goods", cb.goods, "Goods file (`Id,Flavor,Food,Price,Type`)");
  bakery_cmd->add_option("--out", cb.out, "Output CSV")->required();
  bakery_cmd->add_option("--items-out", cb.items_out, "Also write the item file");
  ConvertSequential cs;
  auto* seq_cmd = convert_cmd->add_subcommand("sequential", "Materialize single or multi data as sequential samples");
  cs.data.add(seq_cmd);
  seq_cmd->add_option("--out", cs.out, "Output CSV")->required();
  seq_cmd->add_option("--items-out", cs.items_out, "Also write the item file");
  seq_cmd->add_flag("--append-stop", cs.append_stop, "Close each basket with a stop choice");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(tr, seed, train_snapshot(app));
    if (*eval_cmd) return cmd_eval(ev);
    if (*predict_cmd) return cmd_predict(pr, seed);
    if (*attention_cmd) return cmd_attention(at);
    if (*theory_cmd) return cmd_theory(th, seed);
    if (*syn_cmd) return cmd_synthetic(sy, seed);
    if (*bakery_cmd) return cmd_convert_bakery(cb);
    if (*seq_cmd) return cmd_convert_sequential(cs, seed);
  } catch (const MissingFile& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
