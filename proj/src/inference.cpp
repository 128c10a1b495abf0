#include "tcnet/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tcnet/errors.hpp"

namespace tcnet {

namespace {

bool is_subset(const ItemSet& inner, const ItemSet& outer) {
  return std::includes(outer.begin(), outer.end(), inner.begin(), inner.end());
}

std::vector<double> forward_one(const ChoiceModel& model,
                                const ItemCatalog& catalog,
                                const ChoiceObservation& obs) {
  validate(obs, catalog.size());
  std::vector<ChoiceObservation> one{obs};
  const auto batch = make_batch(catalog, one, obs.context.size());
  NoGradGuard guard;
  const auto r = model.forward(batch);
  const auto n = obs.choice_set().size();
  return {r.probabilities.data().begin(),
          r.probabilities.data().begin() + static_cast<std::ptrdiff_t>(n)};
}

}  // namespace

std::vector<double> predict_single(const ChoiceModel& model,
                                   const ItemCatalog& catalog,
                                   const ItemSet& assortment,
                                   const std::vector<double>& context) {
  if (assortment.empty()) throw ValidationError("empty assortment");
  auto obs = ChoiceObservation::single(assortment.front(), assortment);
  obs.context = context;
  return forward_one(model, catalog, obs);
}

std::vector<double> predict_sequential(const ChoiceModel& model,
                                       const ItemCatalog& catalog,
                                       const ItemSet& candidates,
                                       const ItemSet& assortment,
                                       const std::vector<double>& context) {
  if (candidates.empty()) throw ValidationError("empty candidate set");
  auto obs = ChoiceObservation::sequential(candidates.front(), candidates,
                                           assortment);
  if (!is_subset(obs.candidates, obs.assortment)) {
    throw ValidationError("candidates not contained in assortment");
  }
  obs.context = context;
  return forward_one(model, catalog, obs);
}

std::string to_string(GenerationMethod m) {
  return m == GenerationMethod::kGreedy ? "greedy" : "sample";
}

MultiPrediction generate_basket(const SequentialPredictor& predictor,
                                const ItemSet& assortment,
                                GenerationMethod method, StopRule rule,
                                std::optional<std::size_t> stop_item,
                                std::mt19937_64& rng) {
  MultiPrediction out;
  out.method = to_string(method);
  ItemSet s = assortment;
  if (rule.kind == StopRule::Kind::kFixedSize) {
    if (rule.size > s.size()) {
      throw ValidationError("basket size " + std::to_string(rule.size) +
                            " exceeds the assortment");
    }
  } else {
    if (!stop_item) throw ValidationError("stop rule needs a stop item");
    s = [&] {
      ItemSet t = s;
      if (!std::binary_search(t.begin(), t.end(), *stop_item)) {
        t.insert(std::upper_bound(t.begin(), t.end(), *stop_item), *stop_item);
      }
      return t;
    }();
  }
  ItemSet c = s;
  for (;;) {
    if (rule.kind == StopRule::Kind::kFixedSize && out.basket.size() == rule.size) {
      break;
    }
    const auto probs = predictor(c, s);
    if (probs.size() != c.size()) {
      throw DimensionError("predictor returned the wrong number of probabilities");
    }
    std::size_t pick = 0;
    if (method == GenerationMethod::kGreedy) {
      // c is sorted, so the first maximum is the lowest item index.
      for (std::size_t k = 1; k < c.size(); ++k)
        if (probs[k] > probs[pick]) pick = k;
    } else {
      std::discrete_distribution<std::size_t> d(probs.begin(), probs.end());
      pick = d(rng);
    }
    const std::size_t item = c[pick];
    out.trace.push_back({item, probs[pick]});
    if (stop_item && rule.kind == StopRule::Kind::kStopItem && item == *stop_item) {
      break;
    }
    out.basket.push_back(item);
    c.erase(c.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  std::sort(out.basket.begin(), out.basket.end());
  return out;
}

MultiPrediction generate_basket(const ChoiceModel& model,
                                const ItemCatalog& catalog,
                                const ItemSet& assortment,
                                GenerationMethod method, StopRule rule,
                                std::mt19937_64& rng,
                                const std::vector<double>& context) {
  SequentialPredictor predictor = [&](const ItemSet& c, const ItemSet& s) {
    return predict_sequential(model, catalog, c, s, context);
  };
  return generate_basket(predictor, assortment, method, rule,
                         catalog.stop_index(), rng);
}

double sigmoid(double u) {
  return u >= 0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
}

ItemSet predict_threshold(std::span<const double> utilities,
                          const ItemSet& assortment, double mu) {
  if (!(mu > 0.0 && mu < 1.0)) throw ValidationError("threshold must lie in (0,1)");
  if (utilities.size() < assortment.size()) {
    throw DimensionError("fewer utilities than assortment items");
  }
  ItemSet out;
  for (std::size_t k = 0; k < assortment.size(); ++k) {
    if (sigmoid(utilities[k]) > mu) out.push_back(assortment[k]);
  }
  return out;
}

std::vector<ItemSet> predict_threshold(const ChoiceModel& model,
                                       const ChoiceDataset& ds, double mu,
                                       std::size_t batch_size) {
  if (ds.kind() != ChoiceKind::kMulti) {
    throw ValidationError("threshold prediction needs a multi-choice dataset");
  }
  std::vector<ItemSet> out;
  out.reserve(ds.size());
  NoGradGuard guard;
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(ds.size(), start + batch_size); ++i)
      idx.push_back(i);
    const auto b = make_batch(ds, idx);
    const auto r = model.forward(b);
    const std::size_t width = b.candidates.dim(1);
    for (std::size_t row = 0; row < b.size; ++row) {
      out.push_back(predict_threshold(
          r.utilities.data().subspan(row * width, width),
          b.candidate_items[row], mu));
    }
  }
  return out;
}

double f1_sample_loss(const ItemSet& predicted, const ItemSet& truth) {
  if (predicted.empty() && truth.empty()) return 0.0;
  ItemSet both;
  std::set_intersection(predicted.begin(), predicted.end(), truth.begin(),
                        truth.end(), std::back_inserter(both));
  return 1.0 - 2.0 * static_cast<double>(both.size()) /
                   static_cast<double>(predicted.size() + truth.size());
}

double f1_loss(const std::vector<ItemSet>& predicted,
               const std::vector<ItemSet>& truth) {
  if (predicted.empty() || predicted.size() != truth.size()) {
    throw ValidationError("f1_loss needs equally many (≥ 1) predictions and baskets");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    total += f1_sample_loss(predicted[k], truth[k]);
  }
  return total / static_cast<double>(predicted.size());
}

double all_of_assortment_f1_loss(const ChoiceDataset& multi) {
  if (multi.kind() != ChoiceKind::kMulti) {
    throw ValidationError("all-of-S baseline needs multi-choice data");
  }
  const auto stop = multi.catalog().stop_index();
  std::vector<ItemSet> pred, truth;
  for (const auto& o : multi.observations()) {
    ItemSet s;
    for (auto i : o.assortment)
      if (!stop || i != *stop) s.push_back(i);
    pred.push_back(std::move(s));
    truth.push_back(o.basket);
  }
  return f1_loss(pred, truth);
}

ThresholdChoice tune_threshold(const ChoiceModel& model, const ChoiceDataset& ds,
                               const std::vector<double>& grid) {
  if (grid.empty()) throw ValidationError("empty threshold grid");
  std::vector<ItemSet> truth;
  for (const auto& o : ds.observations()) truth.push_back(o.basket);
  ThresholdChoice best;
  bool first = true;
  for (double mu : grid) {
    const double f1 = f1_loss(predict_threshold(model, ds, mu), truth);
    if (first || f1 < best.f1_loss) {
      best = {mu, f1};
      first = false;
    }
  }
  return best;
}

std::string MetricReport::to_json() const {
  nlohmann::json j;
  j["task"] = tcnet::to_string(task);
  j["metric"] = metric;
  j["value"] = value;
  j["samples"] = per_sample.size();
  j["log_clamps"] = log_clamps;
  j["per_sample"] = per_sample;
  return j.dump(2);
}

MetricReport evaluate(const ChoiceModel& model, const ChoiceDataset& ds,
                      ChoiceKind task, const EvalOptions& options) {
  if (ds.kind() != task) {
    throw ValidationError("task " + to_string(task) + " does not match " +
                          to_string(ds.kind()) + " data");
  }
  if (ds.empty()) throw ValidationError("evaluation on an empty dataset");
  MetricReport rep;
  rep.task = task;
  if (task != ChoiceKind::kMulti) {
    rep.metric = "ce";
    NoGradGuard guard;
    std::mt19937_64 unused(0);
    BatchStream stream(ds, options.batch_size, unused, false);
    while (auto b = stream.next()) {
      const auto r = model.forward(*b);
      const std::size_t width = b->candidates.dim(1);
      for (std::size_t row = 0; row < b->size; ++row) {
        double p = r.probabilities[row * width + b->labels[row]];
        if (p < kLogFloor) {
          p = kLogFloor;
          ++rep.log_clamps;
        }
        rep.per_sample.push_back(-std::log(p));
      }
    }
  } else {
    rep.metric = "f1_loss";
    std::vector<ItemSet> pred;
    if (options.multi_method == MultiMethod::kThreshold) {
      pred = predict_threshold(model, ds, options.threshold, options.batch_size);
    } else {
      ItemCatalog catalog = ds.catalog();
      if (!catalog.stop_index()) catalog = catalog.with_stop_item();
      std::mt19937_64 rng(0);
      for (const auto& o : ds.observations()) {
        pred.push_back(generate_basket(model, catalog, o.assortment,
                                       GenerationMethod::kGreedy,
                                       StopRule::stop_item(), rng, o.context)
                           .basket);
      }
    }
    for (std::size_t k = 0; k < ds.size(); ++k) {
      rep.per_sample.push_back(f1_sample_loss(pred[k], ds[k].basket));
    }
  }
  double total = 0.0;
  for (double v : rep.per_sample) total += v;
  rep.value = total / static_cast<double>(rep.per_sample.size());
  return rep;
}

// -------------------------------------------------------------- export

std::vector<double> attention_matrix_on_assortment(const AttentionRecord& rec,
                                                   const ItemSet& assortment) {
  const std::size_t n = assortment.size();
  auto pos = [&](std::size_t item) -> std::size_t {
    auto it = std::lower_bound(assortment.begin(), assortment.end(), item);
    if (it == assortment.end() || *it != item) {
      throw ValidationError("attention item outside the assortment");
    }
    return static_cast<std::size_t>(it - assortment.begin());
  };
  std::vector<double> m(n * n, 0.0);
  for (std::size_t r = 0; r < rec.row_items.size(); ++r) {
    for (std::size_t c = 0; c < rec.column_items.size(); ++c) {
      m[pos(rec.row_items[r]) * n + pos(rec.column_items[c])] = rec.at(r, c);
    }
  }
  return m;
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(ch);
    }
  }
  return out;
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

void write_svg(const std::filesystem::path& path,
               const std::vector<std::string>& labels,
               const std::vector<double>& m) {
  constexpr int kCell = 32;
  constexpr int kMargin = 120;
  const int n = static_cast<int>(labels.size());
  const int size = kMargin + n * kCell + 8;
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size
      << "\" height=\"" << size << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int i = 0; i < n; ++i) {
    const auto label = xml_escape(labels[static_cast<std::size_t>(i)]);
    out << "<text x=\"" << kMargin - 4 << "\" y=\"" << kMargin + i * kCell + kCell / 2 + 4
        << "\" text-anchor=\"end\">" << label << "</text>\n";
    const int x = kMargin + i * kCell + kCell / 2;
    out << "<text x=\"" << x << "\" y=\"" << kMargin - 4
        << "\" text-anchor=\"start\" transform=\"rotate(-60 " << x << ' '
        << kMargin - 4 << ")\">" << label << "</text>\n";
  }
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const double v = std::clamp(m[static_cast<std::size_t>(r * n + c)], 0.0, 1.0);
      const int shade = static_cast<int>(std::lround(255.0 * (1.0 - v)));
      out << "<rect x=\"" << kMargin + c * kCell << "\" y=\"" << kMargin + r * kCell
          << "\" width=\"" << kCell << "\" height=\"" << kCell << "\" fill=\"rgb("
          << shade << ',' << shade << ',' << shade
          << ")\" stroke=\"#999\" stroke-width=\"0.5\"/>\n";
    }
  }
  out << "</svg>\n";
}

}  // namespace

std::vector<std::filesystem::path> export_attention(
    const ChoiceModel& model, const ItemCatalog& catalog,
    const ItemSet& candidates, const ItemSet& assortment,
    const std::filesystem::path& out_dir, bool svg,
    const std::vector<double>& context) {
  auto obs = ChoiceObservation::sequential(candidates.empty() ? 0 : candidates.front(),
                                           candidates, assortment);
  obs.context = context;
  validate(obs, catalog.size());
  std::vector<ChoiceObservation> one{obs};
  const auto batch = make_batch(catalog, one, context.size());
  ForwardOptions opt;
  opt.capture_attention = true;
  NoGradGuard guard;
  const auto result = model.forward(batch, opt);
  const auto records = attention_records(result, batch, 0);
  if (records.empty()) {
    throw ValidationError("model " + model.type_name() + " has no attention");
  }
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> labels;
  for (auto i : obs.assortment) labels.push_back(catalog.name(i));

  std::vector<std::filesystem::path> written;
  for (const auto& rec : records) {
    const auto m = attention_matrix_on_assortment(rec, obs.assortment);
    const std::string stem = to_string(rec.kind) + "_layer" +
                             std::to_string(rec.layer) + "_head" +
                             std::to_string(rec.head);
    const auto csv_path = out_dir / (stem + ".csv");
    std::ofstream out(csv_path);
    if (!out) throw ValidationError("cannot write " + csv_path.string());
    out.precision(17);
    out << "item";
    for (const auto& l : labels) out << ',' << csv_cell(l);
    out << '\n';
    for (std::size_t r = 0; r < labels.size(); ++r) {
      out << csv_cell(labels[r]);
      for (std::size_t c = 0; c < labels.size(); ++c) out << ',' << m[r * labels.size() + c];
      out << '\n';
    }
    if (!out) throw ValidationError("failed writing " + csv_path.string());
    written.push_back(csv_path);
    if (svg) {
      const auto svg_path = out_dir / (stem + ".svg");
      write_svg(svg_path, labels, m);
      written.push_back(svg_path);
    }
  }
  return written;
}

}  // namespace tcnet
