#include "tcnet/theory.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "tcnet/errors.hpp"

namespace tcnet {

TabularSequentialModel::TabularSequentialModel(std::size_t n) : n_(n) {
  if (n == 0 || n > kMaxTabularItems) {
    throw ValidationError("tabular models need 1 <= n <= " +
                          std::to_string(kMaxTabularItems));
  }
  const std::size_t sets = std::size_t{1} << n;
  table_.assign(sets * sets * n, 0.0);
}

TabularSequentialModel TabularSequentialModel::random(std::size_t n,
                                                      std::mt19937_64& rng,
                                                      double lo, double hi) {
  TabularSequentialModel m(n);
  std::uniform_real_distribution<double> u(lo, hi);
  for (SetMask s = 1; s <= m.full_set(); ++s) {
    for (SetMask c = s;; c = (c - 1) & s) {
      for (std::size_t i = 0; i < n; ++i) {
        if (valid(i, c, s)) m.set_utility(i, c, s, u(rng));
      }
      if (c == 0) break;
    }
  }
  return m;
}

std::size_t TabularSequentialModel::index(std::size_t i, SetMask c,
                                          SetMask s) const {
  if (i >= n_ || s > full_set() || !valid(i, c, s)) {
    throw ValidationError("invalid triple (i=" + std::to_string(i) +
                          ", C=" + std::to_string(c) +
                          ", S=" + std::to_string(s) + ")");
  }
  const std::size_t sets = std::size_t{1} << n_;
  return (static_cast<std::size_t>(s) * sets + c) * n_ + i;
}

double TabularSequentialModel::utility(std::size_t i, SetMask c,
                                       SetMask s) const {
  return table_[index(i, c, s)];
}

void TabularSequentialModel::set_utility(std::size_t i, SetMask c, SetMask s,
                                         double u) {
  if (!std::isfinite(u)) throw ValidationError("utility must be finite");
  table_[index(i, c, s)] = u;
}

void TabularSequentialModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out.precision(17);
  out << "n " << n_ << '\n';
  for (SetMask s = 1; s <= full_set(); ++s) {
    for (SetMask c = 1; c <= s; ++c) {
      if ((c & ~s) != 0) continue;
      for (std::size_t i = 0; i < n_; ++i) {
        if (valid(i, c, s)) {
          out << i << ' ' << c << ' ' << s << ' ' << utility(i, c, s) << '\n';
        }
      }
    }
  }
}

TabularSequentialModel TabularSequentialModel::load(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag != "n" || !(ls >> n)) throw ParseError("expected `n <items>`", line_no);
    break;
  }
  if (n == 0) throw ParseError("missing `n <items>` header", line_no);
  TabularSequentialModel m(n);
  std::set<std::size_t> seen;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::size_t i;
    unsigned long c, s;
    double u;
    if (!(ls >> i)) continue;  // blank
    if (!(ls >> c >> s >> u)) throw ParseError("expected `i C S u`", line_no);
    std::string rest;
    if (ls >> rest) throw ParseError("trailing text", line_no);
    try {
      m.set_utility(i, static_cast<SetMask>(c), static_cast<SetMask>(s), u);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), line_no);
    }
    seen.insert(m.index(i, static_cast<SetMask>(c), static_cast<SetMask>(s)));
  }
  const std::size_t expected = [&] {
    std::size_t count = 0;
    for (SetMask s = 1; s <= m.full_set(); ++s)
      for (SetMask c = 1; c <= s; ++c)
        if ((c & ~s) == 0) count += static_cast<std::size_t>(std::popcount(c));
    return count;
  }();
  if (seen.size() != expected) {
    throw ValidationError(path.string() + " defines " +
                          std::to_string(seen.size()) + " of " +
                          std::to_string(expected) + " utilities");
  }
  return m;
}

double tabular_probability(const TabularSequentialModel& model, std::size_t i,
                           SetMask c, SetMask s) {
  if (c == 0 || (c & ~s) != 0 || s > model.full_set()) {
    throw ValidationError("need nonempty C ⊆ S within the item universe");
  }
  if (i >= model.n()) throw ValidationError("item outside the model");
  if (!(c >> i & 1u)) return 0.0;
  double mx = -INFINITY;
  for (std::size_t j = 0; j < model.n(); ++j)
    if (c >> j & 1u) mx = std::max(mx, model.utility(j, c, s));
  double z = 0.0;
  for (std::size_t j = 0; j < model.n(); ++j)
    if (c >> j & 1u) z += std::exp(model.utility(j, c, s) - mx);
  return std::exp(model.utility(i, c, s) - mx) / z;
}

double exact_basket_probability(const TabularSequentialModel& model,
                                SetMask basket, SetMask s) {
  if ((basket & ~s) != 0) throw ValidationError("basket not contained in S");
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < model.n(); ++i)
    if (basket >> i & 1u) order.push_back(i);
  if (order.size() > 8) throw ValidationError("basket larger than 8 items");
  double total = 0.0;
  do {
    double p = 1.0;
    SetMask c = s;
    for (auto item : order) {
      p *= tabular_probability(model, item, c, s);
      c &= ~(SetMask{1} << item);
    }
    total += p;
  } while (std::next_permutation(order.begin(), order.end()));
  return total;
}

double tabular_entropy(const TabularSequentialModel& model, SetMask c,
                       SetMask s) {
  double h = 0.0;
  for (std::size_t i = 0; i < model.n(); ++i) {
    if (!(c >> i & 1u)) continue;
    const double p = tabular_probability(model, i, c, s);
    if (p > 0) h -= p * std::log(p);
  }
  return h;
}

// ------------------------------------------------------ Möbius inversion

InteractionRow batsell_decompose(std::size_t n, std::size_t i,
                                 const UtilityRow& u) {
  if (n == 0 || n > 20 || i >= n) throw ValidationError("bad item universe");
  const std::size_t sets = std::size_t{1} << n;
  if (u.size() != sets) throw ValidationError("utility row must have 2^n entries");
  const SetMask self = SetMask{1} << i;
  InteractionRow v(sets, 0.0);
  for (SetMask t = 0; t < sets; ++t) {
    if (t & self) continue;
    const double x = u[t | self];
    if (!std::isfinite(x)) {
      throw ValidationError("missing utility for S = " + std::to_string(t | self));
    }
    v[t] = x;
  }
  // In-place subset Möbius transform over the items other than i.
  for (std::size_t b = 0; b < n; ++b) {
    if (b == i) continue;
    const SetMask bit = SetMask{1} << b;
    for (SetMask t = 0; t < sets; ++t) {
      if ((t & bit) && !(t & self)) v[t] -= v[t ^ bit];
    }
  }
  return v;
}

double reconstruct_utility(std::size_t n, std::size_t i,
                           const InteractionRow& v, SetMask s) {
  const SetMask rest = s & ~(SetMask{1} << i);
  double total = 0.0;
  for (SetMask t = rest;; t = (t - 1) & rest) {
    total += v[t];
    if (t == 0) break;
  }
  (void)n;
  return total;
}

// --------------------------------------------------- constructive network

std::vector<double> constructive_encoding(std::size_t n, std::size_t i,
                                          SetMask c, SetMask s) {
  std::vector<double> x(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    x[j] = (j == i ? 1.0 : 0.0) + static_cast<double>(c >> j & 1u) +
           static_cast<double>(s >> j & 1u);
  }
  return x;
}

namespace {

void fill(Tensor t, double value) {
  auto d = t.mutable_data();
  std::fill(d.begin(), d.end(), value);
}

void fill_identity(Tensor t) {
  fill(t, 0.0);
  const std::size_t n = t.dim(0);
  auto d = t.mutable_data();
  for (std::size_t k = 0; k < n; ++k) d[k * n + k] = 1.0;
}

void mute(const FfnParams& p) {
  fill(p.first.w, 0.0);
  fill(p.first.b, 0.0);
  fill(p.second.w, 0.0);
  fill(p.second.b, 0.0);
}

struct Triple {
  std::size_t i;
  SetMask c, s;
};

std::vector<Triple> all_triples(std::size_t n) {
  std::vector<Triple> out;
  const SetMask full = static_cast<SetMask>((1u << n) - 1);
  for (SetMask s = 1; s <= full; ++s)
    for (SetMask c = 1; c <= s; ++c)
      if ((c & ~s) == 0)
        for (std::size_t i = 0; i < n; ++i)
          if (c >> i & 1u) out.push_back({i, c, s});
  return out;
}

}  // namespace

std::unique_ptr<TCNet> build_constructive_tcnet(
    const TabularSequentialModel& model) {
  const std::size_t n = model.n();
  const auto triples = all_triples(n);
  const std::size_t units = 3 * triples.size();

  TCNetConfig cfg;
  cfg.input_dim = n;
  cfg.hidden_dim = n;
  cfg.n_layers = 1;
  cfg.n_heads = 1;
  cfg.use_embedding = false;
  cfg.use_layer_norm = false;
  cfg.use_residual = true;
  cfg.scale_scores = false;
  cfg.dropout_rate = 0.0;
  cfg.decoder_hidden = {units};
  auto& ov = cfg.overrides;
  ov[static_cast<std::size_t>(Sublayer::kAssortmentAttention)] = {
      false, std::nullopt, Activation::kOnePlusRelu};
  ov[static_cast<std::size_t>(Sublayer::kCandidateAttention)] = {
      true, std::nullopt, Activation::kOnePlusRelu};
  ov[static_cast<std::size_t>(Sublayer::kCrossAttention)] = {
      true, std::nullopt, Activation::kSoftmax};

  auto net = std::make_unique<TCNet>(cfg);
  auto& p = net->params();
  auto& a = p.assortment_layers[0];
  fill(a.attention.wq, 0.0);
  fill(a.attention.wk, 0.0);
  fill_identity(a.attention.wv);
  mute(a.ffn);
  auto& c = p.candidate_layers[0];
  fill(c.self_attention.wq, 0.0);
  fill(c.self_attention.wk, 0.0);
  fill_identity(c.self_attention.wv);
  fill(c.cross_attention.wq, 0.0);
  fill(c.cross_attention.wk, 0.0);
  fill_identity(c.cross_attention.wv);
  mute(c.ffn);

  // Bump decoder: every hidden unit sees z = wᵀx with w = (4, 16, ..., 4^n).
  std::vector<double> w(n);
  for (std::size_t j = 0; j < n; ++j) w[j] = std::pow(4.0, static_cast<double>(j + 1));
  std::vector<double> codes;
  codes.reserve(triples.size());
  for (const auto& t : triples) {
    const auto x = constructive_encoding(n, t.i, t.c, t.s);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += w[j] * x[j];
    codes.push_back(z);
  }
  {
    auto sorted = codes;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw ValidationError("triple encodings are not distinct");
    }
  }
  auto hidden_w = p.decoder[0].w.mutable_data();  // [n × units]
  auto hidden_b = p.decoder[0].b.mutable_data();
  auto out_w = p.decoder[1].w.mutable_data();     // [units × 1]
  fill(p.decoder[1].b, 0.0);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < units; ++k) hidden_w[j * units + k] = w[j];
  for (std::size_t t = 0; t < triples.size(); ++t) {
    const double u = model.utility(triples[t].i, triples[t].c, triples[t].s);
    hidden_b[3 * t] = -codes[t] - 1.0;
    hidden_b[3 * t + 1] = -codes[t] + 1.0;
    hidden_b[3 * t + 2] = -codes[t];
    out_w[3 * t] = u;
    out_w[3 * t + 1] = u;
    out_w[3 * t + 2] = -2.0 * u;
  }
  return net;
}

ChoiceDataset tabular_enumeration(std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back(std::to_string(i));
  std::vector<ChoiceObservation> obs;
  const SetMask full = static_cast<SetMask>((1u << n) - 1);
  for (SetMask s = 1; s <= full; ++s) {
    for (SetMask c = 1; c <= s; ++c) {
      if ((c & ~s) != 0) continue;
      ItemSet cs, ss;
      for (std::size_t i = 0; i < n; ++i) {
        if (c >> i & 1u) cs.push_back(i);
        if (s >> i & 1u) ss.push_back(i);
      }
      obs.push_back(ChoiceObservation::sequential(cs.front(), cs, ss));
    }
  }
  return ChoiceDataset(ItemCatalog(std::move(names)), ChoiceKind::kSequential,
                       std::move(obs));
}

RepresentationReport verify_representation(const ChoiceModel& net,
                                           const TabularSequentialModel& model) {
  const auto ds = tabular_enumeration(model.n());
  std::vector<std::size_t> all(ds.size());
  for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
  const auto batch = make_batch(ds, all);
  NoGradGuard guard;
  const auto result = net.forward(batch);
  RepresentationReport report;
  const std::size_t width = batch.candidates.dim(1);
  for (std::size_t r = 0; r < batch.size; ++r) {
    SetMask c = 0, s = 0;
    for (auto i : batch.candidate_items[r]) c |= SetMask{1} << i;
    for (auto i : batch.assortment_items[r]) s |= SetMask{1} << i;
    for (std::size_t p = 0; p < batch.candidate_items[r].size(); ++p) {
      const auto i = batch.candidate_items[r][p];
      const double got = result.probabilities[r * width + p];
      const double want = tabular_probability(model, i, c, s);
      report.max_abs_error = std::max(report.max_abs_error, std::abs(got - want));
      ++report.triples;
    }
  }
  return report;
}

}  // namespace tcnet
