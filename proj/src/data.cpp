#include "tcnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "tcnet/errors.hpp"

namespace tcnet {
namespace {

bool contains(const ItemSet& set, std::size_t item) {
  return std::binary_search(set.begin(), set.end(), item);
}

bool is_subset(const ItemSet& inner, const ItemSet& outer) {
  return std::includes(outer.begin(), outer.end(), inner.begin(), inner.end());
}

ItemSet normalized(ItemSet set) {
  std::sort(set.begin(), set.end());
  set.erase(std::unique(set.begin(), set.end()), set.end());
  return set;
}

ItemSet without(const ItemSet& set, std::size_t item) {
  ItemSet out;
  out.reserve(set.size());
  for (auto i : set) {
    if (i != item) out.push_back(i);
  }
  return out;
}

ItemSet with(ItemSet set, std::size_t item) {
  set.push_back(item);
  return normalized(std::move(set));
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string strip_quotes(std::string s) {
  s = trim(s);
  if (s.size() >= 2 && (s.front() == '\'' || s.front() == '"') &&
      s.back() == s.front()) {
    s = s.substr(1, s.size() - 2);
  }
  return s;
}

// Comma-separated fields with double-quote escaping.
std::vector<std::string> split_csv_line(const std::string& line,
                                        std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  if (quoted) throw ParseError("unterminated quote", line_no);
  fields.push_back(cur);
  return fields;
}

std::vector<std::string> split_names(const std::string& field, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(field);
  while (std::getline(in, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

double parse_double(const std::string& text, std::size_t line_no) {
  const std::string t = trim(text);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    throw ParseError("not a number: '" + t + "'", line_no);
  }
  if (used != t.size() || !std::isfinite(v)) {
    throw ParseError("not a finite number: '" + t + "'", line_no);
  }
  return v;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string join_names(const ItemCatalog& catalog, const ItemSet& set,
                       char sep) {
  std::string out;
  for (std::size_t k = 0; k < set.size(); ++k) {
    if (k) out.push_back(sep);
    out += catalog.name(set[k]);
  }
  return out;
}

// `f_<k>` column index, or -1.
int feature_column_index(const std::string& header) {
  if (header.size() < 3 || header.compare(0, 2, "f_") != 0) return -1;
  try {
    std::size_t used = 0;
    const int k = std::stoi(header.substr(2), &used);
    return used == header.size() - 2 ? k : -1;
  } catch (const std::exception&) {
    return -1;
  }
}

ItemCatalog read_items_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open items file " + path.string());
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError("empty items file", 1);
  auto header = split_csv_line(line, line_no);
  std::vector<std::pair<int, std::size_t>> fcols;
  for (std::size_t c = 1; c < header.size(); ++c) {
    const int k = feature_column_index(trim(header[c]));
    if (k < 0) throw ParseError("unexpected items column " + header[c], 1);
    fcols.emplace_back(k, c);
  }
  std::sort(fcols.begin(), fcols.end());
  std::vector<std::string> names;
  std::vector<double> features;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line, line_no);
    if (fields.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) +
                           " fields, got " + std::to_string(fields.size()),
                       line_no);
    }
    names.push_back(trim(fields[0]));
    for (auto [k, c] : fcols) features.push_back(parse_double(fields[c], line_no));
  }
  if (fcols.empty()) return ItemCatalog(std::move(names));
  return ItemCatalog(std::move(names), fcols.size(), std::move(features));
}

}  // namespace

// ------------------------------------------------------------ catalog

ItemCatalog::ItemCatalog(std::vector<std::string> names)
    : names_(std::move(names)), feature_dim_(names_.size()), one_hot_(true) {
  const std::size_t n = names_.size();
  features_.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) features_[i * n + i] = 1.0;
}

ItemCatalog::ItemCatalog(std::vector<std::string> names,
                         std::size_t feature_dim, std::vector<double> features)
    : names_(std::move(names)),
      feature_dim_(feature_dim),
      features_(std::move(features)) {
  if (features_.size() != names_.size() * feature_dim_) {
    throw ValidationError("catalog feature matrix is not n×d");
  }
}

std::span<const double> ItemCatalog::features(std::size_t item) const {
  if (item >= size()) {
    throw ValidationError("item index " + std::to_string(item) +
                          " outside catalog of " + std::to_string(size()));
  }
  return std::span<const double>(features_).subspan(item * feature_dim_,
                                                    feature_dim_);
}

std::optional<std::size_t> ItemCatalog::index_of(
    const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names_.begin());
}

void ItemCatalog::set_no_purchase_index(std::optional<std::size_t> index) {
  if (index && *index >= size()) {
    throw ValidationError("no-purchase index outside catalog");
  }
  no_purchase_ = index;
}

void ItemCatalog::set_stop_index(std::optional<std::size_t> index) {
  if (index && *index >= size()) {
    throw ValidationError("stop index outside catalog");
  }
  stop_ = index;
}

ItemCatalog ItemCatalog::with_stop_item(const std::string& name) const {
  auto names = names_;
  names.push_back(name);
  ItemCatalog out;
  if (one_hot_) {
    out = ItemCatalog(std::move(names));
  } else {
    const std::size_t d = feature_dim_ + 1;
    std::vector<double> f;
    f.reserve((size() + 1) * d);
    for (std::size_t i = 0; i < size(); ++i) {
      auto row = features(i);
      f.insert(f.end(), row.begin(), row.end());
      f.push_back(0.0);
    }
    f.insert(f.end(), feature_dim_, 0.0);
    f.push_back(1.0);
    out = ItemCatalog(std::move(names), d, std::move(f));
  }
  out.no_purchase_ = no_purchase_;
  out.stop_ = size();
  return out;
}

// -------------------------------------------------------- observations

std::string to_string(ChoiceKind kind) {
  switch (kind) {
    case ChoiceKind::kSingle:
      return "single";
    case ChoiceKind::kSequential:
      return "sequential";
    case ChoiceKind::kMulti:
      return "multi";
  }
  return "?";
}

ChoiceKind parse_choice_kind(const std::string& text) {
  const std::string t = trim(text);
  if (t == "single") return ChoiceKind::kSingle;
  if (t == "sequential") return ChoiceKind::kSequential;
  if (t == "multi") return ChoiceKind::kMulti;
  throw ValidationError("unknown choice kind '" + t + "'");
}

ChoiceObservation ChoiceObservation::single(std::size_t choice,
                                            ItemSet assortment) {
  ChoiceObservation o;
  o.kind = ChoiceKind::kSingle;
  o.choice = choice;
  o.assortment = normalized(std::move(assortment));
  return o;
}

ChoiceObservation ChoiceObservation::sequential(std::size_t choice,
                                                ItemSet candidates,
                                                ItemSet assortment) {
  ChoiceObservation o;
  o.kind = ChoiceKind::kSequential;
  o.choice = choice;
  o.candidates = normalized(std::move(candidates));
  o.assortment = normalized(std::move(assortment));
  return o;
}

ChoiceObservation ChoiceObservation::multi(ItemSet basket,
                                           ItemSet assortment) {
  ChoiceObservation o;
  o.kind = ChoiceKind::kMulti;
  o.basket = normalized(std::move(basket));
  o.assortment = normalized(std::move(assortment));
  return o;
}

const ItemSet& ChoiceObservation::choice_set() const {
  return kind == ChoiceKind::kSequential ? candidates : assortment;
}

void validate(const ChoiceObservation& obs, std::size_t catalog_size) {
  auto check_set = [&](const ItemSet& set, const char* what) {
    if (!std::is_sorted(set.begin(), set.end()) ||
        std::adjacent_find(set.begin(), set.end()) != set.end()) {
      throw ValidationError(std::string(what) + " is not a sorted set");
    }
    if (!set.empty() && set.back() >= catalog_size) {
      throw ValidationError(std::string(what) + " references item " +
                            std::to_string(set.back()) + " outside catalog");
    }
  };
  check_set(obs.assortment, "assortment");
  if (obs.assortment.empty()) throw ValidationError("empty assortment");
  switch (obs.kind) {
    case ChoiceKind::kSingle:
      if (!contains(obs.assortment, obs.choice)) {
        throw ValidationError("choice not in assortment");
      }
      break;
    case ChoiceKind::kSequential:
      check_set(obs.candidates, "candidates");
      if (obs.candidates.empty()) throw ValidationError("empty candidate set");
      if (!is_subset(obs.candidates, obs.assortment)) {
        throw ValidationError("candidates not contained in assortment");
      }
      if (!contains(obs.candidates, obs.choice)) {
        throw ValidationError("choice not in candidates");
      }
      break;
    case ChoiceKind::kMulti:
      check_set(obs.basket, "basket");
      if (obs.basket.empty()) throw ValidationError("empty basket");
      if (!is_subset(obs.basket, obs.assortment)) {
        throw ValidationError("basket not contained in assortment");
      }
      break;
  }
}

// -------------------------------------------------------------- dataset

ChoiceDataset::ChoiceDataset(ItemCatalog catalog, ChoiceKind kind,
                             std::vector<ChoiceObservation> observations)
    : catalog_(std::move(catalog)), kind_(kind), obs_(std::move(observations)) {
  for (std::size_t i = 0; i < obs_.size(); ++i) {
    const auto& o = obs_[i];
    if (o.kind != kind_) {
      throw ValidationError("observation " + std::to_string(i) + " is " +
                            to_string(o.kind) + " in a " + to_string(kind_) +
                            " dataset");
    }
    try {
      validate(o, catalog_.size());
    } catch (const ValidationError& e) {
      throw ValidationError("observation " + std::to_string(i) + ": " +
                            e.what());
    }
    if (i == 0) {
      context_dim_ = o.context.size();
    } else if (o.context.size() != context_dim_) {
      throw ValidationError("observation " + std::to_string(i) +
                            " has a different context width");
    }
  }
}

ChoiceDataset ChoiceDataset::subset(
    const std::vector<std::size_t>& indices) const {
  std::vector<ChoiceObservation> picked;
  picked.reserve(indices.size());
  for (auto i : indices) picked.push_back(obs_.at(i));
  return ChoiceDataset(catalog_, kind_, std::move(picked));
}

double ChoiceDataset::mean_basket_size() const {
  if (obs_.empty()) return 0.0;
  double total = 0.0;
  for (const auto& o : obs_) {
    total += o.kind == ChoiceKind::kMulti ? static_cast<double>(o.basket.size())
                                          : 1.0;
  }
  return total / static_cast<double>(obs_.size());
}

// ------------------------------------------------------------------ CSV

ChoiceDataset load_csv(const std::filesystem::path& path,
                       const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header row", 1);
  const auto header = split_csv_line(line, 1);
  std::map<std::string, std::size_t> col;
  std::vector<std::pair<int, std::size_t>> fcols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string h = trim(header[c]);
    if (const int k = feature_column_index(h); k >= 0) {
      fcols.emplace_back(k, c);
    } else {
      col[h] = c;
    }
  }
  std::sort(fcols.begin(), fcols.end());
  for (const char* required : {"kind", "assortment"}) {
    if (!col.count(required)) {
      throw ParseError(std::string("header lacks column '") + required + "'",
                       1);
    }
  }

  const bool fixed_items = schema.items_path.has_value();
  ItemCatalog catalog;
  std::vector<std::string> names;
  std::unordered_map<std::string, std::size_t> index;
  if (fixed_items) {
    catalog = read_items_csv(*schema.items_path);
    for (std::size_t i = 0; i < catalog.size(); ++i) index[catalog.name(i)] = i;
  }

  auto lookup = [&](const std::string& name, std::size_t line_no) {
    auto it = index.find(name);
    if (it != index.end()) return it->second;
    if (fixed_items) {
      throw ValidationError("line " + std::to_string(line_no) +
                            ": unknown item '" + name + "'");
    }
    names.push_back(name);
    index.emplace(name, names.size() - 1);
    return names.size() - 1;
  };
  auto field = [&](const std::vector<std::string>& fields, const char* name) {
    auto it = col.find(name);
    return it == col.end() ? std::string() : trim(fields[it->second]);
  };
  auto set_of = [&](const std::string& text, std::size_t line_no) {
    ItemSet set;
    for (const auto& n : split_names(text, schema.set_separator))
      set.push_back(lookup(n, line_no));
    return normalized(std::move(set));
  };

  std::vector<ChoiceObservation> observations;
  std::optional<ChoiceKind> kind;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line, line_no);
    if (fields.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) +
                           " fields, got " + std::to_string(fields.size()),
                       line_no);
    }
    ChoiceKind k;
    try {
      k = parse_choice_kind(field(fields, "kind"));
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), line_no);
    }
    if (kind && *kind != k) {
      throw ValidationError("line " + std::to_string(line_no) +
                            ": mixed choice kinds in one file");
    }
    kind = k;

    ChoiceObservation obs;
    obs.kind = k;
    obs.assortment = set_of(field(fields, "assortment"), line_no);
    if (k == ChoiceKind::kSequential) {
      obs.candidates = set_of(field(fields, "candidates"), line_no);
    }
    if (k == ChoiceKind::kMulti) {
      obs.basket = set_of(field(fields, "basket"), line_no);
    } else {
      const auto choice = field(fields, "choice");
      if (choice.empty()) throw ParseError("missing choice", line_no);
      obs.choice = lookup(choice, line_no);
    }
    for (auto [fk, c] : fcols) {
      obs.context.push_back(parse_double(fields[c], line_no));
    }
    const std::size_t n = fixed_items ? catalog.size() : names.size();
    try {
      validate(obs, n);
    } catch (const ValidationError& e) {
      const auto id = field(fields, "obs_id");
      throw ValidationError("line " + std::to_string(line_no) +
                            (id.empty() ? "" : " (obs_id " + id + ")") + ": " +
                            e.what());
    }
    observations.push_back(std::move(obs));
  }
  if (!kind) throw ValidationError(path.string() + " has no observations");

  if (!fixed_items) catalog = ItemCatalog(std::move(names));
  if (schema.no_purchase_item) {
    auto idx = catalog.index_of(*schema.no_purchase_item);
    if (!idx) throw ValidationError("no-purchase item not in catalog");
    catalog.set_no_purchase_index(idx);
  }
  if (schema.stop_item) {
    auto idx = catalog.index_of(*schema.stop_item);
    if (!idx) throw ValidationError("stop item not in catalog");
    catalog.set_stop_index(idx);
  }
  return ChoiceDataset(std::move(catalog), *kind, std::move(observations));
}

void write_csv(const ChoiceDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  const auto& cat = ds.catalog();
  out << "obs_id,kind,assortment,candidates,choice,basket";
  for (std::size_t k = 0; k < ds.context_dim(); ++k) out << ",f_" << k;
  out << '\n';
  out.precision(17);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& o = ds[i];
    out << i << ',' << to_string(o.kind) << ','
        << csv_field(join_names(cat, o.assortment, ';')) << ','
        << csv_field(join_names(cat, o.candidates, ';')) << ','
        << (o.kind == ChoiceKind::kMulti ? std::string()
                                         : csv_field(cat.name(o.choice)))
        << ',' << csv_field(join_names(cat, o.basket, ';'));
    for (double c : o.context) out << ',' << c;
    out << '\n';
  }
}

void write_items_csv(const ItemCatalog& catalog,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "name";
  if (!catalog.one_hot()) {
    for (std::size_t k = 0; k < catalog.feature_dim(); ++k) out << ",f_" << k;
  }
  out << '\n';
  out.precision(17);
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    out << csv_field(catalog.name(i));
    if (!catalog.one_hot()) {
      for (double f : catalog.features(i)) out << ',' << f;
    }
    out << '\n';
  }
}

ChoiceDataset import_bakery(const std::filesystem::path& receipts,
                            const std::optional<std::filesystem::path>& goods) {
  std::vector<std::string> names;
  if (goods) {
    std::ifstream g(*goods);
    if (!g) throw ValidationError("cannot open " + goods->string());
    std::string line;
    std::size_t line_no = 0;
    std::map<std::size_t, std::string> by_id;
    while (std::getline(g, line)) {
      ++line_no;
      auto fields = split_csv_line(line, line_no);
      if (fields.size() < 3) continue;
      const std::string id = strip_quotes(fields[0]);
      if (id.empty() || !std::isdigit(static_cast<unsigned char>(id[0]))) {
        continue;  // header
      }
      by_id[std::stoul(id)] =
          strip_quotes(fields[1]) + " " + strip_quotes(fields[2]);
    }
    for (const auto& [id, name] : by_id) {
      if (id != names.size()) throw ParseError("goods ids are not 0..n-1", line_no);
      names.push_back(name);
    }
  }

  std::ifstream in(receipts);
  if (!in) throw ValidationError("cannot open " + receipts.string());
  std::vector<ItemSet> baskets;
  std::size_t max_item = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line, line_no);
    ItemSet basket;
    for (std::size_t k = 1; k < fields.size(); ++k) {
      const auto t = trim(fields[k]);
      if (t.empty()) continue;
      const double v = parse_double(t, line_no);
      if (v < 0 || v != std::floor(v)) {
        throw ParseError("item id must be a nonnegative integer", line_no);
      }
      basket.push_back(static_cast<std::size_t>(v));
      max_item = std::max(max_item, basket.back());
    }
    if (basket.empty()) throw ParseError("receipt lists no items", line_no);
    baskets.push_back(normalized(std::move(basket)));
  }
  if (names.empty()) {
    for (std::size_t i = 0; i <= max_item; ++i) {
      names.push_back("item_" + std::to_string(i));
    }
  } else if (max_item >= names.size()) {
    throw ValidationError("receipt item id " + std::to_string(max_item) +
                          " missing from goods file");
  }
  ItemSet everything(names.size());
  std::iota(everything.begin(), everything.end(), 0);
  std::vector<ChoiceObservation> obs;
  obs.reserve(baskets.size());
  for (auto& b : baskets) obs.push_back(ChoiceObservation::multi(std::move(b), everything));
  return ChoiceDataset(ItemCatalog(std::move(names)), ChoiceKind::kMulti,
                       std::move(obs));
}

// --------------------------------------------------------- split etc.

DatasetSplits split(const ChoiceDataset& ds, SplitRatios ratios,
                    std::uint64_t seed) {
  if (ds.empty()) throw ValidationError("cannot split an empty dataset");
  if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
    throw ValidationError("split ratios must be nonnegative and sum to 1");
  }
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = static_cast<double>(ds.size());
  const auto n_train = static_cast<std::size_t>(std::llround(n * ratios.train));
  const auto n_val = std::min(
      ds.size() - n_train,
      static_cast<std::size_t>(std::llround(n * ratios.validation)));
  auto cut = [&](std::size_t from, std::size_t to) {
    return ds.subset(std::vector<std::size_t>(
        order.begin() + static_cast<std::ptrdiff_t>(from),
        order.begin() + static_cast<std::ptrdiff_t>(to)));
  };
  return {cut(0, n_train), cut(n_train, n_train + n_val),
          cut(n_train + n_val, ds.size())};
}

ChoiceDataset single_to_sequential(const ChoiceDataset& ds) {
  if (ds.kind() != ChoiceKind::kSingle) {
    throw ValidationError("single_to_sequential needs a single-choice dataset");
  }
  std::vector<ChoiceObservation> out;
  out.reserve(ds.size());
  for (const auto& o : ds.observations()) {
    auto s = ChoiceObservation::sequential(o.choice, o.assortment, o.assortment);
    s.context = o.context;
    out.push_back(std::move(s));
  }
  return ChoiceDataset(ds.catalog(), ChoiceKind::kSequential, std::move(out));
}

ChoiceDataset multi_to_sequential(const ChoiceDataset& ds,
                                  std::mt19937_64& rng, bool append_stop) {
  if (ds.kind() != ChoiceKind::kMulti) {
    throw ValidationError("multi_to_sequential needs a multi-choice dataset");
  }
  ItemCatalog catalog = ds.catalog();
  std::optional<std::size_t> stop;
  if (append_stop) {
    if (!catalog.stop_index()) catalog = catalog.with_stop_item();
    stop = catalog.stop_index();
  }
  std::vector<ChoiceObservation> out;
  for (const auto& o : ds.observations()) {
    if (!is_subset(o.basket, o.assortment)) {
      throw ValidationError("basket not contained in assortment");
    }
    ItemSet assortment = stop ? with(o.assortment, *stop) : o.assortment;
    std::vector<std::size_t> order(o.basket.begin(), o.basket.end());
    std::shuffle(order.begin(), order.end(), rng);
    ItemSet candidates = assortment;
    for (auto item : order) {
      auto s = ChoiceObservation::sequential(item, candidates, assortment);
      s.context = o.context;
      out.push_back(std::move(s));
      candidates = without(candidates, item);
    }
    if (stop) {
      auto s = ChoiceObservation::sequential(*stop, candidates, assortment);
      s.context = o.context;
      out.push_back(std::move(s));
    }
  }
  return ChoiceDataset(std::move(catalog), ChoiceKind::kSequential,
                       std::move(out));
}

ChoiceDataset drop_assortment(const ChoiceDataset& sequential) {
  if (sequential.kind() != ChoiceKind::kSequential) {
    throw ValidationError("drop_assortment needs a sequential dataset");
  }
  std::vector<ChoiceObservation> out;
  out.reserve(sequential.size());
  for (const auto& o : sequential.observations()) {
    auto s = ChoiceObservation::sequential(o.choice, o.candidates, o.candidates);
    s.context = o.context;
    out.push_back(std::move(s));
  }
  return ChoiceDataset(sequential.catalog(), ChoiceKind::kSequential,
                       std::move(out));
}

// ------------------------------------------------------------ synthetic

ItemCatalog boosted_catalog() {
  ItemCatalog c({"A", "A'", "B", "L"});
  return c;
}

double boosted_utility(std::size_t item, unsigned candidates,
                       unsigned assortment, BoostKind kind, double boost) {
  if (item != kItemA) return 1.0;
  const unsigned a_prime = 1u << kItemAPrime;
  const bool boosted = kind == BoostKind::kCandidate
                           ? (candidates & a_prime) != 0
                           : (assortment & a_prime) && !(candidates & a_prime);
  return boosted ? boost : 1.0;
}

namespace {

std::size_t sample_softmax(const std::vector<double>& utilities,
                           std::mt19937_64& rng) {
  const double mx = *std::max_element(utilities.begin(), utilities.end());
  std::vector<double> w(utilities.size());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = std::exp(utilities[k] - mx);
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  return pick(rng);
}

ItemSet items_of(unsigned mask) {
  ItemSet out;
  for (std::size_t i = 0; i < 32; ++i) {
    if (mask & (1u << i)) out.push_back(i);
  }
  return out;
}

}  // namespace

ChoiceDataset generate_boosted_synthetic(const BoostedSyntheticSpec& spec) {
  if (!(spec.boost_value > 0)) {
    throw ValidationError("boost value must be positive");
  }
  std::mt19937_64 rng(spec.seed);
  std::bernoulli_distribution coin(0.5);
  std::vector<ChoiceObservation> obs;
  obs.reserve(spec.n_samples);
  for (std::size_t s = 0; s < spec.n_samples; ++s) {
    unsigned assortment = 1u << kItemL;
    for (std::size_t i : {kItemA, kItemAPrime, kItemB}) {
      if (coin(rng)) assortment |= 1u << i;
    }
    unsigned candidates = 1u << kItemL;
    for (std::size_t i : {kItemA, kItemAPrime, kItemB}) {
      if ((assortment & (1u << i)) && coin(rng)) candidates |= 1u << i;
    }
    const ItemSet cand = items_of(candidates);
    std::vector<double> u;
    for (auto i : cand) {
      u.push_back(boosted_utility(i, candidates, assortment, spec.boost_kind,
                                  spec.boost_value));
    }
    const auto choice = cand[sample_softmax(u, rng)];
    obs.push_back(
        ChoiceObservation::sequential(choice, cand, items_of(assortment)));
  }
  return ChoiceDataset(boosted_catalog(), ChoiceKind::kSequential,
                       std::move(obs));
}

ChoiceDataset generate_boosted_multi(const BoostedMultiSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::bernoulli_distribution coin(0.5);
  const double base[4] = {spec.utility_a, spec.utility_a_prime, spec.utility_b,
                          spec.utility_stop};
  std::vector<ChoiceObservation> obs;
  obs.reserve(spec.n_samples);
  for (std::size_t s = 0; s < spec.n_samples; ++s) {
    unsigned assortment = 0;
    while (assortment == 0) {
      for (std::size_t i : {kItemA, kItemAPrime, kItemB}) {
        if (coin(rng)) assortment |= 1u << i;
      }
    }
    ItemSet basket;
    while (basket.empty()) {
      unsigned remaining = assortment | (1u << kItemL);
      unsigned chosen = 0;
      for (;;) {
        const ItemSet cand = items_of(remaining);
        std::vector<double> u;
        for (auto i : cand) {
          const bool boosted = i == kItemA && (chosen & (1u << kItemAPrime));
          u.push_back(boosted ? spec.boost_value : base[i]);
        }
        const auto pick = cand[sample_softmax(u, rng)];
        if (pick == kItemL) break;
        chosen |= 1u << pick;
        remaining &= ~(1u << pick);
      }
      basket = items_of(chosen);
    }
    obs.push_back(ChoiceObservation::multi(basket, items_of(assortment)));
  }
  ItemCatalog catalog = boosted_catalog();
  catalog.set_stop_index(kItemL);
  return ChoiceDataset(std::move(catalog), ChoiceKind::kMulti, std::move(obs));
}

// -------------------------------------------------------------- batches

PaddedBatch make_batch(const ItemCatalog& catalog,
                       std::span<const ChoiceObservation> observations,
                       std::size_t context_dim) {
  if (observations.empty()) throw ValidationError("empty batch");
  PaddedBatch b;
  b.size = observations.size();
  b.feature_dim = catalog.feature_dim() + context_dim;
  std::size_t s_max = 0, c_max = 0;
  for (const auto& o : observations) {
    if (o.choice_set().empty()) {
      throw ValidationError("observation with zero candidates");
    }
    s_max = std::max(s_max, o.assortment.size());
    c_max = std::max(c_max, o.choice_set().size());
  }
  const std::size_t d = b.feature_dim;
  std::vector<double> xs(b.size * s_max * d, 0.0);
  std::vector<double> xc(b.size * c_max * d, 0.0);
  std::vector<unsigned char> ms(b.size * s_max, 0), mc(b.size * c_max, 0),
      ml(b.size * c_max, 0);
  auto fill_row = [&](std::vector<double>& dst, std::size_t offset,
                      std::size_t item, const ChoiceObservation& o) {
    auto f = catalog.features(item);
    std::copy(f.begin(), f.end(), dst.begin() + static_cast<std::ptrdiff_t>(offset));
    if (!o.context.empty()) {
      if (o.context.size() != context_dim) {
        throw ValidationError("context width mismatch in batch");
      }
      std::copy(o.context.begin(), o.context.end(),
                dst.begin() + static_cast<std::ptrdiff_t>(offset + f.size()));
    }
  };
  for (std::size_t r = 0; r < b.size; ++r) {
    const auto& o = observations[r];
    for (std::size_t p = 0; p < o.assortment.size(); ++p) {
      fill_row(xs, (r * s_max + p) * d, o.assortment[p], o);
      ms[r * s_max + p] = 1;
    }
    const auto& cs = o.choice_set();
    std::size_t label = 0;
    for (std::size_t p = 0; p < cs.size(); ++p) {
      fill_row(xc, (r * c_max + p) * d, cs[p], o);
      mc[r * c_max + p] = 1;
      if (o.kind == ChoiceKind::kMulti) {
        ml[r * c_max + p] = contains(o.basket, cs[p]) ? 1 : 0;
      } else if (cs[p] == o.choice) {
        label = p;
      }
    }
    b.labels.push_back(label);
    b.assortment_items.push_back(o.assortment);
    b.candidate_items.push_back(cs);
  }
  b.assortment = Tensor::from({b.size, s_max, d}, std::move(xs));
  b.candidates = Tensor::from({b.size, c_max, d}, std::move(xc));
  b.assortment_mask = Mask({b.size, s_max}, std::move(ms));
  b.candidate_mask = Mask({b.size, c_max}, std::move(mc));
  b.label_mask = Mask({b.size, c_max}, std::move(ml));
  return b;
}

PaddedBatch make_batch(const ChoiceDataset& ds,
                       std::span<const std::size_t> indices) {
  std::vector<ChoiceObservation> picked;
  picked.reserve(indices.size());
  for (auto i : indices) picked.push_back(ds[i]);
  return make_batch(ds.catalog(), picked, ds.context_dim());
}

BatchStream::BatchStream(const ChoiceDataset& ds, std::size_t batch_size,
                         std::mt19937_64& rng, bool shuffle)
    : ds_(&ds), batch_size_(batch_size), order_(ds.size()) {
  if (ds.empty()) throw ValidationError("cannot batch an empty dataset");
  if (batch_size == 0) throw ValidationError("batch size must be positive");
  std::iota(order_.begin(), order_.end(), 0);
  if (shuffle) std::shuffle(order_.begin(), order_.end(), rng);
}

std::optional<PaddedBatch> BatchStream::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
  std::span<const std::size_t> idx(order_.data() + cursor_, end - cursor_);
  cursor_ = end;
  return make_batch(*ds_, idx);
}

std::size_t BatchStream::batch_count() const {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

}  // namespace tcnet
