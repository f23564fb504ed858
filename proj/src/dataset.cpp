#include "trace/dataset.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>

#include "trace/errors.hpp"

namespace trace {

TabularDataset TabularDataset::allocate(const FeatureSchema& schema, Index n) {
  TabularDataset d;
  const auto nn = static_cast<Index>(schema.n_continuous());
  const auto nc = static_cast<Index>(schema.n_categorical());
  const auto nk = static_cast<Index>(schema.n_checkbox());
  d.continuous = RowMatrixd::Zero(n, nn);
  d.continuous_missing = BoolMatrix::Constant(n, nn, false);
  d.categorical = IndexMatrix::Zero(n, nc);
  for (auto f : schema.checkbox()) d.checkbox.push_back(RowMatrixd::Zero(n, schema.feature(f).cardinality));
  d.checkbox_missing = BoolMatrix::Constant(n, nk, false);
  d.labels = Eigen::VectorXi::Zero(n);
  d.ids.resize(static_cast<std::size_t>(n));
  std::iota(d.ids.begin(), d.ids.end(), std::int64_t{0});
  return d;
}

bool TabularDataset::complete(Index row) const {
  if (continuous_missing.cols() && continuous_missing.row(row).any()) return false;
  if (categorical.cols() && (categorical.row(row).array() == 0).any()) return false;
  if (checkbox_missing.cols() && checkbox_missing.row(row).any()) return false;
  return true;
}

Index TabularDataset::missing_cells() const {
  return continuous_missing.count() + (categorical.array() == 0).count() + checkbox_missing.count();
}

TabularDataset TabularDataset::subset(std::span<const Index> rows) const {
  TabularDataset d;
  const auto n = static_cast<Index>(rows.size());
  d.continuous.resize(n, continuous.cols());
  d.continuous_missing.resize(n, continuous_missing.cols());
  d.categorical.resize(n, categorical.cols());
  d.checkbox_missing.resize(n, checkbox_missing.cols());
  d.labels.resize(n);
  for (const auto& c : checkbox) d.checkbox.emplace_back(n, c.cols());
  d.ids.resize(rows.size());
  for (Index i = 0; i < n; ++i) {
    const Index r = rows[static_cast<std::size_t>(i)];
    if (r < 0 || r >= size()) throw ContractError("subset: row " + std::to_string(r) + " out of range");
    d.continuous.row(i) = continuous.row(r);
    d.continuous_missing.row(i) = continuous_missing.row(r);
    d.categorical.row(i) = categorical.row(r);
    d.checkbox_missing.row(i) = checkbox_missing.row(r);
    for (std::size_t k = 0; k < checkbox.size(); ++k) d.checkbox[k].row(i) = checkbox[k].row(r);
    d.labels(i) = labels(r);
    d.ids[static_cast<std::size_t>(i)] = ids[static_cast<std::size_t>(r)];
  }
  return d;
}

void TabularDataset::validate(const FeatureSchema& schema) const {
  const Index n = size();
  auto fail = [](const std::string& what) { throw DatasetError(what); };
  if (continuous.rows() != n || continuous.cols() != static_cast<Index>(schema.n_continuous()) ||
      continuous_missing.rows() != n || continuous_missing.cols() != continuous.cols())
    fail("continuous block does not match schema");
  if (categorical.rows() != n || categorical.cols() != static_cast<Index>(schema.n_categorical()))
    fail("categorical block does not match schema");
  if (checkbox.size() != schema.n_checkbox() || checkbox_missing.rows() != n ||
      checkbox_missing.cols() != static_cast<Index>(schema.n_checkbox()))
    fail("checkbox block does not match schema");
  if (ids.size() != static_cast<std::size_t>(n)) fail("id list does not match sample count");
  if (((labels.array() != 0) && (labels.array() != 1)).any()) fail("labels must be 0/1");
  for (std::size_t j = 0; j < schema.n_categorical(); ++j) {
    const int card = schema.feature(schema.categorical()[j]).cardinality;
    const auto col = categorical.col(static_cast<Index>(j)).array();
    if ((col < 0).any() || (col > card).any()) fail("categorical index out of range");
  }
  for (std::size_t k = 0; k < checkbox.size(); ++k) {
    const auto& bits = checkbox[k];
    if (bits.rows() != n || bits.cols() != schema.feature(schema.checkbox()[k]).cardinality)
      fail("checkbox block does not match schema");
    if (((bits.array() != 0.0) && (bits.array() != 1.0)).any()) fail("checkbox bits must be 0/1");
    for (Index r = 0; r < n; ++r) {
      if (checkbox_missing(r, static_cast<Index>(k)) && bits.row(r).any()) fail("missing checkbox row has set bits");
    }
  }
  for (Index r = 0; r < n; ++r) {
    for (Index i = 0; i < continuous.cols(); ++i) {
      if (continuous_missing(r, i) && continuous(r, i) != 0.0) fail("missing continuous cell is not 0");
      if (!std::isfinite(continuous(r, i))) fail("non-finite continuous value");
    }
  }
}

bool operator==(const TabularDataset& a, const TabularDataset& b) {
  if (a.checkbox.size() != b.checkbox.size()) return false;
  for (std::size_t k = 0; k < a.checkbox.size(); ++k) {
    if (a.checkbox[k].rows() != b.checkbox[k].rows() || a.checkbox[k].cols() != b.checkbox[k].cols() ||
        a.checkbox[k] != b.checkbox[k])
      return false;
  }
  auto same_shape = [](const auto& x, const auto& y) { return x.rows() == y.rows() && x.cols() == y.cols(); };
  return same_shape(a.continuous, b.continuous) && a.continuous == b.continuous &&
         same_shape(a.continuous_missing, b.continuous_missing) && (a.continuous_missing == b.continuous_missing).all() &&
         same_shape(a.categorical, b.categorical) && a.categorical == b.categorical &&
         same_shape(a.checkbox_missing, b.checkbox_missing) && (a.checkbox_missing == b.checkbox_missing).all() &&
         a.labels.size() == b.labels.size() && a.labels == b.labels;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

/// Splits one CSV record, honouring double quotes. Returns false at EOF.
bool read_record(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool quoted = false;
  bool any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      field += c;
    }
  }
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& s, double& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

}  // namespace

TabularDataset read_csv(std::istream& in, const FeatureSchema& schema) {
  std::vector<std::string> header;
  if (!read_record(in, header)) throw IngestionError("CSV is empty (no header row)");
  for (auto& h : header) h = trim(h);
  if (!header.empty() && header.front().rfind("\xEF\xBB\xBF", 0) == 0) header.front().erase(0, 3);

  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!column.emplace(header[i], i).second) throw IngestionError("duplicate CSV column '" + header[i] + "'");
  }
  auto locate = [&](const std::string& name) {
    auto it = column.find(name);
    if (it == column.end()) throw IngestionError("CSV header lacks column '" + name + "'");
    return it->second;
  };
  for (const auto& h : header) {
    const auto expected = schema.csv_columns();
    if (std::find(expected.begin(), expected.end(), h) == expected.end())
      throw IngestionError("CSV column '" + h + "' is not declared in the schema");
  }

  std::vector<std::size_t> cont_col, cat_col;
  std::vector<std::vector<std::size_t>> box_cols;
  for (auto f : schema.continuous()) cont_col.push_back(locate(schema.feature(f).name));
  for (auto f : schema.categorical()) cat_col.push_back(locate(schema.feature(f).name));
  for (auto f : schema.checkbox()) {
    std::vector<std::size_t> cols;
    for (const auto& m : schema.feature(f).members) cols.push_back(locate(m));
    box_cols.push_back(std::move(cols));
  }
  const std::size_t label_col = locate(schema.label());

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> record;
  while (read_record(in, record)) {
    if (record.size() == 1 && trim(record[0]).empty()) continue;
    if (record.size() != header.size()) {
      throw IngestionError(fmt::format("row {}: expected {} fields, found {}", rows.size() + 1, header.size(),
                                       record.size()));
    }
    rows.push_back(record);
  }

  auto data = TabularDataset::allocate(schema, static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const auto ri = static_cast<Index>(r);
    auto where = [&](std::size_t col) { return fmt::format("row {}, column '{}'", r + 1, header[col]); };

    for (std::size_t i = 0; i < cont_col.size(); ++i) {
      const auto cell = trim(row[cont_col[i]]);
      if (cell.empty()) {
        data.continuous_missing(ri, static_cast<Index>(i)) = true;
        continue;
      }
      double v = 0.0;
      if (!parse_double(cell, v)) throw IngestionError(where(cont_col[i]) + ": '" + cell + "' is not a finite number");
      data.continuous(ri, static_cast<Index>(i)) = v;
    }
    for (std::size_t j = 0; j < cat_col.size(); ++j) {
      const auto cell = trim(row[cat_col[j]]);
      if (cell.empty()) continue;
      const int idx = schema.category_index(schema.categorical()[j], cell);
      if (idx < 0) throw IngestionError(where(cat_col[j]) + ": unknown category '" + cell + "'");
      data.categorical(ri, static_cast<Index>(j)) = idx;
    }
    for (std::size_t k = 0; k < box_cols.size(); ++k) {
      bool all_empty = true;
      for (std::size_t m = 0; m < box_cols[k].size(); ++m) {
        const auto cell = trim(row[box_cols[k][m]]);
        if (cell.empty()) continue;
        all_empty = false;
        if (cell == "1") {
          data.checkbox[k](ri, static_cast<Index>(m)) = 1.0;
        } else if (cell != "0") {
          throw IngestionError(where(box_cols[k][m]) + ": checkbox cell '" + cell + "' is not 0/1");
        }
      }
      data.checkbox_missing(ri, static_cast<Index>(k)) = all_empty;
    }
    const auto label = trim(row[label_col]);
    if (label == "1") {
      data.labels(ri) = 1;
    } else if (label != "0") {
      throw IngestionError(where(label_col) + ": label '" + label + "' is not 0/1");
    }
  }
  return data;
}

TabularDataset load_csv(const std::filesystem::path& path, const FeatureSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read data file " + path.string());
  try {
    return read_csv(in, schema);
  } catch (const IngestionError& e) {
    throw IngestionError(path.string() + ": " + e.what());
  }
}

void write_csv(std::ostream& out, const TabularDataset& data, const FeatureSchema& schema) {
  const auto cols = schema.csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << quote(cols[i]);
  out << '\n';
  std::string line;
  for (Index r = 0; r < data.size(); ++r) {
    line.clear();
    std::size_t ci = 0, cj = 0, ck = 0;
    bool first = true;
    auto emit = [&](const std::string& s) {
      if (!first) line += ',';
      line += s;
      first = false;
    };
    for (std::size_t f = 0; f < schema.n_features(); ++f) {
      const auto& spec = schema.feature(f);
      switch (spec.kind) {
        case FeatureKind::continuous: {
          const auto i = static_cast<Index>(ci++);
          emit(data.continuous_missing(r, i) ? std::string() : fmt::format("{}", data.continuous(r, i)));
          break;
        }
        case FeatureKind::categorical: {
          const auto j = static_cast<Index>(cj++);
          emit(quote(schema.category_label(f, data.categorical(r, j))));
          break;
        }
        case FeatureKind::checkbox: {
          const auto k = ck++;
          const bool missing = data.checkbox_missing(r, static_cast<Index>(k));
          for (Index m = 0; m < data.checkbox[k].cols(); ++m) {
            emit(missing ? std::string() : (data.checkbox[k](r, m) != 0.0 ? "1" : "0"));
          }
          break;
        }
      }
    }
    emit(data.labels(r) ? "1" : "0");
    out << line << '\n';
  }
}

void save_csv(const std::filesystem::path& path, const TabularDataset& data, const FeatureSchema& schema) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_csv(out, data, schema);
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Preprocessing

Standardization fit_standardization(const TabularDataset& train) {
  const Index cols = train.continuous.cols();
  Standardization s{Eigen::VectorXd::Zero(cols), Eigen::VectorXd::Ones(cols)};
  for (Index i = 0; i < cols; ++i) {
    double total = 0.0;
    Index count = 0;
    for (Index r = 0; r < train.size(); ++r) {
      if (train.continuous_missing(r, i)) continue;
      total += train.continuous(r, i);
      ++count;
    }
    if (count == 0) continue;
    const double mu = total / static_cast<double>(count);
    double sq = 0.0;
    for (Index r = 0; r < train.size(); ++r) {
      if (!train.continuous_missing(r, i)) sq += (train.continuous(r, i) - mu) * (train.continuous(r, i) - mu);
    }
    const double sd = std::sqrt(sq / static_cast<double>(count));
    s.mean(i) = mu;
    s.stddev(i) = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

TabularDataset apply_standardization(const TabularDataset& data, const Standardization& stats) {
  if (stats.mean.size() != data.continuous.cols() || stats.stddev.size() != data.continuous.cols())
    throw ContractError("standardization statistics do not match the continuous block");
  TabularDataset out = data;
  for (Index r = 0; r < out.size(); ++r) {
    for (Index i = 0; i < out.continuous.cols(); ++i) {
      if (!out.continuous_missing(r, i)) out.continuous(r, i) = (out.continuous(r, i) - stats.mean(i)) / stats.stddev(i);
    }
  }
  return out;
}

Index one_hot_width(const FeatureSchema& schema) {
  Index width = 0;
  for (const auto& f : schema.features()) width += f.cardinality;
  return width;
}

RowMatrixd one_hot_encode(const TabularDataset& data, const FeatureSchema& schema) {
  RowMatrixd x = RowMatrixd::Zero(data.size(), one_hot_width(schema));
  const Index nn = data.continuous.cols();
  for (Index r = 0; r < data.size(); ++r) {
    for (Index i = 0; i < nn; ++i) x(r, i) = data.continuous_missing(r, i) ? 0.0 : data.continuous(r, i);
  }
  Index offset = nn;
  for (std::size_t j = 0; j < schema.n_categorical(); ++j) {
    const int card = schema.feature(schema.categorical()[j]).cardinality;
    for (Index r = 0; r < data.size(); ++r) {
      const int idx = data.categorical(r, static_cast<Index>(j));
      if (idx > 0) x(r, offset + idx - 1) = 1.0;
    }
    offset += card;
  }
  for (const auto& bits : data.checkbox) {
    x.middleCols(offset, bits.cols()) = bits;
    offset += bits.cols();
  }
  return x;
}

// ---------------------------------------------------------------------------
// Splitting and batching

namespace {

void class_rows(const TabularDataset& data, std::vector<Index>& pos, std::vector<Index>& neg) {
  for (Index r = 0; r < data.size(); ++r) (data.labels(r) ? pos : neg).push_back(r);
}

Index round_half_up(double v) { return static_cast<Index>(std::floor(v + 0.5)); }

}  // namespace

std::pair<TabularDataset, TabularDataset> stratified_split(const TabularDataset& data, double val_fraction,
                                                           std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw SplitError("validation fraction must lie in (0, 1)");
  std::vector<Index> pos, neg;
  class_rows(data, pos, neg);
  Rng rng = make_stream(seed, "split");
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  const Index vp = round_half_up(val_fraction * static_cast<double>(pos.size()));
  const Index vn = round_half_up(val_fraction * static_cast<double>(neg.size()));
  const auto tp = static_cast<Index>(pos.size()) - vp;
  const auto tn = static_cast<Index>(neg.size()) - vn;
  if (vp == 0 || vn == 0 || tp == 0 || tn == 0) {
    throw SplitError(fmt::format("stratified split leaves a class empty (train {}+/{}-, val {}+/{}-)", tp, tn, vp, vn));
  }
  std::vector<Index> train_rows(pos.begin() + vp, pos.end());
  train_rows.insert(train_rows.end(), neg.begin() + vn, neg.end());
  std::vector<Index> val_rows(pos.begin(), pos.begin() + vp);
  val_rows.insert(val_rows.end(), neg.begin(), neg.begin() + vn);
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(val_rows.begin(), val_rows.end());
  return {data.subset(train_rows), data.subset(val_rows)};
}

Index positives_per_batch(Index batch_size, Index positives, Index total) {
  if (total <= 0 || positives <= 0) return 0;
  if (positives >= total) return batch_size;
  const Index p = round_half_up(static_cast<double>(batch_size) * static_cast<double>(positives) /
                                static_cast<double>(total));
  return std::clamp<Index>(p, 1, batch_size - 1);
}

std::vector<std::vector<Index>> stratified_batches(const TabularDataset& data, Index batch_size, Rng& rng) {
  if (batch_size < 2) throw ParameterError("batch size must be at least 2");
  std::vector<Index> pos, neg;
  class_rows(data, pos, neg);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);

  std::vector<std::vector<Index>> batches;
  const Index n = data.size();
  if (batch_size >= n) {
    std::vector<Index> all(pos);
    all.insert(all.end(), neg.begin(), neg.end());
    if (!all.empty()) batches.push_back(std::move(all));
    return batches;
  }
  const Index per_pos = positives_per_batch(batch_size, static_cast<Index>(pos.size()), n);
  const Index per_neg = batch_size - per_pos;
  std::size_t ip = 0, in = 0;
  while (ip + static_cast<std::size_t>(per_pos) <= pos.size() && in + static_cast<std::size_t>(per_neg) <= neg.size()) {
    std::vector<Index> b(pos.begin() + static_cast<std::ptrdiff_t>(ip),
                         pos.begin() + static_cast<std::ptrdiff_t>(ip + static_cast<std::size_t>(per_pos)));
    b.insert(b.end(), neg.begin() + static_cast<std::ptrdiff_t>(in),
             neg.begin() + static_cast<std::ptrdiff_t>(in + static_cast<std::size_t>(per_neg)));
    ip += static_cast<std::size_t>(per_pos);
    in += static_cast<std::size_t>(per_neg);
    batches.push_back(std::move(b));
  }
  std::vector<Index> rest(pos.begin() + static_cast<std::ptrdiff_t>(ip), pos.end());
  rest.insert(rest.end(), neg.begin() + static_cast<std::ptrdiff_t>(in), neg.end());
  for (std::size_t s = 0; s < rest.size(); s += static_cast<std::size_t>(batch_size)) {
    const auto e = std::min(rest.size(), s + static_cast<std::size_t>(batch_size));
    batches.emplace_back(rest.begin() + static_cast<std::ptrdiff_t>(s), rest.begin() + static_cast<std::ptrdiff_t>(e));
  }
  return batches;
}

// ---------------------------------------------------------------------------
// Missingness

TabularDataset simulate_missing(const TabularDataset& data, const FeatureSchema& schema, double ratio,
                                std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ParameterError("missing ratio must lie in [0, 1]");
  TabularDataset out = data;
  const Index features = static_cast<Index>(schema.n_features());
  const Index cells = data.size() * features;
  const Index target = round_half_up(ratio * static_cast<double>(cells));
  if (target == 0) return out;

  // Per schema feature: which block and column it lives in.
  std::vector<std::pair<FeatureKind, Index>> where;
  Index ci = 0, cj = 0, ck = 0;
  for (const auto& f : schema.features()) {
    const Index slot = f.kind == FeatureKind::continuous ? ci++ : f.kind == FeatureKind::categorical ? cj++ : ck++;
    where.emplace_back(f.kind, slot);
  }

  Rng rng = make_stream(seed, "missing");
  std::vector<Index> order(static_cast<std::size_t>(cells));
  std::iota(order.begin(), order.end(), Index{0});
  for (Index i = 0; i < target; ++i) {
    std::uniform_int_distribution<Index> pick(i, cells - 1);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
    const Index cell = order[static_cast<std::size_t>(i)];
    const Index r = cell / features;
    const auto [kind, slot] = where[static_cast<std::size_t>(cell % features)];
    switch (kind) {
      case FeatureKind::continuous:
        out.continuous(r, slot) = 0.0;
        out.continuous_missing(r, slot) = true;
        break;
      case FeatureKind::categorical:
        out.categorical(r, slot) = 0;
        break;
      case FeatureKind::checkbox:
        out.checkbox[static_cast<std::size_t>(slot)].row(r).setZero();
        out.checkbox_missing(r, slot) = true;
        break;
    }
  }
  return out;
}

TabularDataset drop_incomplete(const TabularDataset& data) {
  std::vector<Index> keep;
  for (Index r = 0; r < data.size(); ++r) {
    if (data.complete(r)) keep.push_back(r);
  }
  if (keep.empty()) throw DatasetError("no complete samples remain after dropping incomplete rows");
  return data.subset(keep);
}

// ---------------------------------------------------------------------------
// Synthetic data

FeatureSchema synthetic_schema() {
  std::vector<FeatureSpec> f(7);
  f[0] = {"x1", FeatureKind::continuous, 1, {}, {}, 0};
  f[1] = {"box", FeatureKind::checkbox, 4, {}, {}, 0};
  f[2] = {"cat_a", FeatureKind::categorical, 3, {"low", "mid", "high"}, {}, 0};
  f[3] = {"x2", FeatureKind::continuous, 1, {}, {}, 0};
  f[4] = {"cat_b", FeatureKind::categorical, 4, {}, {}, 0};
  f[5] = {"x3", FeatureKind::continuous, 1, {}, {}, 0};
  f[6] = {"cat_c", FeatureKind::categorical, 2, {"no", "yes"}, {}, 0};
  return FeatureSchema("outcome", std::move(f));
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  if (!(spec.positive_ratio > 0.0 && spec.positive_ratio < 1.0))
    throw ParameterError("synthetic positive ratio must lie in (0, 1)");
  if (spec.samples < 2) throw ParameterError("synthetic dataset needs at least 2 samples");
  const auto& schema = spec.schema;
  Rng rng = make_stream(spec.seed, "synthetic");
  std::uniform_real_distribution<double> coef(0.5, 1.5);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SyntheticTruth truth;
  truth.informative.resize(schema.n_features());
  truth.continuous_weight = Eigen::VectorXd::Zero(static_cast<Index>(schema.n_continuous()));
  Index ci = 0;
  for (std::size_t f = 0; f < schema.n_features(); ++f) {
    const auto& fs = schema.feature(f);
    const bool informative = f % 3 != 2;
    truth.informative[f] = informative;
    switch (fs.kind) {
      case FeatureKind::continuous:
        truth.continuous_weight(ci++) = informative ? coef(rng) : 0.0;
        break;
      case FeatureKind::categorical: {
        Eigen::VectorXd levels = Eigen::VectorXd::Zero(fs.cardinality + 1);
        for (int k = 2; k <= fs.cardinality; ++k) levels(k) = levels(k - 1) + (informative ? coef(rng) : 0.0);
        truth.category_value.push_back(levels);
        break;
      }
      case FeatureKind::checkbox: {
        Eigen::VectorXd w = Eigen::VectorXd::Zero(fs.cardinality);
        for (int k = 0; k < fs.cardinality; ++k) w(k) = informative ? coef(rng) : 0.0;
        truth.member_weight.push_back(w);
        break;
      }
    }
  }

  auto data = TabularDataset::allocate(schema, spec.samples);
  std::bernoulli_distribution tick(0.3);
  Eigen::VectorXd score = Eigen::VectorXd::Zero(spec.samples);
  for (Index r = 0; r < spec.samples; ++r) {
    for (Index i = 0; i < data.continuous.cols(); ++i) {
      data.continuous(r, i) = gauss(rng);
      score(r) += truth.continuous_weight(i) * data.continuous(r, i);
    }
    for (std::size_t j = 0; j < schema.n_categorical(); ++j) {
      std::uniform_int_distribution<int> cat(1, schema.feature(schema.categorical()[j]).cardinality);
      const int idx = cat(rng);
      data.categorical(r, static_cast<Index>(j)) = idx;
      score(r) += truth.category_value[j](idx);
    }
    for (std::size_t k = 0; k < schema.n_checkbox(); ++k) {
      for (Index m = 0; m < data.checkbox[k].cols(); ++m) {
        data.checkbox[k](r, m) = tick(rng) ? 1.0 : 0.0;
        score(r) += truth.member_weight[k](m) * data.checkbox[k](r, m);
      }
    }
  }
  const double mu = score.mean();
  const double spread = std::sqrt((score.array() - mu).square().mean());
  for (Index r = 0; r < spec.samples; ++r) score(r) += spec.noise * spread * gauss(rng);

  const Index n_pos = std::clamp<Index>(round_half_up(spec.positive_ratio * static_cast<double>(spec.samples)), 1,
                                        spec.samples - 1);
  std::vector<Index> order(static_cast<std::size_t>(spec.samples));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return score(a) > score(b); });
  for (Index i = 0; i < n_pos; ++i) data.labels(order[static_cast<std::size_t>(i)]) = 1;
  return {std::move(data), std::move(truth)};
}

}  // namespace trace
