#include "faircdc/dataio.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "faircdc/rng.hpp"

namespace faircdc {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
  const char* ws = " \t\r\n";
  const std::size_t a = s.find_first_not_of(ws);
  if (a == std::string::npos) return "";
  const std::size_t b = s.find_last_not_of(ws);
  return s.substr(a, b - a + 1);
}

// One CSV record. Double quotes delimit fields that may contain commas;
// a doubled quote inside a quoted field is a literal quote. Unquoted
// fields are trimmed.
std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool in_quotes = false;
  bool was_quoted = false;
  auto flush = [&] {
    out.push_back(was_quoted ? cur : trim(cur));
    cur.clear();
    was_quoted = false;
  };
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"' && trim(cur).empty()) {
      in_quotes = true;
      was_quoted = true;
      cur.clear();
    } else if (c == ',') {
      flush();
    } else {
      cur += c;
    }
  }
  flush();
  return out;
}

bool is_missing(const std::string& cell) { return cell.empty() || cell == "?"; }

double parse_number(const std::string& cell, std::size_t row, const std::string& col) {
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() + cell.size() || cell.empty())
    throw std::runtime_error("csv row " + std::to_string(row) + ", column \"" + col +
                             "\": cannot parse \"" + cell + "\" as a number");
  return v;
}

ColumnKind kind_from_string(const std::string& s) {
  if (s == "numeric") return ColumnKind::Numeric;
  if (s == "categorical") return ColumnKind::Categorical;
  throw std::runtime_error("schema: unknown feature type \"" + s + "\"");
}

Matrix onehot_rows(const std::vector<int>& ids, std::size_t width) {
  Matrix m(ids.size(), width);
  for (std::size_t i = 0; i < ids.size(); ++i) m(i, static_cast<std::size_t>(ids[i])) = 1.0;
  return m;
}

}  // namespace

DatasetSchema DatasetSchema::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("schema: ") + e.what());
  }
  for (const char* key : {"features", "label", "sensitive"})
    if (!j.contains(key)) throw std::runtime_error(std::string("schema: missing key \"") + key + "\"");

  DatasetSchema s;
  for (const auto& f : j.at("features")) {
    FeatureSpec spec;
    spec.name = f.at("name").get<std::string>();
    spec.kind = kind_from_string(f.at("type").get<std::string>());
    s.features.push_back(std::move(spec));
  }
  if (s.features.empty()) throw std::runtime_error("schema: feature list is empty");
  s.label = j.at("label").get<std::string>();
  s.sensitive = j.at("sensitive").get<std::string>();
  if (j.contains("positive_class")) s.positive_class = j.at("positive_class").get<std::string>();
  if (j.contains("missing_policy")) {
    const std::string p = j.at("missing_policy").get<std::string>();
    if (p == "drop")
      s.missing = MissingPolicy::Drop;
    else if (p == "impute")
      s.missing = MissingPolicy::Impute;
    else
      throw std::runtime_error("schema: unknown missing_policy \"" + p + "\"");
  }
  return s;
}

DatasetSchema DatasetSchema::from_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open schema file " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return from_json(buf.str());
}

RawTable load_csv_text(const std::string& text, const DatasetSchema& schema) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("csv: empty input");
  const std::vector<std::string> header = parse_csv_line(line);

  std::unordered_map<std::string, std::size_t> col_of;
  for (std::size_t j = 0; j < header.size(); ++j) col_of.emplace(header[j], j);

  RawTable t;
  std::vector<std::size_t> src;
  auto need = [&](const std::string& name, ColumnKind kind) {
    auto it = col_of.find(name);
    if (it == col_of.end())
      throw std::runtime_error("csv: column \"" + name + "\" not found in header");
    t.names.push_back(name);
    t.columns.push_back(RawColumn{kind, {}, {}});
    src.push_back(it->second);
  };
  for (const auto& f : schema.features) need(f.name, f.kind);
  need(schema.label, ColumnKind::Categorical);
  need(schema.sensitive, ColumnKind::Categorical);

  const std::size_t ncol = t.columns.size();
  std::vector<std::vector<std::string>> cells(ncol);
  std::vector<std::vector<char>> missing(ncol);

  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const std::vector<std::string> fields = parse_csv_line(line);
    if (fields.size() != header.size())
      throw std::runtime_error("csv row " + std::to_string(row) + ": has " +
                               std::to_string(fields.size()) + " fields, expected " +
                               std::to_string(header.size()));
    bool any_missing = false;
    for (std::size_t c = 0; c < ncol; ++c) any_missing |= is_missing(fields[src[c]]);
    if (any_missing && schema.missing == MissingPolicy::Drop) {
      ++t.dropped_rows;
      continue;
    }
    for (std::size_t c = 0; c < ncol; ++c) {
      const std::string& cell = fields[src[c]];
      const bool miss = is_missing(cell);
      cells[c].push_back(cell);
      missing[c].push_back(miss ? 1 : 0);
      if (miss) ++t.imputed_cells;
      if (!miss && t.columns[c].kind == ColumnKind::Numeric)
        parse_number(cell, row, t.names[c]);
    }
  }
  t.n_rows = cells.empty() ? 0 : cells[0].size();

  for (std::size_t c = 0; c < ncol; ++c) {
    RawColumn& col = t.columns[c];
    if (col.kind == ColumnKind::Numeric) {
      col.numeric.resize(t.n_rows);
      double sum = 0.0;
      std::size_t present = 0;
      for (std::size_t r = 0; r < t.n_rows; ++r)
        if (!missing[c][r]) {
          col.numeric[r] = parse_number(cells[c][r], r, t.names[c]);
          sum += col.numeric[r];
          ++present;
        }
      if (present < t.n_rows) {
        if (present == 0)
          throw std::runtime_error("csv: column \"" + t.names[c] + "\" has no present values");
        const double mean = sum / static_cast<double>(present);
        for (std::size_t r = 0; r < t.n_rows; ++r)
          if (missing[c][r]) col.numeric[r] = mean;
      }
    } else {
      col.text = std::move(cells[c]);
      bool any = false;
      for (std::size_t r = 0; r < t.n_rows; ++r) any |= missing[c][r] != 0;
      if (any) {
        std::unordered_map<std::string, std::size_t> count;
        std::string mode;
        std::size_t best = 0;
        for (std::size_t r = 0; r < t.n_rows; ++r)
          if (!missing[c][r]) {
            const std::size_t k = ++count[col.text[r]];
            if (k > best) {
              best = k;
              mode = col.text[r];
            }
          }
        if (best == 0)
          throw std::runtime_error("csv: column \"" + t.names[c] + "\" has no present values");
        for (std::size_t r = 0; r < t.n_rows; ++r)
          if (missing[c][r]) col.text[r] = mode;
      }
    }
  }
  return t;
}

RawTable load_csv(const std::string& path, const DatasetSchema& schema) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open csv file " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return load_csv_text(buf.str(), schema);
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    rows.push_back(parse_csv_line(line));
  }
  return rows;
}

Preprocessor fit_preprocessor(const RawTable& t, const DatasetSchema& schema,
                              const std::vector<std::size_t>& rows) {
  if (rows.empty()) throw std::invalid_argument("fit_preprocessor: no rows");
  const std::size_t nf = schema.features.size();
  if (t.columns.size() != nf + 2)
    throw std::invalid_argument("fit_preprocessor: table does not match schema");

  Preprocessor p;
  auto vocab_of = [&](std::size_t c) {
    std::vector<std::string> vocab;
    std::unordered_map<std::string, int> seen;
    for (std::size_t r : rows) {
      const std::string& v = t.columns[c].text[r];
      if (seen.emplace(v, 0).second) vocab.push_back(v);
    }
    return vocab;
  };

  for (std::size_t j = 0; j < nf; ++j) {
    if (t.columns[j].kind == ColumnKind::Numeric) {
      double mean = 0.0;
      for (std::size_t r : rows) mean += t.columns[j].numeric[r];
      mean /= static_cast<double>(rows.size());
      double var = 0.0;
      for (std::size_t r : rows) {
        const double d = t.columns[j].numeric[r] - mean;
        var += d * d;
      }
      p.mean.push_back(mean);
      p.stdev.push_back(std::sqrt(var / static_cast<double>(rows.size())));
    } else {
      p.mean.push_back(0.0);
      p.stdev.push_back(0.0);
      p.categories.push_back(vocab_of(j));
    }
  }

  p.label_values = vocab_of(nf);
  p.group_values = vocab_of(nf + 1);
  if (p.label_values.size() < 2)
    throw std::runtime_error("fit_preprocessor: label has a single value in the fitted rows");
  if (p.group_values.size() < 2)
    throw std::runtime_error("fit_preprocessor: sensitive column has a single value");

  if (!schema.positive_class.empty()) {
    auto it = std::find(p.label_values.begin(), p.label_values.end(), schema.positive_class);
    if (it == p.label_values.end())
      throw std::runtime_error("positive_class \"" + schema.positive_class +
                               "\" is not a label value");
    std::size_t idx = static_cast<std::size_t>(it - p.label_values.begin());
    if (p.label_values.size() == 2 && idx != 1) {
      std::swap(p.label_values[0], p.label_values[1]);
      idx = 1;
    }
    p.positive_class = static_cast<int>(idx);
  } else {
    p.positive_class = 1;
  }
  return p;
}

Dataset Preprocessor::apply(const RawTable& t, const std::vector<std::size_t>& rows,
                            std::size_t* unseen) const {
  const std::size_t nf = mean.size();
  std::size_t width = 0;
  std::size_t cat = 0;
  for (std::size_t j = 0; j < nf; ++j)
    width += t.columns[j].kind == ColumnKind::Numeric ? 1 : categories[cat++].size();

  std::vector<std::unordered_map<std::string, std::size_t>> cat_index(categories.size());
  for (std::size_t k = 0; k < categories.size(); ++k)
    for (std::size_t v = 0; v < categories[k].size(); ++v) cat_index[k].emplace(categories[k][v], v);
  std::unordered_map<std::string, int> label_index, group_index;
  for (std::size_t v = 0; v < label_values.size(); ++v)
    label_index.emplace(label_values[v], static_cast<int>(v));
  for (std::size_t v = 0; v < group_values.size(); ++v)
    group_index.emplace(group_values[v], static_cast<int>(v));

  Dataset d;
  d.x = Matrix(rows.size(), width);
  d.labels.resize(rows.size());
  d.groups.resize(rows.size());
  std::size_t unseen_count = 0;

  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    std::size_t out = 0;
    cat = 0;
    for (std::size_t j = 0; j < nf; ++j) {
      if (t.columns[j].kind == ColumnKind::Numeric) {
        d.x(i, out++) = stdev[j] > 0.0 ? (t.columns[j].numeric[r] - mean[j]) / stdev[j] : 0.0;
      } else {
        const auto& idx = cat_index[cat];
        auto it = idx.find(t.columns[j].text[r]);
        if (it != idx.end())
          d.x(i, out + it->second) = 1.0;
        else
          ++unseen_count;
        out += categories[cat].size();
        ++cat;
      }
    }
    auto lit = label_index.find(t.columns[nf].text[r]);
    if (lit == label_index.end())
      throw std::runtime_error("unseen label value \"" + t.columns[nf].text[r] + "\"");
    d.labels[i] = lit->second;
    auto git = group_index.find(t.columns[nf + 1].text[r]);
    if (git == group_index.end())
      throw std::runtime_error("unseen sensitive value \"" + t.columns[nf + 1].text[r] + "\"");
    d.groups[i] = git->second;
  }

  d.n_classes = label_values.size();
  d.n_groups = group_values.size();
  d.label_onehot = onehot_rows(d.labels, d.n_classes);
  d.group_onehot = onehot_rows(d.groups, d.n_groups);
  if (unseen) *unseen += unseen_count;
  return d;
}

std::string Preprocessor::to_json() const {
  nlohmann::ordered_json j;
  j["mean"] = mean;
  j["stdev"] = stdev;
  j["categories"] = categories;
  j["label_values"] = label_values;
  j["group_values"] = group_values;
  j["positive_class"] = positive_class;
  return j.dump(2) + "\n";
}

Preprocessor Preprocessor::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("preprocessor: ") + e.what());
  }
  for (const char* key :
       {"mean", "stdev", "categories", "label_values", "group_values", "positive_class"})
    if (!j.contains(key))
      throw std::runtime_error(std::string("preprocessor: missing key \"") + key + "\"");
  Preprocessor p;
  p.mean = j.at("mean").get<std::vector<double>>();
  p.stdev = j.at("stdev").get<std::vector<double>>();
  p.categories = j.at("categories").get<std::vector<std::vector<std::string>>>();
  p.label_values = j.at("label_values").get<std::vector<std::string>>();
  p.group_values = j.at("group_values").get<std::vector<std::string>>();
  p.positive_class = j.at("positive_class").get<int>();
  if (p.stdev.size() != p.mean.size())
    throw std::runtime_error("preprocessor: mean and stdev sizes differ");
  return p;
}

SplitIndices split_indices(std::size_t n, const std::array<double, 3>& fractions,
                           std::uint64_t seed) {
  if (n < 3) throw std::invalid_argument("split_indices: need at least 3 samples");
  double sum = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw std::invalid_argument("split_indices: negative fraction");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("split_indices: fractions must sum to 1");

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(mix_seed(seed, 0x51D));
  rng.shuffle(perm);

  const std::size_t n0 = static_cast<std::size_t>(fractions[0] * static_cast<double>(n));
  const std::size_t n1 = static_cast<std::size_t>(fractions[1] * static_cast<double>(n));
  SplitIndices s;
  s.train.assign(perm.begin(), perm.begin() + n0);
  s.val.assign(perm.begin() + n0, perm.begin() + n0 + n1);
  s.test.assign(perm.begin() + n0 + n1, perm.end());
  return s;
}

namespace {

Dataset take_rows(const Dataset& d, const std::vector<std::size_t>& rows) {
  Dataset out;
  out.x = Matrix(rows.size(), d.x.cols());
  out.labels.resize(rows.size());
  out.groups.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    for (std::size_t j = 0; j < d.x.cols(); ++j) out.x(i, j) = d.x(r, j);
    out.labels[i] = d.labels[r];
    out.groups[i] = d.groups[r];
  }
  out.n_classes = d.n_classes;
  out.n_groups = d.n_groups;
  out.label_onehot = onehot_rows(out.labels, out.n_classes);
  out.group_onehot = onehot_rows(out.groups, out.n_groups);
  return out;
}

}  // namespace

DataSplits split(const Dataset& d, const std::array<double, 3>& fractions, std::uint64_t seed) {
  const SplitIndices si = split_indices(d.n(), fractions, seed);
  return DataSplits{take_rows(d, si.train), take_rows(d, si.val), take_rows(d, si.test)};
}

DataSplits prepare_csv(const std::string& path, const DatasetSchema& schema,
                       const std::array<double, 3>& fractions, std::uint64_t seed,
                       Preprocessor* fitted) {
  const RawTable t = load_csv(path, schema);
  const SplitIndices si = split_indices(t.n_rows, fractions, seed);
  const Preprocessor pre = fit_preprocessor(t, schema, si.train);
  DataSplits ds;
  ds.train = pre.apply(t, si.train);
  ds.val = pre.apply(t, si.val);
  ds.test = pre.apply(t, si.test);
  if (fitted) *fitted = pre;
  return ds;
}

Dataset synth_biased(std::size_t n, double bias, double class_balance, std::uint64_t seed) {
  if (n < 100) throw std::invalid_argument("synth_biased: n must be at least 100");
  if (!(bias >= 0.0 && bias <= 1.0))
    throw std::invalid_argument("synth_biased: bias must lie in [0, 1]");
  if (!(class_balance > 0.0 && class_balance < 1.0))
    throw std::invalid_argument("synth_biased: class_balance must lie in (0, 1)");

  const double kSignal = 0.6;
  const double kLabelShift = 0.2;
  const double kSpurious = 1.5;
  Rng rng(mix_seed(seed, 0x5B1A5ED));

  Dataset d;
  d.x = Matrix(n, 4);
  d.labels.resize(n);
  d.groups.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int g = rng.bernoulli(0.5);
    const double gs = g ? 1.0 : -1.0;
    const double py =
        std::clamp(class_balance + kLabelShift * bias * gs, 0.05, 0.95);
    const int y = rng.bernoulli(py);
    const double ys = y ? 1.0 : -1.0;
    d.labels[i] = y;
    d.groups[i] = g;
    d.x(i, 0) = kSignal * ys + rng.normal();
    d.x(i, 1) = kSignal * ys + rng.normal();
    d.x(i, 2) = kSpurious * bias * gs + rng.normal();
    d.x(i, 3) = kSpurious * bias * gs + rng.normal();
  }
  d.n_classes = 2;
  d.n_groups = 2;
  d.label_onehot = onehot_rows(d.labels, 2);
  d.group_onehot = onehot_rows(d.groups, 2);
  return d;
}

namespace {

constexpr std::uint64_t kCacheMagic = 0x4643444344533031ULL;  // "FCDCDS01"

void write_u64(std::ofstream& f, std::uint64_t v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t read_u64(std::ifstream& f) {
  std::uint64_t v = 0;
  f.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

}  // namespace

void save_dataset_cache(const Dataset& d, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open cache file " + path + " for writing");
  write_u64(f, kCacheMagic);
  write_u64(f, d.n());
  write_u64(f, d.x.cols());
  write_u64(f, d.n_classes);
  write_u64(f, d.n_groups);
  f.write(reinterpret_cast<const char*>(d.x.data()),
          static_cast<std::streamsize>(d.x.size() * sizeof(double)));
  f.write(reinterpret_cast<const char*>(d.labels.data()),
          static_cast<std::streamsize>(d.labels.size() * sizeof(int)));
  f.write(reinterpret_cast<const char*>(d.groups.data()),
          static_cast<std::streamsize>(d.groups.size() * sizeof(int)));
  if (!f) throw std::runtime_error("failed writing cache file " + path);
}

Dataset load_dataset_cache(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open cache file " + path);
  if (read_u64(f) != kCacheMagic)
    throw std::runtime_error(path + " is not a dataset cache file");
  const std::size_t n = read_u64(f);
  const std::size_t cols = read_u64(f);
  Dataset d;
  d.n_classes = read_u64(f);
  d.n_groups = read_u64(f);
  d.x = Matrix(n, cols);
  d.labels.resize(n);
  d.groups.resize(n);
  f.read(reinterpret_cast<char*>(d.x.data()),
         static_cast<std::streamsize>(d.x.size() * sizeof(double)));
  f.read(reinterpret_cast<char*>(d.labels.data()),
         static_cast<std::streamsize>(n * sizeof(int)));
  f.read(reinterpret_cast<char*>(d.groups.data()),
         static_cast<std::streamsize>(n * sizeof(int)));
  if (!f) throw std::runtime_error("truncated cache file " + path);
  d.label_onehot = onehot_rows(d.labels, d.n_classes);
  d.group_onehot = onehot_rows(d.groups, d.n_groups);
  return d;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace faircdc
