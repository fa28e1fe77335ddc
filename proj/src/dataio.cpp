#include "mgopt/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <unordered_map>
#include <unordered_set>

#include "mgopt/errors.hpp"
#include "mgopt/fsio.hpp"
#include "mgopt/rng.hpp"

namespace mgopt {

namespace {

// RFC 4180: fields may be quoted; quoted fields may contain commas, CRLF and
// doubled quotes. Accepts both \n and \r\n line ends.
std::vector<std::vector<std::string>> parse_csv(const std::string& text,
                                                const std::string& origin) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t line = 1;

  auto end_field = [&] {
    row.push_back(field);
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
  };

  for (std::size_t k = 0; k < text.size(); ++k) {
    char c = text[k];
    if (quoted) {
      if (c == '"') {
        if (k + 1 < text.size() && text[k + 1] == '"') {
          field += '"';
          ++k;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field.empty() && !field_started) {
          quoted = true;
          field_started = true;
        } else {
          throw DataError(origin + ": line " + std::to_string(line) +
                          ": stray quote inside unquoted field");
        }
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;  // handled with the following \n
      case '\n':
        end_row();
        ++line;
        break;
      default:
        field += c;
        field_started = true;
        break;
    }
  }
  if (quoted) {
    throw DataError(origin + ": unterminated quoted field");
  }
  if (field_started || !field.empty() || !row.empty()) end_row();
  return rows;
}

double parse_number(const std::string& cell, const std::string& origin,
                    std::size_t row, std::size_t col) {
  if (cell.empty()) {
    throw DataError(origin + ": empty cell at row " + std::to_string(row) +
                    ", column " + std::to_string(col));
  }
  const char* begin = cell.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);  // accepts decimal and hex literals
  if (end != begin + cell.size()) {
    throw DataError(origin + ": non-numeric cell '" + cell + "' at row " +
                    std::to_string(row) + ", column " + std::to_string(col));
  }
  return v;
}

// Quotes a field only when RFC 4180 requires it.
std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    out += c;
  }
  out += '"';
  return out;
}

std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

RawTable read_table(const std::string& path) {
  auto rows = parse_csv(read_file(path), path);
  if (rows.empty()) throw DataError(path + ": file is empty");
  RawTable t;
  t.header = rows.front();
  t.rows.assign(rows.begin() + 1, rows.end());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (t.rows[r].size() != t.header.size()) {
      throw DataError(path + ": row " + std::to_string(r + 2) + " has " +
                      std::to_string(t.rows[r].size()) + " fields, header has " +
                      std::to_string(t.header.size()));
    }
  }
  return t;
}

}  // namespace

void zscore_columns(DenseMatrix& features) {
  const std::size_t n = features.rows();
  if (n == 0) return;
  for (std::size_t j = 0; j < features.cols(); ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += features(i, j);
    mean /= double(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double d = features(i, j) - mean;
      var += d * d;
    }
    double sd = std::sqrt(var / double(n));
    if (sd < 1e-12) sd = 1.0;  // constant column: center only
    for (std::size_t i = 0; i < n; ++i)
      features(i, j) = (features(i, j) - mean) / sd;
  }
}

MultiOmicsDataset load_dataset(const std::vector<std::string>& view_paths,
                               const std::string& label_path, bool zscore) {
  if (view_paths.empty()) {
    throw ContractError("load_dataset: need at least one view file");
  }

  RawTable label_table = read_table(label_path);
  if (label_table.header.size() != 2) {
    throw DataError(label_path + ": expected header 'sample_id,label', got " +
                    std::to_string(label_table.header.size()) + " columns");
  }
  MultiOmicsDataset ds;
  std::unordered_map<std::string, std::size_t> id_to_row;
  std::unordered_map<std::string, int> label_index;
  for (std::size_t r = 0; r < label_table.rows.size(); ++r) {
    const std::string& id = label_table.rows[r][0];
    if (!id_to_row.emplace(id, r).second) {
      throw DataError(label_path + ": duplicate sample_id '" + id + "'");
    }
    ds.sample_ids.push_back(id);
    const std::string& name = label_table.rows[r][1];
    auto [it, fresh] = label_index.emplace(name, int(ds.label_names.size()));
    if (fresh) ds.label_names.push_back(name);
    ds.labels.push_back(it->second);
  }
  if (ds.sample_ids.empty()) {
    throw DataError(label_path + ": no samples");
  }

  const std::size_t n = ds.sample_ids.size();
  for (const std::string& path : view_paths) {
    RawTable table = read_table(path);
    if (table.header.size() < 2) {
      throw DataError(path + ": view has no feature columns");
    }
    OmicsView view;
    view.name = std::filesystem::path(path).stem().string();
    view.feature_names.assign(table.header.begin() + 1, table.header.end());
    const std::size_t d = view.feature_names.size();
    view.features = DenseMatrix(n, d);

    std::unordered_set<std::string> seen;
    std::vector<bool> filled(n, false);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      const std::string& id = table.rows[r][0];
      if (!seen.insert(id).second) {
        throw DataError(path + ": duplicate sample_id '" + id + "'");
      }
      auto it = id_to_row.find(id);
      if (it == id_to_row.end()) {
        throw DataError(path + ": sample_id '" + id +
                        "' does not appear in " + label_path);
      }
      const std::size_t row = it->second;
      filled[row] = true;
      for (std::size_t j = 0; j < d; ++j) {
        view.features(row, j) =
            parse_number(table.rows[r][j + 1], path, r + 2, j + 2);
      }
    }
    std::vector<std::string> missing;
    for (std::size_t i = 0; i < n && missing.size() < 5; ++i) {
      if (!filled[i]) missing.push_back(ds.sample_ids[i]);
    }
    if (!missing.empty()) {
      std::string list;
      for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
      throw DataError(path + ": missing sample_ids: " + list);
    }
    if (zscore) zscore_columns(view.features);
    ds.views.push_back(std::move(view));
  }
  return ds;
}

MultiOmicsDataset synth_generate(const SynthSpec& spec) {
  if (spec.classes == 0) throw ContractError("synth_generate: classes must be >= 1");
  if (spec.samples < spec.classes) {
    throw ContractError("synth_generate: need at least one sample per class (" +
                        std::to_string(spec.samples) + " samples, " +
                        std::to_string(spec.classes) + " classes)");
  }
  if (spec.dims.empty()) throw ContractError("synth_generate: dims is empty");
  for (std::size_t d : spec.dims) {
    if (d == 0) throw ContractError("synth_generate: zero-width view");
  }
  if (spec.noise_sigma < 0.0) {
    throw ContractError("synth_generate: noise_sigma must be >= 0");
  }

  Rng rng(spec.seed);
  MultiOmicsDataset ds;
  const std::size_t n = spec.samples;

  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    ds.labels[i] = int(i % spec.classes);  // balanced
  rng.shuffle(ds.labels);

  std::size_t width = std::to_string(n).size();
  for (std::size_t i = 0; i < n; ++i) {
    std::string num = std::to_string(i + 1);
    ds.sample_ids.push_back(
        "s" + std::string(width - num.size(), '0') + num);
  }
  for (std::size_t k = 0; k < spec.classes; ++k)
    ds.label_names.push_back("c" + std::to_string(k));

  for (std::size_t m = 0; m < spec.dims.size(); ++m) {
    const std::size_t d = spec.dims[m];
    std::vector<DenseMatrix> centroids;
    centroids.reserve(spec.classes);
    for (std::size_t k = 0; k < spec.classes; ++k) {
      DenseMatrix c(1, d);
      for (std::size_t j = 0; j < d; ++j)
        c(0, j) = spec.separation * rng.normal();
      centroids.push_back(std::move(c));
    }
    OmicsView view;
    view.name = "view_" + std::to_string(m + 1);
    for (std::size_t j = 0; j < d; ++j)
      view.feature_names.push_back("f" + std::to_string(j + 1));
    view.features = DenseMatrix(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      const DenseMatrix& c = centroids[std::size_t(ds.labels[i])];
      for (std::size_t j = 0; j < d; ++j)
        view.features(i, j) = c(0, j) + spec.noise_sigma * rng.normal();
    }
    ds.views.push_back(std::move(view));
  }
  return ds;
}

std::vector<std::string> save_dataset_csv(const MultiOmicsDataset& dataset,
                                          const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (dataset.sample_count() == 0 || dataset.views.empty()) {
    throw ContractError("save_dataset_csv: dataset is empty");
  }
  fs::create_directories(out_dir);
  std::vector<std::string> written;

  for (std::size_t m = 0; m < dataset.views.size(); ++m) {
    const OmicsView& view = dataset.views[m];
    std::string out = "sample_id";
    for (const auto& f : view.feature_names) out += "," + csv_escape(f);
    out += '\n';
    for (std::size_t i = 0; i < dataset.sample_count(); ++i) {
      out += csv_escape(dataset.sample_ids[i]);
      for (std::size_t j = 0; j < view.features.cols(); ++j) {
        out += ',';
        out += hexfloat(view.features(i, j));
      }
      out += '\n';
    }
    std::string path =
        (fs::path(out_dir) / ("view_" + std::to_string(m + 1) + ".csv")).string();
    write_file_atomic(path, out);
    written.push_back(path);
  }

  std::string out = "sample_id,label\n";
  for (std::size_t i = 0; i < dataset.sample_count(); ++i) {
    out += csv_escape(dataset.sample_ids[i]) + "," +
           csv_escape(dataset.label_names[std::size_t(dataset.labels[i])]) +
           '\n';
  }
  std::string label_path = (fs::path(out_dir) / "labels.csv").string();
  write_file_atomic(label_path, out);
  written.push_back(label_path);
  return written;
}

LabelMask split_semi_supervised(const MultiOmicsDataset& dataset,
                                double label_ratio, std::uint64_t seed) {
  if (!(label_ratio > 0.0 && label_ratio <= 1.0)) {
    throw ContractError("split_semi_supervised: label_ratio must lie in (0, 1]");
  }
  const std::size_t n = dataset.sample_count();
  if (n == 0 || dataset.labels.size() != n) {
    throw ContractError("split_semi_supervised: dataset has no aligned labels");
  }
  const std::size_t c = dataset.class_count();
  std::vector<std::vector<std::size_t>> by_class(c);
  for (std::size_t i = 0; i < n; ++i) {
    int y = dataset.labels[i];
    if (y < 0 || std::size_t(y) >= c) {
      throw ContractError("split_semi_supervised: label index out of range");
    }
    by_class[std::size_t(y)].push_back(i);
  }
  for (std::size_t k = 0; k < c; ++k) {
    if (by_class[k].empty()) {
      throw ContractError("split_semi_supervised: class '" +
                          dataset.label_names[k] + "' has zero samples");
    }
  }

  LabelMask mask;
  for (std::size_t k = 0; k < c; ++k) {
    auto& idx = by_class[k];
    Rng class_rng(Rng::mix(seed, k));
    class_rng.shuffle(idx);
    const std::size_t take = std::size_t(
        std::ceil(label_ratio * double(idx.size())) + 0.0);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      (i < take ? mask.train_indices : mask.test_indices).push_back(idx[i]);
    }
  }
  std::sort(mask.train_indices.begin(), mask.train_indices.end());
  std::sort(mask.test_indices.begin(), mask.test_indices.end());
  return mask;
}

}  // namespace mgopt
